#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "clpc/audio.hpp"
#include "clpc/pitch.hpp"
#include "clpc/rng.hpp"

namespace clpc {

constexpr int kNumBands = 18;

// One conditioning frame: 18 BFCCs + quantized pitch + gated periodicity.
struct FeatureFrame {
    std::array<double, kNumBands> bfcc{};
    int pitch_bin = 0;
    double periodicity = 0.0;
};

// Bark-spaced triangular filterbank over 0-8 kHz. Band energies are
// amplitude-normalized means so a flat spectrum gives flat bands.
struct BarkFilterbank {
    static const BarkFilterbank& instance();
    // Center frequency (Hz) of each band's triangle peak.
    std::array<double, kNumBands> center_hz{};
    // Triangle edges in Hz: band i spans edges[i] .. edges[i+2].
    std::array<double, kNumBands + 2> edge_hz{};

    // Band energies of a one-sided power spectrum (bins spaced bin_hz apart).
    std::array<double, kNumBands> apply(const std::vector<double>& power, double bin_hz) const;
};

// Orthonormal DCT-II / inverse pair over 18 coefficients.
std::array<double, kNumBands> dct18(const std::array<double, kNumBands>& in);
std::array<double, kNumBands> idct18(const std::array<double, kNumBands>& in);

// 18 BFCCs of one Hann-windowed 320-sample frame (floor 1e-10 on band energy,
// natural log, orthonormal DCT).
std::array<double, kNumBands> bfcc(const std::vector<double>& window,
                                   int sample_rate = kTargetRate);

// Inverse of the log/DCT stage: per-band linear power.
std::array<double, kNumBands> band_energies(const std::array<double, kNumBands>& coeffs);

// BFCCs for every frame (ceil(samples/160) of them, windows centered on frame
// centers). The serial variant is the reference for the OpenMP kernel.
std::vector<std::array<double, kNumBands>> bfcc_frames(const AudioBuffer& audio,
                                                       bool parallel = true);
std::vector<std::array<double, kNumBands>> bfcc_frames_serial(const AudioBuffer& audio);

struct FeatureOptions {
    double dither_width_cents = 40.0;  // 0 disables
    uint64_t seed = 42;
    bool parallel = true;
};

// Zips per-frame BFCCs with (dithered) quantized pitch and gated periodicity.
// Throws if the contour length does not match the audio's frame count.
std::vector<FeatureFrame> extract_features(const AudioBuffer& audio,
                                           const PitchContour& contour,
                                           const FeatureOptions& opt = {});

// Binary feature file: magic, version, frame count, then per-frame records
// (18 float32 BFCC, uint8 pitch bin, float32 periodicity).
void save_features(const std::vector<FeatureFrame>& frames, const std::string& path);
std::vector<FeatureFrame> load_features(const std::string& path);

void save_features_csv(const std::vector<FeatureFrame>& frames, const std::string& path);

}  // namespace clpc
