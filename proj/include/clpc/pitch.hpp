#pragma once

#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "clpc/audio.hpp"
#include "clpc/rng.hpp"

namespace clpc {

constexpr double kFmin = 50.0;
constexpr double kFmax = 550.0;
constexpr int kPitchBins = 256;

// Per-frame pitch track at the 10 ms hop.
struct PitchContour {
    std::vector<double> f0_hz;        // clamped to [kFmin, kFmax]
    std::vector<double> periodicity;  // [0, 1]

    size_t frames() const { return f0_hz.size(); }
};

// --- Log-scale 8-bit pitch quantizer ----------------------------------------
// 256 bins equally spaced in log2 over [50, 550] Hz; bin width
// 1200*log2(11)/255 = 16.28 cents.

double clamp_f0(double f0_hz);
int quantize_pitch(double f0_hz);
double dequantize_pitch(int bin);
double pitch_bin_width_cents();

// Real-valued bin coordinate of a frequency (useful for emission spreading).
double pitch_bin_real(double f0_hz);

inline double cents_between(double f_a, double f_b) {
    return 1200.0 * std::log2(f_a / f_b);
}

// --- YIN candidate stage -----------------------------------------------------

struct YinCandidate {
    double lag;    // fractional, parabolic-refined
    double cmndf;  // value at the refined minimum
};

struct TrackerOptions {
    int sample_rate = kTargetRate;
    int hop = kHop;
    double transition_sigma_cents = 100.0;  // Viterbi transition decay
    double emission_spread_bins = 1.0;      // triangular spread of candidate weight
    double loudness_gate_db = -60.0;
    bool parallel = true;  // OpenMP over frames; serial path kept for testing
};

// Local minima of the cumulative-mean-normalized difference function within
// the lag range [sr/550, sr/50]. Window must hold at least 2*(sr/50) samples;
// an all-zero window yields no candidates.
std::vector<YinCandidate> yin_frame(const std::vector<double>& window,
                                    int sample_rate = kTargetRate);

// --- Viterbi over quantized bins ----------------------------------------------

// Max-product path through per-frame emission weights; transitions decay as a
// Gaussian in cent distance between bins. Throws on an all-zero frame.
std::vector<int> viterbi_decode(const std::vector<std::vector<double>>& emissions,
                                double transition_sigma_cents = 100.0);

// --- Dither -------------------------------------------------------------------

// Triangular noise in the cents domain, mode 0, support +-width/2.
double dither(double f0_hz, Rng& rng, double width_cents = 40.0);

// --- Loudness -----------------------------------------------------------------

// A-weighted loudness of one 320-sample window, calibrated so a full-scale
// 1 kHz sine scores 20 dB. Floor keeps digital silence at -80 dB.
double a_weighted_loudness(const std::vector<double>& window, int sample_rate = kTargetRate);

// IEC A-weighting curve in dB (0 dB at 1 kHz).
double a_weighting_db(double freq_hz);

// --- Gating & tracking ----------------------------------------------------------

// Zero periodicity wherever loudness < threshold. Idempotent, monotone.
PitchContour gate_periodicity(const PitchContour& contour,
                              const std::vector<double>& loudness_db,
                              double threshold_db = -60.0);

// Per-frame emissions from YIN candidates (weight max(0, 1-CMNDF) spread over
// neighboring bins), exposed for testing the serial/parallel kernels against
// each other.
std::vector<std::vector<double>> frame_emissions(const AudioBuffer& audio,
                                                 const TrackerOptions& opt,
                                                 std::vector<std::vector<YinCandidate>>* candidates = nullptr);
std::vector<std::vector<double>> frame_emissions_serial(const AudioBuffer& audio,
                                                        const TrackerOptions& opt,
                                                        std::vector<std::vector<YinCandidate>>* candidates = nullptr);

// Per-frame A-weighted loudness (320-sample windows centered on frame centers).
std::vector<double> frame_loudness(const AudioBuffer& audio, const TrackerOptions& opt);
std::vector<double> frame_loudness_serial(const AudioBuffer& audio, const TrackerOptions& opt);

// Full tracker: YIN candidates -> Viterbi over 256 bins -> periodicity from
// CMNDF at the decoded lag -> loudness gate. ceil(samples/160) frames.
PitchContour track(const AudioBuffer& audio, const TrackerOptions& opt = {});

// CSV export: frame_index, f0_hz, periodicity, voiced.
void save_contour_csv(const PitchContour& contour, const std::string& path,
                      double voicing_threshold = 0.5);

}  // namespace clpc
