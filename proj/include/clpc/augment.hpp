#pragma once

#include <array>
#include <string>
#include <vector>

#include "clpc/audio.hpp"

namespace clpc {

// Pitch-shift factors used for the resampling augmentation (1 = plain
// resample to the target rate).
inline constexpr std::array<double, 9> kAugmentRatios = {
    0.5, 2.0 / 3.0, 0.75, 0.8, 1.0, 1.25, 4.0 / 3.0, 1.5, 2.0};

// Reinterpret x at rate r*s, resample back to s, then resample to 16 kHz:
// duration scales by 1/r, pitch (and formants) by r.
AudioBuffer resample_augment(const AudioBuffer& x, double ratio);

struct AugmentManifestRow {
    std::string source;
    double ratio;
    std::string output;
};

// Applies every ratio to every .wav under dir_in, writing outputs and a
// manifest CSV (source, ratio, output path) under dir_out. Unreadable files
// are skipped with a log line on stderr.
std::vector<AugmentManifestRow> augment_corpus(const std::string& dir_in,
                                               const std::string& dir_out);

}  // namespace clpc
