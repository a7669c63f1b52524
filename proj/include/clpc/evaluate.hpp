#pragma once

#include <functional>
#include <string>
#include <vector>

#include "clpc/audio.hpp"
#include "clpc/features.hpp"
#include "clpc/pitch.hpp"

namespace clpc {

struct PitchMetrics {
    double f1 = 0.0;         // voiced/unvoiced decision
    double rms_cents = 0.0;  // over mutually voiced frames
    double gpe = 0.0;        // fraction with |error| > k cents
    size_t n_frames = 0;     // mutually voiced count
};

std::vector<bool> voiced_decision(const PitchContour& contour, double threshold = 0.5);

// 2TP / (2TP + FP + FN); defined as 1 when neither side has voiced frames.
double f1_voicing(const std::vector<bool>& pred, const std::vector<bool>& target);

// RMS of 1200*log2(pred/target) over masked frames. Throws "no voiced
// overlap" on an empty mask.
double rms_cents(const std::vector<double>& pred_f0, const std::vector<double>& target_f0,
                 const std::vector<bool>& mutual_voiced);

// Fraction of masked frames with |error| strictly greater than k cents.
double gpe(const std::vector<double>& pred_f0, const std::vector<double>& target_f0,
           const std::vector<bool>& mutual_voiced, double k_cents = 50.0);

PitchMetrics pitch_metrics(const PitchContour& pred, const PitchContour& target,
                           double voicing_threshold = 0.5, double k_cents = 50.0);

// A pitch-shifting system under test: takes raw audio and a constant ratio,
// returns the shifted audio.
using ShiftSystem = std::function<AudioBuffer(const AudioBuffer&, double)>;

struct ShiftEvaluation {
    double ratio;
    PitchMetrics metrics;
};

// Constant-ratio protocol: target contour = tracked source scaled by the
// ratio (clamped); metrics compare the tracked output against that target.
std::vector<ShiftEvaluation> evaluate_shift(const ShiftSystem& system, const AudioBuffer& audio,
                                            const std::vector<double>& ratios = {0.71, 1.0, 1.41});

// --- Prosody-transfer alignment ----------------------------------------------

struct PairAlignment {
    std::vector<double> per_frame_ratio;      // source-frame stretch ratios
    std::vector<double> per_frame_target_f0;  // target pitch along the path
    std::vector<std::pair<int, int>> path;    // (source, target) index pairs
};

// DTW over BFCC sequences (Euclidean distance, symmetric steps, local slope
// capped at 4) mapping target prosody onto source frames.
PairAlignment align_pair(const std::vector<FeatureFrame>& src_features,
                         const std::vector<FeatureFrame>& tgt_features,
                         const PitchContour& tgt_contour);

struct ReportRow {
    std::string system;
    double ratio;
    PitchMetrics metrics;
};

void save_report_csv(const std::vector<ReportRow>& rows, const std::string& path);

}  // namespace clpc
