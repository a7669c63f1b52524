#pragma once

#include <array>
#include <functional>
#include <memory>
#include <string>
#include <vector>

#include "clpc/audio.hpp"
#include "clpc/features.hpp"
#include "clpc/lpc.hpp"
#include "clpc/pitch.hpp"
#include "clpc/rng.hpp"

namespace clpc {

// Distribution over the 256 mu-law excitation codes.
struct CategoricalDist256 {
    std::array<double, 256> p{};
};

// One edit-script frame: conditioning features plus the target pitch,
// periodicity and hop for decoding.
struct ControlFrame {
    FeatureFrame features;
    int target_pitch_bin = 0;
    double periodicity = 0.0;
    int hop = kHop;
};

using ControlScript = std::vector<ControlFrame>;

// Total number of samples a script decodes to.
size_t script_length(const ControlScript& script);

// Per-sample context handed to excitation backends; conditioning is held
// constant for the frame's hop (nearest-neighbor upsampling).
struct FrameContext {
    size_t frame_index = 0;
    const ControlFrame* frame = nullptr;
    const LpcFrame* lpc = nullptr;
    double target_f0_hz = 0.0;
};

class ExcitationBackend {
public:
    virtual ~ExcitationBackend() = default;
    virtual CategoricalDist256 next(int prev_exc_code, int prev_sample_code,
                                    int pred_code, const FrameContext& ctx) = 0;
    virtual void reset() {}
};

// --- Script construction -----------------------------------------------------

// Constant-ratio pitch shift: target f0 = clamp(f0 * ratio), hops stay 160.
ControlScript constant_shift_script(const std::vector<FeatureFrame>& features,
                                    const PitchContour& contour, double ratio);

// Constant-ratio time stretch: hops accumulate so the total output length is
// round(ratio * frames * 160) exactly.
ControlScript constant_stretch_script(const std::vector<FeatureFrame>& features,
                                      const PitchContour& contour, double ratio);

// Per-frame pitch targets (Hz) and stretch ratios combined.
// Ratios outside [0.25, 4] are accepted with a warning on stderr.
ControlScript variable_script(const std::vector<FeatureFrame>& features,
                              const PitchContour& contour,
                              const std::vector<double>& per_frame_pitch_hz,
                              const std::vector<double>& per_frame_ratio);

// Script file: CSV with columns frame, target_f0_hz, periodicity, hop_samples,
// plus an optional "# features=<path>" directive line.
void save_script_csv(const ControlScript& script, const std::string& path,
                     const std::string& feature_file = "");
struct ScriptFile {
    std::vector<double> target_f0_hz;
    std::vector<double> periodicity;
    std::vector<int> hop;
    std::string feature_file;  // empty if the directive was absent
};
ScriptFile load_script_csv(const std::string& path);
ControlScript script_from_file(const ScriptFile& file, const std::vector<FeatureFrame>& features);

// --- Synthesis loop -----------------------------------------------------------

// Variable-hop autoregressive decode. Per frame the LPC filter is derived from
// the frame's BFCCs; per sample the backend's distribution is threshold-sampled
// and the decoded excitation added to the prediction. Output length equals the
// sum of hops by construction.
AudioBuffer synthesize(const ControlScript& script, ExcitationBackend& backend, Rng& rng,
                       std::span<const double> initial_history = {});

// Deterministic source-filter stand-in for the neural excitation:
// periodicity-weighted mix of a pulse train (phase accumulator at the target
// f0, amplitude sqrt(E*T0)) and white noise of variance E, emitted as a
// one-hot distribution over mu-law codes.
class DspBackend : public ExcitationBackend {
public:
    explicit DspBackend(Rng& rng) : rng_(rng) {}
    CategoricalDist256 next(int prev_exc_code, int prev_sample_code,
                            int pred_code, const FrameContext& ctx) override;
    void reset() override { phase_ = 0.0; }

private:
    Rng& rng_;
    double phase_ = 0.0;
};

}  // namespace clpc
