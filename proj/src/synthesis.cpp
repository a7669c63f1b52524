#include "clpc/synthesis.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <sstream>
#include <stdexcept>

#include "clpc/excitation_net.hpp"

namespace clpc {

size_t script_length(const ControlScript& script) {
    size_t total = 0;
    for (const auto& frame : script) total += size_t(frame.hop);
    return total;
}

// --- Script construction -----------------------------------------------------

namespace {

void require_matching(const std::vector<FeatureFrame>& features, const PitchContour& contour) {
    if (features.size() != contour.frames())
        throw std::invalid_argument("script: features/contour length mismatch");
}

}  // namespace

ControlScript constant_shift_script(const std::vector<FeatureFrame>& features,
                                    const PitchContour& contour, double ratio) {
    if (ratio <= 0.0) throw std::invalid_argument("shift ratio must be positive");
    require_matching(features, contour);
    ControlScript script(features.size());
    for (size_t f = 0; f < features.size(); ++f) {
        script[f].features = features[f];
        script[f].target_pitch_bin = quantize_pitch(contour.f0_hz[f] * ratio);
        script[f].periodicity = contour.periodicity[f];
        script[f].hop = kHop;
    }
    return script;
}

ControlScript constant_stretch_script(const std::vector<FeatureFrame>& features,
                                      const PitchContour& contour, double ratio) {
    if (ratio <= 0.0) throw std::invalid_argument("stretch ratio must be positive");
    require_matching(features, contour);
    ControlScript script(features.size());
    long long consumed = 0;
    for (size_t f = 0; f < features.size(); ++f) {
        const long long upto = llround(ratio * double(f + 1) * kHop);
        script[f].features = features[f];
        script[f].target_pitch_bin = quantize_pitch(contour.f0_hz[f]);
        script[f].periodicity = contour.periodicity[f];
        script[f].hop = int(upto - consumed);
        consumed = upto;
    }
    return script;
}

ControlScript variable_script(const std::vector<FeatureFrame>& features,
                              const PitchContour& contour,
                              const std::vector<double>& per_frame_pitch_hz,
                              const std::vector<double>& per_frame_ratio) {
    require_matching(features, contour);
    if (per_frame_pitch_hz.size() != features.size() || per_frame_ratio.size() != features.size())
        throw std::invalid_argument("variable_script: per-frame array length mismatch");

    bool warned = false;
    ControlScript script(features.size());
    double target_total = 0.0;
    long long consumed = 0;
    for (size_t f = 0; f < features.size(); ++f) {
        const double ratio = per_frame_ratio[f];
        if (ratio <= 0.0) throw std::invalid_argument("variable_script: ratio must be positive");
        if (!warned && (ratio < 0.25 || ratio > 4.0)) {
            std::cerr << "warning: stretch ratio " << ratio << " outside [0.25, 4]\n";
            warned = true;
        }
        target_total += ratio * kHop;
        const long long upto = llround(target_total);
        script[f].features = features[f];
        script[f].target_pitch_bin = quantize_pitch(per_frame_pitch_hz[f]);
        script[f].periodicity = contour.periodicity[f];
        script[f].hop = int(upto - consumed);
        consumed = upto;
    }
    return script;
}

// --- Script CSV ----------------------------------------------------------------

void save_script_csv(const ControlScript& script, const std::string& path,
                     const std::string& feature_file) {
    std::ofstream f(path, std::ios::trunc);
    if (!f) throw std::runtime_error("cannot write " + path);
    if (!feature_file.empty()) f << "# features=" << feature_file << '\n';
    f << "frame,target_f0_hz,periodicity,hop_samples\n";
    for (size_t i = 0; i < script.size(); ++i) {
        f << i << ',' << dequantize_pitch(script[i].target_pitch_bin) << ','
          << script[i].periodicity << ',' << script[i].hop << '\n';
    }
}

ScriptFile load_script_csv(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw std::runtime_error("cannot open " + path);
    ScriptFile out;
    std::string line;
    while (std::getline(f, line)) {
        if (line.empty()) continue;
        if (line[0] == '#') {
            const auto pos = line.find("features=");
            if (pos != std::string::npos) out.feature_file = line.substr(pos + 9);
            continue;
        }
        if (line.rfind("frame", 0) == 0) continue;  // header
        std::istringstream ss(line);
        std::string field;
        double values[4] = {0, 0, 0, 0};
        int idx = 0;
        while (idx < 4 && std::getline(ss, field, ',')) values[idx++] = std::stod(field);
        if (idx != 4) throw std::runtime_error("malformed script row: " + line);
        out.target_f0_hz.push_back(values[1]);
        out.periodicity.push_back(values[2]);
        out.hop.push_back(int(values[3]));
    }
    return out;
}

ControlScript script_from_file(const ScriptFile& file, const std::vector<FeatureFrame>& features) {
    if (file.target_f0_hz.size() != features.size())
        throw std::invalid_argument("script file frame count does not match features");
    ControlScript script(features.size());
    for (size_t f = 0; f < features.size(); ++f) {
        script[f].features = features[f];
        script[f].target_pitch_bin = quantize_pitch(file.target_f0_hz[f]);
        script[f].periodicity = file.periodicity[f];
        script[f].hop = file.hop[f];
        if (script[f].hop < 0) throw std::invalid_argument("script hop must be nonnegative");
    }
    return script;
}

// --- Synthesis loop ---------------------------------------------------------------

AudioBuffer synthesize(const ControlScript& script, ExcitationBackend& backend, Rng& rng,
                       std::span<const double> initial_history) {
    AudioBuffer out;
    out.sample_rate = kTargetRate;
    out.samples.reserve(script_length(script));

    // history[0] is the most recent sample
    std::array<double, kLpcOrder> history{};
    const size_t given = std::min(initial_history.size(), size_t(kLpcOrder));
    for (size_t i = 0; i < given; ++i)
        history[i] = initial_history[initial_history.size() - 1 - i];

    backend.reset();
    int prev_exc = 128, prev_samp = 128;

    for (size_t f = 0; f < script.size(); ++f) {
        const LpcFrame lpc = lpc_from_bfcc(script[f].features.bfcc);
        FrameContext ctx;
        ctx.frame_index = f;
        ctx.frame = &script[f];
        ctx.lpc = &lpc;
        ctx.target_f0_hz = dequantize_pitch(script[f].target_pitch_bin);

        for (int s = 0; s < script[f].hop; ++s) {
            const double prediction = predict(history, lpc.a);
            const int pred_code = mulaw_encode(prediction);
            const CategoricalDist256 dist = backend.next(prev_exc, prev_samp, pred_code, ctx);

            double sum = 0.0;
            bool valid = true;
            for (double p : dist.p) {
                if (!std::isfinite(p) || p < 0.0) {
                    valid = false;
                    break;
                }
                sum += p;
            }
            if (!valid || std::abs(sum - 1.0) > 1e-6) {
                char msg[128];
                std::snprintf(msg, sizeof msg,
                              "invalid excitation distribution at frame %zu, sample %d", f, s);
                throw std::runtime_error(msg);
            }

            const int exc_code = sample_excitation(dist, rng);
            const double excitation = mulaw_decode(exc_code);
            const double sample = std::min(1.0, std::max(-1.0, prediction + excitation));
            out.samples.push_back(sample);

            for (size_t i = kLpcOrder - 1; i > 0; --i) history[i] = history[i - 1];
            history[0] = sample;
            prev_exc = exc_code;
            prev_samp = mulaw_encode(sample);
        }
    }
    return out;
}

// --- DSP excitation backend ---------------------------------------------------------

CategoricalDist256 DspBackend::next(int, int, int, const FrameContext& ctx) {
    const double energy = std::max(0.0, ctx.lpc->gain);
    const double periodicity = std::min(1.0, std::max(0.0, ctx.frame->periodicity));
    const double f0 = ctx.target_f0_hz;

    phase_ += f0 / double(kTargetRate);
    double pulse = 0.0;
    if (phase_ >= 1.0 - 1e-9) {
        phase_ -= 1.0;
        pulse = std::sqrt(energy * double(kTargetRate) / f0);
    }
    const double noise = rng_.normal() * std::sqrt(energy);
    const double excitation = periodicity * pulse + (1.0 - periodicity) * noise;

    CategoricalDist256 dist;
    dist.p[size_t(mulaw_encode(excitation))] = 1.0;
    return dist;
}

}  // namespace clpc
