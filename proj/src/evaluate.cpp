#include "clpc/evaluate.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <stdexcept>

namespace clpc {

std::vector<bool> voiced_decision(const PitchContour& contour, double threshold) {
    std::vector<bool> voiced(contour.frames());
    for (size_t t = 0; t < contour.frames(); ++t)
        voiced[t] = contour.periodicity[t] >= threshold;  // ties count as voiced
    return voiced;
}

double f1_voicing(const std::vector<bool>& pred, const std::vector<bool>& target) {
    if (pred.size() != target.size())
        throw std::invalid_argument("f1_voicing: length mismatch");
    size_t tp = 0, fp = 0, fn = 0;
    for (size_t t = 0; t < pred.size(); ++t) {
        if (pred[t] && target[t]) ++tp;
        else if (pred[t] && !target[t]) ++fp;
        else if (!pred[t] && target[t]) ++fn;
    }
    if (tp + fp + fn == 0) return 1.0;  // nothing voiced anywhere
    return 2.0 * double(tp) / double(2 * tp + fp + fn);
}

namespace {

std::vector<double> masked_errors_cents(const std::vector<double>& pred,
                                        const std::vector<double>& target,
                                        const std::vector<bool>& mask) {
    if (pred.size() != target.size() || pred.size() != mask.size())
        throw std::invalid_argument("pitch metrics: length mismatch");
    std::vector<double> errors;
    for (size_t t = 0; t < mask.size(); ++t)
        if (mask[t]) errors.push_back(cents_between(pred[t], target[t]));
    if (errors.empty()) throw std::runtime_error("no voiced overlap");
    return errors;
}

}  // namespace

double rms_cents(const std::vector<double>& pred_f0, const std::vector<double>& target_f0,
                 const std::vector<bool>& mutual_voiced) {
    const auto errors = masked_errors_cents(pred_f0, target_f0, mutual_voiced);
    double acc = 0.0;
    for (double e : errors) acc += e * e;
    return std::sqrt(acc / double(errors.size()));
}

double gpe(const std::vector<double>& pred_f0, const std::vector<double>& target_f0,
           const std::vector<bool>& mutual_voiced, double k_cents) {
    const auto errors = masked_errors_cents(pred_f0, target_f0, mutual_voiced);
    size_t gross = 0;
    for (double e : errors)
        if (std::abs(e) > k_cents) ++gross;  // strictly greater
    return double(gross) / double(errors.size());
}

PitchMetrics pitch_metrics(const PitchContour& pred, const PitchContour& target,
                           double voicing_threshold, double k_cents) {
    const size_t frames = std::min(pred.frames(), target.frames());
    PitchContour p = pred, t = target;
    p.f0_hz.resize(frames);
    p.periodicity.resize(frames);
    t.f0_hz.resize(frames);
    t.periodicity.resize(frames);

    const auto pv = voiced_decision(p, voicing_threshold);
    const auto tv = voiced_decision(t, voicing_threshold);
    std::vector<bool> mutual(frames);
    size_t count = 0;
    for (size_t i = 0; i < frames; ++i) {
        mutual[i] = pv[i] && tv[i];
        if (mutual[i]) ++count;
    }

    PitchMetrics m;
    m.f1 = f1_voicing(pv, tv);
    m.n_frames = count;
    m.rms_cents = rms_cents(p.f0_hz, t.f0_hz, mutual);
    m.gpe = gpe(p.f0_hz, t.f0_hz, mutual, k_cents);
    return m;
}

std::vector<ShiftEvaluation> evaluate_shift(const ShiftSystem& system, const AudioBuffer& audio,
                                            const std::vector<double>& ratios) {
    const AudioBuffer prepared = preprocess(audio);
    const PitchContour source = track(prepared);

    std::vector<ShiftEvaluation> results;
    for (double ratio : ratios) {
        PitchContour target = source;
        for (double& f : target.f0_hz) f = clamp_f0(f * ratio);

        const AudioBuffer shifted = system(audio, ratio);
        const PitchContour tracked = track(preprocess(shifted));

        results.push_back({ratio, pitch_metrics(tracked, target)});
    }
    return results;
}

// --- DTW alignment ---------------------------------------------------------------

PairAlignment align_pair(const std::vector<FeatureFrame>& src_features,
                         const std::vector<FeatureFrame>& tgt_features,
                         const PitchContour& tgt_contour) {
    const size_t ns = src_features.size();
    const size_t nt = tgt_features.size();
    if (ns == 0 || nt == 0) throw std::invalid_argument("align_pair: empty sequence");
    if (tgt_contour.frames() != nt)
        throw std::invalid_argument("align_pair: target contour length mismatch");

    auto cost = [&](size_t i, size_t j) {
        double acc = 0.0;
        for (int k = 0; k < kNumBands; ++k) {
            const double d = src_features[i].bfcc[size_t(k)] - tgt_features[j].bfcc[size_t(k)];
            acc += d * d;
        }
        return std::sqrt(acc);
    };

    // states per cell: how many consecutive non-diagonal steps arrived here
    // (0 = diagonal; 1..3 horizontal; 4..6 vertical). A fourth consecutive
    // move in the same direction is forbidden, capping the local slope at 4.
    constexpr int kStates = 7;
    constexpr double kInf = 1e18;
    const size_t cells = ns * nt;
    std::vector<float> dp(cells * kStates, float(kInf));
    std::vector<int8_t> from(cells * kStates, -1);

    auto idx = [&](size_t i, size_t j, int s) { return (i * nt + j) * kStates + size_t(s); };

    dp[idx(0, 0, 0)] = float(cost(0, 0));
    for (size_t i = 0; i < ns; ++i) {
        for (size_t j = 0; j < nt; ++j) {
            if (i == 0 && j == 0) continue;
            const float c = float(cost(i, j));
            // diagonal arrival resets the run counter
            if (i > 0 && j > 0) {
                float best = kInf;
                int8_t arg = -1;
                for (int s = 0; s < kStates; ++s) {
                    const float v = dp[idx(i - 1, j - 1, s)];
                    if (v < best) {
                        best = v;
                        arg = int8_t(s);
                    }
                }
                if (best < kInf) {
                    dp[idx(i, j, 0)] = best + c;
                    from[idx(i, j, 0)] = arg;
                }
            }
            // horizontal: consumes a source frame (run states 1..3)
            if (i > 0) {
                for (int run = 1; run <= 3; ++run) {
                    const int prev_state = run == 1 ? 0 : run - 1;
                    const float v = dp[idx(i - 1, j, prev_state)];
                    if (v < kInf) {
                        const float cand = v + c;
                        if (cand < dp[idx(i, j, run)]) {
                            dp[idx(i, j, run)] = cand;
                            from[idx(i, j, run)] = int8_t(prev_state);
                        }
                    }
                }
            }
            // vertical: consumes a target frame (run states 4..6)
            if (j > 0) {
                for (int run = 4; run <= 6; ++run) {
                    const int prev_state = run == 4 ? 0 : run - 1;
                    const float v = dp[idx(i, j - 1, prev_state)];
                    if (v < kInf) {
                        const float cand = v + c;
                        if (cand < dp[idx(i, j, run)]) {
                            dp[idx(i, j, run)] = cand;
                            from[idx(i, j, run)] = int8_t(prev_state);
                        }
                    }
                }
            }
        }
    }

    int end_state = 0;
    float best_end = kInf;
    for (int s = 0; s < kStates; ++s) {
        const float v = dp[idx(ns - 1, nt - 1, s)];
        if (v < best_end) {
            best_end = v;
            end_state = s;
        }
    }
    if (best_end >= kInf) throw std::runtime_error("align_pair: no feasible path");

    std::vector<std::pair<int, int>> path;
    size_t i = ns - 1, j = nt - 1;
    int s = end_state;
    while (true) {
        path.push_back({int(i), int(j)});
        if (i == 0 && j == 0) break;
        const int prev = from[idx(i, j, s)];
        if (s == 0) {
            --i;
            --j;
        } else if (s <= 3) {
            --i;
        } else {
            --j;
        }
        s = prev;
    }
    std::reverse(path.begin(), path.end());

    PairAlignment out;
    out.path = path;
    out.per_frame_ratio.assign(ns, 1.0);
    out.per_frame_target_f0.assign(ns, kFmin);

    // Each target frame contributes one frame of output time, split evenly
    // between the source frames matched to it, so the ratios sum to nt.
    std::vector<int> col_count(nt, 0);
    for (const auto& [pi, pj] : path) col_count[size_t(pj)] += 1;
    std::vector<double> mass(ns, 0.0), f0_acc(ns, 0.0);
    std::vector<int> matches(ns, 0);
    for (const auto& [pi, pj] : path) {
        mass[size_t(pi)] += 1.0 / double(col_count[size_t(pj)]);
        f0_acc[size_t(pi)] += tgt_contour.f0_hz[size_t(pj)];
        matches[size_t(pi)] += 1;
    }
    for (size_t k = 0; k < ns; ++k) {
        out.per_frame_ratio[k] = std::min(4.0, std::max(0.25, mass[k]));
        out.per_frame_target_f0[k] =
            matches[k] > 0 ? f0_acc[k] / double(matches[k])
                           : (k > 0 ? out.per_frame_target_f0[k - 1] : kFmin);
    }
    return out;
}

void save_report_csv(const std::vector<ReportRow>& rows, const std::string& path) {
    std::ofstream f(path, std::ios::trunc);
    if (!f) throw std::runtime_error("cannot write " + path);
    f << "system,ratio,f1,rms_cents,gpe,n_frames\n";
    for (const auto& row : rows)
        f << row.system << ',' << row.ratio << ',' << row.metrics.f1 << ','
          << row.metrics.rms_cents << ',' << row.metrics.gpe << ',' << row.metrics.n_frames
          << '\n';
}

}  // namespace clpc
