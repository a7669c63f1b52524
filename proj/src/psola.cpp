#include "clpc/psola.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <stdexcept>
#include <vector>

namespace clpc {

namespace {

constexpr double kPi = 3.14159265358979323846264338327950288;
constexpr double kPeakWeight = 0.5;      // lambda in the placement cost
constexpr double kSpacingWindow = 0.2;   // allowed period deviation

int frame_of(long sample, size_t frames) {
    long f = sample / kHop;
    if (f < 0) f = 0;
    if (f >= long(frames)) f = long(frames) - 1;
    return int(f);
}

struct Candidate {
    int pos;
    double amp;  // polarity-adjusted, normalized to the region peak
};

// Local waveform extrema of the dominant polarity inside [lo, hi).
std::vector<Candidate> region_candidates(const AudioBuffer& audio, long lo, long hi) {
    const auto& x = audio.samples;
    double extreme = 0.0;
    double sign = 1.0;
    for (long i = lo; i < hi; ++i) {
        if (std::abs(x[size_t(i)]) > extreme) {
            extreme = std::abs(x[size_t(i)]);
            sign = x[size_t(i)] >= 0.0 ? 1.0 : -1.0;
        }
    }
    std::vector<Candidate> out;
    if (extreme < 1e-9) return out;
    for (long i = std::max(lo, 1L); i < std::min(hi, long(x.size()) - 1); ++i) {
        const double v = sign * x[size_t(i)];
        if (v > sign * x[size_t(i) - 1] && v >= sign * x[size_t(i) + 1] && v > 0.0)
            out.push_back({int(i), v / extreme});
    }
    return out;
}

void uniform_marks(long lo, long hi, double spacing, bool voiced, double period,
                   PitchMarks& marks) {
    const long step = std::max(1L, std::lround(spacing));
    for (long p = lo; p < hi; p += step) {
        marks.position.push_back(int(p));
        marks.voiced.push_back(voiced);
        marks.period.push_back(period);
    }
}

// Min-cost chain of candidate peaks whose spacing stays within +-20% of the
// tracked period: cost = sum((spacing - T0)/T0)^2 - lambda * peak amplitude.
bool place_voiced_region(const AudioBuffer& audio, const PitchContour& contour, long lo, long hi,
                         PitchMarks& marks) {
    const auto cands = region_candidates(audio, lo, hi);
    if (cands.empty()) return false;
    const size_t n = cands.size();
    const size_t frames = contour.frames();

    auto period_at = [&](long sample) {
        return double(kTargetRate) / contour.f0_hz[size_t(frame_of(sample, frames))];
    };

    constexpr double kInf = 1e18;
    std::vector<double> score(n, kInf);
    std::vector<int> prev(n, -1);

    for (size_t v = 0; v < n; ++v) {
        const double t0_start = period_at(lo);
        if (cands[v].pos - lo <= (1.0 + kSpacingWindow) * t0_start)
            score[v] = -kPeakWeight * cands[v].amp;
        for (size_t u = 0; u < v; ++u) {
            if (score[u] >= kInf) continue;
            const double gap = double(cands[v].pos - cands[u].pos);
            const double t0 = period_at((cands[u].pos + cands[v].pos) / 2);
            if (gap < (1.0 - kSpacingWindow) * t0) continue;
            if (gap > (1.0 + kSpacingWindow) * t0) continue;
            const double dev = (gap - t0) / t0;
            const double cand_score = score[u] + dev * dev - kPeakWeight * cands[v].amp;
            if (cand_score < score[v]) {
                score[v] = cand_score;
                prev[v] = int(u);
            }
        }
    }

    // best chain that reaches the end of the region
    int best = -1;
    for (size_t v = 0; v < n; ++v) {
        if (score[v] >= kInf) continue;
        const double t0_end = period_at(hi - 1);
        if (hi - cands[v].pos > (1.0 + kSpacingWindow) * t0_end) continue;
        if (best < 0 || score[v] < score[size_t(best)]) best = int(v);
    }
    if (best < 0) return false;

    std::vector<int> chain;
    for (int v = best; v >= 0; v = prev[size_t(v)]) chain.push_back(v);
    std::reverse(chain.begin(), chain.end());
    for (int v : chain) {
        marks.position.push_back(cands[size_t(v)].pos);
        marks.voiced.push_back(true);
        marks.period.push_back(period_at(cands[size_t(v)].pos));
    }
    return true;
}

}  // namespace

PitchMarks detect_marks(const AudioBuffer& audio, const PitchContour& contour,
                        double voicing_threshold) {
    const size_t frames = contour.frames();
    const size_t expect = (audio.samples.size() + size_t(kHop) - 1) / size_t(kHop);
    if (frames != expect)
        throw std::invalid_argument("detect_marks: contour does not match audio");

    PitchMarks marks;
    size_t f = 0;
    while (f < frames) {
        const bool voiced = contour.periodicity[f] >= voicing_threshold;
        size_t g = f;
        while (g < frames && (contour.periodicity[g] >= voicing_threshold) == voiced) ++g;
        const long lo = long(f) * kHop;
        const long hi = std::min(long(g) * kHop, long(audio.samples.size()));
        if (hi > lo) {
            if (voiced) {
                if (!place_voiced_region(audio, contour, lo, hi, marks)) {
                    const double t0 = double(kTargetRate) /
                                      contour.f0_hz[size_t(frame_of((lo + hi) / 2, frames))];
                    uniform_marks(lo, hi, t0, true, t0, marks);
                }
            } else {
                uniform_marks(lo, hi, kHop, false, kHop, marks);
            }
        }
        f = g;
    }

    // enforce strictly increasing positions
    PitchMarks clean;
    for (size_t i = 0; i < marks.size(); ++i) {
        if (!clean.position.empty() && marks.position[i] <= clean.position.back()) continue;
        clean.position.push_back(marks.position[i]);
        clean.voiced.push_back(marks.voiced[i]);
        clean.period.push_back(marks.period[i]);
    }
    return clean;
}

// --- Overlap-add resynthesis --------------------------------------------------

AudioBuffer psola_modify(const AudioBuffer& audio, const PitchMarks& marks,
                         const std::vector<double>& pitch_map_hz,
                         const std::vector<double>& time_map_ratio) {
    const size_t n = audio.samples.size();
    const size_t frames = (n + size_t(kHop) - 1) / size_t(kHop);
    if (pitch_map_hz.size() != frames || time_map_ratio.size() != frames)
        throw std::invalid_argument("psola_modify: maps must cover all frames");
    AudioBuffer out;
    out.sample_rate = audio.sample_rate;
    if (n == 0 || marks.size() == 0) return out;

    // output boundary of each input frame under the time map
    std::vector<long long> cum(frames + 1, 0);
    double acc = 0.0;
    for (size_t f = 0; f < frames; ++f) {
        const long in_frame = std::min<long>(kHop, long(n) - long(f) * kHop);
        acc += time_map_ratio[f] * double(in_frame);
        cum[f + 1] = llround(acc);
    }
    const long long out_len = cum[frames];
    if (out_len <= 0) return out;

    auto src_of = [&](double o) {
        size_t f = 0;
        while (f + 1 < frames && double(cum[f + 1]) <= o) ++f;
        const double lo = double(cum[f]);
        const double hi = double(cum[f + 1]);
        const double span = std::max(1.0, hi - lo);
        const long in_frame = std::min<long>(kHop, long(n) - long(f) * kHop);
        return double(f) * kHop + (o - lo) / span * double(in_frame);
    };
    auto out_of = [&](double s) {
        const size_t f = size_t(frame_of(long(s), frames));
        const long in_frame = std::min<long>(kHop, long(n) - long(f) * kHop);
        return double(cum[f]) + (s - double(f) * kHop) / double(in_frame) *
                                    double(cum[f + 1] - cum[f]);
    };

    auto spacing_at = [&](size_t i) {
        if (i + 1 < marks.size()) return double(marks.position[i + 1] - marks.position[i]);
        if (i > 0) return double(marks.position[i] - marks.position[i - 1]);
        return double(kHop);
    };
    auto nearest_mark = [&](double s) {
        const auto it = std::lower_bound(marks.position.begin(), marks.position.end(),
                                         int(std::lround(s)));
        size_t i = size_t(it - marks.position.begin());
        if (i >= marks.size()) return marks.size() - 1;
        if (i > 0 && s - marks.position[i - 1] < marks.position[i] - s) return i - 1;
        return i;
    };

    std::vector<double> mix(size_t(out_len), 0.0);
    std::vector<double> wsum(size_t(out_len), 0.0);

    double o = std::max(0.0, out_of(double(marks.position[0])));
    long guard = 0;
    while (o < double(out_len) && guard++ < 4 * out_len) {
        const double s = src_of(o);
        const size_t i = nearest_mark(s);
        const long center = std::lround(o);

        // two-period Hann segment around the analysis mark
        const long left = std::lround(i > 0 ? double(marks.position[i] - marks.position[i - 1])
                                            : spacing_at(i));
        const long right = std::lround(spacing_at(i));
        for (long j = -left; j <= right; ++j) {
            const long src = marks.position[i] + j;
            const long dst = center + j;
            if (src < 0 || src >= long(n) || dst < 0 || dst >= out_len) continue;
            const double w = j < 0 ? 0.5 * (1.0 + std::cos(kPi * double(j) / double(left)))
                                   : 0.5 * (1.0 + std::cos(kPi * double(j) / double(right)));
            mix[size_t(dst)] += w * audio.samples[size_t(src)];
            wsum[size_t(dst)] += w;
        }

        // synthesis period: actual mark spacing scaled by the requested ratio
        double step = spacing_at(i);
        const int f = frame_of(long(s), frames);
        if (marks.voiced[i] && pitch_map_hz[size_t(f)] > 1.0) {
            const double ratio = pitch_map_hz[size_t(f)] * marks.period[i] / double(kTargetRate);
            if (ratio > 1e-3) step = spacing_at(i) / ratio;
        }
        o += std::max(1.0, step);
    }

    out.samples.resize(size_t(out_len));
    for (long long j = 0; j < out_len; ++j)
        out.samples[size_t(j)] = mix[size_t(j)] / std::max(wsum[size_t(j)], 0.2);
    return limit(out);
}

AudioBuffer psola_shift_stretch(const AudioBuffer& audio, const PitchContour& contour,
                                double pitch_ratio, double time_ratio) {
    if (pitch_ratio <= 0.0 || time_ratio <= 0.0)
        throw std::invalid_argument("psola: ratios must be positive");
    const auto marks = detect_marks(audio, contour);
    std::vector<double> pitch_map(contour.frames());
    std::vector<double> time_map(contour.frames(), time_ratio);
    for (size_t f = 0; f < contour.frames(); ++f)
        pitch_map[f] = clamp_f0(contour.f0_hz[f] * pitch_ratio);
    return psola_modify(audio, marks, pitch_map, time_map);
}

void save_marks_csv(const PitchMarks& marks, const std::string& path) {
    std::ofstream f(path, std::ios::trunc);
    if (!f) throw std::runtime_error("cannot write " + path);
    f << "index,position,voiced,period\n";
    for (size_t i = 0; i < marks.size(); ++i)
        f << i << ',' << marks.position[i] << ',' << (marks.voiced[i] ? 1 : 0) << ','
          << marks.period[i] << '\n';
}

}  // namespace clpc
