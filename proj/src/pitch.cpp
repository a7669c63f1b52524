#include "clpc/pitch.hpp"

#include <algorithm>
#include <cmath>
#include <memory>
#include <fstream>
#include <stdexcept>
#include <vector>

#ifdef _OPENMP
#include <omp.h>
#endif

namespace clpc {

namespace {
constexpr double kPi = 3.14159265358979323846264338327950288;
const double kLog2Span = std::log2(kFmax / kFmin);  // log2(11)
}  // namespace

// --- Quantizer -----------------------------------------------------------------

double clamp_f0(double f0_hz) {
    return std::min(kFmax, std::max(kFmin, f0_hz));
}

double pitch_bin_real(double f0_hz) {
    return double(kPitchBins - 1) * std::log2(clamp_f0(f0_hz) / kFmin) / kLog2Span;
}

int quantize_pitch(double f0_hz) {
    const int bin = int(std::lround(pitch_bin_real(f0_hz)));
    return std::min(kPitchBins - 1, std::max(0, bin));
}

double dequantize_pitch(int bin) {
    bin = std::min(kPitchBins - 1, std::max(0, bin));
    return kFmin * std::exp2(double(bin) / double(kPitchBins - 1) * kLog2Span);
}

double pitch_bin_width_cents() {
    return 1200.0 * kLog2Span / double(kPitchBins - 1);
}

// --- YIN candidate stage ----------------------------------------------------------

std::vector<YinCandidate> yin_frame(const std::vector<double>& window, int sample_rate) {
    const int tau_max = int(std::floor(double(sample_rate) / kFmin));
    const int tau_min = int(std::ceil(double(sample_rate) / kFmax));
    if (int(window.size()) < 2 * tau_max)
        throw std::invalid_argument("yin_frame: window too short");

    double energy = 0.0;
    for (double v : window) energy += v * v;
    if (energy < 1e-12) return {};

    const int width = int(window.size()) - tau_max;

    // squared difference function
    std::vector<double> diff(size_t(tau_max) + 1, 0.0);
    for (int tau = 1; tau <= tau_max; ++tau) {
        double acc = 0.0;
        for (int j = 0; j < width; ++j) {
            const double d = window[size_t(j)] - window[size_t(j + tau)];
            acc += d * d;
        }
        diff[size_t(tau)] = acc;
    }

    // cumulative-mean normalization
    std::vector<double> cmndf(size_t(tau_max) + 1, 1.0);
    double running = 0.0;
    for (int tau = 1; tau <= tau_max; ++tau) {
        running += diff[size_t(tau)];
        cmndf[size_t(tau)] = running > 1e-30 ? diff[size_t(tau)] * double(tau) / running : 1.0;
    }

    std::vector<YinCandidate> candidates;
    for (int tau = std::max(2, tau_min); tau < tau_max; ++tau) {
        if (!(cmndf[size_t(tau)] < cmndf[size_t(tau - 1)] &&
              cmndf[size_t(tau)] <= cmndf[size_t(tau + 1)]))
            continue;
        // parabolic refinement of the minimum
        const double s0 = cmndf[size_t(tau - 1)];
        const double s1 = cmndf[size_t(tau)];
        const double s2 = cmndf[size_t(tau + 1)];
        const double curvature = s0 + s2 - 2.0 * s1;
        double lag = double(tau);
        double value = s1;
        if (curvature > 1e-12) {
            const double shift = 0.5 * (s0 - s2) / curvature;  // in [-0.5, 0.5] at a true minimum
            if (std::abs(shift) <= 1.0) {
                lag = double(tau) + shift;
                value = s1 - 0.125 * (s0 - s2) * (s0 - s2) / curvature;
            }
        }
        lag = std::min(double(sample_rate) / kFmin, std::max(double(sample_rate) / kFmax, lag));
        candidates.push_back({lag, std::max(0.0, value)});
    }
    return candidates;
}

// --- Viterbi ------------------------------------------------------------------------

std::vector<int> viterbi_decode(const std::vector<std::vector<double>>& emissions,
                                double transition_sigma_cents) {
    const size_t frames = emissions.size();
    if (frames == 0) return {};
    const int bins = int(emissions[0].size());

    constexpr double kNegInf = -1e300;
    const double width = pitch_bin_width_cents();
    std::vector<double> penalty(static_cast<size_t>(bins));
    for (int d = 0; d < bins; ++d) {
        const double cents = double(d) * width;
        penalty[size_t(d)] =
            -(cents * cents) / (2.0 * transition_sigma_cents * transition_sigma_cents);
    }

    auto log_emission = [&](size_t t, int j) {
        const double e = emissions[t][size_t(j)];
        return e > 0.0 ? std::log(e) : kNegInf;
    };

    auto check_frame = [&](size_t t) {
        if (int(emissions[t].size()) != bins)
            throw std::invalid_argument("viterbi_decode: ragged emissions");
        for (double e : emissions[t])
            if (e > 0.0) return;
        throw std::runtime_error("degenerate emission");
    };

    check_frame(0);
    std::vector<double> score(static_cast<size_t>(bins));
    for (int j = 0; j < bins; ++j) score[size_t(j)] = log_emission(0, j);

    std::vector<std::vector<int>> backptr(frames, std::vector<int>(size_t(bins), 0));
    std::vector<double> next(static_cast<size_t>(bins));
    for (size_t t = 1; t < frames; ++t) {
        check_frame(t);
#ifdef _OPENMP
#pragma omp parallel for schedule(static)
#endif
        for (int j = 0; j < bins; ++j) {
            double best = kNegInf;
            int arg = 0;
            for (int i = 0; i < bins; ++i) {
                const double cand = score[size_t(i)] + penalty[size_t(std::abs(i - j))];
                if (cand > best) {
                    best = cand;
                    arg = i;
                }
            }
            next[size_t(j)] = best + log_emission(t, j);
            backptr[t][size_t(j)] = arg;
        }
        score.swap(next);
    }

    int tail = 0;
    for (int j = 1; j < bins; ++j)
        if (score[size_t(j)] > score[size_t(tail)]) tail = j;

    std::vector<int> path(frames);
    path[frames - 1] = tail;
    for (size_t t = frames - 1; t > 0; --t) path[t - 1] = backptr[t][size_t(path[t])];
    return path;
}

// --- Dither -----------------------------------------------------------------------

double dither(double f0_hz, Rng& rng, double width_cents) {
    if (width_cents <= 0.0) return f0_hz;
    const double cents = (rng.uniform() - rng.uniform()) * 0.5 * width_cents;
    return f0_hz * std::exp2(cents / 1200.0);
}

// --- A-weighted loudness -------------------------------------------------------------

double a_weighting_db(double freq_hz) {
    const double f2 = freq_hz * freq_hz;
    const double num = 12194.0 * 12194.0 * f2 * f2;
    const double den = (f2 + 20.6 * 20.6) *
                       std::sqrt((f2 + 107.7 * 107.7) * (f2 + 737.9 * 737.9)) *
                       (f2 + 12194.0 * 12194.0);
    if (num <= 0.0 || den <= 0.0) return -400.0;
    return 20.0 * std::log10(num / den) + 2.0;
}

namespace {

// cached DFT twiddles and A-weights for one window geometry
struct LoudnessTables {
    int n = 0;
    int sample_rate = 0;
    std::vector<double> cos_table, sin_table;  // (half+1) x n
    std::vector<double> weight;                // linear-power A-weights per bin

    LoudnessTables(int n_, int rate) : n(n_), sample_rate(rate) {
        const int half = n / 2;
        cos_table.resize(size_t(half + 1) * size_t(n));
        sin_table.resize(size_t(half + 1) * size_t(n));
        weight.resize(size_t(half + 1));
        for (int k = 0; k <= half; ++k) {
            const double step = -2.0 * kPi * double(k) / double(n);
            for (int j = 0; j < n; ++j) {
                cos_table[size_t(k) * n + size_t(j)] = std::cos(step * j);
                sin_table[size_t(k) * n + size_t(j)] = std::sin(step * j);
            }
            const double freq = double(k) * double(rate) / double(n);
            weight[size_t(k)] = std::pow(10.0, a_weighting_db(freq) / 10.0);
        }
    }
};

}  // namespace

double a_weighted_loudness(const std::vector<double>& window, int sample_rate) {
    const int n = int(window.size());
    if (n == 0) return -80.0;
    const int half = n / 2;

    static const LoudnessTables standard(2 * kHop, kTargetRate);
    const LoudnessTables* tables = &standard;
    std::unique_ptr<LoudnessTables> local;
    if (n != standard.n || sample_rate != standard.sample_rate) {
        local = std::make_unique<LoudnessTables>(n, sample_rate);
        tables = local.get();
    }

    // direct DFT; amplitudes normalized so a full-scale exact-bin sine
    // contributes 1.0 to the weighted power sum
    double weighted = 0.0;
    for (int k = 0; k <= half; ++k) {
        const double* ct = tables->cos_table.data() + size_t(k) * size_t(n);
        const double* st = tables->sin_table.data() + size_t(k) * size_t(n);
        double re = 0.0, im = 0.0;
        for (int j = 0; j < n; ++j) {
            re += window[size_t(j)] * ct[j];
            im += window[size_t(j)] * st[j];
        }
        const double scale = (k == 0 || 2 * k == n) ? 1.0 / n : 2.0 / n;
        const double amp = std::hypot(re, im) * scale;
        weighted += tables->weight[size_t(k)] * amp * amp;
    }
    return 10.0 * std::log10(weighted + 1e-10) + 20.0;
}

// --- Gating -----------------------------------------------------------------------------

PitchContour gate_periodicity(const PitchContour& contour,
                              const std::vector<double>& loudness_db, double threshold_db) {
    if (contour.f0_hz.size() != contour.periodicity.size() ||
        contour.f0_hz.size() != loudness_db.size())
        throw std::invalid_argument("gate_periodicity: length mismatch");
    PitchContour out = contour;
    for (size_t t = 0; t < loudness_db.size(); ++t)
        if (loudness_db[t] < threshold_db) out.periodicity[t] = 0.0;
    return out;
}

// --- Frame kernels ------------------------------------------------------------------------

namespace {

std::vector<double> gather_window(const AudioBuffer& audio, long start, int length) {
    std::vector<double> window(size_t(length), 0.0);
    const long n = long(audio.samples.size());
    for (int i = 0; i < length; ++i) {
        const long idx = start + i;
        if (idx >= 0 && idx < n) window[size_t(i)] = audio.samples[size_t(idx)];
    }
    return window;
}

size_t frame_count(const AudioBuffer& audio, int hop) {
    return (audio.samples.size() + size_t(hop) - 1) / size_t(hop);
}

void emissions_for_frame(const AudioBuffer& audio, const TrackerOptions& opt, size_t t,
                         std::vector<double>& emission, std::vector<YinCandidate>& cands) {
    const int yin_window = 2 * int(std::floor(double(opt.sample_rate) / kFmin));
    const long center = long(t) * opt.hop + opt.hop / 2;
    const auto window = gather_window(audio, center - yin_window / 2, yin_window);

    cands = yin_frame(window, opt.sample_rate);
    emission.assign(kPitchBins, 0.0);

    // A perfectly periodic window has CMNDF minima at every multiple of the
    // true lag; keep the shortest lag of each near-equal family so the path
    // cannot lock onto a subharmonic.
    std::vector<bool> suppressed(cands.size(), false);
    for (size_t j = 0; j < cands.size(); ++j) {
        for (size_t i = 0; i < cands.size(); ++i) {
            if (i == j || cands[i].lag >= cands[j].lag) continue;
            const double ratio = cands[j].lag / cands[i].lag;
            const double nearest = std::round(ratio);
            if (nearest >= 2.0 && std::abs(ratio - nearest) < 0.08 &&
                cands[i].cmndf <= cands[j].cmndf + 0.15) {
                suppressed[j] = true;
                break;
            }
        }
    }

    bool any = false;
    for (size_t ci = 0; ci < cands.size(); ++ci) {
        const auto& cand = cands[ci];
        if (suppressed[ci]) continue;
        const double freq = clamp_f0(double(opt.sample_rate) / cand.lag);
        const double weight = std::max(0.0, 1.0 - cand.cmndf);
        if (weight <= 0.0) continue;
        const double center_bin = pitch_bin_real(freq);
        const double spread = std::max(0.25, opt.emission_spread_bins);
        const int lo = std::max(0, int(std::ceil(center_bin - spread)));
        const int hi = std::min(kPitchBins - 1, int(std::floor(center_bin + spread)));
        for (int b = lo; b <= hi; ++b) {
            const double tri = 1.0 - std::abs(double(b) - center_bin) / spread;
            if (tri > 0.0) {
                emission[size_t(b)] += weight * tri;
                any = true;
            }
        }
    }
    if (!any) {
        emission.assign(kPitchBins, 1.0 / double(kPitchBins));
    } else {
        for (double& e : emission) e += 1e-6;  // keep Viterbi nondegenerate
    }
}

template <bool Parallel>
std::vector<std::vector<double>> frame_emissions_impl(
    const AudioBuffer& audio, const TrackerOptions& opt,
    std::vector<std::vector<YinCandidate>>* candidates) {
    const size_t frames = frame_count(audio, opt.hop);
    std::vector<std::vector<double>> emissions(frames);
    std::vector<std::vector<YinCandidate>> cands(frames);

#ifdef _OPENMP
#pragma omp parallel for schedule(dynamic) if (Parallel)
#endif
    for (long long t = 0; t < (long long)frames; ++t)
        emissions_for_frame(audio, opt, size_t(t), emissions[size_t(t)], cands[size_t(t)]);

    if (candidates) *candidates = std::move(cands);
    return emissions;
}

template <bool Parallel>
std::vector<double> frame_loudness_impl(const AudioBuffer& audio, const TrackerOptions& opt) {
    const size_t frames = frame_count(audio, opt.hop);
    std::vector<double> loud(frames);
#ifdef _OPENMP
#pragma omp parallel for schedule(static) if (Parallel)
#endif
    for (long long t = 0; t < (long long)frames; ++t) {
        const long center = long(t) * opt.hop + opt.hop / 2;
        const auto window = gather_window(audio, center - opt.hop, 2 * opt.hop);
        loud[size_t(t)] = a_weighted_loudness(window, opt.sample_rate);
    }
    return loud;
}

}  // namespace

std::vector<std::vector<double>> frame_emissions(const AudioBuffer& audio,
                                                 const TrackerOptions& opt,
                                                 std::vector<std::vector<YinCandidate>>* candidates) {
    if (opt.parallel) return frame_emissions_impl<true>(audio, opt, candidates);
    return frame_emissions_impl<false>(audio, opt, candidates);
}

std::vector<std::vector<double>> frame_emissions_serial(
    const AudioBuffer& audio, const TrackerOptions& opt,
    std::vector<std::vector<YinCandidate>>* candidates) {
    return frame_emissions_impl<false>(audio, opt, candidates);
}

std::vector<double> frame_loudness(const AudioBuffer& audio, const TrackerOptions& opt) {
    if (opt.parallel) return frame_loudness_impl<true>(audio, opt);
    return frame_loudness_impl<false>(audio, opt);
}

std::vector<double> frame_loudness_serial(const AudioBuffer& audio, const TrackerOptions& opt) {
    return frame_loudness_impl<false>(audio, opt);
}

// --- Full tracker ----------------------------------------------------------------------------

PitchContour track(const AudioBuffer& audio, const TrackerOptions& opt) {
    std::vector<std::vector<YinCandidate>> candidates;
    const auto emissions = frame_emissions(audio, opt, &candidates);
    const auto loudness = frame_loudness(audio, opt);
    const auto path = viterbi_decode(emissions, opt.transition_sigma_cents);

    const double match_tolerance_cents = 2.0 * pitch_bin_width_cents();

    PitchContour contour;
    contour.f0_hz.resize(path.size());
    contour.periodicity.resize(path.size());
    for (size_t t = 0; t < path.size(); ++t) {
        const double center = dequantize_pitch(path[t]);
        double f0 = center;
        double periodicity = 0.0;
        double best = match_tolerance_cents;
        for (const auto& cand : candidates[t]) {
            const double freq = clamp_f0(double(opt.sample_rate) / cand.lag);
            const double dist = std::abs(cents_between(freq, center));
            if (dist < best) {
                best = dist;
                f0 = freq;
                periodicity = std::min(1.0, std::max(0.0, 1.0 - cand.cmndf));
            }
        }
        contour.f0_hz[t] = f0;
        contour.periodicity[t] = periodicity;
    }
    return gate_periodicity(contour, loudness, opt.loudness_gate_db);
}

void save_contour_csv(const PitchContour& contour, const std::string& path,
                      double voicing_threshold) {
    std::ofstream f(path, std::ios::trunc);
    if (!f) throw std::runtime_error("cannot write " + path);
    f << "frame_index,f0_hz,periodicity,voiced\n";
    for (size_t t = 0; t < contour.frames(); ++t) {
        f << t << ',' << contour.f0_hz[t] << ',' << contour.periodicity[t] << ','
          << (contour.periodicity[t] >= voicing_threshold ? 1 : 0) << '\n';
    }
}

}  // namespace clpc
