#include "clpc/excitation_net.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <stdexcept>

#ifdef _OPENMP
#include <omp.h>
#endif

namespace clpc {

namespace {

double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

// y += M * x
void matvec_acc(const Mat& m, const double* x, double* y) {
    for (int r = 0; r < m.rows; ++r) {
        const double* row = m.row(r);
        double acc = 0.0;
        for (int c = 0; c < m.cols; ++c) acc += row[c] * x[c];
        y[r] += acc;
    }
}

// y += M^T * g
void matvec_transposed_acc(const Mat& m, const double* g, double* y) {
    for (int r = 0; r < m.rows; ++r) {
        const double* row = m.row(r);
        const double gr = g[r];
        if (gr == 0.0) continue;
        for (int c = 0; c < m.cols; ++c) y[c] += row[c] * gr;
    }
}

// dM += g * x^T
void outer_acc(Mat& dm, const double* g, const double* x) {
    for (int r = 0; r < dm.rows; ++r) {
        double* row = dm.row(r);
        const double gr = g[r];
        if (gr == 0.0) continue;
        for (int c = 0; c < dm.cols; ++c) row[c] += gr * x[c];
    }
}

}  // namespace

NetParams::NetParams(const NetConfig& config) : cfg(config) {
    const int F = cfg.frame_input_dim();
    const int C = cfg.conv_channels;
    const int D = cfg.cond_dim;
    const int E = cfg.sample_embed_dim;
    const int A = cfg.gru_a_dim;
    const int B = cfg.gru_b_dim;

    pitch_embed = Mat(256, cfg.pitch_embed_dim);
    conv1_w = Mat(C, 3 * F);
    conv1_b = Mat(C, 1);
    conv2_w = Mat(C, 3 * C);
    conv2_b = Mat(C, 1);
    dense1_w = Mat(D, C);
    dense1_b = Mat(D, 1);
    dense2_w = Mat(D, D);
    dense2_b = Mat(D, 1);

    emb_exc = Mat(256, E);
    emb_sig = Mat(256, E);
    emb_pred = Mat(256, E);
    a_wx = Mat(3 * A, E + D);
    a_uh = Mat(3 * A, A);
    a_b = Mat(3 * A, 1);
    b_wx = Mat(3 * B, A + D);
    b_uh = Mat(3 * B, B);
    b_b = Mat(3 * B, 1);
    out_w = Mat(256, B);
    out_b = Mat(256, 1);
}

std::vector<std::pair<std::string, Mat*>> named_tensors(NetParams& p) {
    return {
        {"pitch_embed", &p.pitch_embed},
        {"conv1_w", &p.conv1_w}, {"conv1_b", &p.conv1_b},
        {"conv2_w", &p.conv2_w}, {"conv2_b", &p.conv2_b},
        {"dense1_w", &p.dense1_w}, {"dense1_b", &p.dense1_b},
        {"dense2_w", &p.dense2_w}, {"dense2_b", &p.dense2_b},
        {"emb_exc", &p.emb_exc}, {"emb_sig", &p.emb_sig}, {"emb_pred", &p.emb_pred},
        {"a_wx", &p.a_wx}, {"a_uh", &p.a_uh}, {"a_b", &p.a_b},
        {"b_wx", &p.b_wx}, {"b_uh", &p.b_uh}, {"b_b", &p.b_b},
        {"out_w", &p.out_w}, {"out_b", &p.out_b},
    };
}

void init_params(NetParams& p, Rng& rng) {
    for (auto& [name, tensor] : named_tensors(p)) {
        if (name == "out_w" || name == "out_b" || name.ends_with("_b")) {
            tensor->zero();
        } else if (name.rfind("emb", 0) == 0 || name == "pitch_embed") {
            for (double& w : tensor->w) w = rng.uniform(-0.4, 0.4);
        } else {
            const double s = 1.0 / std::sqrt(double(tensor->cols));
            for (double& w : tensor->w) w = rng.uniform(-s, s);
        }
    }
    // bias the update gates toward keeping state so long spans survive early
    // training (h = z*h_prev + (1-z)*n)
    for (int j = 0; j < p.cfg.gru_a_dim; ++j) p.a_b.w[size_t(j)] = 2.5;
    for (int j = 0; j < p.cfg.gru_b_dim; ++j) p.b_b.w[size_t(j)] = 2.5;
}

// --- Frame-rate network --------------------------------------------------------

namespace {

struct FrameCache {
    // per frame: raw input, both conv activations, dense activation, output
    std::vector<std::vector<double>> input, h1, h2, h3, cond;
};

void frame_net_run(const NetParams& p, const std::vector<FeatureFrame>& frames, FrameCache& cache) {
    const int F = p.cfg.frame_input_dim();
    const int C = p.cfg.conv_channels;
    const int D = p.cfg.cond_dim;
    const int P = p.cfg.pitch_embed_dim;
    const long n = long(frames.size());
    if (n == 0) throw std::invalid_argument("frame net: empty input");

    auto clampf = [&](long f) { return std::min(n - 1, std::max(0L, f)); };

    cache.input.assign(size_t(n), std::vector<double>(size_t(F), 0.0));
    for (long f = 0; f < n; ++f) {
        auto& in = cache.input[size_t(f)];
        for (int i = 0; i < kNumBands; ++i) in[size_t(i)] = frames[size_t(f)].bfcc[size_t(i)];
        const double* emb = p.pitch_embed.row(frames[size_t(f)].pitch_bin);
        for (int i = 0; i < P; ++i) in[size_t(kNumBands + i)] = emb[i];
        in[size_t(F - 1)] = frames[size_t(f)].periodicity;
    }

    auto conv_layer = [&](const Mat& w, const Mat& b, const std::vector<std::vector<double>>& x,
                          int in_dim, std::vector<std::vector<double>>& y) {
        y.assign(size_t(n), std::vector<double>(size_t(C), 0.0));
        for (long f = 0; f < n; ++f) {
            for (int c = 0; c < C; ++c) {
                double acc = b.w[size_t(c)];
                const double* wr = w.row(c);
                for (int d = 0; d < 3; ++d) {
                    const auto& src = x[size_t(clampf(f + d - 1))];
                    const double* wk = wr + size_t(d) * in_dim;
                    for (int i = 0; i < in_dim; ++i) acc += wk[i] * src[size_t(i)];
                }
                y[size_t(f)][size_t(c)] = std::tanh(acc);
            }
        }
    };

    conv_layer(p.conv1_w, p.conv1_b, cache.input, F, cache.h1);
    conv_layer(p.conv2_w, p.conv2_b, cache.h1, C, cache.h2);

    cache.h3.assign(size_t(n), std::vector<double>(size_t(D), 0.0));
    cache.cond.assign(size_t(n), std::vector<double>(size_t(D), 0.0));
    for (long f = 0; f < n; ++f) {
        auto& h3 = cache.h3[size_t(f)];
        for (int j = 0; j < D; ++j) h3[size_t(j)] = p.dense1_b.w[size_t(j)];
        matvec_acc(p.dense1_w, cache.h2[size_t(f)].data(), h3.data());
        for (double& v : h3) v = std::tanh(v);

        auto& cond = cache.cond[size_t(f)];
        for (int j = 0; j < D; ++j) cond[size_t(j)] = p.dense2_b.w[size_t(j)];
        matvec_acc(p.dense2_w, h3.data(), cond.data());
        for (double& v : cond) v = std::tanh(v);
    }
}

// Backward through the frame-rate network given d(cond); accumulates into g.
void frame_net_backward(const NetParams& p, const std::vector<FeatureFrame>& frames,
                        const FrameCache& cache, std::vector<std::vector<double>>& dcond,
                        NetParams& g) {
    const int F = p.cfg.frame_input_dim();
    const int C = p.cfg.conv_channels;
    const int D = p.cfg.cond_dim;
    const int P = p.cfg.pitch_embed_dim;
    const long n = long(frames.size());
    auto clampf = [&](long f) { return std::min(n - 1, std::max(0L, f)); };

    std::vector<std::vector<double>> dh2(size_t(n), std::vector<double>(size_t(C), 0.0));
    std::vector<double> da(static_cast<size_t>(std::max(C, D)));

    for (long f = 0; f < n; ++f) {
        // dense2
        for (int j = 0; j < D; ++j) {
            const double y = cache.cond[size_t(f)][size_t(j)];
            da[size_t(j)] = dcond[size_t(f)][size_t(j)] * (1.0 - y * y);
        }
        outer_acc(g.dense2_w, da.data(), cache.h3[size_t(f)].data());
        for (int j = 0; j < D; ++j) g.dense2_b.w[size_t(j)] += da[size_t(j)];
        std::vector<double> dh3(static_cast<size_t>(D), 0.0);
        matvec_transposed_acc(p.dense2_w, da.data(), dh3.data());

        // dense1
        for (int j = 0; j < D; ++j) {
            const double y = cache.h3[size_t(f)][size_t(j)];
            da[size_t(j)] = dh3[size_t(j)] * (1.0 - y * y);
        }
        outer_acc(g.dense1_w, da.data(), cache.h2[size_t(f)].data());
        for (int j = 0; j < D; ++j) g.dense1_b.w[size_t(j)] += da[size_t(j)];
        matvec_transposed_acc(p.dense1_w, da.data(), dh2[size_t(f)].data());
    }

    auto conv_backward = [&](const Mat& w, Mat& gw, Mat& gb,
                             const std::vector<std::vector<double>>& x, int in_dim,
                             const std::vector<std::vector<double>>& y,
                             const std::vector<std::vector<double>>& dy,
                             std::vector<std::vector<double>>& dx) {
        dx.assign(size_t(n), std::vector<double>(size_t(in_dim), 0.0));
        for (long f = 0; f < n; ++f) {
            for (int c = 0; c < C; ++c) {
                const double out = y[size_t(f)][size_t(c)];
                const double d = dy[size_t(f)][size_t(c)] * (1.0 - out * out);
                if (d == 0.0) continue;
                gb.w[size_t(c)] += d;
                double* gwr = gw.row(c);
                const double* wr = w.row(c);
                for (int k = 0; k < 3; ++k) {
                    const long src = clampf(f + k - 1);
                    const auto& xin = x[size_t(src)];
                    auto& dxin = dx[size_t(src)];
                    double* gk = gwr + size_t(k) * in_dim;
                    const double* wk = wr + size_t(k) * in_dim;
                    for (int i = 0; i < in_dim; ++i) {
                        gk[i] += d * xin[size_t(i)];
                        dxin[size_t(i)] += d * wk[i];
                    }
                }
            }
        }
    };

    std::vector<std::vector<double>> dh1, din;
    conv_backward(p.conv2_w, g.conv2_w, g.conv2_b, cache.h1, C, cache.h2, dh2, dh1);
    conv_backward(p.conv1_w, g.conv1_w, g.conv1_b, cache.input, F, cache.h1, dh1, din);

    for (long f = 0; f < n; ++f) {
        double* emb_grad = g.pitch_embed.row(frames[size_t(f)].pitch_bin);
        for (int i = 0; i < P; ++i) emb_grad[i] += din[size_t(f)][size_t(kNumBands + i)];
    }
}

}  // namespace

std::vector<std::vector<double>> frame_net_forward(const NetParams& p,
                                                   const std::vector<FeatureFrame>& frames) {
    FrameCache cache;
    frame_net_run(p, frames, cache);
    return cache.cond;
}

// --- Sample-rate network ----------------------------------------------------------

SampleState make_state(const NetConfig& cfg) {
    SampleState s;
    s.h_a.assign(size_t(cfg.gru_a_dim), 0.0);
    s.h_b.assign(size_t(cfg.gru_b_dim), 0.0);
    return s;
}

namespace {

// One GRU step. Gate rows in wx/uh/b are ordered update, reset, candidate.
// h is updated in place; z/r/nn receive the gate activations for backward.
void gru_step(const Mat& wx, const Mat& uh, const Mat& b, int dim, const double* x,
              std::vector<double>& h, double* z, double* r, double* nn) {
    std::vector<double> act(static_cast<size_t>(3 * dim));
    for (int j = 0; j < 3 * dim; ++j) act[size_t(j)] = b.w[size_t(j)];
    matvec_acc(wx, x, act.data());
    // update/reset rows also see the previous state
    for (int j = 0; j < 2 * dim; ++j) {
        const double* row = uh.row(j);
        double acc = 0.0;
        for (int c = 0; c < dim; ++c) acc += row[c] * h[size_t(c)];
        act[size_t(j)] += acc;
    }
    for (int j = 0; j < dim; ++j) {
        z[j] = sigmoid(act[size_t(j)]);
        r[j] = sigmoid(act[size_t(dim + j)]);
    }
    // candidate sees the reset-gated state
    for (int j = 0; j < dim; ++j) {
        const double* row = uh.row(2 * dim + j);
        double acc = act[size_t(2 * dim + j)];
        for (int c = 0; c < dim; ++c) acc += row[c] * (r[c] * h[size_t(c)]);
        nn[j] = std::tanh(acc);
    }
    for (int j = 0; j < dim; ++j)
        h[size_t(j)] = z[j] * h[size_t(j)] + (1.0 - z[j]) * nn[j];
}

// Backward for one GRU step. dh is dL/dh_new on entry and dL/dh_prev on exit;
// dx receives the input gradient.
void gru_backward(const Mat& wx, const Mat& uh, Mat& gwx, Mat& guh, Mat& gb, int dim,
                  const double* x, const double* h_prev, const double* z, const double* r,
                  const double* nn, std::vector<double>& dh, double* dx, int in_dim) {
    std::vector<double> da(static_cast<size_t>(3 * dim), 0.0);
    std::vector<double> dq(static_cast<size_t>(dim), 0.0);
    std::vector<double> dh_prev(static_cast<size_t>(dim), 0.0);

    // h = z*h_prev + (1-z)*n
    for (int j = 0; j < dim; ++j) {
        const double d = dh[size_t(j)];
        const double dz = d * (h_prev[j] - nn[j]);
        const double dn = d * (1.0 - z[j]);
        dh_prev[size_t(j)] += d * z[j];
        da[size_t(j)] = dz * z[j] * (1.0 - z[j]);                  // update gate
        da[size_t(2 * dim + j)] = dn * (1.0 - nn[j] * nn[j]);      // candidate
    }
    // candidate recurrent term used q = r .* h_prev
    for (int j = 0; j < dim; ++j) {
        const double* row = uh.row(2 * dim + j);
        const double g = da[size_t(2 * dim + j)];
        if (g == 0.0) continue;
        for (int c = 0; c < dim; ++c) dq[size_t(c)] += row[c] * g;
    }
    for (int j = 0; j < dim; ++j) {
        const double dr = dq[size_t(j)] * h_prev[j];
        dh_prev[size_t(j)] += dq[size_t(j)] * r[j];
        da[size_t(dim + j)] = dr * r[j] * (1.0 - r[j]);            // reset gate
    }

    // parameter gradients
    for (int j = 0; j < 3 * dim; ++j) {
        const double g = da[size_t(j)];
        if (g == 0.0) continue;
        gb.w[size_t(j)] += g;
        double* grow = gwx.row(j);
        for (int c = 0; c < in_dim; ++c) grow[c] += g * x[c];
    }
    for (int j = 0; j < 2 * dim; ++j) {
        const double g = da[size_t(j)];
        if (g == 0.0) continue;
        double* grow = guh.row(j);
        for (int c = 0; c < dim; ++c) grow[c] += g * h_prev[c];
    }
    for (int j = 0; j < dim; ++j) {
        const double g = da[size_t(2 * dim + j)];
        if (g == 0.0) continue;
        double* grow = guh.row(2 * dim + j);
        for (int c = 0; c < dim; ++c) grow[c] += g * (r[c] * h_prev[c]);
    }

    // input and previous-state gradients
    for (int c = 0; c < in_dim; ++c) dx[c] = 0.0;
    matvec_transposed_acc(wx, da.data(), dx);
    for (int j = 0; j < 2 * dim; ++j) {
        const double g = da[size_t(j)];
        if (g == 0.0) continue;
        const double* row = uh.row(j);
        for (int c = 0; c < dim; ++c) dh_prev[size_t(c)] += row[c] * g;
    }
    dh = std::move(dh_prev);
}

void softmax256(const double* logits, double* probs) {
    double mx = logits[0];
    for (int i = 1; i < 256; ++i) mx = std::max(mx, logits[i]);
    double sum = 0.0;
    for (int i = 0; i < 256; ++i) {
        probs[i] = std::exp(logits[i] - mx);
        sum += probs[i];
    }
    for (int i = 0; i < 256; ++i) probs[i] /= sum;
}

}  // namespace

CategoricalDist256 sample_net_forward(const NetParams& p, SampleState& state, int prev_exc_code,
                                      int prev_sample_code, int pred_code,
                                      const std::vector<double>& cond) {
    const int E = p.cfg.sample_embed_dim;
    const int D = p.cfg.cond_dim;
    const int A = p.cfg.gru_a_dim;
    const int B = p.cfg.gru_b_dim;
    if (prev_exc_code < 0 || prev_exc_code > 255 || prev_sample_code < 0 ||
        prev_sample_code > 255 || pred_code < 0 || pred_code > 255)
        throw std::invalid_argument("sample_net_forward: code out of range");
    if (int(cond.size()) != D) throw std::invalid_argument("sample_net_forward: bad conditioning");

    std::vector<double> x_a(static_cast<size_t>(E + D));
    const double* e1 = p.emb_exc.row(prev_exc_code);
    const double* e2 = p.emb_sig.row(prev_sample_code);
    const double* e3 = p.emb_pred.row(pred_code);
    for (int i = 0; i < E; ++i) x_a[size_t(i)] = e1[i] + e2[i] + e3[i];
    for (int i = 0; i < D; ++i) x_a[size_t(E + i)] = cond[size_t(i)];

    std::vector<double> za(static_cast<size_t>(A)), ra(static_cast<size_t>(A)), na(static_cast<size_t>(A));
    gru_step(p.a_wx, p.a_uh, p.a_b, A, x_a.data(), state.h_a, za.data(), ra.data(), na.data());

    std::vector<double> x_b(static_cast<size_t>(A + D));
    for (int i = 0; i < A; ++i) x_b[size_t(i)] = state.h_a[size_t(i)];
    for (int i = 0; i < D; ++i) x_b[size_t(A + i)] = cond[size_t(i)];

    std::vector<double> zb(static_cast<size_t>(B)), rb(static_cast<size_t>(B)), nb(static_cast<size_t>(B));
    gru_step(p.b_wx, p.b_uh, p.b_b, B, x_b.data(), state.h_b, zb.data(), rb.data(), nb.data());

    std::vector<double> logits(256);
    for (int i = 0; i < 256; ++i) logits[size_t(i)] = p.out_b.w[size_t(i)];
    matvec_acc(p.out_w, state.h_b.data(), logits.data());

    CategoricalDist256 dist;
    softmax256(logits.data(), dist.p.data());
    return dist;
}

int sample_excitation(const CategoricalDist256& dist, Rng& rng, double threshold) {
    double total = 0.0;
    std::array<double, 256> thresholded{};
    for (int i = 0; i < 256; ++i) {
        thresholded[size_t(i)] = std::max(0.0, dist.p[size_t(i)] - threshold);
        total += thresholded[size_t(i)];
    }
    if (total <= 0.0) {
        int arg = 0;
        for (int i = 1; i < 256; ++i)
            if (dist.p[size_t(i)] > dist.p[size_t(arg)]) arg = i;
        return arg;
    }
    const double u = rng.uniform() * total;
    double acc = 0.0;
    int last_live = 0;
    for (int i = 0; i < 256; ++i) {
        if (thresholded[size_t(i)] <= 0.0) continue;
        last_live = i;
        acc += thresholded[size_t(i)];
        if (u < acc) return i;
    }
    return last_live;
}

// --- Teacher forcing ---------------------------------------------------------------

TrainingSlice make_training_slice(const AudioBuffer& audio,
                                  const std::vector<FeatureFrame>& features, int start_frame,
                                  int n_frames, int hop) {
    if (start_frame < 0 || n_frames < 1 || size_t(start_frame + n_frames) > features.size())
        throw std::invalid_argument("make_training_slice: frame range out of bounds");

    TrainingSlice slice;
    slice.hop = hop;
    slice.frames.assign(features.begin() + start_frame, features.begin() + start_frame + n_frames);

    std::vector<LpcFrame> lpc(static_cast<size_t>(n_frames));
    for (int f = 0; f < n_frames; ++f)
        lpc[size_t(f)] = lpc_from_bfcc(slice.frames[size_t(f)].bfcc);

    const long n = long(audio.samples.size());
    const int total = n_frames * hop;
    slice.exc_codes.resize(size_t(total));
    slice.sig_codes.resize(size_t(total));
    slice.pred_codes.resize(size_t(total));

    auto sample_at = [&](long idx) {
        return (idx >= 0 && idx < n) ? audio.samples[size_t(idx)] : 0.0;
    };

    for (int t = 0; t < total; ++t) {
        const long g = long(start_frame) * hop + t;
        std::array<double, kLpcOrder> history;
        for (int i = 0; i < kLpcOrder; ++i) history[size_t(i)] = sample_at(g - 1 - i);
        const double prediction = predict(history, lpc[size_t(t / hop)].a);
        const double x = sample_at(g);
        slice.pred_codes[size_t(t)] = mulaw_encode(prediction);
        slice.sig_codes[size_t(t)] = mulaw_encode(x);
        slice.exc_codes[size_t(t)] = mulaw_encode(x - prediction);
    }
    return slice;
}

// --- Training forward/backward -------------------------------------------------------

namespace {

struct RunCache {
    FrameCache frame;
    // per-step activations; h arrays hold T+1 states with index 0 the initial zero state
    std::vector<double> ein, ha, za, ra, na, hb, zb, rb, nb, probs;
};

double run_forward(const NetParams& p, const TrainingSlice& slice, RunCache& cache) {
    const int E = p.cfg.sample_embed_dim;
    const int D = p.cfg.cond_dim;
    const int A = p.cfg.gru_a_dim;
    const int B = p.cfg.gru_b_dim;
    const int T = int(slice.exc_codes.size());

    frame_net_run(p, slice.frames, cache.frame);

    cache.ein.assign(size_t(T) * E, 0.0);
    cache.ha.assign(size_t(T + 1) * A, 0.0);
    cache.za.assign(size_t(T) * A, 0.0);
    cache.ra.assign(size_t(T) * A, 0.0);
    cache.na.assign(size_t(T) * A, 0.0);
    cache.hb.assign(size_t(T + 1) * B, 0.0);
    cache.zb.assign(size_t(T) * B, 0.0);
    cache.rb.assign(size_t(T) * B, 0.0);
    cache.nb.assign(size_t(T) * B, 0.0);
    cache.probs.assign(size_t(T) * 256, 0.0);

    std::vector<double> h_a(size_t(A), 0.0), h_b(size_t(B), 0.0);
    std::vector<double> x_a(static_cast<size_t>(E + D));
    std::vector<double> x_b(static_cast<size_t>(A + D));
    std::vector<double> logits(256);

    double loss = 0.0;
    for (int t = 0; t < T; ++t) {
        const int frame = t / slice.hop;
        const auto& cond = cache.frame.cond[size_t(frame)];
        const int exc_in = t > 0 ? slice.exc_codes[size_t(t - 1)] : 128;
        const int sig_in = t > 0 ? slice.sig_codes[size_t(t - 1)] : 128;
        const int pred_in = slice.pred_codes[size_t(t)];

        double* ein = cache.ein.data() + size_t(t) * E;
        const double* e1 = p.emb_exc.row(exc_in);
        const double* e2 = p.emb_sig.row(sig_in);
        const double* e3 = p.emb_pred.row(pred_in);
        for (int i = 0; i < E; ++i) ein[i] = e1[i] + e2[i] + e3[i];
        std::memcpy(x_a.data(), ein, size_t(E) * sizeof(double));
        for (int i = 0; i < D; ++i) x_a[size_t(E + i)] = cond[size_t(i)];

        gru_step(p.a_wx, p.a_uh, p.a_b, A, x_a.data(), h_a,
                 cache.za.data() + size_t(t) * A, cache.ra.data() + size_t(t) * A,
                 cache.na.data() + size_t(t) * A);
        std::memcpy(cache.ha.data() + size_t(t + 1) * A, h_a.data(), size_t(A) * sizeof(double));

        std::memcpy(x_b.data(), h_a.data(), size_t(A) * sizeof(double));
        for (int i = 0; i < D; ++i) x_b[size_t(A + i)] = cond[size_t(i)];
        gru_step(p.b_wx, p.b_uh, p.b_b, B, x_b.data(), h_b,
                 cache.zb.data() + size_t(t) * B, cache.rb.data() + size_t(t) * B,
                 cache.nb.data() + size_t(t) * B);
        std::memcpy(cache.hb.data() + size_t(t + 1) * B, h_b.data(), size_t(B) * sizeof(double));

        for (int i = 0; i < 256; ++i) logits[size_t(i)] = p.out_b.w[size_t(i)];
        matvec_acc(p.out_w, h_b.data(), logits.data());
        double* probs = cache.probs.data() + size_t(t) * 256;
        softmax256(logits.data(), probs);

        loss -= std::log(std::max(1e-300, probs[slice.exc_codes[size_t(t)]]));
    }
    return loss / double(T);
}

}  // namespace

double compute_loss(const NetParams& p, const TrainingSlice& slice) {
    RunCache cache;
    return run_forward(p, slice, cache);
}

double loss_and_gradients(const NetParams& p, const TrainingSlice& slice, NetParams& grads) {
    const int E = p.cfg.sample_embed_dim;
    const int D = p.cfg.cond_dim;
    const int A = p.cfg.gru_a_dim;
    const int B = p.cfg.gru_b_dim;
    const int T = int(slice.exc_codes.size());

    RunCache cache;
    const double loss = run_forward(p, slice, cache);
    const double inv_t = 1.0 / double(T);

    std::vector<std::vector<double>> dcond(slice.frames.size(),
                                           std::vector<double>(size_t(D), 0.0));
    std::vector<double> dh_a(size_t(A), 0.0), dh_b(size_t(B), 0.0);
    std::vector<double> dlogits(256);
    std::vector<double> dx_b(static_cast<size_t>(A + D));
    std::vector<double> dx_a(static_cast<size_t>(E + D));

    for (int t = T - 1; t >= 0; --t) {
        const int frame = t / slice.hop;
        const int exc_in = t > 0 ? slice.exc_codes[size_t(t - 1)] : 128;
        const int sig_in = t > 0 ? slice.sig_codes[size_t(t - 1)] : 128;
        const int pred_in = slice.pred_codes[size_t(t)];

        const double* probs = cache.probs.data() + size_t(t) * 256;
        for (int i = 0; i < 256; ++i) dlogits[size_t(i)] = probs[i] * inv_t;
        dlogits[size_t(slice.exc_codes[size_t(t)])] -= inv_t;

        const double* hb_cur = cache.hb.data() + size_t(t + 1) * B;
        outer_acc(grads.out_w, dlogits.data(), hb_cur);
        for (int i = 0; i < 256; ++i) grads.out_b.w[size_t(i)] += dlogits[size_t(i)];
        matvec_transposed_acc(p.out_w, dlogits.data(), dh_b.data());

        // GRU B
        std::vector<double> x_b(static_cast<size_t>(A + D));
        std::memcpy(x_b.data(), cache.ha.data() + size_t(t + 1) * A, size_t(A) * sizeof(double));
        const auto& cond = cache.frame.cond[size_t(frame)];
        for (int i = 0; i < D; ++i) x_b[size_t(A + i)] = cond[size_t(i)];
        gru_backward(p.b_wx, p.b_uh, grads.b_wx, grads.b_uh, grads.b_b, B, x_b.data(),
                     cache.hb.data() + size_t(t) * B, cache.zb.data() + size_t(t) * B,
                     cache.rb.data() + size_t(t) * B, cache.nb.data() + size_t(t) * B, dh_b,
                     dx_b.data(), A + D);
        for (int i = 0; i < A; ++i) dh_a[size_t(i)] += dx_b[size_t(i)];
        for (int i = 0; i < D; ++i) dcond[size_t(frame)][size_t(i)] += dx_b[size_t(A + i)];

        // GRU A
        std::vector<double> x_a(static_cast<size_t>(E + D));
        std::memcpy(x_a.data(), cache.ein.data() + size_t(t) * E, size_t(E) * sizeof(double));
        for (int i = 0; i < D; ++i) x_a[size_t(E + i)] = cond[size_t(i)];
        gru_backward(p.a_wx, p.a_uh, grads.a_wx, grads.a_uh, grads.a_b, A, x_a.data(),
                     cache.ha.data() + size_t(t) * A, cache.za.data() + size_t(t) * A,
                     cache.ra.data() + size_t(t) * A, cache.na.data() + size_t(t) * A, dh_a,
                     dx_a.data(), E + D);
        for (int i = 0; i < D; ++i) dcond[size_t(frame)][size_t(i)] += dx_a[size_t(E + i)];

        double* g1 = grads.emb_exc.row(exc_in);
        double* g2 = grads.emb_sig.row(sig_in);
        double* g3 = grads.emb_pred.row(pred_in);
        for (int i = 0; i < E; ++i) {
            g1[i] += dx_a[size_t(i)];
            g2[i] += dx_a[size_t(i)];
            g3[i] += dx_a[size_t(i)];
        }
    }

    frame_net_backward(p, slice.frames, cache.frame, dcond, grads);
    return loss;
}

// --- Optimizer --------------------------------------------------------------------------

double train_step(NetParams& p, const std::vector<TrainingSlice>& batch, AmsgradState& opt_state,
                  const TrainOptions& opt) {
    if (batch.empty()) throw std::invalid_argument("train_step: empty batch");
    const size_t n = batch.size();

    std::vector<NetParams> item_grads(n, NetParams(p.cfg));
    std::vector<double> item_loss(n, 0.0);

#ifdef _OPENMP
#pragma omp parallel for schedule(dynamic) if (opt.parallel)
#endif
    for (long long i = 0; i < (long long)n; ++i)
        item_loss[size_t(i)] = loss_and_gradients(p, batch[size_t(i)], item_grads[size_t(i)]);

    // deterministic fixed-order reduction
    NetParams grads(p.cfg);
    auto grad_tensors = named_tensors(grads);
    for (size_t i = 0; i < n; ++i) {
        auto item_tensors = named_tensors(item_grads[i]);
        for (size_t k = 0; k < grad_tensors.size(); ++k) {
            auto& dst = grad_tensors[k].second->w;
            const auto& src = item_tensors[k].second->w;
            for (size_t j = 0; j < dst.size(); ++j) dst[j] += src[j];
        }
    }
    double loss = 0.0;
    for (double l : item_loss) loss += l;
    loss /= double(n);

    opt_state.step += 1;
    const double bias1 = 1.0 - std::pow(opt.beta1, double(opt_state.step));
    const double bias2 = 1.0 - std::pow(opt.beta2, double(opt_state.step));
    constexpr double kEps = 1e-8;

    auto params = named_tensors(p);
    auto m_t = named_tensors(opt_state.m);
    auto v_t = named_tensors(opt_state.v);
    auto vhat_t = named_tensors(opt_state.vhat);
    for (size_t k = 0; k < params.size(); ++k) {
        auto& theta = params[k].second->w;
        auto& g = grad_tensors[k].second->w;
        auto& m = m_t[k].second->w;
        auto& v = v_t[k].second->w;
        auto& vhat = vhat_t[k].second->w;
        for (size_t j = 0; j < theta.size(); ++j) {
            const double grad = g[j] / double(n) + opt.weight_decay * theta[j];
            m[j] = opt.beta1 * m[j] + (1.0 - opt.beta1) * grad;
            v[j] = opt.beta2 * v[j] + (1.0 - opt.beta2) * grad * grad;
            vhat[j] = std::max(vhat[j], v[j]);
            const double denom = std::sqrt(vhat[j] / bias2) + kEps;
            theta[j] -= opt.learning_rate * (m[j] / bias1) / denom;
        }
    }
    return loss;
}

// --- Generation ---------------------------------------------------------------------------

NeuralBackend::NeuralBackend(const NetParams& params, const ControlScript& script)
    : params_(params), state_(make_state(params.cfg)) {
    std::vector<FeatureFrame> frames(script.size());
    for (size_t f = 0; f < script.size(); ++f) {
        frames[f] = script[f].features;
        // condition on the edit targets, matching the training-time contract
        frames[f].pitch_bin = script[f].target_pitch_bin;
        frames[f].periodicity = script[f].periodicity;
    }
    conditioning_ = frame_net_forward(params_, frames);
}

CategoricalDist256 NeuralBackend::next(int prev_exc_code, int prev_sample_code, int pred_code,
                                       const FrameContext& ctx) {
    return sample_net_forward(params_, state_, prev_exc_code, prev_sample_code, pred_code,
                              conditioning_[ctx.frame_index]);
}

void NeuralBackend::reset() {
    state_ = make_state(params_.cfg);
}

AudioBuffer generate(const ControlScript& script, const NetParams& params, Rng& rng) {
    NeuralBackend backend(params, script);
    return synthesize(script, backend, rng);
}

// --- Checkpoint ------------------------------------------------------------------------------

namespace {
constexpr char kCkptMagic[8] = {'C', 'L', 'P', 'C', 'C', 'K', 'P', 'T'};
constexpr uint32_t kCkptVersion = 1;
}  // namespace

void save_checkpoint(const NetParams& p, const std::string& path) {
    std::ofstream f(path, std::ios::binary | std::ios::trunc);
    if (!f) throw std::runtime_error("cannot write " + path);
    f.write(kCkptMagic, 8);
    const uint32_t version = kCkptVersion;
    f.write(reinterpret_cast<const char*>(&version), 4);
    const int32_t cfg[6] = {p.cfg.pitch_embed_dim, p.cfg.conv_channels, p.cfg.cond_dim,
                            p.cfg.sample_embed_dim, p.cfg.gru_a_dim, p.cfg.gru_b_dim};
    f.write(reinterpret_cast<const char*>(cfg), sizeof cfg);

    auto tensors = named_tensors(const_cast<NetParams&>(p));
    const uint32_t count = uint32_t(tensors.size());
    f.write(reinterpret_cast<const char*>(&count), 4);
    for (auto& [name, tensor] : tensors) {
        const uint32_t len = uint32_t(name.size());
        f.write(reinterpret_cast<const char*>(&len), 4);
        f.write(name.data(), len);
        const int32_t shape[2] = {tensor->rows, tensor->cols};
        f.write(reinterpret_cast<const char*>(shape), sizeof shape);
        f.write(reinterpret_cast<const char*>(tensor->w.data()),
                std::streamsize(tensor->w.size() * sizeof(double)));
    }
    if (!f) throw std::runtime_error("write failed: " + path);
}

NetParams load_checkpoint(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw std::runtime_error("cannot open " + path);
    char magic[8];
    f.read(magic, 8);
    if (!f || std::memcmp(magic, kCkptMagic, 8) != 0)
        throw std::runtime_error("not a checkpoint file: " + path);
    uint32_t version = 0;
    f.read(reinterpret_cast<char*>(&version), 4);
    if (version != kCkptVersion) throw std::runtime_error("unsupported checkpoint version");

    int32_t cfg_raw[6];
    f.read(reinterpret_cast<char*>(cfg_raw), sizeof cfg_raw);
    NetConfig cfg;
    cfg.pitch_embed_dim = cfg_raw[0];
    cfg.conv_channels = cfg_raw[1];
    cfg.cond_dim = cfg_raw[2];
    cfg.sample_embed_dim = cfg_raw[3];
    cfg.gru_a_dim = cfg_raw[4];
    cfg.gru_b_dim = cfg_raw[5];

    NetParams p(cfg);
    auto tensors = named_tensors(p);
    uint32_t count = 0;
    f.read(reinterpret_cast<char*>(&count), 4);
    if (count != tensors.size()) throw std::runtime_error("checkpoint tensor count mismatch");
    for (auto& [name, tensor] : tensors) {
        uint32_t len = 0;
        f.read(reinterpret_cast<char*>(&len), 4);
        std::string stored(len, '\0');
        f.read(stored.data(), len);
        if (stored != name) throw std::runtime_error("checkpoint tensor order mismatch: " + stored);
        int32_t shape[2];
        f.read(reinterpret_cast<char*>(shape), sizeof shape);
        if (shape[0] != tensor->rows || shape[1] != tensor->cols)
            throw std::runtime_error("checkpoint shape mismatch for " + name);
        f.read(reinterpret_cast<char*>(tensor->w.data()),
               std::streamsize(tensor->w.size() * sizeof(double)));
    }
    if (!f) throw std::runtime_error("truncated checkpoint: " + path);
    return p;
}

}  // namespace clpc
