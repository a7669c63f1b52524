#pragma once

#include <string>
#include <utility>
#include <vector>

#include "clpc/synthesis.hpp"

namespace clpc {

// Desk-scale trainable excitation model: frame-rate conditioning network
// (pitch embedding, two kernel-3 convs, two dense layers, all tanh) and a
// sample-rate network (three code embeddings, two GRUs, softmax over 256
// mu-law codes). Backpropagation is implemented directly.

struct Mat {
    int rows = 0, cols = 0;
    std::vector<double> w;

    Mat() = default;
    Mat(int r, int c) : rows(r), cols(c), w(size_t(r) * c, 0.0) {}
    double& at(int r, int c) { return w[size_t(r) * cols + c]; }
    double at(int r, int c) const { return w[size_t(r) * cols + c]; }
    const double* row(int r) const { return w.data() + size_t(r) * cols; }
    double* row(int r) { return w.data() + size_t(r) * cols; }
    size_t size() const { return w.size(); }
    void zero() { std::fill(w.begin(), w.end(), 0.0); }
};

struct NetConfig {
    int pitch_embed_dim = 64;
    int conv_channels = 128;
    int cond_dim = 128;       // frame-rate network output width
    int sample_embed_dim = 32;
    int gru_a_dim = 128;
    int gru_b_dim = 16;

    int frame_input_dim() const { return kNumBands + pitch_embed_dim + 1; }
};

struct NetParams {
    NetConfig cfg;

    Mat pitch_embed;                       // 256 x P
    Mat conv1_w, conv1_b;                  // C x 3*in, C x 1
    Mat conv2_w, conv2_b;                  // C x 3*C
    Mat dense1_w, dense1_b;                // D x C
    Mat dense2_w, dense2_b;                // D x D

    Mat emb_exc, emb_sig, emb_pred;        // 256 x E each
    Mat a_wx, a_uh, a_b;                   // GRU A: 3A x (E+D), 3A x A, 3A x 1
    Mat b_wx, b_uh, b_b;                   // GRU B: 3B x (A+D), 3B x B
    Mat out_w, out_b;                      // 256 x B

    explicit NetParams(const NetConfig& cfg = {});
};

// Tensor registry shared by the optimizer, checkpointing, and gradient checks.
std::vector<std::pair<std::string, Mat*>> named_tensors(NetParams& p);

// Random initialization (scaled uniform); the output layer starts at zero so
// an untrained model predicts the uniform distribution.
void init_params(NetParams& p, Rng& rng);

// --- Frame-rate network ----------------------------------------------------

// One conditioning vector per frame; convolutions use replicate padding.
std::vector<std::vector<double>> frame_net_forward(const NetParams& p,
                                                   const std::vector<FeatureFrame>& frames);

// --- Sample-rate network ---------------------------------------------------

struct SampleState {
    std::vector<double> h_a, h_b;
};
SampleState make_state(const NetConfig& cfg);

// Advances the state and returns the categorical distribution.
CategoricalDist256 sample_net_forward(const NetParams& p, SampleState& state,
                                      int prev_exc_code, int prev_sample_code,
                                      int pred_code, const std::vector<double>& cond);

// Threshold sampling: subtract T, clamp at zero, renormalize, draw at
// temperature 1. Falls back to argmax when nothing survives the threshold.
int sample_excitation(const CategoricalDist256& dist, Rng& rng, double threshold = 1e-3);

// --- Training ----------------------------------------------------------------

struct TrainingSlice {
    std::vector<FeatureFrame> frames;
    std::vector<int> exc_codes;   // targets; also the lagged excitation input
    std::vector<int> sig_codes;   // mu-law of the true signal
    std::vector<int> pred_codes;  // mu-law of the LPC prediction
    int hop = kHop;
};

// Teacher-forced codes for frames [start, start+n): per-frame LPC from the
// BFCCs, prediction from the true history, excitation = sample - prediction.
TrainingSlice make_training_slice(const AudioBuffer& audio,
                                  const std::vector<FeatureFrame>& features,
                                  int start_frame, int n_frames, int hop = kHop);

// Mean cross-entropy of the slice under the current parameters.
double compute_loss(const NetParams& p, const TrainingSlice& slice);

// Same forward pass plus full backpropagation; gradients are accumulated
// into `grads` (a zeroed NetParams of identical shape).
double loss_and_gradients(const NetParams& p, const TrainingSlice& slice, NetParams& grads);

struct AmsgradState {
    NetParams m, v, vhat;
    long step = 0;
    explicit AmsgradState(const NetConfig& cfg) : m(cfg), v(cfg), vhat(cfg) {}
};

struct TrainOptions {
    double learning_rate = 1e-3;
    double weight_decay = 5e-5;
    double beta1 = 0.9;
    double beta2 = 0.999;
    bool parallel = true;  // batch items evaluated in parallel
};

// One AMSGrad update on the mean loss of the batch; returns that loss.
double train_step(NetParams& p, const std::vector<TrainingSlice>& batch,
                  AmsgradState& opt_state, const TrainOptions& opt = {});

// --- Generation ----------------------------------------------------------------

class NeuralBackend : public ExcitationBackend {
public:
    NeuralBackend(const NetParams& params, const ControlScript& script);
    CategoricalDist256 next(int prev_exc_code, int prev_sample_code,
                            int pred_code, const FrameContext& ctx) override;
    void reset() override;

private:
    const NetParams& params_;
    std::vector<std::vector<double>> conditioning_;
    SampleState state_;
};

// Plugs the trained model into the synthesis loop.
AudioBuffer generate(const ControlScript& script, const NetParams& params, Rng& rng);

// Versioned binary checkpoint of every named tensor.
void save_checkpoint(const NetParams& p, const std::string& path);
NetParams load_checkpoint(const std::string& path);

}  // namespace clpc
