// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <Eigen/Dense>
#include <functional>
#include <string>
#include <vector>

#include "cerberus/common.hpp"

namespace cerberus::nn {

using Vec = Eigen::VectorXd;
using Mat = Eigen::MatrixXd;

// Named view onto one parameter tensor; rows/cols describe the logical
// shape (cols == 1 for vectors). Used for flat packing, Adam, checkpoints.
struct TensorRef {
  std::string name;
  double* data;
  long rows;
  long cols;
  long size() const { return rows * cols; }
};

long total_size(const std::vector<TensorRef>& refs);
void pack(const std::vector<TensorRef>& refs, Vec& flat);
void unpack(const Vec& flat, const std::vector<TensorRef>& refs);

inline double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

// ---------------------------------------------------------------- GRU

struct GruLayerParams {
  long input_size = 0, hidden_size = 0;
  Mat Wz, Wr, Wh;  // hidden x input
  Mat Uz, Ur, Uh;  // hidden x hidden
  Vec bz, br, bh;

  void resize(long input, long hidden);
  void set_zero();
  void init(long input, long hidden, Rng& rng);
  void tensors(const std::string& prefix, std::vector<TensorRef>& out);
};

// per-timestep values needed by backprop
struct GruCache {
  std::vector<Vec> x, h_prev, z, r, hc, h;
};

// h_t = (1-z) ⊙ h̃ + z ⊙ h_prev
Vec gru_cell_forward(const GruLayerParams& p, const Vec& x, const Vec& h_prev,
                     GruCache* cache = nullptr);

void gru_layer_forward(const GruLayerParams& p, const std::vector<Vec>& seq,
                       std::vector<Vec>& hs, GruCache* cache = nullptr);

// dh_out[t] is the loss gradient injected at timestep t's hidden output.
// Accumulates parameter grads; when d_seq is non-null, accumulates input grads.
void gru_layer_backward(const GruLayerParams& p, const GruCache& cache,
                        const std::vector<Vec>& dh_out, GruLayerParams& grads,
                        std::vector<Vec>* d_seq = nullptr);

// -------------------------------------------------------------- bi-GRU

struct BiGruParams {
  GruLayerParams l1f, l1b, l2f, l2b;

  void init(long input, long hidden, Rng& rng);
  long feature_size() const { return 2 * l2f.hidden_size; }
  void tensors(const std::string& prefix, std::vector<TensorRef>& out);
  void resize_like(const BiGruParams& other);
  void set_zero();
};

struct BiGruCache {
  GruCache c1f, c1b, c2f, c2b;
  long seq_len = 0;
};

// Two stacked layers, each run in both directions from zero states.
// Output: [layer-2 forward hidden at last timestep ; layer-2 backward
// hidden at first timestep], length 2*hidden.
Vec bigru_forward(const BiGruParams& p, const std::vector<Vec>& seq,
                  BiGruCache* cache = nullptr);

void bigru_backward(const BiGruParams& p, const BiGruCache& cache,
                    const Vec& d_feature, BiGruParams& grads);

// ---------------------------------------------------------------- LSTM

struct LstmLayerParams {
  long input_size = 0, hidden_size = 0;
  Mat Wi, Wf, Wo, Wg;
  Mat Ui, Uf, Uo, Ug;
  Vec bi, bf, bo, bg;

  void resize(long input, long hidden);
  void set_zero();
  void init(long input, long hidden, Rng& rng);
  void tensors(const std::string& prefix, std::vector<TensorRef>& out);
};

struct LstmCache {
  std::vector<Vec> x, h_prev, c_prev, i, f, o, g, c, h;
};

struct LstmStackParams {
  LstmLayerParams l1, l2;

  void init(long input, long hidden, Rng& rng);
  void tensors(const std::string& prefix, std::vector<TensorRef>& out);
  void resize_like(const LstmStackParams& other);
  void set_zero();
};

struct LstmStackCache {
  LstmCache c1, c2;
};

// c_t = f ⊙ c_prev + i ⊙ g; h_t = o ⊙ tanh(c_t)
void lstm_cell_forward(const LstmLayerParams& p, const Vec& x, const Vec& h_prev,
                       const Vec& c_prev, Vec& h_out, Vec& c_out,
                       LstmCache* cache = nullptr);

void lstm_layer_forward(const LstmLayerParams& p, const std::vector<Vec>& seq,
                        std::vector<Vec>& hs, LstmCache* cache = nullptr);

// dh_out[t] / dc_last: gradients injected at per-step hiddens and the final
// cell state. d_seq optional as for the GRU.
void lstm_layer_backward(const LstmLayerParams& p, const LstmCache& cache,
                         const std::vector<Vec>& dh_out, const Vec& dc_last,
                         LstmLayerParams& grads, std::vector<Vec>* d_seq = nullptr);

// Two stacked unidirectional layers; returns the layer-2 final cell state.
Vec lstm_forward(const LstmStackParams& p, const std::vector<Vec>& seq,
                 LstmStackCache* cache = nullptr);

void lstm_backward(const LstmStackParams& p, const LstmStackCache& cache,
                   const Vec& d_cell_feature, LstmStackParams& grads);

// ----------------------------------------------------------------- MLP

struct MlpParams {
  std::vector<long> sizes;  // input, hidden..., output
  std::vector<Mat> W;
  std::vector<Vec> b;

  void init(const std::vector<long>& layer_sizes, Rng& rng);
  void tensors(const std::string& prefix, std::vector<TensorRef>& out);
  void resize_like(const MlpParams& other);
  void set_zero();
};

struct MlpCache {
  std::vector<Vec> a;  // activations per layer, a[0] = input
};

// affine + ReLU on hidden layers, affine only on the output layer
Vec mlp_forward(const MlpParams& p, const Vec& x, MlpCache* cache = nullptr);

void mlp_backward(const MlpParams& p, const MlpCache& cache, const Vec& dy,
                  MlpParams& grads, Vec* dx = nullptr);

// ---------------------------------------------------------------- loss

double mse(const Vec& pred, const Vec& target);
Vec mse_grad(const Vec& pred, const Vec& target);  // d mse / d pred

// ---------------------------------------------------------------- Adam

struct AdamState {
  long t = 0;
  Vec m, v;
  double lr = 1e-3, beta1 = 0.9, beta2 = 0.999, epsilon = 1e-8;

  explicit AdamState(long n = 0, double lr_ = 1e-3) : lr(lr_) {
    m = Vec::Zero(n);
    v = Vec::Zero(n);
  }
};

void adam_step(AdamState& state, Vec& params, const Vec& grads);

// ---------------------------------------------------------- grad check

// Central differences against an analytic gradient. Checks every
// coordinate when there are at most max_coords of them, otherwise a
// seeded random subsample of max_coords. Returns the max relative error
// |g_a - g_n| / max(|g_a|, |g_n|, 1e-6).
double grad_check(const std::function<double(const Vec&)>& loss, const Vec& params,
                  const Vec& analytic_grad, long max_coords = 200,
                  std::uint64_t seed = 0, double h = 1e-5);

}  // namespace cerberus::nn
