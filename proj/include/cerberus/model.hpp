// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <optional>
#include <string>
#include <vector>

#include "cerberus/featurize.hpp"
#include "cerberus/neural.hpp"

namespace cerberus::model {

struct FusionSchedule {
  double n0 = 10.0;      // cycle count where history confidence starts rising
  double n_ramp = 200.0; // cycles over which it rises
  double w_min = 0.2;
  double w_max = 0.7;
};

struct FusionWeights {
  double alpha = 0.0;  // charge-relaxation head
  double beta = 0.0;   // discharge-relaxation head
  double gamma = 0.0;  // history head, = 1 - alpha - beta
};

// gamma ramps linearly in history length n, clamped to [w_min, w_max];
// the remaining mass is split equally between the relaxation heads.
FusionWeights fusion_weights(long n, const FusionSchedule& s);

struct ModelConfig {
  long gru_hidden = 64;   // per direction
  long lstm_hidden = 32;
};

struct CerberusParams {
  ModelConfig config;
  nn::BiGruParams head_a_rnn;
  nn::MlpParams head_a_mlp;  // 2*gru_hidden -> 100 -> 50 -> 1
  nn::BiGruParams head_b_rnn;
  nn::MlpParams head_b_mlp;
  nn::LstmStackParams head_c_rnn;
  nn::MlpParams head_c_mlp;  // lstm_hidden -> 50 -> 20 -> 1
  feat::Normalizer normalizer;
  FusionSchedule schedule;
  std::string version = "1";

  static CerberusParams init(const ModelConfig& cfg, const feat::Normalizer& norm,
                             const FusionSchedule& sched, std::uint64_t seed);

  std::vector<nn::TensorRef> tensors();  // stable order, stable names
  nn::Vec flat();
  void set_flat(const nn::Vec& flat);
  void resize_like(const CerberusParams& other);  // allocates grad-shaped zeros
  void set_zero();
};

// Joins the three input modalities for one cycle of one cell.
struct CycleBundle {
  std::string cell_id;
  long cycle_index = 0;
  double charge_rate = 0.0;
  std::vector<feat::WindowSample> charge_windows;
  std::vector<feat::WindowSample> discharge_windows;
  std::optional<feat::HistoryWindow> history;  // capacities through cycle_index-1
  double label = 0.0;  // normalized capacity of this cycle (training/eval)
  bool has_label = false;
};

double head_a_forward(const CerberusParams& p, const feat::WindowSample& w);
double head_b_forward(const CerberusParams& p, const feat::WindowSample& w);
double head_c_forward(const CerberusParams& p, const feat::HistoryWindow& h);

// Dynamically weighted three-term loss, averaged over the batch. A bundle
// missing a modality drops that term and renormalizes the remaining
// weights. When grads is non-null it receives accumulated gradients.
double total_loss(const CerberusParams& p, const std::vector<CycleBundle>& batch,
                  CerberusParams* grads = nullptr);

struct FusedEstimate {
  double fused_ah = 0.0;
  std::optional<double> head_a_ah, head_b_ah, head_c_ah;  // per-head means
  FusionWeights weights;  // after renormalization over present modalities
};

FusedEstimate fuse_estimate(const CerberusParams& p, const CycleBundle& bundle);

// Recursive one-step rollout of head c; returns capacities in Ah.
std::vector<double> predict_trajectory(const CerberusParams& p,
                                       const feat::HistoryWindow& history, long horizon);

void save_checkpoint(CerberusParams& p, const std::string& path);
CerberusParams load_checkpoint(const std::string& path);

}  // namespace cerberus::model
