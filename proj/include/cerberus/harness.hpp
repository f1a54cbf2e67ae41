// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <algorithm>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "cerberus/model.hpp"

namespace cerberus::harness {

// One ingested cell: segmented cycles with capacities plus its history.
struct CellData {
  std::string cell_id;
  double charge_rate = 0.0;
  std::vector<data::CycleRecord> cycles;  // sorted by cycle_index
  data::CellHistory history;
};

CellData ingest_cell(std::vector<data::CycleRecord> cycles, double nominal_capacity_ah);

// Reads every *.csv under dir (manifest.json is ignored).
std::vector<CellData> ingest_dir(const std::string& dir, double nominal_capacity_ah);

// Per-cycle raw modality join, before normalization. Curves are already
// downsampled to 120 s; rests shorter than one window are left empty.
struct RawBundle {
  std::string cell_id;
  long cycle_index = 0;
  double charge_rate = 0.0;
  std::optional<data::RelaxationCurve> charge_curve;
  std::optional<data::RelaxationCurve> discharge_curve;
  std::vector<double> history_caps_ah;  // capacities of strictly earlier cycles
  long history_end_cycle = 0;
  double capacity_ah = 0.0;
};

std::vector<RawBundle> make_raw_bundles(const std::vector<CellData>& cells);

// Pools the (downsampled) relaxation curves of a set of raw bundles, for
// normalizer fitting on the training side only.
std::vector<data::RelaxationCurve> pool_curves(const std::vector<RawBundle>& bundles);

model::CycleBundle featurize_bundle(const RawBundle& raw, const feat::Normalizer& norm);
std::vector<model::CycleBundle> featurize_bundles(const std::vector<RawBundle>& raw,
                                                  const feat::Normalizer& norm);

// ------------------------------------------------------------- splits

enum class SplitMode { random_windows, stratified_cells };

struct SplitSpec {
  SplitMode mode = SplitMode::stratified_cells;
  double train_fraction = 0.8;
  std::uint64_t seed = 0;
};

template <typename T>
std::pair<std::vector<T>, std::vector<T>> split_random(const std::vector<T>& items,
                                                       const SplitSpec& spec);

// Within each charge-rate stratum, shuffles cells and takes
// round(train_fraction * k) for training. Whole cells stay together.
std::pair<std::vector<CellData>, std::vector<CellData>> split_stratified(
    const std::vector<CellData>& cells, const SplitSpec& spec);

// Carves a seeded validation slice off the training side.
template <typename T>
std::pair<std::vector<T>, std::vector<T>> carve_validation(const std::vector<T>& train,
                                                           double val_fraction,
                                                           std::uint64_t seed);

// ------------------------------------------------------------ metrics

double mape(const std::vector<double>& pred_ah, const std::vector<double>& truth_ah);

// ----------------------------------------------------------- training

struct TrainConfig {
  long epochs = 100;
  long batch_size = 32;
  double lr = 1e-3;
  long patience = 25;  // early stop on validation loss
  bool deterministic = true;
  bool parallel = true;  // OpenMP fan-out over bundles within a batch
  std::uint64_t seed = 0;
  model::ModelConfig model;
  model::FusionSchedule schedule;
};

// Mean single-bundle loss with gradient accumulation; the parallel lane
// computes per-bundle gradients concurrently and reduces them in index
// order, so both lanes produce bit-identical results.
double batch_gradient(model::CerberusParams& params,
                      const std::vector<const model::CycleBundle*>& batch,
                      nn::Vec& flat_grads, bool parallel);

struct TrainResult {
  model::CerberusParams params;  // at best validation loss
  std::vector<std::pair<double, double>> loss_history;  // (train, val) per epoch
  long best_epoch = 0;
};

TrainResult train(const std::vector<model::CycleBundle>& train_set,
                  const std::vector<model::CycleBundle>& val_set,
                  const feat::Normalizer& norm, const TrainConfig& config);

// --------------------------------------------------------- evaluation

struct EvalRow {
  std::string cell_id;
  long cycle_index = 0;
  double charge_rate = 0.0;
  double truth_ah = 0.0;
  double fused_ah = 0.0;
  std::optional<double> head_a_ah, head_b_ah, head_c_ah;
};

struct EvalReport {
  double overall_mape = 0.0;
  std::map<double, double> per_condition_mape;  // charge_rate -> MAPE %
  std::map<std::string, double> per_cell_mape;
  std::optional<double> head_a_mape, head_b_mape, head_c_mape;  // ablations
  long cycles_evaluated = 0;
  long windows_evaluated = 0;
  std::string config_echo;
  std::vector<EvalRow> rows;
};

EvalReport evaluate(const model::CerberusParams& params,
                    const std::vector<model::CycleBundle>& test_set, bool parallel = true);

std::string format_report(const EvalReport& report);

// `cycle_index,truth_ah,fused_ah,head_a_ah,head_b_ah,head_c_ah` per cell
void write_plot_csv(const EvalReport& report, const std::string& dir);

void write_loss_history_csv(const std::vector<std::pair<double, double>>& history,
                            const std::string& path);

// --------------------------------------------------- template bodies

template <typename T>
std::pair<std::vector<T>, std::vector<T>> split_random(const std::vector<T>& items,
                                                       const SplitSpec& spec) {
  std::size_t n = items.size();
  if (n < 2) throw DataError("split_random: need at least 2 items to form both sides");
  std::vector<std::size_t> idx(n);
  for (std::size_t i = 0; i < n; ++i) idx[i] = i;
  Rng rng(spec.seed);
  std::shuffle(idx.begin(), idx.end(), rng);
  long n_train = round_half_away(spec.train_fraction * static_cast<double>(n));
  n_train = std::clamp<long>(n_train, 1, static_cast<long>(n) - 1);
  std::pair<std::vector<T>, std::vector<T>> out;
  for (std::size_t i = 0; i < n; ++i)
    (static_cast<long>(i) < n_train ? out.first : out.second).push_back(items[idx[i]]);
  return out;
}

template <typename T>
std::pair<std::vector<T>, std::vector<T>> carve_validation(const std::vector<T>& train,
                                                           double val_fraction,
                                                           std::uint64_t seed) {
  SplitSpec spec;
  spec.train_fraction = 1.0 - val_fraction;
  spec.seed = seed;
  return split_random(train, spec);
}

}  // namespace cerberus::harness
