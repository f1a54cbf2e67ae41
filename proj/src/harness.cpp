// SPDX-License-Identifier: Apache-2.0
#include "cerberus/harness.hpp"

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <limits>
#include <sstream>

#ifdef _OPENMP
#include <omp.h>
#endif

namespace cerberus::harness {

namespace fs = std::filesystem;

CellData ingest_cell(std::vector<data::CycleRecord> cycles, double nominal_capacity_ah) {
  if (cycles.empty()) throw DataError("ingest_cell: no cycles");
  CellData cell;
  for (auto& c : cycles) {
    data::coulomb_count_discharge(c);
    c.charge_rate = data::infer_charge_rate(c, nominal_capacity_ah);
  }
  std::sort(cycles.begin(), cycles.end(),
            [](const auto& a, const auto& b) { return a.cycle_index < b.cycle_index; });
  cell.cell_id = cycles.front().cell_id;
  cell.charge_rate = cycles.front().charge_rate;
  cell.history = data::build_cell_history(cycles);
  cell.cycles = std::move(cycles);
  return cell;
}

std::vector<CellData> ingest_dir(const std::string& dir, double nominal_capacity_ah) {
  std::vector<fs::path> files;
  for (const auto& entry : fs::directory_iterator(dir))
    if (entry.path().extension() == ".csv") files.push_back(entry.path());
  if (files.empty()) throw DataError("ingest_dir: no .csv files under " + dir);
  std::sort(files.begin(), files.end());

  std::vector<CellData> cells;
  for (const auto& f : files) {
    std::ifstream in(f);
    if (!in) throw DataError("cannot read " + f.string());
    auto records = data::parse_cycling_csv(in);
    // one file may hold several cells; group before ingesting
    std::map<std::string, std::vector<data::CycleRecord>> by_cell;
    for (auto& r : records) by_cell[r.cell_id].push_back(std::move(r));
    for (auto& [id, recs] : by_cell)
      cells.push_back(ingest_cell(std::move(recs), nominal_capacity_ah));
  }
  std::sort(cells.begin(), cells.end(),
            [](const auto& a, const auto& b) { return a.cell_id < b.cell_id; });
  return cells;
}

std::vector<RawBundle> make_raw_bundles(const std::vector<CellData>& cells) {
  std::vector<RawBundle> out;
  for (const auto& cell : cells) {
    for (size_t k = 0; k < cell.cycles.size(); ++k) {
      const auto& cyc = cell.cycles[k];
      RawBundle raw;
      raw.cell_id = cell.cell_id;
      raw.cycle_index = cyc.cycle_index;
      raw.charge_rate = cell.charge_rate;
      raw.capacity_ah = cyc.capacity_ah;
      for (auto kind : {data::RelaxKind::charge, data::RelaxKind::discharge}) {
        try {
          auto curve = feat::downsample(data::extract_relaxation(cyc, kind),
                                        feat::kTargetIntervalS);
          int need = kind == data::RelaxKind::charge ? feat::kChargeWindowSize
                                                     : feat::kDischargeWindowSize;
          if (static_cast<int>(curve.samples.size()) < need) {
            std::cerr << "warn: " << cell.cell_id << " cycle " << cyc.cycle_index
                      << ": rest shorter than one window, skipping modality\n";
            continue;
          }
          (kind == data::RelaxKind::charge ? raw.charge_curve : raw.discharge_curve) =
              std::move(curve);
        } catch (const DataError& e) {
          std::cerr << "warn: " << cell.cell_id << " cycle " << cyc.cycle_index << ": "
                    << e.what() << ", skipping modality\n";
        }
      }
      for (size_t j = 0; j < k; ++j) {
        raw.history_caps_ah.push_back(cell.history.capacities[j].second);
        raw.history_end_cycle = cell.history.capacities[j].first;
      }
      if (raw.charge_curve || raw.discharge_curve || !raw.history_caps_ah.empty())
        out.push_back(std::move(raw));
    }
  }
  return out;
}

std::vector<data::RelaxationCurve> pool_curves(const std::vector<RawBundle>& bundles) {
  std::vector<data::RelaxationCurve> out;
  for (const auto& b : bundles) {
    if (b.charge_curve) out.push_back(*b.charge_curve);
    if (b.discharge_curve) out.push_back(*b.discharge_curve);
  }
  return out;
}

model::CycleBundle featurize_bundle(const RawBundle& raw, const feat::Normalizer& norm) {
  model::CycleBundle b;
  b.cell_id = raw.cell_id;
  b.cycle_index = raw.cycle_index;
  b.charge_rate = raw.charge_rate;
  b.label = raw.capacity_ah / norm.capacity_scale;
  b.has_label = true;
  if (raw.charge_curve)
    b.charge_windows =
        feat::slide_windows(*raw.charge_curve, feat::kChargeWindowSize, raw.capacity_ah, norm);
  if (raw.discharge_curve)
    b.discharge_windows = feat::slide_windows(*raw.discharge_curve,
                                              feat::kDischargeWindowSize, raw.capacity_ah, norm);
  if (!raw.history_caps_ah.empty()) {
    feat::HistoryWindow h;
    h.cell_id = raw.cell_id;
    h.end_cycle = raw.history_end_cycle;
    h.real_len = static_cast<int>(raw.history_caps_ah.size());
    std::vector<double> vals;
    vals.reserve(raw.history_caps_ah.size());
    for (double c : raw.history_caps_ah) vals.push_back(c / norm.capacity_scale);
    h.values = feat::linear_extrapolate_history(vals);
    h.target = b.label;
    b.history = std::move(h);
  }
  return b;
}

std::vector<model::CycleBundle> featurize_bundles(const std::vector<RawBundle>& raw,
                                                  const feat::Normalizer& norm) {
  std::vector<model::CycleBundle> out;
  out.reserve(raw.size());
  for (const auto& r : raw) out.push_back(featurize_bundle(r, norm));
  return out;
}

std::pair<std::vector<CellData>, std::vector<CellData>> split_stratified(
    const std::vector<CellData>& cells, const SplitSpec& spec) {
  std::map<double, std::vector<size_t>> strata;
  for (size_t i = 0; i < cells.size(); ++i) strata[cells[i].charge_rate].push_back(i);
  Rng rng(spec.seed);
  std::pair<std::vector<CellData>, std::vector<CellData>> out;
  for (auto& [rate, idx] : strata) {
    if (idx.size() < 2)
      throw DataError("split_stratified: stratum at rate " + std::to_string(rate) +
                      " has fewer than 2 cells");
    std::shuffle(idx.begin(), idx.end(), rng);
    long n_train = round_half_away(spec.train_fraction * static_cast<double>(idx.size()));
    n_train = std::clamp<long>(n_train, 1, static_cast<long>(idx.size()) - 1);
    for (size_t j = 0; j < idx.size(); ++j)
      (static_cast<long>(j) < n_train ? out.first : out.second).push_back(cells[idx[j]]);
  }
  return out;
}

double mape(const std::vector<double>& pred_ah, const std::vector<double>& truth_ah) {
  if (pred_ah.size() != truth_ah.size() || pred_ah.empty())
    throw DataError("mape: size mismatch or empty");
  double acc = 0.0;
  for (size_t i = 0; i < pred_ah.size(); ++i) {
    if (truth_ah[i] <= 0.0)
      throw DataError("mape: truth must be positive, got " + std::to_string(truth_ah[i]));
    acc += std::abs(pred_ah[i] - truth_ah[i]) / truth_ah[i];
  }
  return 100.0 * acc / static_cast<double>(pred_ah.size());
}

double batch_gradient(model::CerberusParams& params,
                      const std::vector<const model::CycleBundle*>& batch,
                      nn::Vec& flat_grads, bool parallel) {
  long n = static_cast<long>(batch.size());
  if (n == 0) throw DataError("batch_gradient: empty batch");
  std::vector<nn::Vec> per_bundle(static_cast<size_t>(n));
  std::vector<double> per_loss(static_cast<size_t>(n), 0.0);

  auto one = [&](long i) {
    model::CerberusParams grads;
    grads.resize_like(params);
    grads.set_zero();
    std::vector<model::CycleBundle> single = {*batch[static_cast<size_t>(i)]};
    per_loss[static_cast<size_t>(i)] = model::total_loss(params, single, &grads);
    nn::pack(grads.tensors(), per_bundle[static_cast<size_t>(i)]);
  };

  if (parallel) {
#pragma omp parallel for schedule(static)
    for (long i = 0; i < n; ++i) one(i);
  } else {
    for (long i = 0; i < n; ++i) one(i);
  }

  // fixed index-order reduction keeps serial and parallel lanes bit-identical
  double inv = 1.0 / static_cast<double>(n);
  flat_grads = nn::Vec::Zero(per_bundle[0].size());
  double loss = 0.0;
  for (long i = 0; i < n; ++i) {
    flat_grads += inv * per_bundle[static_cast<size_t>(i)];
    loss += inv * per_loss[static_cast<size_t>(i)];
  }
  return loss;
}

TrainResult train(const std::vector<model::CycleBundle>& train_set,
                  const std::vector<model::CycleBundle>& val_set,
                  const feat::Normalizer& norm, const TrainConfig& config) {
  if (train_set.empty()) throw DataError("train: empty training set");
  if (config.epochs < 1 || config.batch_size < 1)
    throw UsageError("train: epochs and batch_size must be >= 1");

  model::CerberusParams params =
      model::CerberusParams::init(config.model, norm, config.schedule, config.seed);
  nn::Vec flat = params.flat();
  nn::AdamState adam(flat.size(), config.lr);

  Rng shuffle_rng(config.deterministic ? config.seed : std::random_device{}());

  TrainResult result;
  double best_val = std::numeric_limits<double>::infinity();
  nn::Vec best_flat = flat;
  long since_best = 0;

  std::vector<size_t> order(train_set.size());
  for (size_t i = 0; i < order.size(); ++i) order[i] = i;

  for (long epoch = 1; epoch <= config.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), shuffle_rng);
    double epoch_loss = 0.0;
    long n_batches = 0;
    for (size_t start = 0; start < order.size(); start += static_cast<size_t>(config.batch_size)) {
      std::vector<const model::CycleBundle*> batch;
      for (size_t i = start; i < std::min(order.size(), start + static_cast<size_t>(config.batch_size)); ++i)
        batch.push_back(&train_set[order[i]]);
      nn::Vec grads;
      double loss = batch_gradient(params, batch, grads, config.parallel);
      if (!std::isfinite(loss) || loss > 1e6)
        throw NumericError("train: divergence at epoch " + std::to_string(epoch) +
                           " (loss " + std::to_string(loss) + ")");
      if (config.lr != 0.0) {
        nn::adam_step(adam, flat, grads);
        params.set_flat(flat);
      }
      epoch_loss += loss;
      ++n_batches;
    }
    epoch_loss /= static_cast<double>(n_batches);

    double val_loss = epoch_loss;
    if (!val_set.empty()) val_loss = model::total_loss(params, val_set);
    if (!std::isfinite(val_loss))
      throw NumericError("train: non-finite validation loss at epoch " + std::to_string(epoch));
    result.loss_history.emplace_back(epoch_loss, val_loss);

    if (val_loss < best_val) {
      best_val = val_loss;
      best_flat = flat;
      result.best_epoch = epoch;
      since_best = 0;
    } else if (++since_best >= config.patience) {
      break;
    }
  }

  params.set_flat(best_flat);
  result.params = std::move(params);
  return result;
}

EvalReport evaluate(const model::CerberusParams& params,
                    const std::vector<model::CycleBundle>& test_set, bool parallel) {
  if (test_set.empty()) throw DataError("evaluate: empty test set");
  long n = static_cast<long>(test_set.size());
  std::vector<EvalRow> rows(static_cast<size_t>(n));

  auto one = [&](long i) {
    const auto& b = test_set[static_cast<size_t>(i)];
    auto est = model::fuse_estimate(params, b);
    EvalRow r;
    r.cell_id = b.cell_id;
    r.cycle_index = b.cycle_index;
    r.charge_rate = b.charge_rate;
    r.truth_ah = b.label * params.normalizer.capacity_scale;
    r.fused_ah = est.fused_ah;
    r.head_a_ah = est.head_a_ah;
    r.head_b_ah = est.head_b_ah;
    r.head_c_ah = est.head_c_ah;
    rows[static_cast<size_t>(i)] = std::move(r);
  };
  if (parallel) {
#pragma omp parallel for schedule(static)
    for (long i = 0; i < n; ++i) one(i);
  } else {
    for (long i = 0; i < n; ++i) one(i);
  }

  EvalReport rep;
  rep.rows = std::move(rows);
  rep.cycles_evaluated = n;
  for (const auto& b : test_set)
    rep.windows_evaluated +=
        static_cast<long>(b.charge_windows.size() + b.discharge_windows.size());

  std::vector<double> fused, truth;
  std::map<double, std::pair<std::vector<double>, std::vector<double>>> by_cond;
  std::map<std::string, std::pair<std::vector<double>, std::vector<double>>> by_cell;
  std::vector<double> pa, ta, pb, tb, pc, tc;
  for (const auto& r : rep.rows) {
    fused.push_back(r.fused_ah);
    truth.push_back(r.truth_ah);
    by_cond[r.charge_rate].first.push_back(r.fused_ah);
    by_cond[r.charge_rate].second.push_back(r.truth_ah);
    by_cell[r.cell_id].first.push_back(r.fused_ah);
    by_cell[r.cell_id].second.push_back(r.truth_ah);
    if (r.head_a_ah) { pa.push_back(*r.head_a_ah); ta.push_back(r.truth_ah); }
    if (r.head_b_ah) { pb.push_back(*r.head_b_ah); tb.push_back(r.truth_ah); }
    if (r.head_c_ah) { pc.push_back(*r.head_c_ah); tc.push_back(r.truth_ah); }
  }
  rep.overall_mape = mape(fused, truth);
  for (auto& [k, v] : by_cond) rep.per_condition_mape[k] = mape(v.first, v.second);
  for (auto& [k, v] : by_cell) rep.per_cell_mape[k] = mape(v.first, v.second);
  if (!pa.empty()) rep.head_a_mape = mape(pa, ta);
  if (!pb.empty()) rep.head_b_mape = mape(pb, tb);
  if (!pc.empty()) rep.head_c_mape = mape(pc, tc);
  return rep;
}

std::string format_report(const EvalReport& rep) {
  std::ostringstream out;
  char buf[128];
  out << "cerberus evaluation report\n";
  if (!rep.config_echo.empty()) out << "config: " << rep.config_echo << "\n";
  out << "cycles_evaluated: " << rep.cycles_evaluated << "\n";
  out << "windows_evaluated: " << rep.windows_evaluated << "\n";
  std::snprintf(buf, sizeof(buf), "overall_mape_pct: %.6f\n", rep.overall_mape);
  out << buf;
  auto opt = [&](const char* name, const std::optional<double>& v) {
    if (v) {
      std::snprintf(buf, sizeof(buf), "%s: %.6f\n", name, *v);
      out << buf;
    }
  };
  opt("head_a_only_mape_pct", rep.head_a_mape);
  opt("head_b_only_mape_pct", rep.head_b_mape);
  opt("head_c_only_mape_pct", rep.head_c_mape);
  out << "\nper_condition:\n";
  for (const auto& [rate, m] : rep.per_condition_mape) {
    std::snprintf(buf, sizeof(buf), "  %.2fC  %.6f\n", rate, m);
    out << buf;
  }
  out << "\nper_cell:\n";
  for (const auto& [cell, m] : rep.per_cell_mape) {
    std::snprintf(buf, sizeof(buf), "  %s  %.6f\n", cell.c_str(), m);
    out << buf;
  }
  return out.str();
}

void write_plot_csv(const EvalReport& rep, const std::string& dir) {
  fs::create_directories(dir);
  std::map<std::string, std::ofstream> files;
  for (const auto& r : rep.rows) {
    auto it = files.find(r.cell_id);
    if (it == files.end()) {
      it = files.emplace(r.cell_id, std::ofstream(fs::path(dir) / (r.cell_id + "_eval.csv")))
               .first;
      it->second << "cycle_index,truth_ah,fused_ah,head_a_ah,head_b_ah,head_c_ah\n";
    }
    char buf[256];
    auto f = [](const std::optional<double>& v) { return v ? *v : std::nan(""); };
    std::snprintf(buf, sizeof(buf), "%ld,%.9f,%.9f,%.9f,%.9f,%.9f\n", r.cycle_index,
                  r.truth_ah, r.fused_ah, f(r.head_a_ah), f(r.head_b_ah), f(r.head_c_ah));
    it->second << buf;
  }
}

void write_loss_history_csv(const std::vector<std::pair<double, double>>& history,
                            const std::string& path) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write " + path);
  out << "epoch,train_loss,val_loss\n";
  for (size_t e = 0; e < history.size(); ++e) {
    char buf[128];
    std::snprintf(buf, sizeof(buf), "%zu,%.17g,%.17g\n", e + 1, history[e].first,
                  history[e].second);
    out << buf;
  }
}

}  // namespace cerberus::harness
