// SPDX-License-Identifier: Apache-2.0
//
// cerberus: synth | ingest | train | evaluate | estimate | predict
//
// Exit codes: 0 ok, 1 usage error, 2 data error, 3 numeric error.

#include <CLI11.hpp>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <iostream>

#include "cerberus/harness.hpp"
#include "cerberus/synthcell.hpp"

namespace ch = cerberus::harness;
namespace cm = cerberus::model;
namespace cs = cerberus::synth;
namespace cf = cerberus::feat;

namespace {

bool log_enabled() {
  const char* v = std::getenv("CERBERUS_LOG");
  return v && std::string(v) != "quiet";
}

void info(const std::string& msg) {
  if (log_enabled()) std::cerr << "cerberus: " << msg << "\n";
}

struct CommonOpts {
  std::string data_dir;
  double nominal = 3.5;
  std::uint64_t seed = 0;
  std::string split = "stratified";
  double train_fraction = 0.8;
};

struct TrainOpts {
  long epochs = 100;
  long batch_size = 32;
  double lr = 1e-3;
  long patience = 25;
  double val_fraction = 0.1;
  long gru_hidden = 64;
  long lstm_hidden = 32;
  bool no_parallel = false;
  bool non_deterministic = false;
  cm::FusionSchedule schedule;
  std::string config_file;
};

void apply_config_file(TrainOpts& opts) {
  if (opts.config_file.empty()) return;
  std::ifstream in(opts.config_file);
  if (!in) throw cerberus::UsageError("cannot read config file " + opts.config_file);
  std::string line;
  long lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty() || line[0] == '#') continue;
    auto eq = line.find('=');
    if (eq == std::string::npos)
      throw cerberus::UsageError("config line " + std::to_string(lineno) + ": expected key=value");
    std::string key = line.substr(0, eq);
    std::string val = line.substr(eq + 1);
    try {
      if (key == "gru_hidden") opts.gru_hidden = std::stol(val);
      else if (key == "lstm_hidden") opts.lstm_hidden = std::stol(val);
      else if (key == "epochs") opts.epochs = std::stol(val);
      else if (key == "batch_size") opts.batch_size = std::stol(val);
      else if (key == "patience") opts.patience = std::stol(val);
      else if (key == "lr") opts.lr = std::stod(val);
      else if (key == "val_fraction") opts.val_fraction = std::stod(val);
      else if (key == "n0") opts.schedule.n0 = std::stod(val);
      else if (key == "n_ramp") opts.schedule.n_ramp = std::stod(val);
      else if (key == "w_min") opts.schedule.w_min = std::stod(val);
      else if (key == "w_max") opts.schedule.w_max = std::stod(val);
      else throw cerberus::UsageError("config: unknown key '" + key + "'");
    } catch (const std::invalid_argument&) {
      throw cerberus::UsageError("config: bad value for '" + key + "'");
    }
  }
}

ch::SplitSpec split_spec(const CommonOpts& c) {
  ch::SplitSpec spec;
  if (c.split == "stratified") spec.mode = ch::SplitMode::stratified_cells;
  else if (c.split == "random") spec.mode = ch::SplitMode::random_windows;
  else if (c.split == "none") spec.mode = ch::SplitMode::stratified_cells;  // unused
  else throw cerberus::UsageError("unknown split mode '" + c.split + "'");
  spec.train_fraction = c.train_fraction;
  spec.seed = c.seed;
  return spec;
}

struct PreparedData {
  std::vector<cm::CycleBundle> train, test;
  cf::Normalizer norm;
};

// Splits, fits the normalizer on the training side only, featurizes.
PreparedData prepare(const CommonOpts& c) {
  auto cells = ch::ingest_dir(c.data_dir, c.nominal);
  PreparedData out;
  auto spec = split_spec(c);
  if (c.split == "none") {
    auto raw = ch::make_raw_bundles(cells);
    out.norm = cf::fit_normalizer(ch::pool_curves(raw), c.nominal);
    out.test = ch::featurize_bundles(raw, out.norm);
    return out;
  }
  if (spec.mode == ch::SplitMode::stratified_cells) {
    auto [train_cells, test_cells] = ch::split_stratified(cells, spec);
    auto raw_train = ch::make_raw_bundles(train_cells);
    auto raw_test = ch::make_raw_bundles(test_cells);
    out.norm = cf::fit_normalizer(ch::pool_curves(raw_train), c.nominal);
    out.train = ch::featurize_bundles(raw_train, out.norm);
    out.test = ch::featurize_bundles(raw_test, out.norm);
  } else {
    auto raw = ch::make_raw_bundles(cells);
    auto [raw_train, raw_test] = ch::split_random(raw, spec);
    out.norm = cf::fit_normalizer(ch::pool_curves(raw_train), c.nominal);
    out.train = ch::featurize_bundles(raw_train, out.norm);
    out.test = ch::featurize_bundles(raw_test, out.norm);
  }
  return out;
}

int cmd_synth(long cells, long cycles, double noise_mv, std::uint64_t seed,
              const std::string& out_dir) {
  auto specs = cs::default_fleet(static_cast<int>(cells), cycles, noise_mv * 1e-3, seed);
  cs::generate_fleet(specs, out_dir);
  info("wrote " + std::to_string(specs.size()) + " cells to " + out_dir);
  return 0;
}

int cmd_ingest(const CommonOpts& c, const std::string& out_path) {
  auto cells = ch::ingest_dir(c.data_dir, c.nominal);
  std::ostream* out = &std::cout;
  std::ofstream file;
  if (!out_path.empty()) {
    file.open(out_path);
    if (!file) throw cerberus::DataError("cannot write " + out_path);
    out = &file;
  }
  *out << "cell_id,cycle_index,charge_rate,capacity_ah\n";
  for (const auto& cell : cells)
    for (const auto& [idx, cap] : cell.history.capacities) {
      char buf[128];
      std::snprintf(buf, sizeof(buf), "%s,%ld,%.2f,%.9f\n", cell.cell_id.c_str(), idx,
                    cell.charge_rate, cap);
      *out << buf;
    }
  return 0;
}

int cmd_train(const CommonOpts& c, TrainOpts& t, const std::string& out_ckpt,
              const std::string& loss_csv) {
  apply_config_file(t);
  auto prepared = prepare(c);
  auto [tr, val] = ch::carve_validation(prepared.train, t.val_fraction, c.seed);

  ch::TrainConfig cfg;
  cfg.epochs = t.epochs;
  cfg.batch_size = t.batch_size;
  cfg.lr = t.lr;
  cfg.patience = t.patience;
  cfg.deterministic = !t.non_deterministic;
  cfg.parallel = !t.no_parallel;
  cfg.seed = c.seed;
  cfg.model = {t.gru_hidden, t.lstm_hidden};
  cfg.schedule = t.schedule;

  info("training on " + std::to_string(tr.size()) + " bundles, validating on " +
       std::to_string(val.size()));
  auto result = ch::train(tr, val, prepared.norm, cfg);
  info("best epoch " + std::to_string(result.best_epoch));
  cm::save_checkpoint(result.params, out_ckpt);
  if (!loss_csv.empty()) ch::write_loss_history_csv(result.loss_history, loss_csv);
  return 0;
}

int cmd_evaluate(const CommonOpts& c, const std::string& ckpt, const std::string& report_path,
                 const std::string& plot_dir, bool no_parallel) {
  auto params = cm::load_checkpoint(ckpt);
  // split reconstruction must match the training run (same seed/mode),
  // but featurization uses the checkpoint's frozen normalizer
  auto cells = ch::ingest_dir(c.data_dir, c.nominal);
  std::vector<cm::CycleBundle> test;
  if (c.split == "none") {
    test = ch::featurize_bundles(ch::make_raw_bundles(cells), params.normalizer);
  } else if (split_spec(c).mode == ch::SplitMode::stratified_cells) {
    auto [train_cells, test_cells] = ch::split_stratified(cells, split_spec(c));
    test = ch::featurize_bundles(ch::make_raw_bundles(test_cells), params.normalizer);
  } else {
    auto raw = ch::make_raw_bundles(cells);
    auto [raw_train, raw_test] = ch::split_random(raw, split_spec(c));
    test = ch::featurize_bundles(raw_test, params.normalizer);
  }
  auto report = ch::evaluate(params, test, !no_parallel);
  report.config_echo = "model=" + ckpt + " data=" + c.data_dir + " split=" + c.split +
                       " seed=" + std::to_string(c.seed);
  std::string text = ch::format_report(report);
  if (report_path.empty()) {
    std::cout << text;
  } else {
    std::ofstream out(report_path);
    if (!out) throw cerberus::DataError("cannot write " + report_path);
    out << text;
  }
  if (!plot_dir.empty()) ch::write_plot_csv(report, plot_dir);
  return 0;
}

int cmd_estimate(const CommonOpts& c, const std::string& ckpt, const std::string& cell_id,
                 long cycle) {
  auto params = cm::load_checkpoint(ckpt);
  auto cells = ch::ingest_dir(c.data_dir, c.nominal);
  auto raw = ch::make_raw_bundles(cells);
  for (const auto& r : raw) {
    if (r.cell_id == cell_id && r.cycle_index == cycle) {
      auto bundle = ch::featurize_bundle(r, params.normalizer);
      auto est = cm::fuse_estimate(params, bundle);
      char buf[256];
      std::snprintf(buf, sizeof(buf), "%s,%ld,%.9f,%.9f,%.9f,%.9f\n", cell_id.c_str(), cycle,
                    est.fused_ah, est.head_a_ah.value_or(std::nan("")),
                    est.head_b_ah.value_or(std::nan("")),
                    est.head_c_ah.value_or(std::nan("")));
      std::cout << "cell_id,cycle_index,fused_ah,head_a_ah,head_b_ah,head_c_ah\n" << buf;
      return 0;
    }
  }
  throw cerberus::DataError("no cycle " + std::to_string(cycle) + " for cell " + cell_id);
}

int cmd_predict(const CommonOpts& c, const std::string& ckpt, const std::string& cell_id,
                long from_cycle, long horizon) {
  auto params = cm::load_checkpoint(ckpt);
  auto cells = ch::ingest_dir(c.data_dir, c.nominal);
  for (const auto& cell : cells) {
    if (cell.cell_id != cell_id) continue;
    std::vector<double> caps;
    long end_cycle = 0;
    for (const auto& [idx, cap] : cell.history.capacities) {
      if (from_cycle > 0 && idx > from_cycle) break;
      caps.push_back(cap / params.normalizer.capacity_scale);
      end_cycle = idx;
    }
    if (caps.empty()) throw cerberus::DataError("no history for cell " + cell_id);
    cf::HistoryWindow h;
    h.cell_id = cell_id;
    h.end_cycle = end_cycle;
    h.real_len = static_cast<int>(caps.size());
    h.values = cf::linear_extrapolate_history(caps);
    auto traj = cm::predict_trajectory(params, h, horizon);
    std::cout << "cycle_index,predicted_ah\n";
    for (size_t k = 0; k < traj.size(); ++k) {
      char buf[64];
      std::snprintf(buf, sizeof(buf), "%ld,%.9f\n", end_cycle + static_cast<long>(k) + 1,
                    traj[k]);
      std::cout << buf;
    }
    return 0;
  }
  throw cerberus::DataError("no such cell " + cell_id);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Cerberus battery capacity estimation and prediction"};
  app.require_subcommand(1);

  CommonOpts common;
  TrainOpts topt;

  // synth
  long sy_cells = 12, sy_cycles = 300;
  double sy_noise_mv = 2.0;
  std::string sy_out = "data";
  auto* synth = app.add_subcommand("synth", "generate a synthetic battery fleet");
  synth->add_option("--cells", sy_cells);
  synth->add_option("--cycles", sy_cycles);
  synth->add_option("--noise-mv", sy_noise_mv, "voltage noise sigma, millivolts");
  synth->add_option("--seed", common.seed);
  synth->add_option("--out", sy_out)->required();

  // ingest
  std::string ingest_out;
  auto* ingest = app.add_subcommand("ingest", "parse cycling CSVs, emit per-cycle capacities");
  ingest->add_option("--data", common.data_dir)->required();
  ingest->add_option("--nominal", common.nominal);
  ingest->add_option("--out", ingest_out);

  // train
  std::string tr_out = "model.ckpt", tr_loss;
  auto* train = app.add_subcommand("train", "train the fused model");
  train->add_option("--data", common.data_dir)->required();
  train->add_option("--nominal", common.nominal);
  train->add_option("--split", common.split, "stratified|random");
  train->add_option("--train-fraction", common.train_fraction);
  train->add_option("--seed", common.seed);
  train->add_option("--epochs", topt.epochs);
  train->add_option("--batch-size", topt.batch_size);
  train->add_option("--lr", topt.lr);
  train->add_option("--patience", topt.patience);
  train->add_option("--val-fraction", topt.val_fraction);
  train->add_option("--gru-hidden", topt.gru_hidden);
  train->add_option("--lstm-hidden", topt.lstm_hidden);
  train->add_option("--config", topt.config_file, "key=value overrides");
  train->add_flag("--no-parallel", topt.no_parallel);
  train->add_flag("--non-deterministic", topt.non_deterministic);
  train->add_option("--out", tr_out);
  train->add_option("--loss-history", tr_loss);

  // evaluate
  std::string ev_model, ev_report, ev_plot;
  bool ev_no_parallel = false;
  auto* evaluate = app.add_subcommand("evaluate", "evaluate a checkpoint on the test split");
  evaluate->add_option("--model", ev_model)->required();
  evaluate->add_option("--data", common.data_dir)->required();
  evaluate->add_option("--nominal", common.nominal);
  evaluate->add_option("--split", common.split, "stratified|random|none");
  evaluate->add_option("--train-fraction", common.train_fraction);
  evaluate->add_option("--seed", common.seed);
  evaluate->add_option("--report", ev_report);
  evaluate->add_option("--plot-dir", ev_plot);
  evaluate->add_flag("--no-parallel", ev_no_parallel);

  // estimate
  std::string es_model, es_cell;
  long es_cycle = 0;
  auto* estimate = app.add_subcommand("estimate", "fused capacity for one cycle");
  estimate->add_option("--model", es_model)->required();
  estimate->add_option("--data", common.data_dir)->required();
  estimate->add_option("--nominal", common.nominal);
  estimate->add_option("--cell", es_cell)->required();
  estimate->add_option("--cycle", es_cycle)->required();

  // predict
  std::string pr_model, pr_cell;
  long pr_from = 0, pr_horizon = 10;
  auto* predict = app.add_subcommand("predict", "trajectory rollout from history");
  predict->add_option("--model", pr_model)->required();
  predict->add_option("--data", common.data_dir)->required();
  predict->add_option("--nominal", common.nominal);
  predict->add_option("--cell", pr_cell)->required();
  predict->add_option("--from-cycle", pr_from, "use history up to this cycle (0 = all)");
  predict->add_option("--horizon", pr_horizon)->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 1;
  }

  try {
    if (synth->parsed()) return cmd_synth(sy_cells, sy_cycles, sy_noise_mv, common.seed, sy_out);
    if (ingest->parsed()) return cmd_ingest(common, ingest_out);
    if (train->parsed()) return cmd_train(common, topt, tr_out, tr_loss);
    if (evaluate->parsed())
      return cmd_evaluate(common, ev_model, ev_report, ev_plot, ev_no_parallel);
    if (estimate->parsed()) return cmd_estimate(common, es_model, es_cell, es_cycle);
    if (predict->parsed()) return cmd_predict(common, pr_model, pr_cell, pr_from, pr_horizon);
  } catch (const cerberus::UsageError& e) {
    std::cerr << "usage error: " << e.what() << "\n";
    return 1;
  } catch (const cerberus::NumericError& e) {
    std::cerr << "numeric error: " << e.what() << "\n";
    return 3;
  } catch (const cerberus::DataError& e) {
    std::cerr << "data error: " << e.what() << "\n";
    return 2;
  } catch (const cerberus::ShapeError& e) {
    std::cerr << "data error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
  return 1;
}
