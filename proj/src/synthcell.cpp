// SPDX-License-Identifier: Apache-2.0
#include "cerberus/synthcell.hpp"

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <json.hpp>

namespace cerberus::synth {

double soh_capacity(const SynthCellSpec& spec, long n) {
  double q0 = spec.nominal_capacity_ah;
  double frac = 1.0 - spec.linear_rate * static_cast<double>(n);
  if (spec.fade_mode == FadeMode::knee) {
    double past = std::max(0.0, static_cast<double>(n - spec.knee_cycle));
    frac -= spec.knee_quadratic * past * past;
  }
  return std::max(q0 * frac, 0.5 * q0);
}

std::vector<double> soh_trajectory(const SynthCellSpec& spec) {
  std::vector<double> out;
  out.reserve(static_cast<size_t>(spec.cycles));
  for (long n = 1; n <= spec.cycles; ++n) out.push_back(soh_capacity(spec, n));
  return out;
}

data::RelaxationCurve relaxation_curve(const SynthCellSpec& spec, double soh,
                                       data::RelaxKind kind, Rng& rng) {
  if (soh <= 0.0 || soh > 1.0)
    throw UsageError("relaxation_curve: soh " + std::to_string(soh) + " outside (0, 1]");
  std::normal_distribution<double> noise(0.0, 1.0);
  data::RelaxationCurve curve;
  curve.cell_id = spec.cell_id;
  curve.kind = kind;
  curve.native_interval_s = 60.0;
  double aging = 1.0 + spec.aging_tau_slope * (1.0 - soh);
  for (long t = 0; t <= 1800; t += 60) {
    double v;
    if (kind == data::RelaxKind::charge) {
      double tau = spec.relax_tau_charge_s * aging;
      double v_hi = 4.08 - 0.04 * (1.0 - soh) / 0.2;
      v = v_hi + (4.2 - v_hi) * std::exp(-static_cast<double>(t) / tau);
    } else {
      double tau = spec.relax_tau_discharge_s * aging;
      double v_lo = 3.20 + 0.08 * (1.0 - soh) / 0.2;
      v = v_lo - (v_lo - 2.65) * std::exp(-static_cast<double>(t) / tau);
    }
    if (spec.noise_sigma_v > 0.0) v += spec.noise_sigma_v * noise(rng);
    curve.samples.emplace_back(static_cast<double>(t), v);
  }
  return curve;
}

namespace {

void append_row(std::string& out, const std::string& cell, long cycle, const char* step,
                double t, double i, double v) {
  char buf[160];
  std::snprintf(buf, sizeof(buf), "%s,%ld,%s,%.1f,%.6f,%.6f\n", cell.c_str(), cycle, step, t,
                i, v);
  out += buf;
}

}  // namespace

std::string generate_cell_csv(const SynthCellSpec& spec) {
  Rng rng(spec.seed);
  std::string out = "cell_id,cycle_index,step_kind,time_s,current_a,voltage_v\n";
  double q0 = spec.nominal_capacity_ah;
  for (long cycle = 1; cycle <= spec.cycles; ++cycle) {
    double q = soh_capacity(spec, cycle);
    double soh = q / q0;
    double t = 0.0;

    // coarse protocol-shaped charge: only the rests and discharge matter downstream
    double i_chg = spec.charge_rate * q0;
    for (int k = 0; k <= 10; ++k) {
      append_row(out, spec.cell_id, cycle, "charge_cc", t, i_chg, 3.0 + 1.2 * k / 10.0);
      t += 60.0;
    }
    for (int k = 0; k < 5; ++k) {
      double i_cv = i_chg + (0.05 * q0 - i_chg) * k / 4.0;
      append_row(out, spec.cell_id, cycle, "charge_cv", t, i_cv, 4.2);
      t += 60.0;
    }

    auto rest_c = relaxation_curve(spec, soh, data::RelaxKind::charge, rng);
    for (const auto& [rt, v] : rest_c.samples)
      append_row(out, spec.cell_id, cycle, "rest_after_charge", t + rt, 0.0, v);
    t += 1860.0;

    // constant-current 1-hour discharge at 2 s sampling: coulomb count == q exactly
    double i_dis = q;  // amps, q Ah over one hour
    long n_dis = 1800;
    for (long k = 0; k <= n_dis; ++k) {
      double v = 4.0 - (4.0 - 2.65) * static_cast<double>(k) / n_dis;
      append_row(out, spec.cell_id, cycle, "discharge_cc", t + 2.0 * k, -i_dis, v);
    }
    t += 2.0 * n_dis + 60.0;

    auto rest_d = relaxation_curve(spec, soh, data::RelaxKind::discharge, rng);
    for (const auto& [rt, v] : rest_d.samples)
      append_row(out, spec.cell_id, cycle, "rest_after_discharge", t + rt, 0.0, v);
  }
  return out;
}

void generate_fleet(const std::vector<SynthCellSpec>& specs, const std::string& out_dir) {
  if (specs.empty()) throw UsageError("generate_fleet: no cell specs");
  for (size_t i = 0; i < specs.size(); ++i)
    for (size_t j = i + 1; j < specs.size(); ++j)
      if (specs[i].cell_id == specs[j].cell_id)
        throw UsageError("generate_fleet: duplicate cell_id " + specs[i].cell_id);

  std::filesystem::create_directories(out_dir);
  nlohmann::json manifest;
  manifest["cells"] = nlohmann::json::array();
  for (const auto& spec : specs) {
    std::string file = spec.cell_id + ".csv";
    std::ofstream f(std::filesystem::path(out_dir) / file);
    if (!f) throw DataError("cannot write " + file);
    f << generate_cell_csv(spec);
    manifest["cells"].push_back({{"cell_id", spec.cell_id},
                                 {"file", file},
                                 {"charge_rate", spec.charge_rate},
                                 {"nominal_capacity_ah", spec.nominal_capacity_ah},
                                 {"cycles", spec.cycles},
                                 {"fade_mode", spec.fade_mode == FadeMode::knee ? "knee" : "linear"},
                                 {"seed", spec.seed}});
  }
  std::ofstream mf(std::filesystem::path(out_dir) / "manifest.json");
  mf << manifest.dump(2) << "\n";
}

std::vector<SynthCellSpec> default_fleet(int cells, long cycles, double noise_sigma_v,
                                         std::uint64_t seed) {
  const double rates[3] = {0.25, 0.5, 1.0};
  std::vector<SynthCellSpec> specs;
  for (int i = 0; i < cells; ++i) {
    SynthCellSpec s;
    char id[32];
    std::snprintf(id, sizeof(id), "cell%03d", i);
    s.cell_id = id;
    s.cycles = cycles;
    s.charge_rate = rates[i % 3];
    s.noise_sigma_v = noise_sigma_v;
    s.seed = seed * 1000003 + static_cast<std::uint64_t>(i);
    // spread fade behavior: higher rates fade faster, some cells knee
    s.linear_rate = (0.15 + 0.10 * s.charge_rate) / static_cast<double>(cycles);
    if (i % 4 == 3) {
      s.fade_mode = FadeMode::knee;
      s.knee_cycle = cycles * 2 / 3;
      s.knee_quadratic = 0.10 / static_cast<double>(cycles) / static_cast<double>(cycles);
    }
    specs.push_back(std::move(s));
  }
  return specs;
}

}  // namespace cerberus::synth
