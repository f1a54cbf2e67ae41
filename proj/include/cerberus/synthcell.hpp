// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <string>
#include <vector>

#include "cerberus/battery_data.hpp"

namespace cerberus::synth {

enum class FadeMode { linear, knee };

struct SynthCellSpec {
  std::string cell_id;
  double nominal_capacity_ah = 3.5;
  long cycles = 300;
  FadeMode fade_mode = FadeMode::linear;
  double linear_rate = 0.2 / 300.0;  // fraction of q0 lost per cycle
  long knee_cycle = 200;
  double knee_quadratic = 0.0;  // fraction/cycle^2 past the knee
  double charge_rate = 0.5;     // C
  double relax_tau_charge_s = 300.0;
  double relax_tau_discharge_s = 400.0;
  double aging_tau_slope = 0.5;
  double noise_sigma_v = 0.0;
  std::uint64_t seed = 0;
};

// Analytic capacity at cycle n (n = 0 gives the nominal capacity).
double soh_capacity(const SynthCellSpec& spec, long n);

// Ground-truth capacities for cycles 1..spec.cycles.
std::vector<double> soh_trajectory(const SynthCellSpec& spec);

// 60 s native sampling over a 30-minute rest. Charge rests decay toward
// an SoH-dependent asymptote; discharge rests rebound upward.
data::RelaxationCurve relaxation_curve(const SynthCellSpec& spec, double soh,
                                       data::RelaxKind kind, Rng& rng);

// Canonical cycling CSV for one cell, cycles 1..spec.cycles.
std::string generate_cell_csv(const SynthCellSpec& spec);

// Writes one CSV per cell plus manifest.json into out_dir.
void generate_fleet(const std::vector<SynthCellSpec>& specs, const std::string& out_dir);

// Default CI fleet: `cells` cells split over charge rates 0.25/0.5/1C,
// a mix of linear and knee fades.
std::vector<SynthCellSpec> default_fleet(int cells, long cycles, double noise_sigma_v,
                                         std::uint64_t seed);

}  // namespace cerberus::synth
