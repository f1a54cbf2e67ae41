// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <string>
#include <vector>

#include "cerberus/battery_data.hpp"

namespace cerberus::feat {

inline constexpr int kChargeWindowSize = 10;
inline constexpr int kDischargeWindowSize = 15;
inline constexpr int kMinHistoryLen = 10;
inline constexpr double kTargetIntervalS = 120.0;

struct Normalizer {
  double mean_charge = 0.0;
  double std_charge = 1.0;
  double mean_discharge = 0.0;
  double std_discharge = 1.0;
  double capacity_scale = 3.5;  // nominal capacity, Ah

  double zscore(double v, data::RelaxKind kind) const {
    return kind == data::RelaxKind::charge ? (v - mean_charge) / std_charge
                                           : (v - mean_discharge) / std_discharge;
  }
  double unzscore(double z, data::RelaxKind kind) const {
    return kind == data::RelaxKind::charge ? z * std_charge + mean_charge
                                           : z * std_discharge + mean_discharge;
  }
};

struct WindowSample {
  data::RelaxKind kind;
  std::string cell_id;
  long cycle_index = 0;
  std::vector<double> values;  // z-scored voltages, length 10 (charge) or 15 (discharge)
  double label = 0.0;          // capacity_ah / capacity_scale
};

struct HistoryWindow {
  std::string cell_id;
  long end_cycle = 0;
  std::vector<double> values;  // normalized capacities, length >= 10
  int real_len = 0;            // count of non-extrapolated points at the tail
  double target = 0.0;         // normalized capacity of cycle end_cycle+1
};

data::RelaxationCurve downsample(const data::RelaxationCurve& curve, double target_interval_s);

Normalizer fit_normalizer(const std::vector<data::RelaxationCurve>& training_curves,
                          double nominal_capacity_ah);

std::vector<WindowSample> slide_windows(const data::RelaxationCurve& curve, int size,
                                        double label_ah, const Normalizer& norm);

// Pads short capacity series backward along a least-squares line so the
// result has at least min_len points. Identity when already long enough.
std::vector<double> linear_extrapolate_history(const std::vector<double>& capacities,
                                               int min_len = kMinHistoryLen);

std::vector<HistoryWindow> expand_history(const data::CellHistory& history,
                                          const Normalizer& norm);

}  // namespace cerberus::feat
