// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <iosfwd>
#include <string>
#include <utility>
#include <vector>

#include "cerberus/common.hpp"

namespace cerberus::data {

enum class StepKind {
  charge_cc,
  charge_cv,
  rest_after_charge,
  discharge_cc,
  rest_after_discharge,
};

const char* step_kind_name(StepKind k);
StepKind parse_step_kind(const std::string& s);

struct TelemetryPoint {
  double time_s = 0.0;    // seconds since cycle start
  double current_a = 0.0; // signed, discharge negative
  double voltage_v = 0.0;
};

struct Step {
  StepKind kind;
  std::vector<TelemetryPoint> points;
};

struct CycleRecord {
  std::string cell_id;
  long cycle_index = 0;
  std::vector<Step> steps;       // protocol order
  double charge_rate = 0.0;      // C-rate, inferred from charge_cc current
  double capacity_ah = 0.0;      // filled by coulomb counting
  bool has_capacity = false;

  const Step* find_step(StepKind k) const;
};

enum class RelaxKind { charge, discharge };

struct RelaxationCurve {
  std::string cell_id;
  long cycle_index = 0;
  RelaxKind kind = RelaxKind::charge;
  std::vector<std::pair<double, double>> samples; // (time_s rebased to 0, voltage_v)
  double native_interval_s = 0.0;
};

struct CellHistory {
  std::string cell_id;
  double charge_rate = 0.0;
  std::vector<std::pair<long, double>> capacities; // (cycle_index, capacity_ah), sorted
};

// Rest steps must sit below the sensor noise floor.
inline constexpr double kRestCurrentToleranceA = 1e-3;

// Canonical cycling CSV:
//   cell_id,cycle_index,step_kind,time_s,current_a,voltage_v
// Rows need not be grouped; the parser sorts by (cell_id, cycle_index,
// protocol step order) keeping file order within a step.
std::vector<CycleRecord> parse_cycling_csv(std::istream& in);
std::vector<CycleRecord> parse_cycling_csv(const std::string& text);

// Trapezoidal integral of |I| over the discharge_cc step, in Ah.
// Stores the result into cycle.capacity_ah.
double coulomb_count_discharge(CycleRecord& cycle);

RelaxationCurve extract_relaxation(const CycleRecord& cycle, RelaxKind kind);

CellHistory build_cell_history(const std::vector<CycleRecord>& cycles);

// Infers the C-rate of a cycle from the median charge_cc current.
double infer_charge_rate(const CycleRecord& cycle, double nominal_capacity_ah);

}  // namespace cerberus::data
