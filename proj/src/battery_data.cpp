// SPDX-License-Identifier: Apache-2.0
#include "cerberus/battery_data.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <istream>
#include <map>
#include <sstream>
#include <tuple>

namespace cerberus::data {

const char* step_kind_name(StepKind k) {
  switch (k) {
    case StepKind::charge_cc: return "charge_cc";
    case StepKind::charge_cv: return "charge_cv";
    case StepKind::rest_after_charge: return "rest_after_charge";
    case StepKind::discharge_cc: return "discharge_cc";
    case StepKind::rest_after_discharge: return "rest_after_discharge";
  }
  return "?";
}

StepKind parse_step_kind(const std::string& s) {
  if (s == "charge_cc") return StepKind::charge_cc;
  if (s == "charge_cv") return StepKind::charge_cv;
  if (s == "rest_after_charge") return StepKind::rest_after_charge;
  if (s == "discharge_cc") return StepKind::discharge_cc;
  if (s == "rest_after_discharge") return StepKind::rest_after_discharge;
  throw SchemaError("unknown step_kind '" + s + "'");
}

const Step* CycleRecord::find_step(StepKind k) const {
  for (const auto& s : steps)
    if (s.kind == k) return &s;
  return nullptr;
}

namespace {

double parse_double_field(const char* begin, const char* end, long row) {
  double v = 0.0;
  auto [p, ec] = std::from_chars(begin, end, v);
  if (ec != std::errc() || p != end)
    throw SchemaError("row " + std::to_string(row) + ": bad numeric field '" +
                      std::string(begin, end) + "'");
  return v;
}

long parse_long_field(const char* begin, const char* end, long row) {
  long v = 0;
  auto [p, ec] = std::from_chars(begin, end, v);
  if (ec != std::errc() || p != end)
    throw SchemaError("row " + std::to_string(row) + ": bad integer field '" +
                      std::string(begin, end) + "'");
  return v;
}

struct RawRow {
  long row;  // 1-based line number in the document
  long cycle_index;
  StepKind kind;
  TelemetryPoint pt;
};

}  // namespace

std::vector<CycleRecord> parse_cycling_csv(std::istream& in) {
  std::string line;
  if (!std::getline(in, line)) return {};
  if (!line.empty() && line.back() == '\r') line.pop_back();
  if (line != "cell_id,cycle_index,step_kind,time_s,current_a,voltage_v")
    throw SchemaError("bad or missing CSV header: '" + line + "'");

  // cell_id -> cycle_index -> rows, kept in file order per step
  std::map<std::string, std::map<long, std::vector<RawRow>>> by_cell;

  long row_no = 1;
  while (std::getline(in, line)) {
    ++row_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;

    const char* p = line.data();
    const char* e = p + line.size();
    const char* field[7];
    field[0] = p;
    int nf = 1;
    for (const char* c = p; c < e && nf < 7; ++c)
      if (*c == ',') field[nf++] = c + 1;
    if (nf != 6)
      throw SchemaError("row " + std::to_string(row_no) + ": expected 6 fields");
    auto fend = [&](int i) { return i < 5 ? field[i + 1] - 1 : e; };

    RawRow r;
    r.row = row_no;
    std::string cell(field[0], fend(0));
    r.cycle_index = parse_long_field(field[1], fend(1), row_no);
    r.kind = parse_step_kind(std::string(field[2], fend(2)));
    r.pt.time_s = parse_double_field(field[3], fend(3), row_no);
    r.pt.current_a = parse_double_field(field[4], fend(4), row_no);
    r.pt.voltage_v = parse_double_field(field[5], fend(5), row_no);

    if (r.cycle_index <= 0)
      throw DataError("row " + std::to_string(row_no) + ": cycle_index must be positive");
    if (r.pt.voltage_v < 2.0 || r.pt.voltage_v > 4.5)
      throw DataError("row " + std::to_string(row_no) + ": voltage " +
                      std::to_string(r.pt.voltage_v) + " outside [2.0, 4.5] V");

    by_cell[cell][r.cycle_index].push_back(r);
  }

  std::vector<CycleRecord> out;
  for (auto& [cell, cycles] : by_cell) {
    for (auto& [idx, rows] : cycles) {
      // protocol order; stable so file order is kept within a step
      std::stable_sort(rows.begin(), rows.end(), [](const RawRow& a, const RawRow& b) {
        return static_cast<int>(a.kind) < static_cast<int>(b.kind);
      });
      CycleRecord rec;
      rec.cell_id = cell;
      rec.cycle_index = idx;
      for (const auto& r : rows) {
        if (rec.steps.empty() || rec.steps.back().kind != r.kind)
          rec.steps.push_back(Step{r.kind, {}});
        auto& pts = rec.steps.back().points;
        if (!pts.empty() && r.pt.time_s <= pts.back().time_s)
          throw DataError("row " + std::to_string(r.row) + ": time not strictly increasing within step " +
                          step_kind_name(r.kind));
        pts.push_back(r.pt);
      }
      out.push_back(std::move(rec));
    }
  }
  return out;
}

std::vector<CycleRecord> parse_cycling_csv(const std::string& text) {
  std::istringstream ss(text);
  return parse_cycling_csv(ss);
}

double coulomb_count_discharge(CycleRecord& cycle) {
  const Step* step = cycle.find_step(StepKind::discharge_cc);
  if (!step || step->points.size() < 2)
    throw DataError("cell " + cycle.cell_id + " cycle " + std::to_string(cycle.cycle_index) +
                    ": no usable discharge_cc step");
  double charge_as = 0.0;
  for (size_t i = 1; i < step->points.size(); ++i) {
    const auto& a = step->points[i - 1];
    const auto& b = step->points[i];
    charge_as += 0.5 * (std::abs(a.current_a) + std::abs(b.current_a)) * (b.time_s - a.time_s);
  }
  cycle.capacity_ah = charge_as / 3600.0;
  cycle.has_capacity = true;
  return cycle.capacity_ah;
}

RelaxationCurve extract_relaxation(const CycleRecord& cycle, RelaxKind kind) {
  StepKind want = kind == RelaxKind::charge ? StepKind::rest_after_charge
                                            : StepKind::rest_after_discharge;
  const Step* step = cycle.find_step(want);
  if (!step || step->points.size() < 2)
    throw DataError("cell " + cycle.cell_id + " cycle " + std::to_string(cycle.cycle_index) +
                    ": missing " + step_kind_name(want) + " step");
  RelaxationCurve curve;
  curve.cell_id = cycle.cell_id;
  curve.cycle_index = cycle.cycle_index;
  curve.kind = kind;
  const double t0 = step->points.front().time_s;
  std::vector<double> gaps;
  for (size_t i = 0; i < step->points.size(); ++i) {
    const auto& p = step->points[i];
    if (std::abs(p.current_a) > kRestCurrentToleranceA)
      throw DataError("cell " + cycle.cell_id + " cycle " + std::to_string(cycle.cycle_index) +
                      ": nonzero current " + std::to_string(p.current_a) + " A in rest step");
    curve.samples.emplace_back(p.time_s - t0, p.voltage_v);
    if (i > 0) gaps.push_back(p.time_s - step->points[i - 1].time_s);
  }
  std::sort(gaps.begin(), gaps.end());
  curve.native_interval_s = gaps[gaps.size() / 2];
  return curve;
}

CellHistory build_cell_history(const std::vector<CycleRecord>& cycles) {
  if (cycles.empty()) throw DataError("build_cell_history: no cycles");
  CellHistory hist;
  hist.cell_id = cycles.front().cell_id;
  hist.charge_rate = cycles.front().charge_rate;
  for (const auto& c : cycles) {
    if (c.cell_id != hist.cell_id)
      throw DataError("build_cell_history: mixed cell ids " + hist.cell_id + " / " + c.cell_id);
    if (!c.has_capacity)
      throw DataError("build_cell_history: cycle " + std::to_string(c.cycle_index) +
                      " has no capacity");
    hist.capacities.emplace_back(c.cycle_index, c.capacity_ah);
  }
  std::sort(hist.capacities.begin(), hist.capacities.end());
  for (size_t i = 1; i < hist.capacities.size(); ++i)
    if (hist.capacities[i].first == hist.capacities[i - 1].first)
      throw DataError("build_cell_history: duplicate cycle_index " +
                      std::to_string(hist.capacities[i].first));
  return hist;
}

double infer_charge_rate(const CycleRecord& cycle, double nominal_capacity_ah) {
  const Step* step = cycle.find_step(StepKind::charge_cc);
  if (!step || step->points.empty()) return 0.0;
  std::vector<double> cur;
  cur.reserve(step->points.size());
  for (const auto& p : step->points) cur.push_back(std::abs(p.current_a));
  std::sort(cur.begin(), cur.end());
  double median = cur[cur.size() / 2];
  // snap to 2 decimals so 0.25C / 0.5C / 1C labels are stable
  return std::round(median / nominal_capacity_ah * 100.0) / 100.0;
}

}  // namespace cerberus::data
