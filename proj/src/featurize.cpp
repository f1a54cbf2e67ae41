// SPDX-License-Identifier: Apache-2.0
#include "cerberus/featurize.hpp"

#include <algorithm>
#include <cmath>

namespace cerberus::feat {

data::RelaxationCurve downsample(const data::RelaxationCurve& curve, double target_interval_s) {
  if (curve.native_interval_s <= 0.0)
    throw DataError("downsample: curve has no native interval");
  double ratio = target_interval_s / curve.native_interval_s;
  long stride = std::lround(ratio);
  if (stride < 1 || std::abs(ratio - static_cast<double>(stride)) > 1e-9)
    throw DataError("downsample: target interval " + std::to_string(target_interval_s) +
                    " s is not an integer multiple of native " +
                    std::to_string(curve.native_interval_s) + " s");
  data::RelaxationCurve out = curve;
  out.samples.clear();
  for (size_t i = 0; i < curve.samples.size(); i += static_cast<size_t>(stride))
    out.samples.push_back(curve.samples[i]);
  out.native_interval_s = target_interval_s;
  return out;
}

Normalizer fit_normalizer(const std::vector<data::RelaxationCurve>& training_curves,
                          double nominal_capacity_ah) {
  double sum[2] = {0, 0}, sumsq[2] = {0, 0};
  long n[2] = {0, 0};
  for (const auto& c : training_curves) {
    int k = c.kind == data::RelaxKind::charge ? 0 : 1;
    for (const auto& [t, v] : c.samples) {
      sum[k] += v;
      sumsq[k] += v * v;
      ++n[k];
    }
  }
  if (n[0] == 0 || n[1] == 0)
    throw DataError("fit_normalizer: need at least one charge and one discharge curve");
  Normalizer norm;
  norm.capacity_scale = nominal_capacity_ah;
  for (int k = 0; k < 2; ++k) {
    double mean = sum[k] / n[k];
    double var = sumsq[k] / n[k] - mean * mean;  // population variance
    if (var <= 0.0)
      throw DataError("fit_normalizer: degenerate (zero-variance) voltage pool");
    if (k == 0) {
      norm.mean_charge = mean;
      norm.std_charge = std::sqrt(var);
    } else {
      norm.mean_discharge = mean;
      norm.std_discharge = std::sqrt(var);
    }
  }
  return norm;
}

std::vector<WindowSample> slide_windows(const data::RelaxationCurve& curve, int size,
                                        double label_ah, const Normalizer& norm) {
  std::vector<WindowSample> out;
  long n = static_cast<long>(curve.samples.size());
  for (long start = 0; start + size <= n; ++start) {
    WindowSample w;
    w.kind = curve.kind;
    w.cell_id = curve.cell_id;
    w.cycle_index = curve.cycle_index;
    w.label = label_ah / norm.capacity_scale;
    w.values.reserve(static_cast<size_t>(size));
    for (long i = start; i < start + size; ++i)
      w.values.push_back(norm.zscore(curve.samples[static_cast<size_t>(i)].second, curve.kind));
    out.push_back(std::move(w));
  }
  return out;
}

std::vector<double> linear_extrapolate_history(const std::vector<double>& capacities,
                                               int min_len) {
  if (capacities.empty())
    throw DataError("linear_extrapolate_history: empty input");
  long n = static_cast<long>(capacities.size());
  if (n >= min_len) return capacities;

  // least-squares line over (i, capacities[i]); slope 0 for a single point
  double slope = 0.0, intercept = capacities[0];
  if (n > 1) {
    double sx = 0, sy = 0, sxx = 0, sxy = 0;
    for (long i = 0; i < n; ++i) {
      sx += i;
      sy += capacities[static_cast<size_t>(i)];
      sxx += static_cast<double>(i) * i;
      sxy += i * capacities[static_cast<size_t>(i)];
    }
    double denom = n * sxx - sx * sx;
    slope = (n * sxy - sx * sy) / denom;
    intercept = (sy - slope * sx) / n;
  }

  long pad = min_len - n;
  std::vector<double> out;
  out.reserve(static_cast<size_t>(min_len));
  for (long i = -pad; i < n; ++i) {
    double v = i < 0 ? intercept + slope * static_cast<double>(i)
                     : capacities[static_cast<size_t>(i)];
    out.push_back(std::max(v, 1e-9));
  }
  return out;
}

std::vector<HistoryWindow> expand_history(const data::CellHistory& history,
                                          const Normalizer& norm) {
  long n = static_cast<long>(history.capacities.size());
  if (n < 2)
    throw DataError("expand_history: need at least 2 cycles, got " + std::to_string(n));
  std::vector<HistoryWindow> out;
  for (long e = 0; e + 1 < n; ++e) {
    std::vector<double> vals;
    vals.reserve(static_cast<size_t>(e + 1));
    for (long i = 0; i <= e; ++i)
      vals.push_back(history.capacities[static_cast<size_t>(i)].second / norm.capacity_scale);
    HistoryWindow w;
    w.cell_id = history.cell_id;
    w.end_cycle = history.capacities[static_cast<size_t>(e)].first;
    w.real_len = static_cast<int>(e + 1);
    w.values = linear_extrapolate_history(vals);
    w.target = history.capacities[static_cast<size_t>(e + 1)].second / norm.capacity_scale;
    out.push_back(std::move(w));
  }
  return out;
}

}  // namespace cerberus::feat
