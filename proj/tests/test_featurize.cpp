// SPDX-License-Identifier: Apache-2.0
#include <doctest.h>

#include <cmath>

#include "cerberus/featurize.hpp"

using namespace cerberus;
using namespace cerberus::feat;

namespace {

data::RelaxationCurve make_curve(data::RelaxKind kind, int n, double interval,
                                 double v0 = 4.0, double dv = -0.001) {
  data::RelaxationCurve c;
  c.cell_id = "c1";
  c.cycle_index = 1;
  c.kind = kind;
  c.native_interval_s = interval;
  for (int k = 0; k < n; ++k) c.samples.emplace_back(k * interval, v0 + dv * k);
  return c;
}

}  // namespace

TEST_CASE("downsample 31 samples at 60 s to 16 at 120 s") {
  auto c = make_curve(data::RelaxKind::charge, 31, 60.0);
  auto d = downsample(c, 120.0);
  CHECK(d.samples.size() == 16);
  CHECK(d.native_interval_s == 120.0);
  CHECK(d.samples[0].first == 0.0);
  CHECK(d.samples[1].second == c.samples[2].second);
}

TEST_CASE("downsample: identity and non-integer ratio") {
  auto c = make_curve(data::RelaxKind::charge, 10, 60.0);
  auto same = downsample(c, 60.0);
  CHECK(same.samples.size() == c.samples.size());
  CHECK_THROWS_AS(downsample(c, 90.0), DataError);
}

TEST_CASE("fit_normalizer: two-point population stats") {
  auto chg = make_curve(data::RelaxKind::charge, 2, 60.0, 4.0, 0.2);   // {4.0, 4.2}
  auto dis = make_curve(data::RelaxKind::discharge, 2, 60.0, 3.0, 0.3);
  auto norm = fit_normalizer({chg, dis}, 3.5);
  CHECK(norm.mean_charge == doctest::Approx(4.1).epsilon(1e-12));
  CHECK(norm.std_charge == doctest::Approx(0.1).epsilon(1e-12));
  CHECK(norm.mean_discharge == doctest::Approx(3.15).epsilon(1e-12));
  CHECK(norm.capacity_scale == 3.5);
}

TEST_CASE("fit_normalizer: degenerate pools and missing kinds") {
  auto flat = make_curve(data::RelaxKind::charge, 5, 60.0, 4.0, 0.0);
  auto dis = make_curve(data::RelaxKind::discharge, 2, 60.0, 3.0, 0.3);
  CHECK_THROWS_AS(fit_normalizer({flat, dis}, 3.5), DataError);
  CHECK_THROWS_AS(fit_normalizer({dis}, 3.5), DataError);
}

TEST_CASE("fit_normalizer: stats are independent per kind") {
  auto chg = make_curve(data::RelaxKind::charge, 3, 60.0, 4.0, 0.1);
  auto dis = make_curve(data::RelaxKind::discharge, 4, 60.0, 3.0, 0.05);
  auto norm = fit_normalizer({chg, dis}, 3.5);
  CHECK(norm.mean_charge != norm.mean_discharge);
}

TEST_CASE("z-scored training pool has zero mean and unit std") {
  std::vector<data::RelaxationCurve> curves = {
      make_curve(data::RelaxKind::charge, 16, 120.0, 4.1, -0.003),
      make_curve(data::RelaxKind::charge, 16, 120.0, 4.05, -0.002),
      make_curve(data::RelaxKind::discharge, 16, 120.0, 3.1, 0.004),
      make_curve(data::RelaxKind::discharge, 16, 120.0, 3.2, 0.001),
  };
  auto norm = fit_normalizer(curves, 3.5);
  for (int k = 0; k < 2; ++k) {
    auto kind = k == 0 ? data::RelaxKind::charge : data::RelaxKind::discharge;
    double sum = 0.0, sumsq = 0.0;
    long n = 0;
    for (const auto& c : curves) {
      if (c.kind != kind) continue;
      for (auto [t, v] : c.samples) {
        double z = norm.zscore(v, kind);
        sum += z;
        sumsq += z * z;
        ++n;
      }
    }
    double mean = sum / n;
    double stddev = std::sqrt(sumsq / n - mean * mean);
    CHECK(std::abs(mean) < 1e-9);
    CHECK(std::abs(stddev - 1.0) < 1e-9);
  }
}

TEST_CASE("slide_windows: count law and content") {
  Normalizer norm;
  norm.mean_charge = 4.0;
  norm.std_charge = 0.1;
  auto c15 = make_curve(data::RelaxKind::charge, 15, 120.0);
  auto w = slide_windows(c15, 10, 3.15, norm);
  CHECK(w.size() == 6);
  CHECK(slide_windows(make_curve(data::RelaxKind::charge, 10, 120.0), 10, 3.15, norm).size() == 1);
  CHECK(slide_windows(make_curve(data::RelaxKind::charge, 9, 120.0), 10, 3.15, norm).empty());

  for (const auto& win : w) {
    CHECK(win.values.size() == 10);
    CHECK(win.label == doctest::Approx(3.15 / 3.5).epsilon(1e-12));
  }
  // window k is the contiguous slice starting at k; inverse transform round-trips
  for (size_t k = 0; k < w.size(); ++k)
    for (size_t i = 0; i < 10; ++i) {
      double back = norm.unzscore(w[k].values[i], data::RelaxKind::charge);
      CHECK(std::abs(back - c15.samples[k + i].second) < 1e-12);
    }
}

TEST_CASE("slide_windows uses kind-matched stats") {
  Normalizer norm;
  norm.mean_charge = 4.0;
  norm.std_charge = 0.1;
  norm.mean_discharge = 3.0;
  norm.std_discharge = 0.2;
  auto dis = make_curve(data::RelaxKind::discharge, 15, 120.0, 3.1, 0.0);
  auto w = slide_windows(dis, 15, 3.0, norm);
  REQUIRE(w.size() == 1);
  CHECK(w[0].values[0] == doctest::Approx(0.5).epsilon(1e-12));
}

TEST_CASE("linear_extrapolate_history: identity when long enough") {
  std::vector<double> caps(12, 3.4);
  CHECK(linear_extrapolate_history(caps) == caps);
}

TEST_CASE("linear_extrapolate_history: constant series pads with the constant") {
  std::vector<double> caps(4, 3.5);
  auto out = linear_extrapolate_history(caps);
  REQUIRE(out.size() == 10);
  for (double v : out) CHECK(v == doctest::Approx(3.5).epsilon(1e-12));
}

TEST_CASE("linear_extrapolate_history: continues an exact line backward") {
  // 3.50, 3.49, 3.48, 3.47, 3.46
  std::vector<double> caps;
  for (int i = 0; i < 5; ++i) caps.push_back(3.50 - 0.01 * i);
  auto out = linear_extrapolate_history(caps);
  REQUIRE(out.size() == 10);
  for (int i = 0; i < 10; ++i)
    CHECK(out[static_cast<size_t>(i)] == doctest::Approx(3.55 - 0.01 * i).epsilon(1e-12));
}

TEST_CASE("linear_extrapolate_history: empty input and idempotence") {
  CHECK_THROWS_AS(linear_extrapolate_history({}), DataError);
  std::vector<double> caps = {3.5, 3.49, 3.48};
  auto once = linear_extrapolate_history(caps);
  CHECK(linear_extrapolate_history(once) == once);
}

TEST_CASE("expand_history: window enumeration matches brute force") {
  data::CellHistory hist;
  hist.cell_id = "c1";
  for (long i = 1; i <= 12; ++i)
    hist.capacities.emplace_back(i, 3.5 - 0.005 * static_cast<double>(i));
  Normalizer norm;
  auto windows = expand_history(hist, norm);

  // brute force: one window per end position that still has a target
  size_t expected_count = 0;
  std::vector<size_t> expected_len;
  for (size_t e = 0; e + 1 < hist.capacities.size(); ++e) {
    ++expected_count;
    expected_len.push_back(std::max<size_t>(e + 1, 10));
  }
  REQUIRE(windows.size() == expected_count);
  CHECK(windows.size() == 11);
  for (size_t k = 0; k < windows.size(); ++k) {
    CHECK(windows[k].values.size() == expected_len[k]);
    CHECK(windows[k].target ==
          doctest::Approx(hist.capacities[k + 1].second / norm.capacity_scale));
  }
  CHECK(windows.back().values.size() == 11);

  // fixed left endpoint: each window extends the previous on the real part
  for (size_t k = 1; k < windows.size(); ++k) {
    const auto& prev = windows[k - 1];
    const auto& cur = windows[k];
    size_t pr = prev.values.size() - static_cast<size_t>(prev.real_len);
    size_t cr = cur.values.size() - static_cast<size_t>(cur.real_len);
    for (int i = 0; i < prev.real_len; ++i)
      CHECK(prev.values[pr + static_cast<size_t>(i)] ==
            cur.values[cr + static_cast<size_t>(i)]);
  }
}

TEST_CASE("expand_history: two cycles and one cycle") {
  data::CellHistory hist;
  hist.cell_id = "c1";
  hist.capacities = {{1, 3.5}, {2, 3.49}};
  Normalizer norm;
  auto w = expand_history(hist, norm);
  REQUIRE(w.size() == 1);
  CHECK(w[0].values.size() == 10);
  CHECK(w[0].real_len == 1);
  CHECK(w[0].target == doctest::Approx(3.49 / 3.5));

  hist.capacities = {{1, 3.5}};
  CHECK_THROWS_AS(expand_history(hist, norm), DataError);
}
