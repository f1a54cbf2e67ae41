// SPDX-License-Identifier: Apache-2.0
#include <doctest.h>

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>

#include "cerberus/model.hpp"

using namespace cerberus;
using namespace cerberus::model;

namespace {

feat::WindowSample make_window(data::RelaxKind kind, double fill = 0.1, double label = 0.9) {
  feat::WindowSample w;
  w.kind = kind;
  w.cell_id = "c1";
  w.cycle_index = 5;
  w.values.assign(
      kind == data::RelaxKind::charge ? feat::kChargeWindowSize : feat::kDischargeWindowSize,
      fill);
  w.label = label;
  return w;
}

feat::HistoryWindow make_history(int real_len, double fill = 0.95, double target = 0.9) {
  feat::HistoryWindow h;
  h.cell_id = "c1";
  h.end_cycle = real_len;
  h.real_len = real_len;
  h.values.assign(static_cast<size_t>(std::max(real_len, feat::kMinHistoryLen)), fill);
  h.target = target;
  return h;
}

CerberusParams small_params(std::uint64_t seed = 7) {
  feat::Normalizer norm;
  return CerberusParams::init(ModelConfig{3, 3}, norm, FusionSchedule{}, seed);
}

// zero weights; each head outputs its final bias
CerberusParams biased_params(double ba, double bb, double bc) {
  auto p = small_params();
  p.set_zero();
  p.head_a_mlp.b.back()[0] = ba;
  p.head_b_mlp.b.back()[0] = bb;
  p.head_c_mlp.b.back()[0] = bc;
  return p;
}

CycleBundle full_bundle(double label = 0.9, int hist_len = 10) {
  CycleBundle b;
  b.cell_id = "c1";
  b.cycle_index = hist_len + 1;
  b.charge_windows = {make_window(data::RelaxKind::charge, 0.1, label)};
  b.discharge_windows = {make_window(data::RelaxKind::discharge, -0.2, label)};
  b.history = make_history(hist_len, label, label);
  b.label = label;
  b.has_label = true;
  return b;
}

}  // namespace

TEST_CASE("fusion_weights follows the clamped linear ramp") {
  FusionSchedule s;
  auto w10 = fusion_weights(10, s);
  CHECK(w10.alpha == doctest::Approx(0.4).epsilon(1e-15));
  CHECK(w10.beta == doctest::Approx(0.4).epsilon(1e-15));
  CHECK(w10.gamma == doctest::Approx(0.2).epsilon(1e-15));

  auto w210 = fusion_weights(210, s);
  CHECK(w210.gamma == doctest::Approx(0.7).epsilon(1e-15));
  CHECK(w210.alpha == doctest::Approx(0.15).epsilon(1e-15));

  auto w110 = fusion_weights(110, s);
  CHECK(w110.gamma == doctest::Approx(0.45).epsilon(1e-15));
  CHECK(w110.alpha == doctest::Approx(0.275).epsilon(1e-15));
}

TEST_CASE("fusion_weights invariants over n = 0..1000") {
  FusionSchedule s;
  double prev_gamma = -1.0;
  for (long n = 0; n <= 1000; ++n) {
    auto w = fusion_weights(n, s);
    CHECK(w.alpha >= 0.0);
    CHECK(w.beta >= 0.0);
    CHECK(w.alpha + w.beta + w.gamma == 1.0);
    CHECK(w.gamma >= s.w_min);
    CHECK(w.gamma <= s.w_max);
    CHECK(w.gamma >= prev_gamma);
    prev_gamma = w.gamma;
  }
}

TEST_CASE("heads with zero weights output the final bias") {
  auto p = biased_params(0.42, 0.43, 0.44);
  CHECK(head_a_forward(p, make_window(data::RelaxKind::charge)) == 0.42);
  CHECK(head_b_forward(p, make_window(data::RelaxKind::discharge)) == 0.43);
  CHECK(head_c_forward(p, make_history(10)) == 0.44);
}

TEST_CASE("heads validate window kind and length") {
  auto p = small_params();
  CHECK_THROWS_AS(head_a_forward(p, make_window(data::RelaxKind::discharge)), ShapeError);
  auto short_w = make_window(data::RelaxKind::charge);
  short_w.values.pop_back();
  CHECK_THROWS_AS(head_a_forward(p, short_w), ShapeError);
  auto short_h = make_history(10);
  short_h.values.resize(9);
  CHECK_THROWS_AS(head_c_forward(p, short_h), ShapeError);
}

TEST_CASE("heads are deterministic and stateless") {
  auto p = small_params(11);
  auto w = make_window(data::RelaxKind::charge, 0.37);
  CHECK(head_a_forward(p, w) == head_a_forward(p, w));

  auto w1 = make_window(data::RelaxKind::discharge, 0.1);
  auto w2 = make_window(data::RelaxKind::discharge, -0.3);
  double y1 = head_b_forward(p, w1);
  double y2 = head_b_forward(p, w2);
  // permuting evaluation order permutes outputs only
  CHECK(head_b_forward(p, w2) == y2);
  CHECK(head_b_forward(p, w1) == y1);
}

TEST_CASE("head c accepts variable history lengths") {
  auto p = small_params();
  CHECK_NOTHROW(head_c_forward(p, make_history(10)));
  CHECK_NOTHROW(head_c_forward(p, make_history(50)));
}

TEST_CASE("total_loss: equal per-head MSEs collapse to that MSE") {
  // all heads output 1.0, all labels 0.9 -> every per-head MSE is 0.01
  auto p = biased_params(1.0, 1.0, 1.0);
  std::vector<CycleBundle> batch = {full_bundle(0.9, 10)};
  double m = 0.01;
  CHECK(std::abs(total_loss(p, batch) - m) < 1e-12);
}

TEST_CASE("total_loss: perfect predictions give zero") {
  auto p = biased_params(0.9, 0.9, 0.9);
  std::vector<CycleBundle> batch = {full_bundle(0.9)};
  CHECK(total_loss(p, batch) == 0.0);
}

TEST_CASE("total_loss averages over the batch") {
  auto p = biased_params(1.0, 1.0, 1.0);
  std::vector<CycleBundle> b1 = {full_bundle(0.9)};
  std::vector<CycleBundle> b2 = {full_bundle(0.8)};
  std::vector<CycleBundle> both = {b1[0], b2[0]};
  double l1 = total_loss(p, b1);
  double l2 = total_loss(p, b2);
  CHECK(total_loss(p, both) == doctest::Approx((l1 + l2) / 2.0).epsilon(1e-15));
}

TEST_CASE("total_loss renormalizes over missing modalities") {
  auto p = biased_params(1.0, 1.0, 1.0);
  auto b = full_bundle(0.9, 10);
  b.discharge_windows.clear();  // drop head b: weights 0.4/0.2 -> renormalized
  std::vector<CycleBundle> batch = {b};
  // both remaining heads have MSE 0.01, so the convex combination is 0.01
  CHECK(std::abs(total_loss(p, batch) - 0.01) < 1e-12);
  CHECK(total_loss(p, batch) >= 0.0);
}

TEST_CASE("total_loss gradient passes grad_check with all modalities") {
  for (std::uint64_t seed = 1; seed <= 3; ++seed) {
    auto p = small_params(seed);
    std::vector<CycleBundle> batch = {full_bundle(0.9, 10), full_bundle(0.85, 40)};
    // offset window contents so ReLU kinks are unlikely at the check point
    batch[1].charge_windows[0].values.assign(feat::kChargeWindowSize, 0.31);

    CerberusParams grads;
    grads.resize_like(p);
    grads.set_zero();
    total_loss(p, batch, &grads);
    nn::Vec gflat;
    nn::pack(grads.tensors(), gflat);

    nn::Vec flat = p.flat();
    auto loss = [&](const nn::Vec& fp) {
      CerberusParams q = p;
      q.set_flat(fp);
      return total_loss(q, batch);
    };
    CHECK(nn::grad_check(loss, flat, gflat, 200, seed) < 1e-4);
  }
}

TEST_CASE("fuse_estimate: convex combination fixed point") {
  auto p = biased_params(0.9, 0.9, 0.9);
  auto est = fuse_estimate(p, full_bundle(0.9));
  CHECK(est.fused_ah == doctest::Approx(0.9 * 3.5).epsilon(1e-12));
}

TEST_CASE("fuse_estimate: only history present renormalizes to gamma=1") {
  auto p = biased_params(0.5, 0.6, 0.8);
  CycleBundle b;
  b.cell_id = "c1";
  b.cycle_index = 11;
  b.history = make_history(10);
  b.label = 0.8;
  b.has_label = true;
  auto est = fuse_estimate(p, b);
  CHECK(est.weights.gamma == 1.0);
  CHECK(est.fused_ah == doctest::Approx(0.8 * 3.5).epsilon(1e-12));
  CHECK(!est.head_a_ah.has_value());
}

TEST_CASE("fuse_estimate: weighted arithmetic example") {
  // heads (1.0, 0.9, 0.8) at weights (0.4, 0.4, 0.2) -> 0.92 -> 3.22 Ah
  auto p = biased_params(1.0, 0.9, 0.8);
  auto est = fuse_estimate(p, full_bundle(0.9, 10));
  CHECK(est.fused_ah == doctest::Approx(3.22).epsilon(1e-12));
}

TEST_CASE("fuse_estimate: no modality is an input error") {
  auto p = small_params();
  CycleBundle empty;
  empty.has_label = true;
  CHECK_THROWS_AS(fuse_estimate(p, empty), DataError);
}

TEST_CASE("fuse_estimate stays in the convex hull of head outputs") {
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    auto p = small_params(seed);
    auto b = full_bundle(0.9, 20 + static_cast<int>(seed) * 13);
    auto est = fuse_estimate(p, b);
    double lo = std::min({*est.head_a_ah, *est.head_b_ah, *est.head_c_ah});
    double hi = std::max({*est.head_a_ah, *est.head_b_ah, *est.head_c_ah});
    CHECK(est.fused_ah >= lo - 1e-12);
    CHECK(est.fused_ah <= hi + 1e-12);
  }
}

TEST_CASE("fuse_estimate is permutation-invariant over windows") {
  auto p = small_params(21);
  auto b = full_bundle();
  b.charge_windows.push_back(make_window(data::RelaxKind::charge, 0.4));
  b.charge_windows.push_back(make_window(data::RelaxKind::charge, -0.6));
  auto before = fuse_estimate(p, b);
  std::swap(b.charge_windows[0], b.charge_windows[2]);
  auto after = fuse_estimate(p, b);
  // the window mean is summed in a different order after the swap
  CHECK(before.fused_ah == doctest::Approx(after.fused_ah).epsilon(1e-14));
}

TEST_CASE("predict_trajectory: base case and chaining") {
  auto p = small_params(31);
  auto h = make_history(15, 0.93);

  auto one = predict_trajectory(p, h, 1);
  REQUIRE(one.size() == 1);
  CHECK(one[0] == doctest::Approx(head_c_forward(p, h) * 3.5).epsilon(1e-15));

  auto three = predict_trajectory(p, h, 3);
  auto manual = h;
  std::vector<double> chained;
  for (int k = 0; k < 3; ++k) {
    auto step = predict_trajectory(p, manual, 1);
    chained.push_back(step[0]);
    manual.values.push_back(step[0] / 3.5);
    manual.real_len += 1;
    manual.end_cycle += 1;
  }
  REQUIRE(three.size() == 3);
  for (int k = 0; k < 3; ++k) CHECK(three[static_cast<size_t>(k)] == chained[static_cast<size_t>(k)]);

  CHECK_THROWS_AS(predict_trajectory(p, h, 0), UsageError);
}

TEST_CASE("checkpoint round trip is bit-exact") {
  auto dir = std::filesystem::temp_directory_path() / "cerberus_ckpt_test";
  std::filesystem::create_directories(dir);
  auto path = (dir / "model.ckpt").string();

  auto p = small_params(99);
  p.normalizer.mean_charge = 4.1;
  p.normalizer.std_charge = 0.05;
  p.normalizer.mean_discharge = 3.2;
  p.normalizer.std_discharge = 0.07;
  save_checkpoint(p, path);
  auto q = load_checkpoint(path);
  CHECK(p.flat() == q.flat());
  CHECK(q.normalizer.mean_charge == p.normalizer.mean_charge);
  CHECK(q.config.gru_hidden == p.config.gru_hidden);
  CHECK(q.schedule.w_max == p.schedule.w_max);

  // saving the loaded model reproduces the same bytes
  auto path2 = (dir / "model2.ckpt").string();
  save_checkpoint(q, path2);
  std::ifstream f1(path), f2(path2);
  std::string s1((std::istreambuf_iterator<char>(f1)), std::istreambuf_iterator<char>());
  std::string s2((std::istreambuf_iterator<char>(f2)), std::istreambuf_iterator<char>());
  CHECK(s1 == s2);
}

TEST_CASE("checkpoint loading validates shapes and content") {
  auto dir = std::filesystem::temp_directory_path() / "cerberus_ckpt_test";
  std::filesystem::create_directories(dir);
  auto path = (dir / "corrupt.ckpt").string();

  {
    std::ofstream out(path);
    out << "{\"format\":\"cerberus-checkpoint\"}";
  }
  CHECK_THROWS_AS(load_checkpoint(path), DataError);

  {
    std::ofstream out(path);
    out << "not json at all";
  }
  CHECK_THROWS_AS(load_checkpoint(path), DataError);

  // truncate a tensor
  auto p = small_params(3);
  save_checkpoint(p, path);
  std::ifstream in(path);
  std::string text((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  in.close();
  auto pos = text.find("\"rows\":3");
  REQUIRE(pos != std::string::npos);
  text.replace(pos, 8, "\"rows\":4");
  {
    std::ofstream out(path);
    out << text;
  }
  CHECK_THROWS_AS(load_checkpoint(path), DataError);

  CHECK_THROWS_AS(load_checkpoint((dir / "missing.ckpt").string()), DataError);
}
