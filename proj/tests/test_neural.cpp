// SPDX-License-Identifier: Apache-2.0
#include <doctest.h>

#include <cmath>

#include "cerberus/neural.hpp"

using namespace cerberus;
using namespace cerberus::nn;

namespace {

std::vector<Vec> scalar_seq(std::initializer_list<double> xs) {
  std::vector<Vec> seq;
  for (double x : xs) {
    Vec v(1);
    v[0] = x;
    seq.push_back(v);
  }
  return seq;
}

// closure + analytic gradient over a (bi-GRU -> MLP -> MSE) head
double relax_head_check(std::uint64_t seed, long hidden) {
  Rng rng(seed);
  BiGruParams gru;
  gru.init(1, hidden, rng);
  MlpParams mlp;
  mlp.init({2 * hidden, 7, 1}, rng);

  std::vector<TensorRef> refs;
  gru.tensors("gru", refs);
  mlp.tensors("mlp", refs);
  Vec flat;
  pack(refs, flat);

  std::normal_distribution<double> noise(0.0, 1.0);
  auto seq = scalar_seq({0.0, 0.0, 0.0, 0.0, 0.0});
  for (auto& x : seq) x[0] = noise(rng);
  Vec target(1);
  target[0] = 0.9;

  auto loss = [&](const Vec& p) {
    BiGruParams g = gru;
    MlpParams m = mlp;
    std::vector<TensorRef> r;
    g.tensors("gru", r);
    m.tensors("mlp", r);
    unpack(p, r);
    return mse(mlp_forward(m, bigru_forward(g, seq)), target);
  };

  BiGruCache rc;
  MlpCache mc;
  Vec pred = mlp_forward(mlp, bigru_forward(gru, seq, &rc), &mc);
  BiGruParams ggru;
  ggru.resize_like(gru);
  MlpParams gmlp;
  gmlp.resize_like(mlp);
  Vec d_feature;
  mlp_backward(mlp, mc, mse_grad(pred, target), gmlp, &d_feature);
  bigru_backward(gru, rc, d_feature, ggru);

  std::vector<TensorRef> grefs;
  ggru.tensors("gru", grefs);
  gmlp.tensors("mlp", grefs);
  Vec gflat;
  pack(grefs, gflat);
  return grad_check(loss, flat, gflat, 200, seed);
}

double lstm_head_check(std::uint64_t seed, long hidden) {
  Rng rng(seed);
  LstmStackParams lstm;
  lstm.init(1, hidden, rng);
  MlpParams mlp;
  mlp.init({hidden, 5, 1}, rng);

  std::vector<TensorRef> refs;
  lstm.tensors("lstm", refs);
  mlp.tensors("mlp", refs);
  Vec flat;
  pack(refs, flat);

  std::normal_distribution<double> noise(0.0, 1.0);
  auto seq = scalar_seq({0, 0, 0, 0, 0, 0, 0});
  for (auto& x : seq) x[0] = noise(rng);
  Vec target(1);
  target[0] = 1.0;

  auto loss = [&](const Vec& p) {
    LstmStackParams l = lstm;
    MlpParams m = mlp;
    std::vector<TensorRef> r;
    l.tensors("lstm", r);
    m.tensors("mlp", r);
    unpack(p, r);
    return mse(mlp_forward(m, lstm_forward(l, seq)), target);
  };

  LstmStackCache rc;
  MlpCache mc;
  Vec pred = mlp_forward(mlp, lstm_forward(lstm, seq, &rc), &mc);
  LstmStackParams glstm;
  glstm.resize_like(lstm);
  MlpParams gmlp;
  gmlp.resize_like(mlp);
  Vec d_feature;
  mlp_backward(mlp, mc, mse_grad(pred, target), gmlp, &d_feature);
  lstm_backward(lstm, rc, d_feature, glstm);

  std::vector<TensorRef> grefs;
  glstm.tensors("lstm", grefs);
  gmlp.tensors("mlp", grefs);
  Vec gflat;
  pack(grefs, gflat);
  return grad_check(loss, flat, gflat, 200, seed);
}

}  // namespace

TEST_CASE("zero-parameter GRU halves the hidden state") {
  GruLayerParams p;
  p.resize(1, 1);
  Vec x(1), h(1);
  x[0] = 0.7;
  h[0] = 1.0;
  Vec h1 = gru_cell_forward(p, x, h);
  CHECK(h1[0] == doctest::Approx(0.5).epsilon(1e-15));
  Vec h2 = gru_cell_forward(p, x, h1);
  CHECK(h2[0] == doctest::Approx(0.25).epsilon(1e-15));

  Vec zero = Vec::Zero(1);
  CHECK(gru_cell_forward(p, x, zero)[0] == 0.0);

  // h_T = h_0 * 2^-T exactly for T <= 20
  Vec hh(1);
  hh[0] = 1.0;
  for (int t = 1; t <= 20; ++t) {
    hh = gru_cell_forward(p, x, hh);
    CHECK(std::abs(hh[0] - std::pow(2.0, -t)) < 1e-12);
  }
}

TEST_CASE("zero-parameter LSTM cell halves the cell state") {
  LstmLayerParams p;
  p.resize(1, 1);
  Vec x(1), h = Vec::Zero(1), c(1);
  x[0] = 0.3;
  c[0] = 1.0;
  Vec h1, c1;
  lstm_cell_forward(p, x, h, c, h1, c1);
  CHECK(c1[0] == doctest::Approx(0.5).epsilon(1e-15));
  CHECK(h1[0] == doctest::Approx(0.5 * std::tanh(0.5)).epsilon(1e-12));

  Vec cc(1), hh = Vec::Zero(1);
  cc[0] = 1.0;
  for (int t = 1; t <= 20; ++t) {
    Vec hn, cn;
    lstm_cell_forward(p, x, hh, cc, hn, cn);
    hh = Vec::Zero(1);  // keep recurrent input at zero so gates stay at 0.5
    cc = cn;
    CHECK(std::abs(cc[0] - std::pow(2.0, -t)) < 1e-12);
  }
}

TEST_CASE("lstm_forward from zero states with zero params stays zero") {
  LstmStackParams p;
  Rng rng(1);
  p.init(1, 3, rng);
  p.set_zero();
  CHECK(lstm_forward(p, scalar_seq({1.0})).isZero());
  CHECK(lstm_forward(p, scalar_seq({1.0, -2.0})).isZero());
}

TEST_CASE("bigru output length and zero-parameter behavior") {
  Rng rng(2);
  BiGruParams p;
  p.init(1, 4, rng);
  auto seq = scalar_seq({0.1, -0.2, 0.3});
  CHECK(bigru_forward(p, seq).size() == 8);
  CHECK_THROWS_AS(bigru_forward(p, {}), ShapeError);

  p.set_zero();
  CHECK(bigru_forward(p, seq).isZero());

  // single element: forward and backward directions see the same input
  auto one = scalar_seq({0.5});
  Rng rng2(3);
  BiGruParams q;
  q.init(1, 4, rng2);
  Vec f = bigru_forward(q, one);
  CHECK(f.size() == 8);
}

TEST_CASE("bigru is a pure function") {
  Rng rng(4);
  BiGruParams p;
  p.init(1, 5, rng);
  auto seq = scalar_seq({0.3, 0.1, -0.4, 0.2});
  Vec a = bigru_forward(p, seq);
  Vec b = bigru_forward(p, seq);
  CHECK(a == b);
}

TEST_CASE("bigru reversal symmetry swaps the output halves") {
  Rng rng(5);
  const long h = 4;
  BiGruParams p;
  p.init(1, h, rng);
  BiGruParams swapped = p;
  std::swap(swapped.l1f, swapped.l1b);
  std::swap(swapped.l2f, swapped.l2b);
  // layer-2 inputs are (fwd;bwd) concatenations, so the direction swap
  // also flips the column halves of the layer-2 input weights
  for (auto* layer : {&swapped.l2f, &swapped.l2b})
    for (auto* w : {&layer->Wz, &layer->Wr, &layer->Wh}) {
      Mat orig = *w;
      w->leftCols(h) = orig.rightCols(h);
      w->rightCols(h) = orig.leftCols(h);
    }

  auto seq = scalar_seq({0.3, -0.1, 0.7, 0.2, -0.5});
  auto rev = std::vector<Vec>(seq.rbegin(), seq.rend());
  Vec a = bigru_forward(p, seq);
  Vec b = bigru_forward(swapped, rev);
  long half = a.size() / 2;
  // column swaps reorder the matrix-vector summations, so compare to
  // rounding tolerance rather than bit-exactly
  CHECK((a.head(half) - b.tail(half)).cwiseAbs().maxCoeff() < 1e-12);
  CHECK((a.tail(half) - b.head(half)).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("mlp forward basics") {
  MlpParams p;
  Rng rng(6);
  p.init({3, 4, 1}, rng);
  p.set_zero();
  p.b.back()[0] = 0.42;
  Vec x(3);
  x << 1.0, -2.0, 3.0;
  CHECK(mlp_forward(p, x)[0] == 0.42);

  MlpParams id;
  id.init({3, 3}, rng);
  id.set_zero();
  id.W[0] = Mat::Identity(3, 3);
  CHECK(mlp_forward(id, x) == x);

  // a hidden layer's negative pre-activation is zeroed by ReLU
  MlpParams relu;
  relu.init({1, 1, 1}, rng);
  relu.set_zero();
  relu.W[0](0, 0) = 1.0;
  relu.W[1](0, 0) = 1.0;
  Vec neg(1);
  neg[0] = -5.0;
  CHECK(mlp_forward(relu, neg)[0] == 0.0);

  Vec wrong(2);
  CHECK_THROWS_AS(mlp_forward(p, wrong), ShapeError);
}

TEST_CASE("mse basics") {
  Vec a(2), b(2);
  a << 1.0, 3.0;
  b << 1.0, 1.0;
  CHECK(mse(a, a) == 0.0);
  CHECK(mse(a, b) == doctest::Approx(2.0).epsilon(1e-15));
  Vec c(1), d(1);
  c[0] = 0.5;
  d[0] = 0.0;
  CHECK(mse(c, d) == doctest::Approx(0.25).epsilon(1e-15));
  Vec e(3);
  CHECK_THROWS_AS(mse(a, e), ShapeError);
  CHECK(mse_grad(a, b)[1] == doctest::Approx(2.0).epsilon(1e-15));
}

TEST_CASE("adam: zero gradient is identity, first step magnitude is lr") {
  Vec params(3);
  params << 1.0, -2.0, 0.5;
  Vec orig = params;
  AdamState s(3, 1e-3);
  adam_step(s, params, Vec::Zero(3));
  CHECK(params == orig);
  CHECK(s.t == 1);
  for (int k = 0; k < 9; ++k) adam_step(s, params, Vec::Zero(3));
  CHECK(params == orig);

  AdamState s2(1, 1e-3);
  Vec p2(1);
  p2[0] = 1.0;
  Vec g(1);
  g[0] = 123.4;
  adam_step(s2, p2, g);
  CHECK(std::abs((1.0 - p2[0]) - 1e-3) < 1e-6);  // ~lr * sign(g)

  // determinism: identical state and inputs give identical results
  AdamState sa(2, 1e-3), sb(2, 1e-3);
  Vec pa(2), pb(2), gg(2);
  pa << 1.0, 2.0;
  pb = pa;
  gg << 0.3, -0.7;
  adam_step(sa, pa, gg);
  adam_step(sb, pb, gg);
  CHECK(pa == pb);
}

TEST_CASE("grad_check on a quadratic") {
  Vec w(1);
  w[0] = 3.0;
  Vec g(1);
  g[0] = 6.0;
  auto loss = [](const Vec& p) { return p[0] * p[0]; };
  CHECK(grad_check(loss, w, g) < 1e-8);

  // loss independent of a parameter -> zero gradient coordinate
  Vec w2(2), g2(2);
  w2 << 3.0, 9.9;
  g2 << 6.0, 0.0;
  auto loss2 = [](const Vec& p) { return p[0] * p[0]; };
  CHECK(grad_check(loss2, w2, g2) < 1e-8);
}

TEST_CASE("gradient correctness: bi-GRU head over 5 seeds") {
  for (std::uint64_t seed = 1; seed <= 5; ++seed)
    CHECK(relax_head_check(seed, 4) < 1e-4);
}

TEST_CASE("gradient correctness: LSTM head over 5 seeds") {
  for (std::uint64_t seed = 1; seed <= 5; ++seed)
    CHECK(lstm_head_check(seed, 4) < 1e-4);
}

TEST_CASE("gradient correctness: single GRU layer") {
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    Rng rng(seed);
    GruLayerParams p;
    p.init(2, 3, rng);
    std::normal_distribution<double> noise(0.0, 1.0);
    std::vector<Vec> seq;
    for (int t = 0; t < 4; ++t) {
      Vec x(2);
      x << noise(rng), noise(rng);
      seq.push_back(x);
    }
    Vec target = Vec::Constant(3, 0.5);

    std::vector<TensorRef> refs;
    p.tensors("g", refs);
    Vec flat;
    pack(refs, flat);

    auto loss = [&](const Vec& fp) {
      GruLayerParams q = p;
      std::vector<TensorRef> r;
      q.tensors("g", r);
      unpack(fp, r);
      std::vector<Vec> hs;
      gru_layer_forward(q, seq, hs);
      return mse(hs.back(), target);
    };

    GruCache cache;
    std::vector<Vec> hs;
    gru_layer_forward(p, seq, hs, &cache);
    GruLayerParams grads;
    grads.resize(2, 3);
    std::vector<Vec> dh(seq.size(), Vec::Zero(3));
    dh.back() = mse_grad(hs.back(), target);
    gru_layer_backward(p, cache, dh, grads);

    std::vector<TensorRef> grefs;
    grads.tensors("g", grefs);
    Vec gflat;
    pack(grefs, gflat);
    CHECK(grad_check(loss, flat, gflat, 200, seed) < 1e-4);
  }
}
