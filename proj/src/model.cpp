// SPDX-License-Identifier: Apache-2.0
#include "cerberus/model.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <json.hpp>

namespace cerberus::model {

using nn::Vec;

FusionWeights fusion_weights(long n, const FusionSchedule& s) {
  double gamma = s.w_min + (s.w_max - s.w_min) * (static_cast<double>(n) - s.n0) / s.n_ramp;
  gamma = std::clamp(gamma, s.w_min, s.w_max);
  FusionWeights w;
  w.gamma = gamma;
  w.alpha = w.beta = (1.0 - gamma) / 2.0;
  return w;
}

CerberusParams CerberusParams::init(const ModelConfig& cfg, const feat::Normalizer& norm,
                                    const FusionSchedule& sched, std::uint64_t seed) {
  CerberusParams p;
  p.config = cfg;
  p.normalizer = norm;
  p.schedule = sched;
  Rng rng(seed);
  p.head_a_rnn.init(1, cfg.gru_hidden, rng);
  p.head_a_mlp.init({2 * cfg.gru_hidden, 100, 50, 1}, rng);
  p.head_b_rnn.init(1, cfg.gru_hidden, rng);
  p.head_b_mlp.init({2 * cfg.gru_hidden, 100, 50, 1}, rng);
  p.head_c_rnn.init(1, cfg.lstm_hidden, rng);
  p.head_c_mlp.init({cfg.lstm_hidden, 50, 20, 1}, rng);
  return p;
}

std::vector<nn::TensorRef> CerberusParams::tensors() {
  std::vector<nn::TensorRef> out;
  head_a_rnn.tensors("head_a.rnn", out);
  head_a_mlp.tensors("head_a.mlp", out);
  head_b_rnn.tensors("head_b.rnn", out);
  head_b_mlp.tensors("head_b.mlp", out);
  head_c_rnn.tensors("head_c.rnn", out);
  head_c_mlp.tensors("head_c.mlp", out);
  return out;
}

Vec CerberusParams::flat() {
  Vec v;
  nn::pack(tensors(), v);
  return v;
}

void CerberusParams::set_flat(const Vec& flat_v) { nn::unpack(flat_v, tensors()); }

void CerberusParams::resize_like(const CerberusParams& o) {
  config = o.config;
  head_a_rnn.resize_like(o.head_a_rnn);
  head_a_mlp.resize_like(o.head_a_mlp);
  head_b_rnn.resize_like(o.head_b_rnn);
  head_b_mlp.resize_like(o.head_b_mlp);
  head_c_rnn.resize_like(o.head_c_rnn);
  head_c_mlp.resize_like(o.head_c_mlp);
}

void CerberusParams::set_zero() {
  head_a_rnn.set_zero();
  head_a_mlp.set_zero();
  head_b_rnn.set_zero();
  head_b_mlp.set_zero();
  head_c_rnn.set_zero();
  head_c_mlp.set_zero();
}

namespace {

std::vector<Vec> as_seq(const std::vector<double>& values) {
  std::vector<Vec> seq;
  seq.reserve(values.size());
  for (double v : values) {
    Vec x(1);
    x[0] = v;
    seq.push_back(std::move(x));
  }
  return seq;
}

void check_window(const feat::WindowSample& w, data::RelaxKind kind, int size,
                  const char* head) {
  if (w.kind != kind)
    throw ShapeError(std::string(head) + ": wrong window kind");
  if (static_cast<int>(w.values.size()) != size)
    throw ShapeError(std::string(head) + ": window length " +
                     std::to_string(w.values.size()) + " != " + std::to_string(size));
}

double relax_head_forward(const nn::BiGruParams& rnn, const nn::MlpParams& mlp,
                          const std::vector<double>& values, nn::BiGruCache* rc = nullptr,
                          nn::MlpCache* mc = nullptr) {
  Vec feature = nn::bigru_forward(rnn, as_seq(values), rc);
  Vec y = nn::mlp_forward(mlp, feature, mc);
  return y[0];
}

void relax_head_backward(const nn::BiGruParams& rnn, const nn::MlpParams& mlp,
                         const nn::BiGruCache& rc, const nn::MlpCache& mc, double dy,
                         nn::BiGruParams& grnn, nn::MlpParams& gmlp) {
  Vec dyv(1);
  dyv[0] = dy;
  Vec d_feature;
  nn::mlp_backward(mlp, mc, dyv, gmlp, &d_feature);
  nn::bigru_backward(rnn, rc, d_feature, grnn);
}

}  // namespace

double head_a_forward(const CerberusParams& p, const feat::WindowSample& w) {
  check_window(w, data::RelaxKind::charge, feat::kChargeWindowSize, "head_a_forward");
  return relax_head_forward(p.head_a_rnn, p.head_a_mlp, w.values);
}

double head_b_forward(const CerberusParams& p, const feat::WindowSample& w) {
  check_window(w, data::RelaxKind::discharge, feat::kDischargeWindowSize, "head_b_forward");
  return relax_head_forward(p.head_b_rnn, p.head_b_mlp, w.values);
}

double head_c_forward(const CerberusParams& p, const feat::HistoryWindow& h) {
  if (static_cast<int>(h.values.size()) < feat::kMinHistoryLen)
    throw ShapeError("head_c_forward: history length " + std::to_string(h.values.size()) +
                     " < " + std::to_string(feat::kMinHistoryLen));
  Vec feature = nn::lstm_forward(p.head_c_rnn, as_seq(h.values));
  Vec y = nn::mlp_forward(p.head_c_mlp, feature);
  return y[0];
}

double total_loss(const CerberusParams& p, const std::vector<CycleBundle>& batch,
                  CerberusParams* grads) {
  if (batch.empty()) throw DataError("total_loss: empty batch");
  double total = 0.0;
  double inv_batch = 1.0 / static_cast<double>(batch.size());

  for (const auto& bundle : batch) {
    if (!bundle.has_label) throw DataError("total_loss: bundle without label");
    bool has_a = !bundle.charge_windows.empty();
    bool has_b = !bundle.discharge_windows.empty();
    bool has_c = bundle.history.has_value();
    if (!has_a && !has_b && !has_c)
      throw DataError("total_loss: bundle with no modality");

    long n_hist = has_c ? bundle.history->real_len : 0;
    FusionWeights w = fusion_weights(n_hist, p.schedule);
    double wa = has_a ? w.alpha : 0.0;
    double wb = has_b ? w.beta : 0.0;
    double wc = has_c ? w.gamma : 0.0;
    double ws = wa + wb + wc;
    wa /= ws;
    wb /= ws;
    wc /= ws;

    // head a
    if (has_a) {
      double n = static_cast<double>(bundle.charge_windows.size());
      for (const auto& win : bundle.charge_windows) {
        check_window(win, data::RelaxKind::charge, feat::kChargeWindowSize, "total_loss");
        if (grads) {
          nn::BiGruCache rc;
          nn::MlpCache mc;
          double pred = relax_head_forward(p.head_a_rnn, p.head_a_mlp, win.values, &rc, &mc);
          double diff = pred - win.label;
          total += wa * diff * diff / n * inv_batch;
          double dy = wa * 2.0 * diff / n * inv_batch;
          relax_head_backward(p.head_a_rnn, p.head_a_mlp, rc, mc, dy, grads->head_a_rnn,
                              grads->head_a_mlp);
        } else {
          double diff = relax_head_forward(p.head_a_rnn, p.head_a_mlp, win.values) - win.label;
          total += wa * diff * diff / n * inv_batch;
        }
      }
    }

    // head b
    if (has_b) {
      double n = static_cast<double>(bundle.discharge_windows.size());
      for (const auto& win : bundle.discharge_windows) {
        check_window(win, data::RelaxKind::discharge, feat::kDischargeWindowSize, "total_loss");
        if (grads) {
          nn::BiGruCache rc;
          nn::MlpCache mc;
          double pred = relax_head_forward(p.head_b_rnn, p.head_b_mlp, win.values, &rc, &mc);
          double diff = pred - win.label;
          total += wb * diff * diff / n * inv_batch;
          double dy = wb * 2.0 * diff / n * inv_batch;
          relax_head_backward(p.head_b_rnn, p.head_b_mlp, rc, mc, dy, grads->head_b_rnn,
                              grads->head_b_mlp);
        } else {
          double diff = relax_head_forward(p.head_b_rnn, p.head_b_mlp, win.values) - win.label;
          total += wb * diff * diff / n * inv_batch;
        }
      }
    }

    // head c: single target, the bundle's own capacity
    if (has_c) {
      const auto& hist = *bundle.history;
      if (grads) {
        nn::LstmStackCache rc;
        nn::MlpCache mc;
        Vec feature = nn::lstm_forward(p.head_c_rnn, as_seq(hist.values), &rc);
        Vec y = nn::mlp_forward(p.head_c_mlp, feature, &mc);
        double diff = y[0] - bundle.label;
        total += wc * diff * diff * inv_batch;
        Vec dy(1);
        dy[0] = wc * 2.0 * diff * inv_batch;
        Vec d_feature;
        nn::mlp_backward(p.head_c_mlp, mc, dy, grads->head_c_mlp, &d_feature);
        nn::lstm_backward(p.head_c_rnn, rc, d_feature, grads->head_c_rnn);
      } else {
        double diff = head_c_forward(p, hist) - bundle.label;
        total += wc * diff * diff * inv_batch;
      }
    }
  }
  return total;
}

FusedEstimate fuse_estimate(const CerberusParams& p, const CycleBundle& bundle) {
  bool has_a = !bundle.charge_windows.empty();
  bool has_b = !bundle.discharge_windows.empty();
  bool has_c = bundle.history.has_value();
  if (!has_a && !has_b && !has_c)
    throw DataError("fuse_estimate: bundle with no modality");

  FusedEstimate est;
  double scale = p.normalizer.capacity_scale;
  double ya = 0.0, yb = 0.0, yc = 0.0;
  if (has_a) {
    for (const auto& w : bundle.charge_windows) ya += head_a_forward(p, w);
    ya /= static_cast<double>(bundle.charge_windows.size());
    est.head_a_ah = ya * scale;
  }
  if (has_b) {
    for (const auto& w : bundle.discharge_windows) yb += head_b_forward(p, w);
    yb /= static_cast<double>(bundle.discharge_windows.size());
    est.head_b_ah = yb * scale;
  }
  if (has_c) {
    yc = head_c_forward(p, *bundle.history);
    est.head_c_ah = yc * scale;
  }

  long n_hist = has_c ? bundle.history->real_len : 0;
  FusionWeights w = fusion_weights(n_hist, p.schedule);
  double wa = has_a ? w.alpha : 0.0;
  double wb = has_b ? w.beta : 0.0;
  double wc = has_c ? w.gamma : 0.0;
  double ws = wa + wb + wc;
  est.weights = {wa / ws, wb / ws, wc / ws};
  est.fused_ah = (est.weights.alpha * ya + est.weights.beta * yb + est.weights.gamma * yc) * scale;
  return est;
}

std::vector<double> predict_trajectory(const CerberusParams& p,
                                       const feat::HistoryWindow& history, long horizon) {
  if (horizon < 1) throw UsageError("predict_trajectory: horizon must be >= 1");
  feat::HistoryWindow h = history;
  std::vector<double> out;
  out.reserve(static_cast<size_t>(horizon));
  for (long k = 0; k < horizon; ++k) {
    double pred = head_c_forward(p, h);
    out.push_back(pred * p.normalizer.capacity_scale);
    h.values.push_back(pred);
    h.real_len += 1;
    h.end_cycle += 1;
  }
  return out;
}

// ------------------------------------------------------------ checkpoint

using nlohmann::json;

void save_checkpoint(CerberusParams& p, const std::string& path) {
  json doc;
  doc["format"] = "cerberus-checkpoint";
  doc["version"] = p.version;
  doc["config"] = {{"gru_hidden", p.config.gru_hidden}, {"lstm_hidden", p.config.lstm_hidden}};
  doc["schedule"] = {{"n0", p.schedule.n0},
                     {"n_ramp", p.schedule.n_ramp},
                     {"w_min", p.schedule.w_min},
                     {"w_max", p.schedule.w_max}};
  doc["normalizer"] = {{"mean_charge", p.normalizer.mean_charge},
                       {"std_charge", p.normalizer.std_charge},
                       {"mean_discharge", p.normalizer.mean_discharge},
                       {"std_discharge", p.normalizer.std_discharge},
                       {"capacity_scale", p.normalizer.capacity_scale}};
  json tensors = json::array();
  for (auto& t : p.tensors()) {
    json jt;
    jt["name"] = t.name;
    jt["rows"] = t.rows;
    jt["cols"] = t.cols;
    jt["data"] = std::vector<double>(t.data, t.data + t.size());
    tensors.push_back(std::move(jt));
  }
  doc["tensors"] = std::move(tensors);
  std::ofstream out(path);
  if (!out) throw DataError("cannot write checkpoint: " + path);
  out << doc.dump() << "\n";
}

CerberusParams load_checkpoint(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot read checkpoint: " + path);
  json doc;
  try {
    in >> doc;
  } catch (const json::exception& e) {
    throw DataError(std::string("checkpoint parse error: ") + e.what());
  }
  try {
    if (doc.at("format") != "cerberus-checkpoint")
      throw DataError("not a cerberus checkpoint: " + path);
    CerberusParams p;
    p.version = doc.at("version").get<std::string>();
    p.config.gru_hidden = doc.at("config").at("gru_hidden").get<long>();
    p.config.lstm_hidden = doc.at("config").at("lstm_hidden").get<long>();
    const auto& sch = doc.at("schedule");
    p.schedule = {sch.at("n0").get<double>(), sch.at("n_ramp").get<double>(),
                  sch.at("w_min").get<double>(), sch.at("w_max").get<double>()};
    const auto& nz = doc.at("normalizer");
    p.normalizer.mean_charge = nz.at("mean_charge").get<double>();
    p.normalizer.std_charge = nz.at("std_charge").get<double>();
    p.normalizer.mean_discharge = nz.at("mean_discharge").get<double>();
    p.normalizer.std_discharge = nz.at("std_discharge").get<double>();
    p.normalizer.capacity_scale = nz.at("capacity_scale").get<double>();
    if (p.normalizer.std_charge <= 0.0 || p.normalizer.std_discharge <= 0.0 ||
        p.normalizer.capacity_scale <= 0.0)
      throw DataError("checkpoint: invalid normalizer statistics");
    if (p.config.gru_hidden < 1 || p.config.lstm_hidden < 1)
      throw DataError("checkpoint: invalid hidden sizes");

    // allocate from config, then fill by name with shape validation
    feat::Normalizer norm = p.normalizer;
    FusionSchedule sched = p.schedule;
    CerberusParams full = CerberusParams::init(p.config, norm, sched, 0);
    full.version = p.version;
    auto refs = full.tensors();
    const auto& jt = doc.at("tensors");
    if (jt.size() != refs.size())
      throw DataError("checkpoint: expected " + std::to_string(refs.size()) +
                      " tensors, found " + std::to_string(jt.size()));
    for (size_t i = 0; i < refs.size(); ++i) {
      const auto& t = jt.at(i);
      if (t.at("name") != refs[i].name)
        throw DataError("checkpoint: tensor " + std::to_string(i) + " name mismatch: " +
                        t.at("name").get<std::string>() + " vs " + refs[i].name);
      if (t.at("rows").get<long>() != refs[i].rows || t.at("cols").get<long>() != refs[i].cols)
        throw DataError("checkpoint: tensor " + refs[i].name + " shape mismatch");
      auto vals = t.at("data").get<std::vector<double>>();
      if (static_cast<long>(vals.size()) != refs[i].size())
        throw DataError("checkpoint: tensor " + refs[i].name + " data length mismatch");
      for (double v : vals)
        if (!std::isfinite(v))
          throw DataError("checkpoint: tensor " + refs[i].name + " has non-finite value");
      std::copy(vals.begin(), vals.end(), refs[i].data);
    }
    return full;
  } catch (const json::exception& e) {
    throw DataError(std::string("checkpoint schema error: ") + e.what());
  }
}

}  // namespace cerberus::model
