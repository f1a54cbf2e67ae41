// SPDX-License-Identifier: Apache-2.0
//
// Times batch_gradient in its serial and OpenMP lanes on a synthetic batch
// and verifies the two lanes agree bit-for-bit.
#include <chrono>
#include <cstdio>
#include <vector>

#ifdef _OPENMP
#include <omp.h>
#endif

#include "cerberus/harness.hpp"
#include "cerberus/synthcell.hpp"

using namespace cerberus;

namespace {

double time_lane(model::CerberusParams& params,
                 const std::vector<const model::CycleBundle*>& batch, bool parallel,
                 int reps, nn::Vec& grads) {
  double best = 1e300;
  for (int r = 0; r < reps; ++r) {
    auto t0 = std::chrono::steady_clock::now();
    harness::batch_gradient(params, batch, grads, parallel);
    double dt = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    if (dt < best) best = dt;
  }
  return best;
}

}  // namespace

int main() {
#ifdef _OPENMP
  std::printf("openmp threads: %d\n", omp_get_max_threads());
#else
  std::printf("openmp: not enabled\n");
#endif

  auto specs = synth::default_fleet(6, 40, 0.002, 1);
  std::vector<harness::CellData> cells;
  for (const auto& s : specs) {
    auto recs = data::parse_cycling_csv(synth::generate_cell_csv(s));
    cells.push_back(harness::ingest_cell(std::move(recs), s.nominal_capacity_ah));
  }
  auto raw = harness::make_raw_bundles(cells);
  auto norm = feat::fit_normalizer(harness::pool_curves(raw), 3.5);
  auto bundles = harness::featurize_bundles(raw, norm);

  auto params = model::CerberusParams::init(model::ModelConfig{16, 16}, norm,
                                            model::FusionSchedule{}, 1);

  std::printf("%8s %12s %12s %8s\n", "batch", "serial (s)", "parallel (s)", "speedup");
  for (size_t batch_size : {8, 32, 128}) {
    if (batch_size > bundles.size()) break;
    std::vector<const model::CycleBundle*> batch;
    for (size_t i = 0; i < batch_size; ++i) batch.push_back(&bundles[i]);
    nn::Vec gs, gp;
    double ts = time_lane(params, batch, false, 3, gs);
    double tp = time_lane(params, batch, true, 3, gp);
    bool same = gs == gp;
    std::printf("%8zu %12.4f %12.4f %7.2fx%s\n", batch_size, ts, tp, ts / tp,
                same ? "" : "  MISMATCH");
    if (!same) return 1;
  }
  return 0;
}
