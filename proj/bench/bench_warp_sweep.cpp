// Times the warp-maximization sweep (the hot kernel of the variational fit)
// in its serial reference form against the OpenMP-parallel form and reports
// the speedup.  Both paths must produce bitwise-identical bases; this is
// asserted here as well as in the unit tests.

#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <string>

#include "fdareg/avb.hpp"
#include "fdareg/simulate.hpp"

using namespace fdareg;

namespace {

double time_sweep(const QState& start, const Dataset& data, const ModelConfig& cfg,
                  const PenaltySet& pen, const PenaltySet& pen_red, const AvbOptions& opts,
                  bool parallel, int reps, QState* final_state) {
  double best = 1e300;
  for (int r = 0; r < reps; ++r) {
    QState q = start;
    const auto t0 = std::chrono::steady_clock::now();
    maximize_all_bases(q, data, cfg, pen, pen_red, cfg.gamma_w, opts, parallel);
    const auto t1 = std::chrono::steady_clock::now();
    best = std::min(best, std::chrono::duration<double>(t1 - t0).count());
    if (r + 1 == reps && final_state != nullptr) *final_state = q;
  }
  return best;
}

}  // namespace

int main(int argc, char** argv) {
  const int n = argc > 1 ? std::atoi(argv[1]) : 64;
  const int p = argc > 2 ? std::atoi(argv[2]) : 41;
  const int reps = argc > 3 ? std::atoi(argv[3]) : 3;

  const SimDataset sim = simulate_set1(n, p, 7);
  const PenaltySet pen = build_penalty_set(sim.data.grid);
  const PenaltySet pen_red = build_penalty_set(sim.data.grid.truncated());
  ModelConfig cfg;
  AvbOptions opts;

  QState q = avb_init(sim.data, cfg, pen);
  update_q_f1(q, sim.data.values, cfg, pen);
  update_q_f2(q, sim.data.values, cfg, pen);
  update_q_z(q, sim.data.values, cfg, pen);

  QState out_serial, out_parallel;
  const double t_serial =
      time_sweep(q, sim.data, cfg, pen, pen_red, opts, false, reps, &out_serial);
  const double t_parallel =
      time_sweep(q, sim.data, cfg, pen, pen_red, opts, true, reps, &out_parallel);

  for (int i = 0; i < n; ++i) {
    if (!out_serial.bases[i].values.cwiseEqual(out_parallel.bases[i].values).all()) {
      std::fprintf(stderr, "mismatch between serial and parallel sweep at function %d\n", i);
      return 1;
    }
  }

  std::printf("warp sweep over %d functions, p = %d (best of %d)\n", n, p, reps);
  std::printf("  serial   : %9.4f s\n", t_serial);
  std::printf("  parallel : %9.4f s\n", t_parallel);
  std::printf("  speedup  : %9.2fx\n", t_serial / t_parallel);
  return 0;
}
