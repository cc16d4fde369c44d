#pragma once

#include <cstdint>
#include <vector>

#include "quadlearn/flight_log.hpp"
#include "quadlearn/mpc.hpp"

namespace quadlearn {

// Measurement corruption applied to the logged state only; the controller
// and the recorded acceleration labels always see the true plant state, so
// noisy datasets keep exact targets.
struct SensorNoise {
  double sigma_v = 0.0;      // m/s, per axis
  double sigma_omega = 0.0;  // rad/s, per axis
  double sigma_q = 0.0;      // rad, small-angle attitude jitter
  double sigma_u = 0.0;      // rpm, on the recorded motor speeds

  bool any() const {
    return sigma_v > 0.0 || sigma_omega > 0.0 || sigma_q > 0.0 || sigma_u > 0.0;
  }
};

struct SimOptions {
  double control_hz = 100.0;
  double sim_hz = 1000.0;
  double position_bound = 50.0;  // m; beyond this the flight has failed
  double init_jitter = 0.0;      // m, gaussian start-position offset per axis
  SensorNoise noise;
  uint64_t seed = 0;
};

struct TrackStats {
  double rmse_pos = 0.0;  // m, true position vs reference
  double max_pos_err = 0.0;
  double mean_solve_ms = 0.0;
  double median_solve_ms = 0.0;
  double max_solve_ms = 0.0;
  double mean_iterations = 0.0;
  int stalled_solves = 0;
  int steps = 0;
  bool failed = false;  // divergence; stats cover the partial flight
};

struct TrackRun {
  FlightLog log;  // measured states, applied inputs, exact plant accelerations
  TrackStats stats;
  std::vector<double> solve_ms;  // per control tick
};

// Receding-horizon loop: solve at control_hz from the true state, hold the
// first input while the plant integrates at sim_hz, log one sample per
// control tick.  Divergence truncates the run and sets stats.failed.
TrackRun run_closed_loop(const NominalParams& plant, const AeroParams& aero,
                         const MpcBackend& backend, const MpcConfig& mpc,
                         const TrajectorySpec& traj, const SimOptions& opt);

// Data-collection flavor: nominal-model controller flying the true plant.
// Throws flight-failed on divergence (a partial log is useless as data).
FlightLog collect_log(const NominalParams& plant, const AeroParams& aero,
                      const TrajectorySpec& traj, const MpcConfig& mpc,
                      const SimOptions& opt);

}  // namespace quadlearn
