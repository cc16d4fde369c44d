#include "quadlearn/simulate.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

#include "quadlearn/errors.hpp"
#include "quadlearn/quat.hpp"

namespace quadlearn {

namespace {

QuadState add_measurement_noise(const QuadState& x, const SensorNoise& n,
                                std::mt19937_64& rng) {
  std::normal_distribution<double> unit(0.0, 1.0);
  QuadState m = x;
  for (int a = 0; a < 3; ++a) m.v(a) += n.sigma_v * unit(rng);
  for (int a = 0; a < 3; ++a) m.omega(a) += n.sigma_omega * unit(rng);
  if (n.sigma_q > 0.0) {
    const Vec3 d(n.sigma_q * unit(rng), n.sigma_q * unit(rng), n.sigma_q * unit(rng));
    const double angle = d.norm();
    if (angle > 0.0) m.q = quat_mul(m.q, quat_from_axis_angle(d / angle, angle));
  }
  return m;
}

double median(std::vector<double> v) {
  if (v.empty()) return 0.0;
  const auto mid = v.begin() + v.size() / 2;
  std::nth_element(v.begin(), mid, v.end());
  double hi = *mid;
  if (v.size() % 2 == 0) {
    const double lo = *std::max_element(v.begin(), mid);
    return 0.5 * (lo + hi);
  }
  return hi;
}

}  // namespace

TrackRun run_closed_loop(const NominalParams& plant, const AeroParams& aero,
                         const MpcBackend& backend, const MpcConfig& mpc,
                         const TrajectorySpec& traj, const SimOptions& opt) {
  mpc.validate();
  if (!(opt.control_hz > 0.0) || !(opt.sim_hz > 0.0)) {
    throw invalid_argument_error("simulation rates must be positive");
  }
  const double ratio = opt.sim_hz / opt.control_hz;
  const int substeps = static_cast<int>(std::lround(ratio));
  if (substeps < 1 || std::abs(ratio - substeps) > 1e-9) {
    throw invalid_argument_error("sim rate must be an integer multiple of the control rate");
  }
  const double dt_sim = 1.0 / opt.sim_hz;
  const int ticks = static_cast<int>(std::lround(traj.duration * opt.control_hz));
  if (ticks < 1) throw invalid_argument_error("trajectory too short for one control tick");

  const auto plant_deriv = [&](const QuadState& s, const Control& c) {
    return true_plant_derivative(s, c, plant, aero);
  };

  std::mt19937_64 noise_rng(opt.seed);

  TrackRun run;
  run.log.spec = traj;
  run.log.plant = plant;
  run.log.aero = aero;
  run.log.seed = opt.seed;
  run.log.sample_hz = opt.control_hz;

  QuadState x = make_reference(traj, 0.0, plant).state;
  if (opt.init_jitter > 0.0) {
    std::normal_distribution<double> unit(0.0, 1.0);
    for (int a = 0; a < 3; ++a) x.p(a) += opt.init_jitter * unit(noise_rng);
  }
  std::vector<Control> warm(mpc.N, make_reference(traj, 0.0, plant).feedforward);

  double err2_sum = 0.0;
  double iter_sum = 0.0;

  for (int k = 0; k < ticks; ++k) {
    const double t = k / opt.control_hz;
    const MpcProblem problem = reference_problem(traj, t, x, mpc, plant);

    MpcSolution sol;
    try {
      sol = solve(backend, problem, mpc, warm);
    } catch (const Error&) {
      run.stats.failed = true;
      break;
    }
    run.solve_ms.push_back(sol.solve_time_s * 1e3);
    iter_sum += sol.iterations;
    if (sol.stalled) ++run.stats.stalled_solves;
    const Control u = sol.u.front();
    warm = shift_warm_start(sol.u);

    // Log the measurement at this tick with the input that will be held.
    QuadState measured = opt.noise.any() ? add_measurement_noise(x, opt.noise, noise_rng) : x;
    Control u_rec = u;
    if (opt.noise.sigma_u > 0.0) {
      std::normal_distribution<double> unit(0.0, 1.0);
      for (int a = 0; a < 4; ++a) u_rec(a) += opt.noise.sigma_u * unit(noise_rng);
      u_rec = u_rec.cwiseMax(0.0);
    }
    const StateDerivative d = plant_deriv(x, u);
    run.log.t.push_back(t);
    run.log.state.push_back(measured);
    run.log.input.push_back(u_rec);
    run.log.dv.push_back(d.dv);
    run.log.domega.push_back(d.domega);

    const Vec3 p_err = x.p - problem.x_ref.front().p;
    err2_sum += p_err.squaredNorm();
    run.stats.max_pos_err = std::max(run.stats.max_pos_err, p_err.norm());
    ++run.stats.steps;

    bool diverged = false;
    for (int s = 0; s < substeps; ++s) {
      try {
        x = rk4_step(plant_deriv, x, u, dt_sim);
      } catch (const Error&) {
        diverged = true;
        break;
      }
      if (x.p.norm() > opt.position_bound) {
        diverged = true;
        break;
      }
    }
    if (diverged) {
      run.stats.failed = true;
      break;
    }
  }

  if (run.stats.steps > 0) {
    run.stats.rmse_pos = std::sqrt(err2_sum / run.stats.steps);
    run.stats.mean_iterations = iter_sum / run.stats.steps;
  }
  if (!run.solve_ms.empty()) {
    run.stats.mean_solve_ms =
        std::accumulate(run.solve_ms.begin(), run.solve_ms.end(), 0.0) / run.solve_ms.size();
    run.stats.median_solve_ms = median(run.solve_ms);
    run.stats.max_solve_ms = *std::max_element(run.solve_ms.begin(), run.solve_ms.end());
  }
  return run;
}

FlightLog collect_log(const NominalParams& plant, const AeroParams& aero,
                      const TrajectorySpec& traj, const MpcConfig& mpc,
                      const SimOptions& opt) {
  const NominalBackend backend(plant);
  TrackRun run = run_closed_loop(plant, aero, backend, mpc, traj, opt);
  if (run.stats.failed) {
    throw flight_failed_error("flight diverged after " + std::to_string(run.stats.steps) +
                              " of " +
                              std::to_string(static_cast<int>(std::lround(
                                  traj.duration * opt.control_hz))) +
                              " control ticks");
  }
  return std::move(run.log);
}

}  // namespace quadlearn
