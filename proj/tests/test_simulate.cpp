#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <filesystem>
#include <fstream>

#include "doctest.h"
#include "quadlearn/simulate.hpp"

using namespace quadlearn;
namespace fs = std::filesystem;

namespace {

TrajectorySpec hover_spec(double duration = 2.0) {
  TrajectorySpec s;
  s.family = TrajectoryFamily::Line;
  s.amplitudes = Vec3(0.0, 0.0, 1.0);  // hold (0, 0, 1)
  s.duration = duration;
  return s;
}

TrajectorySpec lemniscate_spec(double a, double b, double omega, double duration) {
  TrajectorySpec s;
  s.family = TrajectoryFamily::Lemniscate;
  s.amplitudes = Vec3(a, b, 1.0);
  s.omega = omega;
  s.duration = duration;
  return s;
}

std::string slurp(const fs::path& p) {
  std::ifstream f(p, std::ios::binary);
  return std::string((std::istreambuf_iterator<char>(f)), {});
}

}  // namespace

TEST_CASE("hover regulation") {
  const NominalParams plant;
  const NominalBackend backend(plant);
  MpcConfig mpc;
  SimOptions opt;

  const TrackRun run = run_closed_loop(plant, AeroParams{}, backend, mpc, hover_spec(), opt);
  CHECK(!run.stats.failed);
  CHECK(run.stats.steps == 200);
  CHECK(run.stats.rmse_pos < 1e-2);
  CHECK(run.stats.max_pos_err < 1e-2);
  CHECK(run.log.size() == 200);
  CHECK(run.solve_ms.size() == 200);
  CHECK(run.stats.stalled_solves == 0);
  run.log.validate();
}

TEST_CASE("collect_log hovers and is deterministic") {
  const NominalParams plant;
  MpcConfig mpc;
  SimOptions opt;
  opt.seed = 5;

  const FlightLog a = collect_log(plant, AeroParams{}, hover_spec(), mpc, opt);
  CHECK(a.size() == 200);
  for (std::size_t i = 0; i < a.size(); ++i) {
    CHECK((a.state[i].p - Vec3(0.0, 0.0, 1.0)).norm() < 1e-2);
  }

  const FlightLog b = collect_log(plant, AeroParams{}, hover_spec(), mpc, opt);
  const fs::path dir = fs::temp_directory_path() / "quadlearn_sim_test";
  fs::create_directories(dir);
  save_flight_log(a, dir / "a");
  save_flight_log(b, dir / "b");
  CHECK(slurp(dir / "a.csv") == slurp(dir / "b.csv"));
  fs::remove_all(dir);
}

TEST_CASE("sensor noise corrupts measurements, never labels or the loop") {
  const NominalParams plant;
  MpcConfig mpc;
  SimOptions clean;
  clean.seed = 11;
  SimOptions noisy = clean;
  noisy.noise.sigma_v = 0.05;
  noisy.noise.sigma_omega = 0.03;
  noisy.noise.sigma_q = 0.005;

  const FlightLog a = collect_log(plant, AeroParams{}, hover_spec(), mpc, clean);
  const FlightLog b = collect_log(plant, AeroParams{}, hover_spec(), mpc, noisy);
  REQUIRE(a.size() == b.size());

  double v_diff = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    // the controller flew the same flight: inputs, positions, labels agree
    CHECK(a.input[i] == b.input[i]);
    CHECK(a.state[i].p == b.state[i].p);
    CHECK(a.dv[i] == b.dv[i]);
    CHECK(a.domega[i] == b.domega[i]);
    v_diff += (a.state[i].v - b.state[i].v).norm();
  }
  CHECK(v_diff > 0.0);  // but the recorded velocity is noisy
}

TEST_CASE("drag degrades nominal-controller tracking directionally") {
  const NominalParams plant;
  MpcConfig mpc;
  mpc.rti = true;
  SimOptions opt;

  AeroParams drag;
  drag.d_lin = Vec3(0.4, 0.4, 0.5);
  drag.d_quad = Vec3(0.1, 0.1, 0.1);
  drag.thrust_sag = 0.03;

  const TrajectorySpec traj = lemniscate_spec(1.2, 0.6, 1.6, 4.0);
  const NominalBackend backend(plant);
  const TrackRun clean = run_closed_loop(plant, AeroParams{}, backend, mpc, traj, opt);
  const TrackRun draggy = run_closed_loop(plant, drag, backend, mpc, traj, opt);

  CHECK(!clean.stats.failed);
  CHECK(!draggy.stats.failed);
  CHECK(draggy.stats.rmse_pos > clean.stats.rmse_pos);
}

TEST_CASE("divergence reports a flight failure") {
  NominalParams plant;
  MpcConfig mpc;
  mpc.rti = true;
  SimOptions opt;
  opt.position_bound = 2.0;  // tight cage

  // Demand a sweep far beyond the cage so the flight must cross the bound.
  TrajectorySpec wild;
  wild.family = TrajectoryFamily::Line;
  wild.amplitudes = Vec3(30.0, 0.0, 1.0);
  wild.omega = 0.8;
  wild.duration = 4.0;

  try {
    collect_log(plant, AeroParams{}, wild, mpc, opt);
    CHECK(false);
  } catch (const Error& e) {
    CHECK(e.code() == "flight-failed");
  }

  const NominalBackend backend(plant);
  const TrackRun run = run_closed_loop(plant, AeroParams{}, backend, mpc, wild, opt);
  CHECK(run.stats.failed);
  CHECK(run.stats.steps > 0);
  CHECK(run.stats.steps < 400);
  CHECK(run.log.size() == static_cast<std::size_t>(run.stats.steps));
}

TEST_CASE("initial jitter perturbs the start deterministically") {
  const NominalParams plant;
  const NominalBackend backend(plant);
  MpcConfig mpc;
  SimOptions opt;
  opt.init_jitter = 0.05;
  opt.seed = 3;

  const TrackRun a = run_closed_loop(plant, AeroParams{}, backend, mpc, hover_spec(), opt);
  const TrackRun b = run_closed_loop(plant, AeroParams{}, backend, mpc, hover_spec(), opt);
  CHECK((a.log.state[0].p - b.log.state[0].p).norm() == 0.0);
  CHECK((a.log.state[0].p - Vec3(0.0, 0.0, 1.0)).norm() > 1e-3);

  opt.seed = 4;
  const TrackRun c = run_closed_loop(plant, AeroParams{}, backend, mpc, hover_spec(), opt);
  CHECK((a.log.state[0].p - c.log.state[0].p).norm() > 0.0);
  CHECK(!c.stats.failed);
}

TEST_CASE("rate mismatch is rejected") {
  const NominalParams plant;
  const NominalBackend backend(plant);
  MpcConfig mpc;
  SimOptions opt;
  opt.sim_hz = 250.0;  // not an integer multiple of 100 Hz
  CHECK_THROWS_AS(run_closed_loop(plant, AeroParams{}, backend, mpc, hover_spec(), opt),
                  Error);
}
