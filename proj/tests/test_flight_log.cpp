#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <cmath>
#include <filesystem>
#include <fstream>
#include <random>

#include "doctest.h"
#include "quadlearn/flight_log.hpp"
#include "quadlearn/quat.hpp"

using namespace quadlearn;
namespace fs = std::filesystem;

namespace {

FlightLog make_log(int n, double hz = 100.0) {
  FlightLog log;
  log.sample_hz = hz;
  log.seed = 99;
  log.spec.family = TrajectoryFamily::Lemniscate;
  log.spec.amplitudes = Vec3(1.5, 0.75, 1.0);
  log.spec.omega = 2.2;
  log.spec.plane = Plane::XZ;
  log.spec.duration = n / hz;
  log.spec.phase = 0.125;
  log.aero.d_lin = Vec3(0.1, 0.1, 0.15);
  log.aero.thrust_sag = 0.02;

  std::mt19937_64 rng(3);
  std::normal_distribution<double> dist(0.0, 1.0);
  for (int i = 0; i < n; ++i) {
    log.t.push_back(i / hz);
    QuadState x;
    x.p = Vec3(dist(rng), dist(rng), dist(rng)) * M_PI;
    x.v = Vec3(dist(rng), dist(rng), dist(rng));
    x.q = quat_normalize(Quat{dist(rng), dist(rng), dist(rng), dist(rng)});
    x.omega = Vec3(dist(rng), dist(rng), dist(rng));
    log.state.push_back(x);
    log.input.push_back(Control(11831.0 + dist(rng), 11831.0, 11000.0, 12000.0));
    log.dv.push_back(Vec3(dist(rng), dist(rng), dist(rng)) / 3.0);
    log.domega.push_back(Vec3(dist(rng), dist(rng), dist(rng)) * 7.0);
  }
  return log;
}

std::string slurp(const fs::path& p) {
  std::ifstream f(p, std::ios::binary);
  return std::string((std::istreambuf_iterator<char>(f)), {});
}

}  // namespace

TEST_CASE("validate") {
  FlightLog log = make_log(10);
  CHECK_NOTHROW(log.validate());

  SUBCASE("length mismatch") {
    log.dv.pop_back();
    CHECK_THROWS_AS(log.validate(), Error);
  }
  SUBCASE("non-uniform timestamps") {
    log.t[5] += 0.002;
    CHECK_THROWS_AS(log.validate(), Error);
  }
  SUBCASE("decreasing timestamps") {
    std::swap(log.t[3], log.t[4]);
    CHECK_THROWS_AS(log.validate(), Error);
  }
  SUBCASE("non-finite entry") {
    log.state[2].v(1) = std::numeric_limits<double>::quiet_NaN();
    CHECK_THROWS_AS(log.validate(), Error);
  }
  SUBCASE("bad sample rate") {
    log.sample_hz = 0.0;
    CHECK_THROWS_AS(log.validate(), Error);
  }
}

TEST_CASE("csv round trip is bit exact") {
  const fs::path dir = fs::temp_directory_path() / "quadlearn_log_test";
  fs::create_directories(dir);
  const FlightLog log = make_log(64);
  save_flight_log(log, dir / "run");
  const FlightLog back = load_flight_log(dir / "run");

  REQUIRE(back.size() == log.size());
  for (std::size_t i = 0; i < log.size(); ++i) {
    CHECK(back.t[i] == log.t[i]);
    CHECK(back.state[i].p == log.state[i].p);
    CHECK(back.state[i].v == log.state[i].v);
    CHECK(back.state[i].q.coeffs() == log.state[i].q.coeffs());
    CHECK(back.state[i].omega == log.state[i].omega);
    CHECK(back.input[i] == log.input[i]);
    CHECK(back.dv[i] == log.dv[i]);
    CHECK(back.domega[i] == log.domega[i]);
  }
  CHECK(back.seed == log.seed);
  CHECK(back.sample_hz == log.sample_hz);
  CHECK(back.spec.family == log.spec.family);
  CHECK(back.spec.amplitudes == log.spec.amplitudes);
  CHECK(back.spec.omega == log.spec.omega);
  CHECK(back.spec.plane == log.spec.plane);
  CHECK(back.spec.phase == log.spec.phase);
  CHECK(back.aero.d_lin == log.aero.d_lin);
  CHECK(back.aero.thrust_sag == log.aero.thrust_sag);
  CHECK(back.plant.m == log.plant.m);
  CHECK(back.plant.u_max == log.plant.u_max);

  SUBCASE("saving again is byte identical") {
    fs::create_directories(dir / "b");
    save_flight_log(back, dir / "b" / "run");
    CHECK(slurp(dir / "run.csv") == slurp(dir / "b" / "run.csv"));
    CHECK(slurp(dir / "run.json") == slurp(dir / "b" / "run.json"));
  }

  fs::remove_all(dir);
}

TEST_CASE("loader rejects broken inputs") {
  const fs::path dir = fs::temp_directory_path() / "quadlearn_log_bad";
  fs::create_directories(dir);
  const FlightLog log = make_log(8);

  SUBCASE("missing files") {
    try {
      load_flight_log(dir / "nope");
      CHECK(false);
    } catch (const Error& e) {
      CHECK(e.code() == "io-error");
    }
  }
  SUBCASE("bad header") {
    save_flight_log(log, dir / "run");
    std::string csv = slurp(dir / "run.csv");
    csv[0] = 'x';
    std::ofstream(dir / "run.csv", std::ios::binary) << csv;
    CHECK_THROWS_AS(load_flight_log(dir / "run"), Error);
  }
  SUBCASE("short row") {
    save_flight_log(log, dir / "run");
    std::string csv = slurp(dir / "run.csv");
    csv.resize(csv.rfind(',') + 1);  // amputate the last field
    std::ofstream(dir / "run.csv", std::ios::binary) << csv;
    CHECK_THROWS_AS(load_flight_log(dir / "run"), Error);
  }
  SUBCASE("wrong manifest format") {
    save_flight_log(log, dir / "run");
    std::ofstream(dir / "run.json") << "{\"format\": \"something-else\"}\n";
    CHECK_THROWS_AS(load_flight_log(dir / "run"), Error);
  }
  SUBCASE("manifest not json") {
    save_flight_log(log, dir / "run");
    std::ofstream(dir / "run.json") << "not json at all";
    CHECK_THROWS_AS(load_flight_log(dir / "run"), Error);
  }

  fs::remove_all(dir);
}
