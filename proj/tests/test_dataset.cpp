#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <cmath>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <set>

#include "doctest.h"
#include "json.hpp"
#include "quadlearn/dataset.hpp"
#include "quadlearn/quat.hpp"

using namespace quadlearn;
namespace fs = std::filesystem;

namespace {

// Smooth analytic log: sinusoidal v and omega with known derivatives.
FlightLog analytic_log(int n, double hz = 100.0, double f_v = 2.0, double f_w = 1.5) {
  FlightLog log;
  log.sample_hz = hz;
  log.seed = 5;
  const double wv = 2.0 * M_PI * f_v, ww = 2.0 * M_PI * f_w;
  for (int i = 0; i < n; ++i) {
    const double t = i / hz;
    log.t.push_back(t);
    QuadState x;
    x.p = Vec3(0.1 * t, 0.0, 1.0);
    x.v = Vec3(std::sin(wv * t), 0.5 * std::cos(wv * t), 0.25 * std::sin(wv * t + 1.0));
    x.q = quat_from_axis_angle(Vec3::UnitZ(), 0.1 * std::sin(ww * t));
    x.omega = Vec3(0.8 * std::cos(ww * t), 0.3 * std::sin(ww * t), 0.0);
    log.state.push_back(x);
    log.input.push_back(Control::Constant(11831.0 + 100.0 * std::sin(ww * t)));
    log.dv.push_back(Vec3(wv * std::cos(wv * t), -0.5 * wv * std::sin(wv * t),
                          0.25 * wv * std::cos(wv * t + 1.0)));
    log.domega.push_back(Vec3(-0.8 * ww * std::sin(ww * t), 0.3 * ww * std::cos(ww * t), 0.0));
  }
  return log;
}

}  // namespace

TEST_CASE("window counts") {
  WindowOptions opt;
  opt.T = 20;
  opt.delta_t = 0.01;
  CHECK(window_log(analytic_log(1000), opt).size() == 980);

  opt.T = 1;
  CHECK(window_log(analytic_log(1000), opt).size() == 999);

  opt.T = 20;
  CHECK(window_log(analytic_log(20), opt).empty());   // exactly one window short
  CHECK(window_log(analytic_log(21), opt).size() == 1);

  opt.delta_t = 0.02;  // stride 2
  CHECK(window_log(analytic_log(1000), opt).size() == 1000 - 40);

  opt.delta_t = 0.015;  // not a multiple of 10 ms
  CHECK_THROWS_AS(window_log(analytic_log(100), opt), Error);
  opt.delta_t = 0.01;
  opt.T = 0;
  CHECK_THROWS_AS(window_log(analytic_log(100), opt), Error);
}

TEST_CASE("window contents and causality") {
  const FlightLog log = analytic_log(200);
  WindowOptions opt;
  opt.T = 5;
  opt.delta_t = 0.02;  // stride 2
  const auto samples = window_log(log, opt, 7);
  REQUIRE(samples.size() == 200 - 10);

  const auto& first = samples.front();
  CHECK(first.trajectory_id == 7);
  CHECK(first.t_label == log.t[10]);
  CHECK(first.label.head<3>() == log.dv[10]);
  CHECK(first.label.tail<3>() == log.domega[10]);
  // columns 0..4 hold samples 2, 4, 6, 8, 10
  for (int j = 0; j < 5; ++j) {
    const int idx = 2 + 2 * j;
    CHECK(first.X.block<3, 1>(0, j) == log.state[idx].v);
    CHECK(first.X.block<4, 1>(3, j) == log.state[idx].q.coeffs());
    CHECK(first.X.block<3, 1>(7, j) == log.state[idx].omega);
    CHECK(first.U.col(j) == log.input[idx]);
  }

  for (const auto& s : samples) {
    REQUIRE(s.X.rows() == 10);
    REQUIRE(s.X.cols() == 5);
    REQUIRE(s.U.rows() == 4);
    // newest column belongs to the label instant
    const auto it = std::find(log.t.begin(), log.t.end(), s.t_label);
    REQUIRE(it != log.t.end());
    const auto i = std::distance(log.t.begin(), it);
    CHECK(s.X.col(4) == (Eigen::Matrix<double, 10, 1>() << log.state[i].v,
                         log.state[i].q.coeffs(), log.state[i].omega)
                            .finished());
  }
}

TEST_CASE("windows carry no position information") {
  FlightLog a = analytic_log(100);
  FlightLog b = a;
  for (auto& s : b.state) s.p += Vec3(5.0, -2.0, 11.0);
  WindowOptions opt;
  opt.T = 4;
  const auto sa = window_log(a, opt), sb = window_log(b, opt);
  REQUIRE(sa.size() == sb.size());
  for (std::size_t i = 0; i < sa.size(); ++i) {
    CHECK(sa[i].X == sb[i].X);
    CHECK(sa[i].U == sb[i].U);
    CHECK(sa[i].label == sb[i].label);
  }
}

TEST_CASE("differentiated labels recover analytic accelerations") {
  // Signal content at 2 Hz / 1.5 Hz, cutoff 5 Hz: recovery inside 1% RMS.
  const FlightLog log = analytic_log(600);
  WindowOptions diff;
  diff.T = 10;
  diff.labels = LabelMode::Differentiated;
  const auto sd = window_log(log, diff);
  // Guard band: one 5 Hz period (20 samples) dropped at each end.
  CHECK(sd.size() == 600 - 20 - 20);
  CHECK(sd.front().t_label == log.t[20]);
  double err2 = 0.0, sig2 = 0.0;
  for (const auto& s : sd) {
    const auto i = static_cast<std::size_t>(std::lround(s.t_label * log.sample_hz));
    Vec6 truth;
    truth << log.dv[i], log.domega[i];
    err2 += (s.label - truth).squaredNorm();
    sig2 += truth.squaredNorm();
  }
  CHECK(std::sqrt(err2 / sig2) < 0.01);
}

TEST_CASE("differentiated mode with no settled region is empty") {
  WindowOptions diff;
  diff.T = 5;
  diff.labels = LabelMode::Differentiated;
  CHECK(window_log(analytic_log(40), diff).empty());  // guards eat the whole record
}

TEST_CASE("split_dataset") {
  std::vector<int> ids(68);
  std::iota(ids.begin(), ids.end(), 0);

  SUBCASE("60/8 at the published fraction") {
    const DatasetSplit sp = split_dataset(ids, 60.0 / 68.0, 11);
    CHECK(sp.train_ids.size() == 60);
    CHECK(sp.test_ids.size() == 8);
    std::set<int> all(sp.train_ids.begin(), sp.train_ids.end());
    all.insert(sp.test_ids.begin(), sp.test_ids.end());
    CHECK(all.size() == 68);  // disjoint and covering
  }
  SUBCASE("deterministic in the seed") {
    const DatasetSplit a = split_dataset(ids, 0.6, 21);
    const DatasetSplit b = split_dataset(ids, 0.6, 21);
    const DatasetSplit c = split_dataset(ids, 0.6, 22);
    CHECK(a.train_ids == b.train_ids);
    CHECK(a.test_ids == b.test_ids);
    CHECK(a.train_ids != c.train_ids);
  }
  SUBCASE("two trajectories at one half") {
    const DatasetSplit sp = split_dataset({4, 9}, 0.5, 1);
    CHECK(sp.train_ids.size() == 1);
    CHECK(sp.test_ids.size() == 1);
  }
  SUBCASE("both sides stay non-empty") {
    const DatasetSplit lo = split_dataset({1, 2, 3, 4, 5}, 0.01, 1);
    CHECK(lo.train_ids.size() == 1);
    const DatasetSplit hi = split_dataset({1, 2, 3, 4, 5}, 0.999, 1);
    CHECK(hi.test_ids.size() == 1);
  }
  SUBCASE("exact fractions do not lose a trajectory to rounding") {
    const DatasetSplit sp = split_dataset({1, 2, 3, 4, 5, 6, 7, 8, 9, 10}, 0.7, 3);
    CHECK(sp.train_ids.size() == 7);
  }
  SUBCASE("rejects bad arguments") {
    CHECK_THROWS_AS(split_dataset({1}, 0.5, 1), Error);
    CHECK_THROWS_AS(split_dataset(ids, 0.0, 1), Error);
    CHECK_THROWS_AS(split_dataset(ids, 1.0, 1), Error);
  }
}

TEST_CASE("fnv1a reference vectors") {
  CHECK(fnv1a("", 0) == 0xcbf29ce484222325ull);
  CHECK(fnv1a("a", 1) == 0xaf63dc4c8601ec8cull);
  CHECK(fnv1a("foobar", 6) == 0x85944171f73967e8ull);
  CHECK(hash_to_hex(0xcbf29ce484222325ull) == "cbf29ce484222325");
}

TEST_CASE("dataset directory round trip") {
  const fs::path dir = fs::temp_directory_path() / "quadlearn_ds_test";
  fs::remove_all(dir);

  Dataset ds;
  ds.ids = {0, 1, 2};
  ds.logs = {analytic_log(50), analytic_log(60, 100.0, 1.0), analytic_log(70, 100.0, 3.0)};
  ds.split = split_dataset(ds.ids, 0.67, 17);
  save_dataset(ds, dir);

  const Dataset back = load_dataset(dir);
  CHECK(back.ids == ds.ids);
  REQUIRE(back.logs.size() == 3);
  CHECK(back.logs[1].size() == 60);
  CHECK(back.logs[2].state[10].v == ds.logs[2].state[10].v);
  CHECK(back.split.train_ids == ds.split.train_ids);
  CHECK(back.split.test_ids == ds.split.test_ids);
  CHECK(back.content_hash.size() == 16);

  CHECK(&log_by_id(back, 2) == &back.logs[2]);
  CHECK_THROWS_AS(log_by_id(back, 5), Error);

  SUBCASE("tampered log is caught by the content hash") {
    std::fstream f(dir / "logs" / "traj_001.csv", std::ios::in | std::ios::out);
    f.seekp(200);
    f.put('7');
    f.close();
    try {
      load_dataset(dir);
      CHECK(false);
    } catch (const Error& e) {
      CHECK(e.code() == "io-error");
      CHECK(std::string(e.what()).find("hash") != std::string::npos);
    }
  }

  SUBCASE("overlapping split is rejected") {
    std::ifstream in(dir / "split.json");
    nlohmann::json j;
    in >> j;
    in.close();
    j["test_ids"].push_back(j["train_ids"][0]);
    std::ofstream(dir / "split.json") << j.dump(2);
    CHECK_THROWS_AS(load_dataset(dir), Error);
  }

  fs::remove_all(dir);
}
