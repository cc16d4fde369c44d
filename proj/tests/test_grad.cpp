#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <functional>
#include <random>

#include "doctest.h"
#include "quadlearn/grad.hpp"

using namespace quadlearn;
namespace g = quadlearn::grad;

namespace {

using GraphFn = std::function<g::Var(g::Tape&, const std::vector<g::Var>&)>;

g::Mat random_mat(int rows, int cols, std::mt19937_64& rng, double scale = 1.0) {
  std::normal_distribution<double> n(0.0, scale);
  g::Mat m(rows, cols);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = n(rng);
  return m;
}

double eval_scalar(const GraphFn& f, const std::vector<g::Mat>& inputs,
                   const std::vector<int>& times) {
  g::Tape tape;
  std::vector<g::Var> vars;
  for (size_t i = 0; i < inputs.size(); ++i) {
    vars.push_back(tape.input(inputs[i], times[i]));
  }
  return tape.val(f(tape, vars))(0, 0);
}

// Central finite differences (step 1e-5) on every entry of every input
// against one reverse pass.
void check_input_grads(const GraphFn& f, std::vector<g::Mat> inputs,
                       std::vector<int> times = {}, double tol = 1e-4) {
  if (times.empty()) times.assign(inputs.size(), 1);
  g::Tape tape;
  std::vector<g::Var> vars;
  for (size_t i = 0; i < inputs.size(); ++i) {
    vars.push_back(tape.input(inputs[i], times[i]));
  }
  const g::Var loss = f(tape, vars);
  tape.backward(loss);
  std::vector<g::Mat> analytic;
  for (const g::Var v : vars) analytic.push_back(tape.grad_of(v));

  const double h = 1e-5;
  for (size_t i = 0; i < inputs.size(); ++i) {
    for (Eigen::Index e = 0; e < inputs[i].size(); ++e) {
      const double saved = inputs[i].data()[e];
      inputs[i].data()[e] = saved + h;
      const double fp = eval_scalar(f, inputs, times);
      inputs[i].data()[e] = saved - h;
      const double fm = eval_scalar(f, inputs, times);
      inputs[i].data()[e] = saved;
      const double fd = (fp - fm) / (2.0 * h);
      const double rel =
          std::abs(analytic[i].data()[e] - fd) / std::max(1.0, std::abs(fd));
      CHECK(rel < tol);
    }
  }
}

}  // namespace

TEST_CASE("hand derivative: L = |Wx|^2 with identity W") {
  g::Tape tape;
  const g::Var w = tape.input(g::Mat::Identity(2, 2));
  const g::Var x = tape.input((g::Mat(2, 1) << 1.0, 2.0).finished());
  const g::Var loss = g::mean_squared_column_norm(tape, g::matmul(tape, w, x));
  CHECK(tape.val(loss)(0, 0) == 5.0);
  tape.backward(loss);
  CHECK(tape.grad_of(x)(0, 0) == 2.0);
  CHECK(tape.grad_of(x)(1, 0) == 4.0);
}

TEST_CASE("finite-difference check per primitive") {
  for (uint64_t seed : {1ull, 2ull, 3ull}) {
    std::mt19937_64 rng(seed);

    SUBCASE("matmul chain with matvec case") {
      check_input_grads(
          [](g::Tape& t, const std::vector<g::Var>& v) {
            return g::mean_squared_column_norm(t, g::matmul(t, v[0], v[1]));
          },
          {random_mat(3, 4, rng), random_mat(4, 1, rng)});
    }

    SUBCASE("add, sub, add_bias, scale, add_scaled") {
      check_input_grads(
          [](g::Tape& t, const std::vector<g::Var>& v) {
            const g::Var s = g::add(t, v[0], v[1]);
            const g::Var d = g::sub(t, s, v[2]);
            const g::Var b = g::add_bias(t, d, v[3]);
            const g::Var l1 = g::mean_squared_column_norm(t, g::scale(t, b, 1.7));
            const g::Var l2 = g::mean_squared_column_norm(t, v[0]);
            return g::add_scaled(t, l1, l2, 0.25);
          },
          {random_mat(3, 5, rng), random_mat(3, 5, rng), random_mat(3, 5, rng),
           random_mat(3, 1, rng)});
    }

    SUBCASE("relu") {
      check_input_grads(
          [](g::Tape& t, const std::vector<g::Var>& v) {
            return g::mean_squared_column_norm(t, g::relu(t, v[0]));
          },
          {random_mat(4, 6, rng)});
    }

    SUBCASE("dropout with frozen mask") {
      check_input_grads(
          [seed](g::Tape& t, const std::vector<g::Var>& v) {
            std::mt19937_64 mask_rng(seed + 100);
            return g::mean_squared_column_norm(t, g::dropout(t, v[0], 0.3, mask_rng));
          },
          {random_mat(4, 6, rng)});
    }

    SUBCASE("batchnorm, train mode") {
      check_input_grads(
          [](g::Tape& t, const std::vector<g::Var>& v) {
            g::BatchNormState state(3);
            const g::Var y = g::batchnorm_1d(t, v[0], v[1], v[2], state, true);
            return g::mean_squared_column_norm(t, y);
          },
          {random_mat(3, 8, rng), random_mat(3, 1, rng), random_mat(3, 1, rng)});
    }

    SUBCASE("batchnorm, eval mode") {
      g::BatchNormState state(3);
      state.running_mean = g::Vec::Constant(3, 0.2);
      state.running_var = g::Vec::Constant(3, 1.5);
      check_input_grads(
          [&state](g::Tape& t, const std::vector<g::Var>& v) {
            g::BatchNormState local = state;
            const g::Var y = g::batchnorm_1d(t, v[0], v[1], v[2], local, false);
            return g::mean_squared_column_norm(t, y);
          },
          {random_mat(3, 5, rng), random_mat(3, 1, rng), random_mat(3, 1, rng)});
    }

    SUBCASE("dilated causal conv") {
      const int T = 6;
      check_input_grads(
          [](g::Tape& t, const std::vector<g::Var>& v) {
            const g::Var y = g::dilated_causal_conv1d(t, v[0], v[1], v[2], 3, 2);
            return g::mean_squared_column_norm(t, y);
          },
          {random_mat(3, T * 2, rng), random_mat(4, 3 * 3, rng), random_mat(4, 1, rng)},
          {T, 1, 1});
    }

    SUBCASE("last_time_step and flatten_time") {
      const int T = 5;
      check_input_grads(
          [](g::Tape& t, const std::vector<g::Var>& v) {
            const g::Var a = g::mean_squared_column_norm(t, g::last_time_step(t, v[0]));
            const g::Var b = g::mean_squared_column_norm(t, g::flatten_time(t, v[0]));
            return g::add_scaled(t, a, b, 0.5);
          },
          {random_mat(3, T * 2, rng)}, {T});
    }

    SUBCASE("per_sample_affine") {
      std::vector<Eigen::Matrix<double, 6, 6>> A(3);
      for (auto& a : A) a = random_mat(6, 6, rng);
      const g::Mat c = random_mat(6, 3, rng);
      check_input_grads(
          [&A, &c](g::Tape& t, const std::vector<g::Var>& v) {
            return g::mean_squared_column_norm(t, g::per_sample_affine(t, v[0], A, c));
          },
          {random_mat(6, 3, rng)});
    }
  }
}

TEST_CASE("fan-out accumulates gradients additively") {
  check_input_grads(
      [](g::Tape& t, const std::vector<g::Var>& v) {
        const g::Var doubled = g::add(t, v[0], v[0]);
        const g::Var mixed = g::matmul(t, v[1], doubled);
        const g::Var l1 = g::mean_squared_column_norm(t, mixed);
        const g::Var l2 = g::mean_squared_column_norm(t, v[0]);
        return g::add_scaled(t, l1, l2, 1.0);
      },
      [] {
        std::mt19937_64 rng(9);
        return std::vector<g::Mat>{random_mat(3, 2, rng), random_mat(3, 3, rng)};
      }());
}

TEST_CASE("zero gradient for unused blocks") {
  g::Vec theta = g::Vec::LinSpaced(10, 0.1, 1.0);
  g::Vec theta_grad = g::Vec::Zero(10);
  g::Tape tape(&theta, &theta_grad);
  const g::Var used = tape.param(0, 2, 2);
  tape.param(4, 2, 3);  // never consumed
  const g::Var x = tape.value(g::Mat::Ones(2, 1));
  tape.backward(g::mean_squared_column_norm(tape, g::matmul(tape, used, x)));
  CHECK(theta_grad.head(4).norm() > 0.0);
  CHECK(theta_grad.tail(6).norm() == 0.0);
}

TEST_CASE("conv value semantics") {
  SUBCASE("zero kernels give zero output") {
    g::Tape t;
    const g::Var x = t.input(g::Mat::Random(3, 12), 6);
    const g::Var w = t.value(g::Mat::Zero(4, 9));
    const g::Var b = t.value(g::Mat::Zero(4, 1));
    CHECK(t.val(g::dilated_causal_conv1d(t, x, w, b, 3, 2)).norm() == 0.0);
  }

  SUBCASE("k=1 identity kernel is the identity") {
    g::Tape t;
    const g::Mat xin = g::Mat::Random(3, 10);
    const g::Var x = t.input(xin, 5);
    const g::Var w = t.value(g::Mat::Identity(3, 3));
    const g::Var b = t.value(g::Mat::Zero(3, 1));
    CHECK((t.val(g::dilated_causal_conv1d(t, x, w, b, 1, 1)) - xin).norm() == 0.0);
  }

  SUBCASE("causality probe: perturbation at t0 never reaches earlier outputs") {
    const int T = 16, t0 = 9;
    std::mt19937_64 rng(4);
    const g::Mat w = random_mat(2, 3 * 3, rng);
    const g::Mat b = random_mat(2, 1, rng);
    g::Mat x = random_mat(3, T, rng);
    auto run = [&](const g::Mat& xin) {
      g::Tape t;
      return t.val(g::dilated_causal_conv1d(t, t.input(xin, T), t.value(w), t.value(b), 3, 4));
    };
    const g::Mat base = run(x);
    x(1, t0) += 2.0;
    const g::Mat bumped = run(x);
    for (int tt = 0; tt < t0; ++tt) {
      CHECK((bumped.col(tt) - base.col(tt)).norm() == 0.0);
    }
    CHECK((bumped.col(t0) - base.col(t0)).norm() > 0.0);
  }

  SUBCASE("sample blocks never leak into each other") {
    const int T = 8;
    std::mt19937_64 rng(5);
    const g::Mat w = random_mat(2, 2 * 3, rng);
    const g::Mat b = g::Mat::Zero(2, 1);
    g::Mat x = random_mat(2, T * 2, rng);
    auto run = [&](const g::Mat& xin) {
      g::Tape t;
      return t.val(g::dilated_causal_conv1d(t, t.input(xin, T), t.value(w), t.value(b), 3, 2));
    };
    const g::Mat base = run(x);
    x.col(3) += g::Mat::Ones(2, 1);  // perturb sample 0 only
    const g::Mat bumped = run(x);
    CHECK((bumped.rightCols(T) - base.rightCols(T)).norm() == 0.0);
  }
}

TEST_CASE("dropout statistics under inverted scaling") {
  std::mt19937_64 rng(11);
  const double rate = 0.1;
  const int n = 100000;
  g::Mat x = g::Mat::Ones(1, n);
  g::Tape t;
  const g::Var y = g::dropout(t, t.input(x, 1), rate, rng);
  const double mean = t.val(y).mean();
  CHECK(mean == doctest::Approx(1.0).epsilon(0.01));
}

TEST_CASE("batchnorm inference is affine in the input") {
  g::BatchNormState state(2);
  state.running_mean = (g::Vec(2) << 0.3, -0.7).finished();
  state.running_var = (g::Vec(2) << 2.0, 0.5).finished();
  const g::Mat gamma = (g::Mat(2, 1) << 1.3, 0.8).finished();
  const g::Mat beta = (g::Mat(2, 1) << -0.2, 0.4).finished();
  auto run = [&](const g::Mat& x) {
    g::Tape t;
    g::BatchNormState local = state;
    return t.val(
        g::batchnorm_1d(t, t.input(x, 1), t.value(gamma), t.value(beta), local, false));
  };
  std::mt19937_64 rng(3);
  const g::Mat a = random_mat(2, 4, rng), b = random_mat(2, 4, rng);
  const g::Mat zero = g::Mat::Zero(2, 4);
  const g::Mat lhs = run(a + b) - run(zero);
  const g::Mat rhs = (run(a) - run(zero)) + (run(b) - run(zero));
  CHECK((lhs - rhs).norm() < 1e-12);
}

TEST_CASE("batchnorm running statistics converge to the batch distribution") {
  std::mt19937_64 rng(17);
  g::BatchNormState state(1);
  const g::Mat gamma = g::Mat::Ones(1, 1), beta = g::Mat::Zero(1, 1);
  for (int i = 0; i < 400; ++i) {
    g::Mat x = random_mat(1, 256, rng);
    x.array() = x.array() * 2.0 + 5.0;  // mean 5, var 4
    g::Tape t;
    g::batchnorm_1d(t, t.input(x, 1), t.value(gamma), t.value(beta), state, true);
  }
  CHECK(state.running_mean(0) == doctest::Approx(5.0).epsilon(0.05));
  CHECK(state.running_var(0) == doctest::Approx(4.0).epsilon(0.10));
}

TEST_CASE("shape errors report both shapes") {
  g::Tape t;
  const g::Var a = t.input(g::Mat::Zero(2, 3));
  const g::Var b = t.input(g::Mat::Zero(2, 3));
  CHECK_THROWS_WITH_AS(g::matmul(t, a, b), doctest::Contains("2x3"), Error);
  CHECK_THROWS_WITH_AS(g::add_bias(t, a, b), doctest::Contains("shape-error"), Error);
  try {
    g::matmul(t, a, b);
  } catch (const Error& e) {
    CHECK(e.code() == "shape-error");
    CHECK(std::string(e.what()).find("2x3 vs 2x3") != std::string::npos);
  }
}

TEST_CASE("backward usage contract") {
  g::Tape empty;
  CHECK_THROWS_WITH_AS(empty.backward(g::Var{0}), doctest::Contains("usage-error"), Error);
  g::Tape t;
  const g::Var x = t.input(g::Mat::Ones(2, 2));
  CHECK_THROWS_WITH_AS(t.backward(x), doctest::Contains("scalar"), Error);
}

TEST_CASE("repeated vjp seeds are independent") {
  std::mt19937_64 rng(21);
  const g::Mat W = random_mat(3, 4, rng);
  g::Tape t;
  const g::Var x = t.input(random_mat(4, 1, rng));
  const g::Var y = g::matmul(t, t.value(W), x);
  g::Mat jac(3, 4);
  for (int r = 0; r < 3; ++r) {
    g::Mat seed = g::Mat::Zero(3, 1);
    seed(r, 0) = 1.0;
    t.backward(y, seed);
    jac.row(r) = t.grad_of(x).transpose();
  }
  CHECK((jac - W).norm() < 1e-14);
}

TEST_CASE("adam_step") {
  SUBCASE("zero gradient leaves everything unchanged") {
    g::Vec p = g::Vec::LinSpaced(4, 1.0, 4.0);
    const g::Vec p0 = p;
    g::AdamState s(4);
    g::adam_step(p, g::Vec::Zero(4), s, 0.1);
    CHECK((p - p0).norm() == 0.0);
    CHECK(s.m.norm() == 0.0);
    CHECK(s.v.norm() == 0.0);
  }

  SUBCASE("constant gradient approaches a step of lr") {
    g::Vec p = g::Vec::Zero(1);
    g::AdamState s(1);
    const g::Vec grd = g::Vec::Constant(1, 3.0);
    const double lr = 0.01;
    double prev = 0.0;
    double step = 0.0;
    for (int i = 0; i < 200; ++i) {
      prev = p(0);
      g::adam_step(p, grd, s, lr);
      step = prev - p(0);
    }
    CHECK(step == doctest::Approx(lr).epsilon(1e-6));
  }

  SUBCASE("lr=0 freezes parameters but advances moments") {
    g::Vec p = g::Vec::Ones(2);
    g::AdamState s(2);
    g::adam_step(p, g::Vec::Ones(2), s, 0.0);
    CHECK((p - g::Vec::Ones(2)).norm() == 0.0);
    CHECK(s.t == 1);
    CHECK(s.m.norm() > 0.0);
  }

  SUBCASE("length mismatch rejected") {
    g::Vec p = g::Vec::Ones(2);
    g::AdamState s(2);
    CHECK_THROWS_AS(g::adam_step(p, g::Vec::Ones(3), s, 0.1), Error);
  }
}
