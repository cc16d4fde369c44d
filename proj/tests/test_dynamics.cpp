#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <random>

#include "doctest.h"
#include "quadlearn/dynamics.hpp"

using namespace quadlearn;

namespace {

QuadState perturbed_hover_state() {
  QuadState x;
  x.v = Vec3(0.3, -0.2, 0.1);
  x.q = quat_from_axis_angle(Vec3(1, 2, 3), 0.2);
  x.omega = Vec3(1.0, -0.5, 0.8);
  return x;
}

bool bitwise_equal(const StateDerivative& a, const StateDerivative& b) {
  return pack_derivative(a) == pack_derivative(b);
}

}  // namespace

TEST_CASE("thrust_torque oracle values") {
  const NominalParams p;

  SUBCASE("equal speeds give pure thrust") {
    const auto [f, tau] = thrust_torque(Control::Constant(500.0), p);
    CHECK(f == doctest::Approx(4.0 * p.k_f * 500.0 * 500.0).epsilon(1e-15));
    CHECK(tau.norm() == 0.0);
  }

  SUBCASE("front pair at 1000 rpm") {
    const auto [f, tau] = thrust_torque(Control(1000, 1000, 0, 0), p);
    CHECK(f == doctest::Approx(8.76e-3).epsilon(1e-12));
    CHECK(tau.x() == doctest::Approx(6.6576e-4).epsilon(1e-12));
    CHECK(tau.y() == doctest::Approx(0.0));
    CHECK(tau.z() == doctest::Approx(0.0));
  }

  SUBCASE("zero input") {
    const auto [f, tau] = thrust_torque(Control::Zero(), p);
    CHECK(f == 0.0);
    CHECK(tau.norm() == 0.0);
  }

  SUBCASE("negative speed rejected") {
    CHECK_THROWS_AS(thrust_torque(Control(1, -1, 1, 1), p), Error);
  }
}

TEST_CASE("motor permutation 0<->2, 1<->3 flips tau_x, tau_y only") {
  const NominalParams p;
  const Control u(100, 200, 300, 400);  // squares exactly representable
  const Control perm(300, 400, 100, 200);
  const auto [f, tau] = thrust_torque(u, p);
  const auto [fp, taup] = thrust_torque(perm, p);
  CHECK(f == fp);
  CHECK(taup.x() == -tau.x());
  CHECK(taup.y() == -tau.y());
  CHECK(taup.z() == tau.z());
}

TEST_CASE("nominal_derivative rows") {
  const NominalParams p;

  SUBCASE("free fall at rest") {
    QuadState x;
    const StateDerivative d = nominal_derivative(x, Control::Zero(), p);
    CHECK(d.dp.norm() == 0.0);
    CHECK((d.dv - Vec3(0, 0, -p.g)).norm() == 0.0);
    CHECK(d.dq.norm() == 0.0);
    CHECK(d.domega.norm() == 0.0);
  }

  SUBCASE("hover equilibrium") {
    QuadState x;
    const StateDerivative d = nominal_derivative(x, hover_input(p), p);
    CHECK(d.dv.norm() < 1e-12);
    CHECK(d.domega.norm() < 1e-12);
  }

  SUBCASE("gyroscopic term against hand evaluation") {
    QuadState x;
    x.omega = Vec3(1.5, -2.0, 0.7);
    const StateDerivative d = nominal_derivative(x, Control::Zero(), p);
    const Vec3 Jw(p.J.x() * 1.5, p.J.y() * -2.0, p.J.z() * 0.7);
    const Vec3 cross = x.omega.cross(Jw);
    const Vec3 expected(-cross.x() / p.J.x(), -cross.y() / p.J.y(), -cross.z() / p.J.z());
    CHECK((d.domega - expected).norm() < 1e-15);
  }

  SUBCASE("yaw input pair, independent four-line evaluation") {
    QuadState x;
    const double w = 9000.0;
    const Control u(w, 0, w, 0);
    const StateDerivative d = nominal_derivative(x, u, p);
    const double u2 = w * w;
    const double tau_x = p.k_f * p.l * (u2 - u2);
    const double tau_y = p.k_f * p.l * (-u2 + u2);
    const double tau_z = p.k_tau * (u2 + u2);
    CHECK(d.domega.x() == doctest::Approx(tau_x / p.J.x()));
    CHECK(d.domega.y() == doctest::Approx(tau_y / p.J.y()));
    CHECK(d.domega.x() == d.domega.y());
    CHECK(d.domega.z() == doctest::Approx(tau_z / p.J.z()).epsilon(1e-12));
  }

  SUBCASE("tilted attitude redirects thrust") {
    QuadState x;
    x.q = quat_from_axis_angle(Vec3::UnitY(), M_PI / 2.0);  // body z -> world x
    const Control u = hover_input(p);
    const StateDerivative d = nominal_derivative(x, u, p);
    CHECK(d.dv.x() == doctest::Approx(p.g).epsilon(1e-9));
    CHECK(d.dv.z() == doctest::Approx(-p.g).epsilon(1e-9));
  }
}

TEST_CASE("residual_derivative") {
  const NominalParams p;
  std::mt19937_64 rng(3);
  std::normal_distribution<double> n(0.0, 1.0);

  SUBCASE("zero residuals reduce bitwise to nominal") {
    for (int i = 0; i < 10; ++i) {
      QuadState x;
      x.p = Vec3(n(rng), n(rng), n(rng));
      x.v = Vec3(n(rng), n(rng), n(rng));
      x.q = quat_normalize(Quat(n(rng), n(rng), n(rng), n(rng)));
      x.omega = Vec3(n(rng), n(rng), n(rng));
      const Control u = Control::Constant(5000.0) + Control(n(rng), n(rng), n(rng), n(rng));
      CHECK(bitwise_equal(residual_derivative(x, u, p, Vec3::Zero(), Vec3::Zero()),
                          nominal_derivative(x, u, p)));
    }
  }

  SUBCASE("extra downward force at hover") {
    QuadState x;
    const double g_extra = 1.7;
    const StateDerivative d = residual_derivative(x, hover_input(p), p,
                                                  Vec3(0, 0, -p.m * g_extra), Vec3::Zero());
    CHECK(d.dv.z() == doctest::Approx(-g_extra).epsilon(1e-12));
    CHECK(std::abs(d.dv.x()) < 1e-12);
  }

  SUBCASE("pure roll torque residual at rest") {
    QuadState x;
    const double c = 2.4e-3;
    const StateDerivative d =
        residual_derivative(x, Control::Zero(), p, Vec3::Zero(), Vec3(c, 0, 0));
    CHECK(d.domega.x() == doctest::Approx(c / p.J.x()).epsilon(1e-15));
    CHECK(d.domega.y() == 0.0);
    CHECK(d.domega.z() == 0.0);
  }
}

TEST_CASE("true_plant_derivative") {
  const NominalParams p;

  SUBCASE("zero aero reduces bitwise to nominal") {
    std::mt19937_64 rng(5);
    std::normal_distribution<double> n(0.0, 1.0);
    for (int i = 0; i < 10; ++i) {
      QuadState x;
      x.v = Vec3(n(rng), n(rng), n(rng));
      x.q = quat_normalize(Quat(n(rng), n(rng), n(rng), n(rng)));
      x.omega = Vec3(n(rng), n(rng), n(rng));
      const Control u = Control::Constant(7000.0);
      CHECK(bitwise_equal(true_plant_derivative(x, u, p, AeroParams{}),
                          nominal_derivative(x, u, p)));
    }
  }

  SUBCASE("linear drag at identity attitude") {
    QuadState x;
    x.v = Vec3(1, 0, 0);
    AeroParams a;
    a.d_lin = Vec3::Constant(0.3);
    const StateDerivative d = true_plant_derivative(x, hover_input(p), p, a);
    const StateDerivative nom = nominal_derivative(x, hover_input(p), p);
    CHECK(d.dv.x() == doctest::Approx(nom.dv.x() - 0.3).epsilon(1e-12));
  }

  SUBCASE("rotational damping") {
    QuadState x;
    x.omega = Vec3(0, 0, 1);
    AeroParams a;
    a.d_omega = Vec3(0, 0, 0.2);
    const StateDerivative d = true_plant_derivative(x, Control::Zero(), p, a);
    CHECK(d.domega.z() == doctest::Approx(-0.2).epsilon(1e-12));
  }

  SUBCASE("thrust sag reduces climb acceleration") {
    QuadState x;
    x.v = Vec3(4, 0, 0);
    AeroParams a;
    a.thrust_sag = 0.05;
    const StateDerivative d = true_plant_derivative(x, hover_input(p), p, a);
    const double expected = p.g / (1.0 + 0.05 * 4.0) - p.g;
    CHECK(d.dv.z() == doctest::Approx(expected).epsilon(1e-9));
  }
}

TEST_CASE("hover_input") {
  NominalParams p;

  SUBCASE("table defaults give ~11831 rpm and cancel gravity") {
    const Control u = hover_input(p);
    CHECK(u(0) == doctest::Approx(11831.43).epsilon(1e-5));
    CHECK(4.0 * p.k_f * u(0) * u(0) == doctest::Approx(p.m * p.g).epsilon(1e-12));
  }

  SUBCASE("square root scaling laws") {
    const double base = hover_input(p)(0);
    NominalParams heavier = p;
    heavier.m *= 2.0;
    heavier.u_max = 30000.0;
    CHECK(hover_input(heavier)(0) == doctest::Approx(base * std::sqrt(2.0)).epsilon(1e-12));
    NominalParams stronger = p;
    stronger.k_f *= 4.0;
    CHECK(hover_input(stronger)(0) == doctest::Approx(base / 2.0).epsilon(1e-12));
  }

  SUBCASE("infeasible when ceiling too low") {
    NominalParams weak = p;
    weak.u_max = 5000.0;
    CHECK_THROWS_WITH_AS(hover_input(weak), doctest::Contains("infeasible-params"), Error);
  }
}

TEST_CASE("rk4_step") {
  const NominalParams p;

  SUBCASE("zero derivative leaves identity-attitude state unchanged") {
    QuadState x;
    x.p = Vec3(1, 2, 3);
    x.v = Vec3(-1, 0.5, 0);
    x.omega = Vec3(0.1, 0.2, 0.3);
    const auto zero = [](const QuadState&, const Control&) { return StateDerivative{}; };
    const QuadState y = rk4_step(zero, x, Control::Zero(), 0.01);
    CHECK((pack_state(y) - pack_state(x)).norm() == 0.0);
  }

  SUBCASE("scalar exponential ODE embedded in p_x") {
    const auto f = [](const QuadState& s, const Control&) {
      StateDerivative d;
      d.dp.x() = s.p.x();
      return d;
    };
    QuadState x;
    x.p.x() = 1.0;
    const QuadState y = rk4_step(f, x, Control::Zero(), 0.1);
    CHECK(y.p.x() == doctest::Approx(1.1051708333333333).epsilon(1e-12));
    CHECK(std::abs(y.p.x() - std::exp(0.1)) < 1e-7);
  }

  SUBCASE("convergence order >= 3.7 on perturbed hover") {
    const Control u = hover_input(p).cwiseProduct(Control(1.05, 0.98, 1.03, 0.97));
    const auto f = [&](const QuadState& s, const Control& uu) {
      return nominal_derivative(s, uu, p);
    };
    auto rollout = [&](double dt) {
      QuadState x = perturbed_hover_state();
      const int steps = static_cast<int>(std::round(1.0 / dt));
      for (int i = 0; i < steps; ++i) x = rk4_step(f, x, u, dt);
      return pack_state(x);
    };
    const Vec13 a = rollout(4e-3);
    const Vec13 b = rollout(2e-3);
    const Vec13 c = rollout(1e-3);
    const double order = std::log2((a - b).norm() / (b - c).norm());
    CHECK(order >= 3.7);
    CHECK(order <= 4.5);
  }

  SUBCASE("quaternion norm stays within 1e-9 of 1 over a long rollout") {
    const Control u = hover_input(p).cwiseProduct(Control(1.02, 0.99, 1.01, 0.98));
    const auto f = [&](const QuadState& s, const Control& uu) {
      return nominal_derivative(s, uu, p);
    };
    QuadState x = perturbed_hover_state();
    for (int i = 0; i < 2000; ++i) {
      x = rk4_step(f, x, u, 1e-3);
      CHECK(std::abs(x.q.norm() - 1.0) < 1e-9);
    }
  }

  SUBCASE("free-fall energy invariant over 1 s") {
    const NominalParams pp;
    const auto f = [&](const QuadState& s, const Control& uu) {
      return true_plant_derivative(s, uu, pp, AeroParams{});
    };
    QuadState x;
    x.v = Vec3(2.0, 1.0, 0.5);
    x.omega = Vec3(0.5, -1.0, 2.0);
    const double e0 = x.v.squaredNorm() + 2.0 * pp.g * x.p.z();
    for (int i = 0; i < 1000; ++i) {
      x = rk4_step(f, x, Control::Zero(), 1e-3);
      const double e = x.v.squaredNorm() + 2.0 * pp.g * x.p.z();
      CHECK(std::abs(e - e0) < 1e-6);
    }
  }

  SUBCASE("invalid dt and divergence detection") {
    const auto f = [&](const QuadState& s, const Control& uu) {
      return nominal_derivative(s, uu, p);
    };
    QuadState x;
    CHECK_THROWS_AS(rk4_step(f, x, Control::Zero(), 0.0), Error);
    const auto blowup = [](const QuadState&, const Control&) {
      StateDerivative d;
      d.dv.x() = std::numeric_limits<double>::infinity();
      return d;
    };
    CHECK_THROWS_WITH_AS(rk4_step(blowup, x, Control::Zero(), 0.01),
                         doctest::Contains("integration-diverged"), Error);
  }
}

TEST_CASE("state packing round trip") {
  QuadState x;
  x.p = Vec3(1, -2, 3);
  x.v = Vec3(0.5, 0.25, -0.125);
  x.q = quat_normalize(Quat(0.9, 0.1, -0.2, 0.3));
  x.omega = Vec3(-4, 5, -6);
  const QuadState y = unpack_state(pack_state(x));
  CHECK((pack_state(y) - pack_state(x)).norm() == 0.0);
  CHECK(y.q.w == x.q.w);
}
