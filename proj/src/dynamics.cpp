#include "quadlearn/dynamics.hpp"

namespace quadlearn {

std::pair<double, Vec3> thrust_torque(const Control& u, const NominalParams& p) {
  if ((u.array() < 0.0).any()) {
    throw invalid_argument_error("motor speeds must be non-negative");
  }
  const Vec4 u2 = u.array().square();
  const double f = p.k_f * u2.sum();
  Vec3 tau;
  tau.x() = p.k_f * p.l * (u2(0) + u2(1) - u2(2) - u2(3));
  tau.y() = p.k_f * p.l * (-u2(0) + u2(1) + u2(2) - u2(3));
  tau.z() = p.k_tau * (u2(0) - u2(1) + u2(2) - u2(3));
  return {f, tau};
}

namespace {

// Integrator stages hand in slightly off-unit quaternions, so the attitude is
// renormalized here before use.
StateDerivative rigid_body_derivative(const QuadState& x, const Vec3& force_body,
                                      const Vec3& tau, const NominalParams& p) {
  const Quat q = quat_normalize(x.q);
  StateDerivative d;
  d.dp = x.v;
  d.dv = quat_rotate(q, force_body) / p.m + Vec3(0.0, 0.0, -p.g);
  d.dq = quat_derivative(q, x.omega);
  const Vec3 Jw = p.J.cwiseProduct(x.omega);
  d.domega = (tau - x.omega.cross(Jw)).cwiseQuotient(p.J);
  return d;
}

}  // namespace

StateDerivative nominal_derivative(const QuadState& x, const Control& u,
                                   const NominalParams& p) {
  const auto [f, tau] = thrust_torque(u, p);
  return rigid_body_derivative(x, Vec3(0.0, 0.0, f), tau, p);
}

StateDerivative residual_derivative(const QuadState& x, const Control& u,
                                    const NominalParams& p, const Vec3& f_res,
                                    const Vec3& tau_res) {
  const auto [f, tau] = thrust_torque(u, p);
  return rigid_body_derivative(x, Vec3(0.0, 0.0, f) + f_res, tau + tau_res, p);
}

StateDerivative true_plant_derivative(const QuadState& x, const Control& u,
                                      const NominalParams& p, const AeroParams& a) {
  auto [f, tau] = thrust_torque(u, p);
  if (a.thrust_sag != 0.0) {
    f /= 1.0 + a.thrust_sag * x.v.norm();
  }
  StateDerivative d = rigid_body_derivative(x, Vec3(0.0, 0.0, f), tau, p);
  if (!a.d_lin.isZero(0.0) || !a.d_quad.isZero(0.0)) {
    const Quat q = quat_normalize(x.q);
    const Vec3 v_body = quat_rotate(quat_conjugate(q), x.v);
    const Vec3 drag_body = -a.d_lin.cwiseProduct(v_body) -
                           a.d_quad.cwiseProduct(v_body.cwiseProduct(v_body.cwiseAbs()));
    d.dv += quat_rotate(q, drag_body);
  }
  if (!a.d_omega.isZero(0.0)) {
    d.domega -= a.d_omega.cwiseProduct(x.omega);
  }
  return d;
}

Control hover_input(const NominalParams& p) {
  if (p.m <= 0.0 || p.k_f <= 0.0) {
    throw infeasible_params_error("hover requires positive mass and k_f");
  }
  const double u = std::sqrt(p.m * p.g / (4.0 * p.k_f));
  if (u > p.u_max) {
    throw infeasible_params_error("hover speed " + std::to_string(u) +
                                  " rpm exceeds u_max " + std::to_string(p.u_max));
  }
  return Control::Constant(u);
}

QuadState rk4_step(const DerivFn& f, const QuadState& x, const Control& u, double dt) {
  if (!(dt > 0.0)) {
    throw invalid_argument_error("rk4_step requires dt > 0");
  }
  auto advance = [](const QuadState& s, const StateDerivative& d, double h) {
    QuadState r;
    r.p = s.p + h * d.dp;
    r.v = s.v + h * d.dv;
    r.q = Quat::from_coeffs(s.q.coeffs() + h * d.dq);
    r.omega = s.omega + h * d.domega;
    return r;
  };

  auto checked = [](StateDerivative d) {
    if (!pack_derivative(d).allFinite()) {
      throw integration_diverged_error("non-finite stage derivative in rk4_step");
    }
    return d;
  };

  const StateDerivative k1 = checked(f(x, u));
  const StateDerivative k2 = checked(f(advance(x, k1, 0.5 * dt), u));
  const StateDerivative k3 = checked(f(advance(x, k2, 0.5 * dt), u));
  const StateDerivative k4 = checked(f(advance(x, k3, dt), u));

  QuadState out;
  out.p = x.p + dt / 6.0 * (k1.dp + 2.0 * k2.dp + 2.0 * k3.dp + k4.dp);
  out.v = x.v + dt / 6.0 * (k1.dv + 2.0 * k2.dv + 2.0 * k3.dv + k4.dv);
  out.q = Quat::from_coeffs(x.q.coeffs() +
                            dt / 6.0 * (k1.dq + 2.0 * k2.dq + 2.0 * k3.dq + k4.dq));
  out.omega = x.omega + dt / 6.0 * (k1.domega + 2.0 * k2.domega + 2.0 * k3.domega + k4.domega);

  const Vec13 packed = pack_state(out);
  if (!packed.allFinite()) {
    throw integration_diverged_error("non-finite state after rk4_step");
  }
  out.q = quat_normalize(out.q);
  return out;
}

}  // namespace quadlearn
