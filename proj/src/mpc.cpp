#include "quadlearn/mpc.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>

#include "quadlearn/errors.hpp"
#include "quadlearn/quat.hpp"

namespace quadlearn {

namespace {

Vec13 pack(const QuadState& x) { return pack_state(x); }

QuadState unpack(const Vec13& z) { return unpack_state(z); }

// d(q/|q|)/dq at q: (I - n n') / |q| with n = q/|q|.
Eigen::Matrix4d normalize_jacobian(const Vec4& q) {
  const double n = q.norm();
  const Vec4 unit = q / n;
  return (Eigen::Matrix4d::Identity() - unit * unit.transpose()) / n;
}

// d(1/2 q x (0, w))/dq and /dw for unit q (q = (w,x,y,z)).
void quat_rate_jacobians(const Quat& q, const Vec3& w, Eigen::Matrix4d& dq,
                         Eigen::Matrix<double, 4, 3>& dw) {
  dq << 0.0, -w.x(), -w.y(), -w.z(),  //
      w.x(), 0.0, w.z(), -w.y(),      //
      w.y(), -w.z(), 0.0, w.x(),      //
      w.z(), w.y(), -w.x(), 0.0;
  dq *= 0.5;
  dw << -q.x, -q.y, -q.z,  //
      q.w, -q.z, q.y,      //
      q.z, q.w, -q.x,      //
      -q.y, q.x, q.w;
  dw *= 0.5;
}

}  // namespace

void MpcBackend::linearize(const QuadState& x, const Control& u, double dt, Mat13& A,
                           Mat13x4& B) const {
  const Vec13 x0 = pack(x);
  for (int i = 0; i < 13; ++i) {
    const double h = 1e-6 * std::max(1.0, std::abs(x0(i)));
    Vec13 xp = x0, xm = x0;
    xp(i) += h;
    xm(i) -= h;
    A.col(i) = (pack(step(unpack(xp), u, dt)) - pack(step(unpack(xm), u, dt))) / (2.0 * h);
  }
  for (int i = 0; i < 4; ++i) {
    const double h = 1e-6 * std::max(1.0, std::abs(u(i)));
    Control up = u, um = u;
    up(i) += h;
    um(i) = std::max(um(i) - h, 0.0);  // motor speeds cannot go negative
    B.col(i) = (pack(step(x, up, dt)) - pack(step(x, um, dt))) / (up(i) - um(i));
  }
}

QuadState NominalBackend::step(const QuadState& x, const Control& u, double dt) const {
  return rk4_step(
      [this](const QuadState& s, const Control& c) {
        return nominal_derivative(s, c, params_);
      },
      x, u, dt);
}

QuadState TruePlantBackend::step(const QuadState& x, const Control& u, double dt) const {
  return rk4_step(
      [this](const QuadState& s, const Control& c) {
        return true_plant_derivative(s, c, params_, aero_);
      },
      x, u, dt);
}

LearnedBackend::LearnedBackend(const Model& model) : model_(model) {
  if (model.spec.T != 1) {
    throw invalid_argument_error("learned MPC backend needs a T=1 model, got T=" +
                                 std::to_string(model.spec.T));
  }
  if (model.spec.kind == ModelKind::RESTCN) {
    throw invalid_argument_error(
        "residual-composition models are not supported as MPC backends");
  }
}

std::string LearnedBackend::name() const {
  return "learned-" + kind_to_string(model_.spec.kind);
}

QuadState LearnedBackend::step(const QuadState& x, const Control& u, double dt) const {
  return rk4_step(
      [this](const QuadState& s, const Control& c) {
        grad::Mat X(10, 1), U(4, 1);
        X << s.v, s.q.coeffs(), s.omega;
        U = c;
        return predict_derivative(model_, X, U);
      },
      x, u, dt);
}

void LearnedBackend::linearize(const QuadState& x, const Control& u, double dt, Mat13& A,
                               Mat13x4& B) const {
  // Continuous-time Jacobian of the predicted derivative at one state.
  const auto df = [this](const QuadState& s, const Control& c, Mat13& Dx, Mat13x4& Du) {
    grad::Mat window(14, 1);
    window << s.v, s.q.coeffs(), s.omega, c * model_.spec.motor_scale;
    const auto Jn = input_jacobian(model_, window);  // 6 x 14

    Dx.setZero();
    Du.setZero();
    Dx.block<3, 3>(0, 3).setIdentity();  // dp = v
    Dx.block<3, 3>(3, 3) = Jn.block<3, 3>(0, 0);
    Dx.block<3, 4>(3, 6) = Jn.block<3, 4>(0, 3);
    Dx.block<3, 3>(3, 10) = Jn.block<3, 3>(0, 7);
    Du.block<3, 4>(3, 0) = Jn.block<3, 4>(0, 10) * model_.spec.motor_scale;
    Dx.block<3, 3>(10, 3) = Jn.block<3, 3>(3, 0);
    Dx.block<3, 4>(10, 6) = Jn.block<3, 4>(3, 3);
    Dx.block<3, 3>(10, 10) = Jn.block<3, 3>(3, 7);
    Du.block<3, 4>(10, 0) = Jn.block<3, 4>(3, 10) * model_.spec.motor_scale;

    // dq = 1/2 normalize(q) x (0, omega)
    const Quat qn = quat_normalize(s.q);
    Eigen::Matrix4d dq_dq;
    Eigen::Matrix<double, 4, 3> dq_dw;
    quat_rate_jacobians(qn, s.omega, dq_dq, dq_dw);
    Dx.block<4, 4>(6, 6) = dq_dq * normalize_jacobian(s.q.coeffs());
    Dx.block<4, 3>(6, 10) = dq_dw;
  };

  const auto f = [this](const QuadState& s, const Control& c) {
    grad::Mat X(10, 1), U(4, 1);
    X << s.v, s.q.coeffs(), s.omega;
    U = c;
    return predict_derivative(model_, X, U);
  };

  const double h = dt;
  const Vec13 x0 = pack(x);

  Mat13 D1x, D2x, D3x, D4x;
  Mat13x4 D1u, D2u, D3u, D4u;

  const Vec13 k1 = pack_derivative(f(x, u));
  df(x, u, D1x, D1u);

  const QuadState x2 = unpack(x0 + 0.5 * h * k1);
  const Vec13 k2 = pack_derivative(f(x2, u));
  Mat13 Fx;
  Mat13x4 Fu;
  df(x2, u, Fx, Fu);
  D2x = Fx * (Mat13::Identity() + 0.5 * h * D1x);
  D2u = Fx * (0.5 * h * D1u) + Fu;

  const QuadState x3 = unpack(x0 + 0.5 * h * k2);
  const Vec13 k3 = pack_derivative(f(x3, u));
  df(x3, u, Fx, Fu);
  D3x = Fx * (Mat13::Identity() + 0.5 * h * D2x);
  D3u = Fx * (0.5 * h * D2u) + Fu;

  const QuadState x4 = unpack(x0 + h * k3);
  const Vec13 k4 = pack_derivative(f(x4, u));
  df(x4, u, Fx, Fu);
  D4x = Fx * (Mat13::Identity() + h * D3x);
  D4u = Fx * (h * D3u) + Fu;

  A = Mat13::Identity() + (h / 6.0) * (D1x + 2.0 * D2x + 2.0 * D3x + D4x);
  B = (h / 6.0) * (D1u + 2.0 * D2u + 2.0 * D3u + D4u);

  // rk4_step renormalizes the quaternion; chain that projection through the
  // q rows.
  const Vec13 raw_next =
      x0 + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
  const Eigen::Matrix4d Pn = normalize_jacobian(raw_next.segment<4>(6));
  A.middleRows<4>(6) = Pn * A.middleRows<4>(6);
  B.middleRows<4>(6) = Pn * B.middleRows<4>(6);
}

Vec13 MpcConfig::default_state_weights() {
  Vec13 w;
  w << 20.0, 20.0, 20.0,      // position
      2.0, 2.0, 2.0,          // velocity
      1.0, 1.0, 1.0, 1.0,     // attitude quaternion
      0.1, 0.1, 0.1;          // body rates
  return w;
}

void MpcConfig::validate() const {
  if (N < 1) throw invalid_config_error("mpc horizon N must be >= 1");
  if (!(horizon_s > 0.0)) throw invalid_config_error("mpc horizon length must be positive");
  if ((q_x.array() < 0.0).any() || (q_u.array() < 0.0).any()) {
    throw invalid_config_error("mpc weights must be non-negative");
  }
  if (!(u_min >= 0.0) || !(u_max > u_min)) {
    throw invalid_config_error("mpc input bounds must satisfy 0 <= u_min < u_max");
  }
  if (max_iterations < 1) throw invalid_config_error("mpc needs at least one iteration");
  if (!(lm_mu0 > 0.0) || !(lm_factor > 1.0) || lm_max_adjust < 1) {
    throw invalid_config_error("mpc LM parameters out of range");
  }
}

Vec13 state_error(const QuadState& x, const QuadState& ref) {
  Vec13 e;
  e.segment<3>(0) = x.p - ref.p;
  e.segment<3>(3) = x.v - ref.v;
  Vec4 q = x.q.coeffs();
  if (q.dot(ref.q.coeffs()) < 0.0) q = -q;
  e.segment<4>(6) = q - ref.q.coeffs();
  e.segment<3>(10) = x.omega - ref.omega;
  return e;
}

double mpc_cost(const std::vector<QuadState>& states, const std::vector<Control>& inputs,
                const MpcProblem& problem, const MpcConfig& cfg) {
  const std::size_t n = inputs.size();
  if (states.size() != n + 1 || problem.x_ref.size() != n + 1 || problem.u_ref.size() != n) {
    throw invalid_argument_error("mpc cost called with misaligned sequences");
  }
  double c = 0.0;
  for (std::size_t i = 1; i <= n; ++i) {
    const Vec13 e = state_error(states[i], problem.x_ref[i]);
    c += 0.5 * e.dot(cfg.q_x.asDiagonal() * e);
  }
  for (std::size_t i = 0; i < n; ++i) {
    const Vec4 du = inputs[i] - problem.u_ref[i];
    c += 0.5 * du.dot(cfg.q_u.asDiagonal() * du);
  }
  return c;
}

std::vector<QuadState> rollout(const MpcBackend& backend, const QuadState& x0,
                               const std::vector<Control>& inputs, double dt) {
  std::vector<QuadState> states;
  states.reserve(inputs.size() + 1);
  states.push_back(x0);
  for (std::size_t i = 0; i < inputs.size(); ++i) {
    try {
      states.push_back(backend.step(states.back(), inputs[i], dt));
    } catch (const Error&) {
      throw rollout_diverged_error("rollout left the finite domain at step " +
                                   std::to_string(i));
    }
    if (!pack_state(states.back()).allFinite()) {
      throw rollout_diverged_error("rollout left the finite domain at step " +
                                   std::to_string(i));
    }
  }
  return states;
}

std::vector<Control> shift_warm_start(const std::vector<Control>& previous) {
  if (previous.empty()) throw invalid_argument_error("cannot shift an empty input plan");
  std::vector<Control> shifted(previous.begin() + 1, previous.end());
  shifted.push_back(previous.back());
  return shifted;
}

MpcProblem reference_problem(const TrajectorySpec& traj, double t0, const QuadState& x0,
                             const MpcConfig& cfg, const NominalParams& params) {
  MpcProblem p;
  p.x0 = x0;
  const double dt = cfg.dt();
  for (int i = 0; i <= cfg.N; ++i) {
    const double t = std::clamp(t0 + i * dt, 0.0, traj.duration);
    const Reference r = make_reference(traj, t, params);
    p.x_ref.push_back(r.state);
    if (i < cfg.N) p.u_ref.push_back(r.feedforward);
  }
  return p;
}

MpcSolution solve(const MpcBackend& backend, const MpcProblem& problem,
                  const MpcConfig& cfg, const std::vector<Control>& warm_start) {
  cfg.validate();
  const int N = cfg.N;
  if (static_cast<int>(warm_start.size()) != N) {
    throw invalid_argument_error("warm start length " + std::to_string(warm_start.size()) +
                                 " does not match horizon " + std::to_string(N));
  }
  if (static_cast<int>(problem.x_ref.size()) != N + 1 ||
      static_cast<int>(problem.u_ref.size()) != N) {
    throw invalid_argument_error("mpc problem references do not match the horizon");
  }
  const auto t_start = std::chrono::steady_clock::now();
  const double dt = cfg.dt();
  const int nz = 4 * N;

  const auto clamp_plan = [&](std::vector<Control> plan) {
    for (auto& u : plan) u = u.cwiseMax(cfg.u_min).cwiseMin(cfg.u_max);
    return plan;
  };

  MpcSolution sol;
  sol.u = clamp_plan(warm_start);
  sol.x = rollout(backend, problem.x0, sol.u, dt);
  sol.cost = mpc_cost(sol.x, sol.u, problem, cfg);
  sol.cost_trace.push_back(sol.cost);

  const Vec13 wx = cfg.q_x.cwiseSqrt();
  const Vec4 wu = cfg.q_u.cwiseSqrt();
  const int rows = 13 * N + 4 * N;
  Eigen::MatrixXd J(rows, nz);
  Eigen::VectorXd r(rows);

  double mu = cfg.lm_mu0;
  const int outer_cap = cfg.rti ? 1 : cfg.max_iterations;
  for (int iter = 0; iter < outer_cap; ++iter) {
    // Linearize the rollout: S = dx_i/dz accumulated stage by stage.
    J.setZero();
    Eigen::MatrixXd S = Eigen::MatrixXd::Zero(13, nz);
    Mat13 A;
    Mat13x4 B;
    for (int i = 0; i < N; ++i) {
      backend.linearize(sol.x[i], sol.u[i], dt, A, B);
      S = A * S;
      S.middleCols<4>(4 * i) += B;
      J.middleRows<13>(13 * i) = wx.asDiagonal() * S;
      r.segment<13>(13 * i) = wx.cwiseProduct(state_error(sol.x[i + 1], problem.x_ref[i + 1]));
      J.block<4, 4>(13 * N + 4 * i, 4 * i) = wu.asDiagonal();
      r.segment<4>(13 * N + 4 * i) = wu.cwiseProduct(sol.u[i] - problem.u_ref[i]);
    }

    const Eigen::MatrixXd JtJ = J.transpose() * J;
    const Eigen::VectorXd Jtr = J.transpose() * r;
    const Eigen::VectorXd diag = JtJ.diagonal().cwiseMax(1e-12);

    // Projected-gradient stationarity: at a box face only the feasible
    // component counts.  A KKT point is convergence, not a stall.
    double pg = 0.0;
    for (int i = 0; i < N; ++i) {
      for (int a = 0; a < 4; ++a) {
        const double g = Jtr(4 * i + a);
        const double u = sol.u[i](a);
        double c = g;
        if (u <= cfg.u_min && g > 0.0) c = 0.0;
        if (u >= cfg.u_max && g < 0.0) c = 0.0;
        pg = std::max(pg, std::abs(c));
      }
    }
    if (pg < 1e-9) break;

    bool accepted = false;
    for (int adjust = 0; adjust < cfg.lm_max_adjust; ++adjust) {
      Eigen::MatrixXd H = JtJ;
      H.diagonal() += mu * diag;
      const Eigen::VectorXd dz = H.ldlt().solve(-Jtr);

      std::vector<Control> candidate = sol.u;
      for (int i = 0; i < N; ++i) candidate[i] += dz.segment<4>(4 * i);
      candidate = clamp_plan(candidate);

      std::vector<QuadState> states;
      double cost = std::numeric_limits<double>::infinity();
      try {
        states = rollout(backend, problem.x0, candidate, dt);
        cost = mpc_cost(states, candidate, problem, cfg);
      } catch (const Error&) {
        // treat a diverging candidate like a cost increase
      }

      if (cost < sol.cost) {
        double step_norm = 0.0;
        for (int i = 0; i < N; ++i) {
          step_norm += (candidate[i] - sol.u[i]).squaredNorm();
        }
        const double decrease = sol.cost - cost;
        sol.u = std::move(candidate);
        sol.x = std::move(states);
        sol.cost = cost;
        sol.cost_trace.push_back(cost);
        mu = std::max(mu / cfg.lm_factor, 1e-12);
        accepted = true;
        ++sol.iterations;
        if (decrease < cfg.tol_cost || std::sqrt(step_norm) < cfg.tol_step) {
          iter = outer_cap;  // converged
        }
        break;
      }
      mu *= cfg.lm_factor;
    }
    if (!accepted) {
      sol.stalled = true;
      break;
    }
  }

  sol.solve_time_s =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t_start).count();
  return sol;
}

}  // namespace quadlearn
