#pragma once

#include <memory>
#include <string>
#include <vector>

#include "quadlearn/dynamics.hpp"
#include "quadlearn/model.hpp"
#include "quadlearn/trajectory.hpp"
#include "quadlearn/types.hpp"

namespace quadlearn {

using Mat13 = Eigen::Matrix<double, 13, 13>;
using Mat13x4 = Eigen::Matrix<double, 13, 4>;

// One-step prediction model used inside the controller: x_{k+1} = step(x_k,
// u_k, dt) with its linearization.  The base linearize() runs central finite
// differences around step(); backends with cheap analytic Jacobians override.
class MpcBackend {
 public:
  virtual ~MpcBackend() = default;
  virtual std::string name() const = 0;
  virtual QuadState step(const QuadState& x, const Control& u, double dt) const = 0;
  virtual void linearize(const QuadState& x, const Control& u, double dt, Mat13& A,
                         Mat13x4& B) const;
};

// Ideal rigid-body model (what the controller believes by default).
class NominalBackend : public MpcBackend {
 public:
  explicit NominalBackend(const NominalParams& p) : params_(p) {}
  std::string name() const override { return "nominal"; }
  QuadState step(const QuadState& x, const Control& u, double dt) const override;

 private:
  NominalParams params_;
};

// Oracle: the controller predicts with the exact plant, aero effects and all.
class TruePlantBackend : public MpcBackend {
 public:
  TruePlantBackend(const NominalParams& p, const AeroParams& a) : params_(p), aero_(a) {}
  std::string name() const override { return "oracle"; }
  QuadState step(const QuadState& x, const Control& u, double dt) const override;

 private:
  NominalParams params_;
  AeroParams aero_;
};

// Learned dynamics wrapped in RK4.  Requires a T=1 model (the window is the
// live state, no history buffer to shift); the residual-composition kind is
// not supported here.  linearize() chains the tape's input Jacobian through
// the RK4 stages instead of differencing the network numerically.
class LearnedBackend : public MpcBackend {
 public:
  explicit LearnedBackend(const Model& model);
  std::string name() const override;
  QuadState step(const QuadState& x, const Control& u, double dt) const override;
  void linearize(const QuadState& x, const Control& u, double dt, Mat13& A,
                 Mat13x4& B) const override;

 private:
  const Model& model_;
};

struct MpcConfig {
  int N = 20;
  double horizon_s = 1.0;
  Vec13 q_x = default_state_weights();  // diagonal of Q_x
  Vec4 q_u = Vec4::Constant(1e-8);      // diagonal of Q_u (rpm^2 scale)
  double u_min = 0.0;
  double u_max = 16628.0;
  bool rti = false;         // one Gauss-Newton iteration per solve
  int max_iterations = 25;  // full-converge iteration cap
  double lm_mu0 = 1e-3;     // Levenberg-Marquardt damping start
  double lm_factor = 10.0;
  int lm_max_adjust = 8;    // damping escalations before declaring a stall
  double tol_cost = 1e-10;
  double tol_step = 1e-8;

  double dt() const { return horizon_s / N; }
  void validate() const;

  static Vec13 default_state_weights();
};

struct MpcProblem {
  QuadState x0;
  std::vector<QuadState> x_ref;  // N+1 entries, stage 0 through N
  std::vector<Control> u_ref;    // N entries
};

struct MpcSolution {
  std::vector<Control> u;       // N inputs, inside the box
  std::vector<QuadState> x;     // N+1 states from the backend rollout
  double cost = 0.0;
  int iterations = 0;
  double solve_time_s = 0.0;
  bool stalled = false;
  std::vector<double> cost_trace;  // cost after each accepted iteration
};

// 13-dim tracking error (p, v, q, omega); the quaternion block is an
// elementwise difference after flipping x's quaternion into the reference
// hemisphere, so q and -q are the same attitude.
Vec13 state_error(const QuadState& x, const QuadState& ref);

// Eq.-(7)-style quadratic: 1/2 sum_i e_i' Q_x e_i over stages 1..N plus
// 1/2 sum_i (u_i - u_ref_i)' Q_u (u_i - u_ref_i).
double mpc_cost(const std::vector<QuadState>& states, const std::vector<Control>& inputs,
                const MpcProblem& problem, const MpcConfig& cfg);

// Sequential backend steps; throws rollout-diverged naming the failing step.
std::vector<QuadState> rollout(const MpcBackend& backend, const QuadState& x0,
                               const std::vector<Control>& inputs, double dt);

// Single-shooting Gauss-Newton with Levenberg-Marquardt damping and box
// projection.  RTI mode runs exactly one linearization from the warm start.
// A stall (no damping level decreases the cost) returns the best iterate
// with `stalled` set.
MpcSolution solve(const MpcBackend& backend, const MpcProblem& problem,
                  const MpcConfig& cfg, const std::vector<Control>& warm_start);

// Reference preview along a trajectory starting at t0; times clamp to the
// trajectory's duration so the preview holds the endpoint.
MpcProblem reference_problem(const TrajectorySpec& traj, double t0, const QuadState& x0,
                             const MpcConfig& cfg, const NominalParams& params);

// Receding-horizon warm start: drop u_0, repeat the final input.
std::vector<Control> shift_warm_start(const std::vector<Control>& previous);

}  // namespace quadlearn
