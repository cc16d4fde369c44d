#pragma once

#include <functional>
#include <utility>

#include "quadlearn/quat.hpp"
#include "quadlearn/types.hpp"

namespace quadlearn {

// Collective thrust [N] and body torque [N m] produced by motor speeds u
// [rpm] on an X-configured frame.  Rotors 0/1 spin opposite to 2/3:
//   f     = k_f * sum(u_i^2)
//   tau_x = k_f * l * (u_0^2 + u_1^2 - u_2^2 - u_3^2)
//   tau_y = k_f * l * (-u_0^2 + u_1^2 + u_2^2 - u_3^2)
//   tau_z = k_tau * (u_0^2 - u_1^2 + u_2^2 - u_3^2)
// Throws invalid-argument for negative motor speeds.
std::pair<double, Vec3> thrust_torque(const Control& u, const NominalParams& p);

// Rigid-body model with ideal rotors: Newton-Euler translation plus Euler
// equations with the gyroscopic term, gravity (0, 0, -g).
StateDerivative nominal_derivative(const QuadState& x, const Control& u,
                                   const NominalParams& p);

// Nominal model augmented by a learned correction: f_res is an extra
// body-frame force [N], tau_res an extra body torque [N m].  Zero residuals
// reproduce nominal_derivative exactly.
StateDerivative residual_derivative(const QuadState& x, const Control& u,
                                    const NominalParams& p, const Vec3& f_res,
                                    const Vec3& tau_res);

// Simulated plant: nominal dynamics plus body-frame linear/quadratic drag,
// rotational damping and airspeed-dependent thrust sag.  Zero AeroParams
// reproduce nominal_derivative exactly.
StateDerivative true_plant_derivative(const QuadState& x, const Control& u,
                                      const NominalParams& p, const AeroParams& a);

// Motor speed at which four identical rotors cancel gravity.  Throws
// infeasible-params if the result exceeds u_max or the params are degenerate.
Control hover_input(const NominalParams& p);

using DerivFn = std::function<StateDerivative(const QuadState&, const Control&)>;

// Classic RK4 with zero-order-hold input; renormalizes the quaternion after
// the step.  Throws integration-diverged on non-finite results.
QuadState rk4_step(const DerivFn& f, const QuadState& x, const Control& u, double dt);

}  // namespace quadlearn
