#pragma once

#include <cmath>

#include <Eigen/Dense>

#include "quadlearn/errors.hpp"

namespace quadlearn {

using Vec3 = Eigen::Vector3d;
using Vec4 = Eigen::Vector4d;
using Vec6 = Eigen::Matrix<double, 6, 1>;
using Vec13 = Eigen::Matrix<double, 13, 1>;
using Mat3 = Eigen::Matrix3d;
using Mat6 = Eigen::Matrix<double, 6, 6>;

// Unit quaternion, scalar first.  Hamilton convention; rotates body -> world.
struct Quat {
  double w = 1.0, x = 0.0, y = 0.0, z = 0.0;

  Quat() = default;
  Quat(double w_, double x_, double y_, double z_) : w(w_), x(x_), y(y_), z(z_) {}

  double norm() const { return std::sqrt(w * w + x * x + y * y + z * z); }

  Vec4 coeffs() const { return Vec4(w, x, y, z); }
  static Quat from_coeffs(const Vec4& c) { return Quat(c(0), c(1), c(2), c(3)); }
};

// Motor speeds in rpm, one entry per rotor.
using Control = Vec4;

struct QuadState {
  Vec3 p = Vec3::Zero();   // position, world frame [m]
  Vec3 v = Vec3::Zero();   // velocity, world frame [m/s]
  Quat q;                  // attitude, body -> world
  Vec3 omega = Vec3::Zero();  // angular velocity, body frame [rad/s]
};

struct StateDerivative {
  Vec3 dp = Vec3::Zero();
  Vec3 dv = Vec3::Zero();
  Vec4 dq = Vec4::Zero();     // quaternion rate, (w, x, y, z) order
  Vec3 domega = Vec3::Zero();
};

// Rigid-body and rotor constants of the vehicle the controller and the
// physics prior believe in.  Defaults describe a 250 g racing-class frame.
struct NominalParams {
  double m = 0.25;                                  // mass [kg]
  Vec3 J = Vec3(6.01e-4, 5.89e-4, 1.076e-3);        // inertia diagonal [kg m^2]
  double k_f = 4.38e-9;                             // thrust coefficient [N rpm^-2]
  double k_tau = 3.97e-11;                          // drag torque coefficient [N m rpm^-2]
  double l = 0.076;                                 // arm length [m]
  double g = 9.81;                                  // gravity [m/s^2]
  double u_max = 16628.0;                           // motor speed ceiling [rpm]
};

// Effects present in the simulated plant but absent from the nominal model.
// All-zero coefficients make the plant identical to the nominal dynamics.
struct AeroParams {
  Vec3 d_lin = Vec3::Zero();    // linear body-frame drag [1/s]
  Vec3 d_quad = Vec3::Zero();   // quadratic body-frame drag [1/m]
  Vec3 d_omega = Vec3::Zero();  // rotational damping [1/s]
  double thrust_sag = 0.0;      // thrust loss per unit airspeed [s/m]

  bool is_zero() const {
    return d_lin.isZero(0.0) && d_quad.isZero(0.0) && d_omega.isZero(0.0) &&
           thrust_sag == 0.0;
  }
};

inline Vec13 pack_state(const QuadState& s) {
  Vec13 x;
  x.segment<3>(0) = s.p;
  x.segment<3>(3) = s.v;
  x.segment<4>(6) = s.q.coeffs();
  x.segment<3>(10) = s.omega;
  return x;
}

inline QuadState unpack_state(const Vec13& x) {
  QuadState s;
  s.p = x.segment<3>(0);
  s.v = x.segment<3>(3);
  s.q = Quat::from_coeffs(x.segment<4>(6));
  s.omega = x.segment<3>(10);
  return s;
}

inline Vec13 pack_derivative(const StateDerivative& d) {
  Vec13 x;
  x.segment<3>(0) = d.dp;
  x.segment<3>(3) = d.dv;
  x.segment<4>(6) = d.dq;
  x.segment<3>(10) = d.domega;
  return x;
}

}  // namespace quadlearn
