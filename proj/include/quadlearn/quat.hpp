#pragma once

#include "quadlearn/types.hpp"

namespace quadlearn {

// Hamilton product a * b.
Quat quat_mul(const Quat& a, const Quat& b);

Quat quat_conjugate(const Quat& q);

// Rotates a body-frame vector into the world frame.  Throws invalid-argument
// if q deviates from unit norm by more than 1e-6.
Vec3 quat_rotate(const Quat& q, const Vec3& v);

// Rotation matrix R(q) with R(q) v == quat_rotate(q, v).
Mat3 quat_to_rotation(const Quat& q);

// Kinematics dq/dt = 0.5 * q x (0, omega) with omega in the body frame.
Vec4 quat_derivative(const Quat& q, const Vec3& omega);

// Scales q back to unit norm.  Throws invalid-argument when the norm is too
// small to normalize meaningfully (< 1e-12).
Quat quat_normalize(const Quat& q);

// Flips the sign so that w >= 0, picking one representative of the double
// cover.  Used before differencing attitudes.
Quat quat_canonicalize(const Quat& q);

Quat quat_from_axis_angle(const Vec3& axis, double angle);

}  // namespace quadlearn
