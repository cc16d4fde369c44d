#include "quadlearn/quat.hpp"

namespace quadlearn {

Quat quat_mul(const Quat& a, const Quat& b) {
  return Quat(a.w * b.w - a.x * b.x - a.y * b.y - a.z * b.z,
              a.w * b.x + a.x * b.w + a.y * b.z - a.z * b.y,
              a.w * b.y - a.x * b.z + a.y * b.w + a.z * b.x,
              a.w * b.z + a.x * b.y - a.y * b.x + a.z * b.w);
}

Quat quat_conjugate(const Quat& q) { return Quat(q.w, -q.x, -q.y, -q.z); }

Vec3 quat_rotate(const Quat& q, const Vec3& v) {
  if (std::abs(q.norm() - 1.0) > 1e-6) {
    throw invalid_argument_error("quat_rotate requires a unit quaternion, got norm " +
                                 std::to_string(q.norm()));
  }
  // v' = v + 2 w (u x v) + 2 u x (u x v) with u the vector part.
  const Vec3 u(q.x, q.y, q.z);
  const Vec3 uv = u.cross(v);
  return v + 2.0 * (q.w * uv + u.cross(uv));
}

Mat3 quat_to_rotation(const Quat& q) {
  const double w = q.w, x = q.x, y = q.y, z = q.z;
  Mat3 r;
  r << 1 - 2 * (y * y + z * z), 2 * (x * y - w * z), 2 * (x * z + w * y),
      2 * (x * y + w * z), 1 - 2 * (x * x + z * z), 2 * (y * z - w * x),
      2 * (x * z - w * y), 2 * (y * z + w * x), 1 - 2 * (x * x + y * y);
  return r;
}

Vec4 quat_derivative(const Quat& q, const Vec3& omega) {
  const Quat w(0.0, omega.x(), omega.y(), omega.z());
  const Quat d = quat_mul(q, w);
  return 0.5 * Vec4(d.w, d.x, d.y, d.z);
}

Quat quat_normalize(const Quat& q) {
  const double n = q.norm();
  if (n < 1e-12) {
    throw invalid_argument_error("cannot normalize near-zero quaternion");
  }
  return Quat(q.w / n, q.x / n, q.y / n, q.z / n);
}

Quat quat_canonicalize(const Quat& q) {
  if (q.w < 0.0) return Quat(-q.w, -q.x, -q.y, -q.z);
  return q;
}

Quat quat_from_axis_angle(const Vec3& axis, double angle) {
  const double n = axis.norm();
  if (n < 1e-12) {
    throw invalid_argument_error("axis-angle axis must be nonzero");
  }
  const Vec3 u = axis / n;
  const double h = 0.5 * angle;
  const double s = std::sin(h);
  return Quat(std::cos(h), s * u.x(), s * u.y(), s * u.z());
}

}  // namespace quadlearn
