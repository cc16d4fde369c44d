#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <random>

#include "doctest.h"
#include "quadlearn/quat.hpp"

using namespace quadlearn;

namespace {

Quat random_unit_quat(std::mt19937_64& rng) {
  std::normal_distribution<double> n(0.0, 1.0);
  return quat_normalize(Quat(n(rng), n(rng), n(rng), n(rng)));
}

}  // namespace

TEST_CASE("quat_mul matches rotation composition") {
  std::mt19937_64 rng(7);
  std::normal_distribution<double> n(0.0, 1.0);
  for (int i = 0; i < 20; ++i) {
    const Quat a = random_unit_quat(rng);
    const Quat b = random_unit_quat(rng);
    const Vec3 v(n(rng), n(rng), n(rng));
    const Vec3 lhs = quat_rotate(quat_mul(a, b), v);
    const Vec3 rhs = quat_rotate(a, quat_rotate(b, v));
    CHECK((lhs - rhs).norm() < 1e-12);
  }
}

TEST_CASE("quat_rotate matches rotation matrix and preserves norm") {
  std::mt19937_64 rng(11);
  std::normal_distribution<double> n(0.0, 1.0);
  for (int i = 0; i < 20; ++i) {
    const Quat q = random_unit_quat(rng);
    const Vec3 v(n(rng), n(rng), n(rng));
    const Vec3 r = quat_rotate(q, v);
    CHECK((r - quat_to_rotation(q) * v).norm() < 1e-12);
    CHECK(r.norm() == doctest::Approx(v.norm()).epsilon(1e-12));
  }
}

TEST_CASE("axis-angle quarter turn about z maps x to y") {
  const Quat q = quat_from_axis_angle(Vec3::UnitZ(), M_PI / 2.0);
  const Vec3 r = quat_rotate(q, Vec3::UnitX());
  CHECK((r - Vec3::UnitY()).norm() < 1e-12);
}

TEST_CASE("conjugate inverts the rotation") {
  std::mt19937_64 rng(13);
  std::normal_distribution<double> n(0.0, 1.0);
  const Quat q = random_unit_quat(rng);
  const Vec3 v(n(rng), n(rng), n(rng));
  CHECK((quat_rotate(quat_conjugate(q), quat_rotate(q, v)) - v).norm() < 1e-12);
}

TEST_CASE("quat_derivative is orthogonal to q and matches hand expansion") {
  const Quat q = quat_normalize(Quat(0.9, 0.1, -0.2, 0.3));
  const Vec3 w(0.4, -1.1, 2.0);
  const Vec4 dq = quat_derivative(q, w);
  CHECK(std::abs(dq.dot(q.coeffs())) < 1e-12);

  // 0.5 * q x (0, w) expanded by hand.
  const Vec4 expected =
      0.5 * Vec4(-q.x * w.x() - q.y * w.y() - q.z * w.z(),
                 q.w * w.x() + q.y * w.z() - q.z * w.y(),
                 q.w * w.y() - q.x * w.z() + q.z * w.x(),
                 q.w * w.z() + q.x * w.y() - q.y * w.x());
  CHECK((dq - expected).norm() < 1e-15);
}

TEST_CASE("quat_rotate rejects non-unit quaternions") {
  CHECK_THROWS_WITH_AS(quat_rotate(Quat(1.1, 0, 0, 0), Vec3::UnitX()),
                       doctest::Contains("invalid-argument"), Error);
  CHECK_NOTHROW(quat_rotate(Quat(1.0 + 5e-7, 0, 0, 0), Vec3::UnitX()));
}

TEST_CASE("quat_normalize and canonicalize") {
  const Quat q = quat_normalize(Quat(2, 0, 0, 0));
  CHECK(q.w == 1.0);
  CHECK_THROWS_AS(quat_normalize(Quat(0, 0, 0, 1e-13)), Error);

  const Quat c = quat_canonicalize(Quat(-0.5, 0.5, 0.5, -0.5));
  CHECK(c.w == 0.5);
  CHECK(c.x == -0.5);
  CHECK(c.z == 0.5);
  const Quat kept = quat_canonicalize(Quat(0.5, -0.5, 0.5, 0.5));
  CHECK(kept.x == -0.5);
}

TEST_CASE("identity behaves as the group identity") {
  const Quat id;
  const Quat q = quat_normalize(Quat(0.3, -0.5, 0.7, 0.2));
  const Quat prod = quat_mul(id, q);
  CHECK(prod.w == q.w);
  CHECK(prod.x == q.x);
  const Vec3 v(3, -1, 2);
  CHECK((quat_rotate(id, v) - v).norm() == 0.0);
}
