#pragma once

#include <array>
#include <cmath>

#include <Eigen/Dense>

namespace cg3d {

using Vec2 = Eigen::Vector2d;
using Vec3 = Eigen::Vector3d;
using Mat2 = Eigen::Matrix2d;
using Mat3 = Eigen::Matrix3d;

/// Quaternion stored as (w, x, y, z). Identity is (1, 0, 0, 0).
using Quat = Eigen::Vector4d;

inline constexpr double kPi = 3.14159265358979323846;

inline Quat identity_quat() { return Quat(1.0, 0.0, 0.0, 0.0); }

inline double deg_to_rad(double deg) { return deg * kPi / 180.0; }

/// Hamilton product a ⊗ b (apply b first, then a).
inline Quat quat_mul(const Quat& a, const Quat& b) {
  return Quat(a[0] * b[0] - a[1] * b[1] - a[2] * b[2] - a[3] * b[3],
              a[0] * b[1] + a[1] * b[0] + a[2] * b[3] - a[3] * b[2],
              a[0] * b[2] - a[1] * b[3] + a[2] * b[0] + a[3] * b[1],
              a[0] * b[3] + a[1] * b[2] - a[2] * b[1] + a[3] * b[0]);
}

inline Quat quat_conj(const Quat& q) { return Quat(q[0], -q[1], -q[2], -q[3]); }

inline Quat quat_from_axis_angle(const Vec3& axis, double angle) {
  const Vec3 a = axis.normalized();
  const double h = 0.5 * angle;
  return Quat(std::cos(h), a.x() * std::sin(h), a.y() * std::sin(h), a.z() * std::sin(h));
}

/// Rotation matrix of the unit quaternion q/|q|. Division by |q| is exact for |q| == 1.
Mat3 quat_to_matrix(const Quat& q);

/// Partial derivatives of the rotation matrix R(q) with respect to (w, x, y, z),
/// treating q as already unit-norm.
std::array<Mat3, 4> rotation_jacobian(const Quat& q);

/// Maps dL/dR (for R = R(q/|q|)) to dL/dq, including the normalization.
Quat rotation_grad_to_quat(const Quat& q, const Mat3& d_rotation);

/// Similarity x -> scale * R(rotation) * x + translation.
struct Similarity {
  Quat rotation = identity_quat();
  Vec3 translation = Vec3::Zero();
  double scale = 1.0;

  Vec3 apply(const Vec3& x) const { return scale * (quat_to_matrix(rotation) * x) + translation; }
  Mat3 linear() const { return scale * quat_to_matrix(rotation); }

  /// (this ∘ inner)(x) = this(inner(x)).
  Similarity compose(const Similarity& inner) const;
  Similarity inverse() const;
};

}  // namespace cg3d
