#include "cg3d/math.hpp"

namespace cg3d {

Mat3 quat_to_matrix(const Quat& q) {
  const double n = q.norm();
  const double w = q[0] / n, x = q[1] / n, y = q[2] / n, z = q[3] / n;
  Mat3 r;
  r << 1.0 - 2.0 * (y * y + z * z), 2.0 * (x * y - w * z), 2.0 * (x * z + w * y),
      2.0 * (x * y + w * z), 1.0 - 2.0 * (x * x + z * z), 2.0 * (y * z - w * x),
      2.0 * (x * z - w * y), 2.0 * (y * z + w * x), 1.0 - 2.0 * (x * x + y * y);
  return r;
}

std::array<Mat3, 4> rotation_jacobian(const Quat& q) {
  const double w = q[0], x = q[1], y = q[2], z = q[3];
  std::array<Mat3, 4> d;
  d[0] << 0.0, -z, y, z, 0.0, -x, -y, x, 0.0;
  d[1] << 0.0, y, z, y, -2.0 * x, -w, z, w, -2.0 * x;
  d[2] << -2.0 * y, x, w, x, 0.0, z, -w, z, -2.0 * y;
  d[3] << -2.0 * z, -w, x, w, -2.0 * z, y, x, y, 0.0;
  for (auto& m : d) m *= 2.0;
  return d;
}

Quat rotation_grad_to_quat(const Quat& q, const Mat3& d_rotation) {
  const double n = q.norm();
  const Quat u = q / n;
  const auto jac = rotation_jacobian(u);
  Quat d_unit;
  for (int c = 0; c < 4; ++c) d_unit[c] = (jac[c].array() * d_rotation.array()).sum();
  // Chain through u = q / |q|.
  return (d_unit - u * u.dot(d_unit)) / n;
}

Similarity Similarity::compose(const Similarity& inner) const {
  Similarity out;
  out.rotation = quat_mul(rotation, inner.rotation);
  out.scale = scale * inner.scale;
  out.translation = scale * (quat_to_matrix(rotation) * inner.translation) + translation;
  return out;
}

Similarity Similarity::inverse() const {
  Similarity out;
  out.rotation = quat_conj(rotation) / rotation.squaredNorm();
  out.scale = 1.0 / scale;
  out.translation = -(quat_to_matrix(out.rotation) * translation) / scale;
  return out;
}

}  // namespace cg3d
