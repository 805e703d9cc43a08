#include <cmath>

#include "cg3d/simd.hpp"

namespace cg3d::simd {
namespace {

double blend_span(const Splat& s, int y, int x0, int n, SpanBuffers px, double min_t, bool cutoff) {
  const double dy = static_cast<double>(y) - s.my;
  double weight = 0.0;
  for (int i = 0; i < n; ++i) {
    const double t = px.transmittance[i];
    if (t < min_t) continue;
    const double dx = static_cast<double>(x0 + i) - s.mx;
    const double power = -0.5 * (s.ca * dx * dx + s.cc * dy * dy) - s.cb * dx * dy;
    if (cutoff && power < -4.5) continue;
    const double alpha = s.opacity * std::exp(power);
    const double w = alpha * t;
    px.r[i] += w * s.r;
    px.g[i] += w * s.g;
    px.b[i] += w * s.b;
    px.transmittance[i] = t * (1.0 - alpha);
    weight += w;
  }
  return weight;
}

std::size_t fps_update(const double* xs, const double* ys, const double* zs, std::size_t n, double qx, double qy,
                       double qz, double* min_d2) {
  std::size_t best = 0;
  double best_d = -1.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double dx = xs[i] - qx, dy = ys[i] - qy, dz = zs[i] - qz;
    const double d = dx * dx + dy * dy + dz * dz;
    if (d < min_d2[i]) min_d2[i] = d;
    if (min_d2[i] > best_d) {
      best_d = min_d2[i];
      best = i;
    }
  }
  return best;
}

std::size_t nearest(const double* xs, const double* ys, const double* zs, std::size_t n, double qx, double qy,
                    double qz, double* best_d2) {
  std::size_t best = 0;
  double best_d = INFINITY;
  for (std::size_t i = 0; i < n; ++i) {
    const double dx = xs[i] - qx, dy = ys[i] - qy, dz = zs[i] - qz;
    const double d = dx * dx + dy * dy + dz * dz;
    if (d < best_d) {
      best_d = d;
      best = i;
    }
  }
  *best_d2 = best_d;
  return best;
}

}  // namespace

namespace detail {
const Kernels kScalarKernels{&blend_span, &fps_update, &nearest};
}

}  // namespace cg3d::simd
