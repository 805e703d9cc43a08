#pragma once

#include <random>
#include <vector>

#include "cg3d/field.hpp"

namespace cg3d::testing {

inline Quat random_quat(std::mt19937_64& rng) {
  std::normal_distribution<double> n(0.0, 1.0);
  Quat q(n(rng), n(rng), n(rng), n(rng));
  return q / q.norm();
}

inline std::vector<Gaussian> random_gaussians(std::mt19937_64& rng, std::size_t n, double extent = 1.0,
                                              double scale_lo = 0.03, double scale_hi = 0.2) {
  std::uniform_real_distribution<double> u(-extent, extent), s(scale_lo, scale_hi), c(0.0, 1.0);
  std::vector<Gaussian> out(n);
  for (auto& g : out) {
    g.mean = Vec3(u(rng), u(rng), u(rng));
    g.rotation = random_quat(rng);
    g.scale = Vec3(s(rng), s(rng), s(rng));
    g.opacity = 0.2 + 0.75 * c(rng);
    g.color = Vec3(c(rng), c(rng), c(rng));
  }
  return out;
}

/// Points on a sphere surface via a Fibonacci lattice; deterministic and nearly uniform.
inline std::vector<Vec3> fibonacci_sphere(std::size_t n, double radius, const Vec3& center = Vec3::Zero()) {
  std::vector<Vec3> pts(n);
  const double golden = kPi * (3.0 - std::sqrt(5.0));
  for (std::size_t i = 0; i < n; ++i) {
    const double y = 1.0 - 2.0 * (static_cast<double>(i) + 0.5) / static_cast<double>(n);
    const double r = std::sqrt(1.0 - y * y);
    const double phi = golden * static_cast<double>(i);
    pts[i] = center + radius * Vec3(r * std::cos(phi), y, r * std::sin(phi));
  }
  return pts;
}

inline ObjectField sphere_shell(const std::string& id, std::size_t n, double radius, const Vec3& center,
                                double gaussian_scale = 0.03, const Vec3& color = Vec3(0.8, 0.3, 0.2)) {
  std::vector<Gaussian> gs;
  for (const auto& p : fibonacci_sphere(n, radius, center)) {
    Gaussian g;
    g.mean = p;
    g.scale = Vec3::Constant(gaussian_scale);
    g.opacity = 0.9;
    g.color = color;
    gs.push_back(g);
  }
  return ObjectField(id, std::move(gs));
}

}  // namespace cg3d::testing
