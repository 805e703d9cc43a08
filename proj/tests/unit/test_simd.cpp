#include <doctest.h>

#include <random>
#include <vector>

#include "cg3d/render.hpp"
#include "cg3d/simd.hpp"
#include "common/support.hpp"

using namespace cg3d;

// Each SIMD kernel must agree with the scalar reference kernel. Skipped where the host lacks the ISA.

TEST_CASE("dispatch reports a supported ISA") {
  CHECK(simd::supported(simd::Isa::Scalar));
  CHECK(simd::supported(simd::active_isa()));
}

TEST_CASE("blend_span: AVX2 matches scalar") {
  if (!simd::supported(simd::Isa::Avx2)) return;
  const auto& sc = simd::kernels_for(simd::Isa::Scalar);
  const auto& av = simd::kernels_for(simd::Isa::Avx2);
  std::mt19937_64 rng(4);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (int trial = 0; trial < 500; ++trial) {
    const int n = 1 + static_cast<int>(u(rng) * 37);
    const double sx = 0.5 + 4.0 * u(rng), sy = 0.5 + 4.0 * u(rng), rho = 1.8 * u(rng) - 0.9;
    const double det = sx * sx * sy * sy * (1 - rho * rho);
    const simd::Splat s{30.0 * u(rng), 10.0 * u(rng), sy * sy / det, -rho * sx * sy / det, sx * sx / det,
                        u(rng), u(rng), u(rng), u(rng)};
    std::vector<double> t(n), r(n), g(n), b(n);
    for (int i = 0; i < n; ++i) {
      t[i] = u(rng) < 0.1 ? 1e-5 : u(rng);
      r[i] = u(rng);
      g[i] = u(rng);
      b[i] = u(rng);
    }
    auto t2 = t, r2 = r, g2 = g, b2 = b;
    const bool cut = trial % 2 == 0;
    const int y = static_cast<int>(10.0 * u(rng)), x0 = static_cast<int>(20.0 * u(rng));
    const double w1 = sc.blend_span(s, y, x0, n, {t.data(), r.data(), g.data(), b.data()}, 1e-4, cut);
    const double w2 = av.blend_span(s, y, x0, n, {t2.data(), r2.data(), g2.data(), b2.data()}, 1e-4, cut);
    CHECK(std::abs(w1 - w2) < 1e-12);
    for (int i = 0; i < n; ++i) {
      CHECK(std::abs(t[i] - t2[i]) < 1e-12);
      CHECK(std::abs(r[i] - r2[i]) < 1e-12);
      CHECK(std::abs(g[i] - g2[i]) < 1e-12);
      CHECK(std::abs(b[i] - b2[i]) < 1e-12);
    }
  }
}

TEST_CASE("fps_update and nearest: AVX2 matches scalar exactly") {
  if (!simd::supported(simd::Isa::Avx2)) return;
  const auto& sc = simd::kernels_for(simd::Isa::Scalar);
  const auto& av = simd::kernels_for(simd::Isa::Avx2);
  std::mt19937_64 rng(8);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  for (int trial = 0; trial < 200; ++trial) {
    const std::size_t n = 1 + static_cast<std::size_t>((u(rng) + 1.0) * 70);
    std::vector<double> xs(n), ys(n), zs(n);
    for (std::size_t i = 0; i < n; ++i) {
      // A coarse grid forces exact distance ties.
      xs[i] = std::round(u(rng) * 4) / 4;
      ys[i] = std::round(u(rng) * 4) / 4;
      zs[i] = std::round(u(rng) * 4) / 4;
    }
    std::vector<double> d1(n, INFINITY), d2(n, INFINITY);
    for (int step = 0; step < 5; ++step) {
      const double qx = u(rng), qy = u(rng), qz = u(rng);
      CHECK(sc.fps_update(xs.data(), ys.data(), zs.data(), n, qx, qy, qz, d1.data()) ==
            av.fps_update(xs.data(), ys.data(), zs.data(), n, qx, qy, qz, d2.data()));
      CHECK(d1 == d2);
      double b1, b2;
      const double rx = std::round(u(rng) * 4) / 4;
      CHECK(sc.nearest(xs.data(), ys.data(), zs.data(), n, rx, 0.0, 0.0, &b1) ==
            av.nearest(xs.data(), ys.data(), zs.data(), n, rx, 0.0, 0.0, &b2));
      CHECK(b1 == b2);
    }
  }
}

TEST_CASE("full render: AVX2 matches scalar") {
  if (!simd::supported(simd::Isa::Avx2)) return;
  std::mt19937_64 rng(12);
  const auto gs = testing::random_gaussians(rng, 300, 0.8, 0.02, 0.2);
  const Camera cam = orbit_camera(Vec3::Zero(), 3.0, 30.0, 30.0, 45.0, 96, 80);
  simd::set_active_isa(simd::Isa::Scalar);
  std::vector<double> c1, c2;
  const RenderedImage a = render(gs, cam, {}, nullptr, &c1);
  simd::set_active_isa(simd::Isa::Avx2);
  const RenderedImage b = render(gs, cam, {}, nullptr, &c2);
  double m = 0.0;
  for (std::size_t i = 0; i < a.color.rgb.size(); ++i) m = std::max(m, std::abs(a.color.rgb[i] - b.color.rgb[i]));
  CHECK(m < 1e-12);
  for (std::size_t i = 0; i < c1.size(); ++i) CHECK(std::abs(c1[i] - c2[i]) < 1e-12);
}
