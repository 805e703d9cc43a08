#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <random>
#include <set>

#include "cg3d/errors.hpp"
#include "cg3d/forge.hpp"
#include "cg3d/optim.hpp"
#include "cg3d/spatial.hpp"
#include "common/reference.hpp"
#include "common/support.hpp"

using namespace cg3d;
using cg3d::testing::hull_brute;
using cg3d::testing::knn_brute;

namespace {

std::vector<Gaussian> point_gaussians(const std::vector<Vec3>& pts, double scale) {
  std::vector<Gaussian> gs(pts.size());
  for (std::size_t i = 0; i < pts.size(); ++i) {
    gs[i].mean = pts[i];
    gs[i].scale = Vec3::Constant(scale);
  }
  return gs;
}

std::vector<Vec3> uniform_points(std::mt19937_64& rng, std::size_t n, double extent) {
  std::uniform_real_distribution<double> u(-extent, extent);
  std::vector<Vec3> pts(n);
  for (auto& p : pts) p = Vec3(u(rng), u(rng), u(rng));
  return pts;
}

ObjectField textured_ball(std::size_t n, double radius) {
  std::vector<Gaussian> gs;
  for (const auto& p : testing::fibonacci_sphere(n, radius)) {
    Gaussian g;
    g.mean = p;
    g.scale = Vec3::Constant(0.05 * radius);
    g.opacity = 0.95;
    const double th = std::atan2(p.z(), p.x());
    g.color = Vec3(0.5 + 0.4 * std::sin(3 * th), 0.5 + 0.4 * std::cos(4 * p.y() / radius), 0.4);
    gs.push_back(g);
  }
  return ObjectField("target", std::move(gs));
}

ForgeConfig quick_config(int iterations) {
  ForgeConfig c;
  c.iterations = iterations;
  c.render_size = 16;
  c.batch_size = 2;
  return c;
}

}  // namespace

TEST_CASE("forge config defaults and validation") {
  ForgeConfig c;
  CHECK(c.iterations == 3000);
  CHECK(c.batch_size == 4);
  CHECK(c.beta_hull == 5.0);
  CHECK(c.knn_k_hull == 5);
  CHECK(c.pointe_knn_weight == 20.0);
  CHECK(c.init_scale == 0.02);
  CHECK(c.init_opacity == 0.8);
  CHECK_NOTHROW(c.validate());
  c.densify_window = {10, 5};
  CHECK_THROWS_AS(c.validate(), ValidationError);
  c = {};
  c.lr_color = 0.0;
  CHECK_THROWS_AS(c.validate(), ValidationError);
}

TEST_CASE("init_from_points") {
  SUBCASE("4096 points give 4096 isotropic Gaussians at the initial scale") {
    const auto pts = testing::fibonacci_sphere(4096, 1.0);
    const ObjectField f = init_from_points(pts);
    REQUIRE(f.size() == 4096);
    for (std::size_t i = 0; i < f.size(); ++i) {
      CHECK(f[i].scale == Vec3::Constant(0.02));
      CHECK(f[i].opacity == 0.8);
      CHECK(f[i].rotation == Quat(1, 0, 0, 0));
      CHECK(f[i].mean == pts[i]);
      CHECK(f[i].color.minCoeff() >= 0.0);
      CHECK(f[i].color.maxCoeff() <= 1.0);
    }
    REQUIRE(f.init_points().has_value());
    CHECK(f.init_points()->size() == 4096);
  }
  SUBCASE("single point at the origin") {
    const std::vector<Vec3> pts{Vec3::Zero()};
    const ObjectField f = init_from_points(pts);
    REQUIRE(f.size() == 1);
    CHECK(f[0].mean == Vec3::Zero());
  }
  SUBCASE("colours are reproducible under a seed and vary with it") {
    const auto pts = testing::fibonacci_sphere(64, 1.0);
    ForgeConfig a, b;
    b.seed = 7;
    const ObjectField f1 = init_from_points(pts, a), f2 = init_from_points(pts, a), f3 = init_from_points(pts, b);
    bool differs = false;
    for (std::size_t i = 0; i < 64; ++i) {
      CHECK(f1[i].color == f2[i].color);
      differs |= f1[i].color != f3[i].color;
    }
    CHECK(differs);
  }
  CHECK_THROWS_AS(init_from_points(std::vector<Vec3>{}), ValidationError);
}

TEST_CASE("knn_loss examples and errors") {
  const std::vector<Vec3> tgt{Vec3(0, 0, 0), Vec3(1, 0, 0), Vec3(0, 2, 0)};
  CHECK(knn_loss(point_gaussians(tgt, 0.1), tgt, 1, true).loss == 0.0);
  CHECK(knn_loss(point_gaussians(tgt, 0.0), tgt, 1, false).loss == 0.0);

  const double d = 0.37;
  const auto one = point_gaussians({Vec3(0, 0, d)}, 0.0);
  const std::vector<Vec3> single{Vec3::Zero()};
  const KnnResult r = knn_loss(one, single, 1, true);
  CHECK(r.loss == doctest::Approx(d * d).epsilon(1e-14));
  CHECK((r.grad[0] - Vec3(0, 0, 2 * d)).norm() < 1e-14);

  CHECK_THROWS_AS(knn_loss(one, single, 2, false), ValidationError);
}

TEST_CASE("knn_loss agrees with the exhaustive evaluation") {
  std::mt19937_64 rng(41);
  std::uniform_real_distribution<double> s(0.0, 0.2);
  for (int trial = 0; trial < 50; ++trial) {
    auto src = point_gaussians(uniform_points(rng, 40, 1.0), 0.0);
    for (auto& g : src) g.scale = Vec3(s(rng), s(rng), s(rng));
    const auto tgt = uniform_points(rng, 30, 1.0);
    const std::size_t k = 1 + trial % 5;
    const bool hinge = trial % 2 == 0;
    const double ref = knn_brute(src, tgt, k, hinge);
    CHECK(std::abs(knn_loss(src, tgt, k, hinge).loss - ref) <= 1e-9 * std::max(1.0, ref));
  }
}

TEST_CASE("knn_loss gradients match central differences") {
  std::mt19937_64 rng(42);
  std::uniform_real_distribution<double> s(0.0, 0.1);
  const double h = 1e-6;
  double worst = 0.0;
  for (int trial = 0; trial < 50; ++trial) {
    auto src = point_gaussians(uniform_points(rng, 12, 1.0), 0.0);
    for (auto& g : src) g.scale = Vec3(s(rng), s(rng), s(rng));
    const auto tgt = uniform_points(rng, 15, 1.0);
    const std::size_t k = 1 + trial % 5;
    const KnnResult r = knn_loss(src, tgt, k, true);
    for (std::size_t i = 0; i < src.size(); ++i)
      for (int c = 0; c < 3; ++c) {
        auto plus = src, minus = src;
        plus[i].mean[c] += h;
        minus[i].mean[c] -= h;
        const double fd = (knn_loss(plus, tgt, k, true).loss - knn_loss(minus, tgt, k, true).loss) / (2 * h);
        const double err = std::abs(fd - r.grad[i][c]) / std::max(1.0, std::abs(fd));
        worst = std::max(worst, err);
      }
  }
  CHECK(worst < 1e-4);
}

TEST_CASE("alpha hull of points on a circle keeps every point") {
  const double r = 1.0;
  std::vector<Vec3> pts;
  for (int i = 0; i < 24; ++i) pts.emplace_back(r * std::cos(2 * kPi * i / 24), 0.0, r * std::sin(2 * kPi * i / 24));
  const auto members = alpha_hull_members(pts, 1.0 / 1.5);
  CHECK(members.size() == pts.size());
}

TEST_CASE("alpha hull drops the interior of a dense ball") {
  std::mt19937_64 rng(5);
  std::vector<Vec3> pts;
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  while (pts.size() < 400) {
    const Vec3 p(u(rng), u(rng), u(rng));
    if (p.norm() <= 1.0) pts.push_back(p);
  }
  const auto members = alpha_hull_members(pts, 1.0 / 0.3);
  std::size_t deep = 0;
  for (std::size_t i : members) deep += pts[i].norm() < 0.5;
  CHECK(deep == 0);
  CHECK(members.size() > 20);
  CHECK(members.size() < pts.size());
}

TEST_CASE("alpha hull membership matches the pair-sphere brute force") {
  std::mt19937_64 rng(99);
  std::uniform_int_distribution<int> count(10, 200);
  std::uniform_real_distribution<double> radius(0.15, 0.8);
  for (int trial = 0; trial < 20; ++trial) {
    const auto pts = uniform_points(rng, static_cast<std::size_t>(count(rng)), 1.0);
    const double rho = radius(rng);
    CHECK(alpha_hull_members(pts, 1.0 / rho) == hull_brute(pts, rho));
  }
}

TEST_CASE("alpha_hull on a field: FPS subset and membership") {
  std::mt19937_64 rng(3);
  const ObjectField f("ball", point_gaussians(uniform_points(rng, 150, 1.0), 0.02));
  SUBCASE("fps_count = N keeps every index") {
    const AlphaHull h = alpha_hull(f, 1.0 / 0.5, f.size());
    std::vector<std::size_t> sorted = h.subset;
    std::sort(sorted.begin(), sorted.end());
    for (std::size_t i = 0; i < sorted.size(); ++i) CHECK(sorted[i] == i);
  }
  SUBCASE("members are a subset of the FPS subset") {
    const AlphaHull h = alpha_hull(f, 1.0 / 0.5, 60);
    CHECK(h.subset.size() == 60);
    const std::set<std::size_t> sub(h.subset.begin(), h.subset.end());
    for (std::size_t m : h.members) CHECK(sub.count(m) == 1);
    CHECK(std::is_sorted(h.members.begin(), h.members.end()));
  }
  CHECK_THROWS_AS(alpha_hull(f, 1.0, 1), ValidationError);
  CHECK_THROWS_AS(alpha_hull(f, 1.0, 151), ValidationError);
}

TEST_CASE("densify") {
  ForgeConfig cfg;
  std::mt19937_64 rng(8);
  std::vector<Gaussian> gs(3);
  gs[0].scale = Vec3(0.05, 0.04, 0.03);
  gs[1].scale = Vec3(0.2, 0.1, 0.08);
  gs[1].mean = Vec3(1, 2, 3);
  gs[1].color = Vec3(0.1, 0.2, 0.3);
  gs[2].scale = Vec3(0.03, 0.004, 0.02);
  gs[2].rotation = Quat(std::cos(0.4), 0.0, std::sin(0.4), 0.0);
  gs[2].opacity = 0.37;
  gs[2].color = Vec3(0.9, 0.1, 0.5);
  DensifyStats stats;
  stats.reset(3);

  SUBCASE("everything below threshold is returned untouched") {
    stats.grad_sum = {0.4, 0.1, 0.49};
    stats.views = {1, 1, 1};
    std::vector<std::ptrdiff_t> src;
    const auto out = densify(gs, stats, cfg, rng, &src);
    REQUIRE(out.size() == 3);
    for (std::size_t i = 0; i < 3; ++i) {
      CHECK(out[i].mean == gs[i].mean);
      CHECK(out[i].scale == gs[i].scale);
      CHECK(out[i].color == gs[i].color);
      CHECK(src[i] == static_cast<std::ptrdiff_t>(i));
    }
  }
  SUBCASE("a large hot Gaussian splits into two children at scale / 1.6") {
    stats.grad_sum = {0.0, 2.0, 0.0};
    stats.views = {0, 2, 0};
    std::vector<std::ptrdiff_t> src;
    const auto out = densify(gs, stats, cfg, rng, &src);
    REQUIRE(out.size() == 4);
    CHECK(src == std::vector<std::ptrdiff_t>{0, 1, 1, 2});
    for (int c : {1, 2}) {
      CHECK((out[c].scale - gs[1].scale / 1.6).norm() < 1e-15);
      CHECK(out[c].color == gs[1].color);
      CHECK((out[c].mean - gs[1].mean).norm() < 1.0);
    }
    CHECK(out[1].mean != out[2].mean);
  }
  SUBCASE("a thin hot Gaussian is cloned one scale along its largest axis") {
    stats.grad_sum = {0.0, 0.0, 0.5};
    stats.views = {0, 0, 1};
    const auto out = densify(gs, stats, cfg, rng);
    REQUIRE(out.size() == 4);
    const Gaussian& orig = out[2];
    const Gaussian& copy = out[3];
    CHECK(orig.mean == gs[2].mean);
    CHECK(copy.color == gs[2].color);
    CHECK(copy.opacity == gs[2].opacity);
    CHECK(copy.scale == gs[2].scale);
    // Largest axis is local x; rotated about y by 0.8 rad.
    const Vec3 expected = 0.03 * Vec3(std::cos(0.8), 0.0, -std::sin(0.8));
    CHECK((copy.mean - gs[2].mean - expected).norm() < 1e-14);
  }
  SUBCASE("the cap stops growth") {
    cfg.max_gaussians = 3;
    stats.grad_sum = {1.0, 1.0, 1.0};
    stats.views = {1, 1, 1};
    CHECK(densify(gs, stats, cfg, rng).size() == 3);
  }
}

TEST_CASE("densify statistics average over contributing views") {
  DensifyStats s;
  s.reset(2);
  GaussianGradients g;
  g.resize(2);
  g.d_mean2d[0] = Vec2(3, 4);
  g.d_mean2d[1] = Vec2(1, 0);
  g.contribution = {1.0, 0.0};
  s.add(g);
  g.d_mean2d[0] = Vec2(1, 0);
  s.add(g);
  CHECK(s.average(0) == doctest::Approx(3.0));
  CHECK(s.average(1) == 0.0);
}

TEST_CASE("Adam first step moves each parameter by its learning rate against the gradient") {
  std::vector<Gaussian> gs(1);
  gs[0].color = Vec3(0.5, 0.5, 0.5);
  gs[0].opacity = 0.5;
  const double s0 = gs[0].scale[2];
  GaussianAdam adam(1);
  GaussianGradients g;
  g.resize(1);
  g.d_mean[0] = Vec3(2.0, -0.5, 0.0);
  g.d_color[0] = Vec3(-1.0, 3.0, 0.0);
  g.d_opacity[0] = 1.0;
  g.d_scale[0] = Vec3(0.0, 0.0, -4.0);
  LearningRates lr;
  adam.step(gs, g, lr);
  CHECK((gs[0].mean - Vec3(-lr.mean, lr.mean, 0.0)).norm() < 1e-12);
  CHECK((gs[0].color - Vec3(0.5 + lr.color, 0.5 - lr.color, 0.5)).norm() < 1e-12);
  CHECK(gs[0].opacity == doctest::Approx(1.0 / (1.0 + std::exp(lr.opacity))).epsilon(1e-12));
  CHECK(gs[0].scale[2] == doctest::Approx(s0 * std::exp(lr.scale)).epsilon(1e-12));
  CHECK(gs[0].rotation.norm() == doctest::Approx(1.0));
  CHECK(adam.steps() == 1);
}

TEST_CASE("view suffixes and training cameras") {
  CHECK(view_suffix(0, 10) == "front view");
  CHECK(view_suffix(350, 10) == "front view");
  CHECK(view_suffix(90, 0) == "side view");
  CHECK(view_suffix(180, -20) == "back view");
  CHECK(view_suffix(270, 30) == "side view");
  CHECK(view_suffix(10, 75) == "overhead view");

  ForgeConfig cfg;
  std::mt19937_64 rng(1);
  for (int i = 0; i < 200; ++i) {
    const Camera cam = sample_camera(rng, Vec3(0, 1, 0), 0.5, cfg);
    const Vec3 d = cam.position - Vec3(0, 1, 0);
    const double el = std::asin(d.y() / d.norm()) * 180.0 / kPi;
    CHECK(el >= -30.0 - 1e-9);
    CHECK(el <= 80.0 + 1e-9);
    CHECK(cam.width == 64);
    // The bounding sphere spans `framing` of the vertical field of view.
    CHECK(0.5 / d.norm() == doctest::Approx(0.6 * std::tan(0.5 * cam.fov_y * kPi / 180.0)).epsilon(1e-9));
  }
}

TEST_CASE("generate_object contracts") {
  const auto pts = testing::fibonacci_sphere(200, 0.5);
  PhotometricOracle oracle(textured_ball(300, 0.5));

  SUBCASE("zero iterations return the initialisation") {
    ForgeConfig cfg = quick_config(0);
    const ObjectField f = generate_object("a ball", pts, oracle, cfg);
    const ObjectField init = init_from_points(pts, cfg);
    REQUIRE(f.size() == init.size());
    for (std::size_t i = 0; i < f.size(); ++i) {
      CHECK(f[i].mean == init[i].mean);
      CHECK(f[i].color == init[i].color);
    }
  }
  SUBCASE("score-only oracles are rejected before any work") {
    ConstantOracle constant;
    CountingOracle counted(constant);
    CHECK_THROWS_AS(generate_object("a ball", pts, counted, quick_config(5)), CapabilityError);
    CHECK(counted.calls() == 0);
  }
  SUBCASE("deterministic under a fixed seed") {
    const ObjectField a = generate_object("a ball", pts, oracle, quick_config(6));
    const ObjectField b = generate_object("a ball", pts, oracle, quick_config(6));
    REQUIRE(a.size() == b.size());
    for (std::size_t i = 0; i < a.size(); ++i) {
      CHECK(a[i].mean == b[i].mean);
      CHECK(a[i].color == b[i].color);
      CHECK(a[i].opacity == b[i].opacity);
    }
  }
  SUBCASE("one oracle request per view") {
    CountingOracle counted(oracle);
    generate_object("a ball", pts, counted, quick_config(5));
    CHECK(counted.calls() == 10);
  }
}

TEST_CASE("the point-cloud term keeps a flat slab flat") {
  // Slab in the xz plane; the target pulls towards a ball, the anchor term holds the slab.
  std::vector<Vec3> slab;
  for (int i = 0; i < 20; ++i)
    for (int k = 0; k < 20; ++k) slab.emplace_back(-0.5 + i / 19.0, 0.0, -0.5 + k / 19.0);
  PhotometricOracle oracle(textured_ball(400, 0.5));
  ForgeConfig cfg = quick_config(300);
  const ObjectField f = generate_object("a plate", slab, oracle, cfg, true);
  const KdTree tree(slab);
  double worst = 0.0;
  for (std::size_t i = 0; i < f.size(); ++i) worst = std::max(worst, (f[i].mean - slab[tree.nearest(f[i].mean)]).norm());
  CHECK(worst <= 0.05);
}
