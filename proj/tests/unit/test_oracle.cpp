#include <doctest.h>

#include "cg3d/errors.hpp"
#include "cg3d/oracle.hpp"
#include "common/support.hpp"

using namespace cg3d;

namespace {

OracleRequest request_for(const Vec3& t, double s, std::uint64_t seed) {
  OracleRequest req;
  InteractionParams p;
  p.translation = t;
  p.scale = s;
  req.candidate = p;
  req.seed = seed;
  return req;
}

}  // namespace

TEST_CASE("synthetic CLF: noiseless score is the planted quadratic") {
  SyntheticClf clf(Vec3(0.2, -0.1, 0.4), 0.5, 0.0, 1);
  CHECK(clf.evaluate(request_for(Vec3(0.2, -0.1, 0.4), 0.5, 0)).score == 0.0);
  // |dt|^2 = 0.09 + 0 + 0.16, 10 ds^2 = 10 * 0.01
  CHECK(clf.evaluate(request_for(Vec3(0.5, -0.1, 0.0), 0.6, 9)).score == doctest::Approx(0.35));
  CHECK_THROWS_AS(clf.evaluate(OracleRequest{}), OracleError);
  CHECK(!clf.has_residuals());
  CHECK_THROWS_AS(require_residuals(clf), CapabilityError);
}

TEST_CASE("synthetic CLF: noise is a pure function of candidate and seeds") {
  SyntheticClf a(Vec3::Zero(), 1.0, 0.05, 42), b(Vec3::Zero(), 1.0, 0.05, 42), c(Vec3::Zero(), 1.0, 0.05, 43);
  const auto r = request_for(Vec3(0.1, 0.2, 0.3), 0.9, 5);
  CHECK(a.evaluate(r).score == b.evaluate(r).score);
  CHECK(a.evaluate(r).score == a.evaluate(r).score);
  CHECK(a.evaluate(r).score != c.evaluate(r).score);
  CHECK(a.evaluate(r).score != a.evaluate(request_for(Vec3(0.1, 0.2, 0.3), 0.9, 6)).score);

  // Empirical spread of the noise around the noiseless value.
  double sum = 0.0, sum2 = 0.0;
  const int n = 4000;
  for (int i = 0; i < n; ++i) {
    const double e = a.evaluate(request_for(Vec3(0.1, 0.2, 0.3), 0.9, static_cast<std::uint64_t>(i))).score -
                     a.noiseless(Vec3(0.1, 0.2, 0.3), 0.9);
    sum += e;
    sum2 += e * e;
  }
  const double mean = sum / n, sd = std::sqrt(sum2 / n - mean * mean);
  CHECK(std::abs(mean) < 0.005);
  CHECK(sd == doctest::Approx(0.05).epsilon(0.05));
}

TEST_CASE("photometric oracle: zero residual at the target, scaled difference elsewhere") {
  const ObjectField target = testing::sphere_shell("t", 200, 0.5, Vec3::Zero(), 0.06);
  PhotometricOracle oracle(target);
  CHECK(oracle.has_residuals());

  OracleRequest req;
  req.want_residual = true;
  req.cameras.push_back(orbit_camera(Vec3::Zero(), 3.0, 30.0, 20.0, 45.0, 24, 20));
  req.images.push_back(render(target, req.cameras[0]).color);
  auto res = oracle.evaluate(req);
  CHECK(res.score == 0.0);
  REQUIRE(res.residuals.size() == 1);
  for (double v : res.residuals[0].rgb) CHECK(v == 0.0);

  Image shifted = req.images[0];
  for (double& v : shifted.rgb) v += 0.1;
  req.images[0] = shifted;
  res = oracle.evaluate(req);
  CHECK(res.score == doctest::Approx(0.01));
  for (double v : res.residuals[0].rgb) CHECK(v == doctest::Approx(req.loss_scale * 0.1));

  req.images[0] = Image(5, 5);
  CHECK_THROWS_AS(oracle.evaluate(req), ShapeError);
  req.cameras.clear();
  CHECK_THROWS_AS(oracle.evaluate(req), OracleError);
}

TEST_CASE("counting oracle forwards and counts") {
  ConstantOracle inner(3.5);
  CountingOracle counter(inner);
  for (int i = 0; i < 7; ++i) CHECK(counter.evaluate(OracleRequest{}).score == 3.5);
  CHECK(counter.calls() == 7);
}

TEST_CASE("seed mixing separates nearby keys") {
  CHECK(mix_seed(0) != mix_seed(1));
  CHECK(combine_seed(1, 2) != combine_seed(2, 1));
  CHECK(combine_seed(7, 9) == combine_seed(7, 9));
}
