#include "cg3d/forge.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "cg3d/errors.hpp"
#include "cg3d/optim.hpp"
#include "cg3d/spatial.hpp"

namespace cg3d {

void ForgeConfig::validate() const {
  if (iterations < 0) throw ValidationError("forge iterations must be non-negative");
  if (batch_size < 1 || densify_interval < 1 || hull_refresh_interval < 1 || render_size < 1)
    throw ValidationError("forge batch size, intervals and render size must be at least 1");
  if (knn_k_hull < 1 || knn_k_pointe < 1) throw ValidationError("knn k must be at least 1");
  if (!(lr_mean_start > 0 && lr_mean_end > 0 && lr_color > 0 && lr_opacity > 0 && lr_scale > 0 && lr_rotation > 0))
    throw ValidationError("learning rates must be positive");
  if (!(init_scale > 0 && init_opacity > 0 && init_opacity < 1 && hull_radius_factor > 0 && framing > 0))
    throw ValidationError("forge init values must be positive (opacity below 1)");
  const auto ordered = [](auto r) { return r[0] <= r[1]; };
  if (!ordered(densify_window) || !ordered(azimuth_range) || !ordered(elevation_range) || !ordered(fov_range) ||
      !ordered(timestep_range_start) || !ordered(timestep_range_end))
    throw ValidationError("forge windows and ranges must be ordered");
  if (!(fov_range[0] > 0 && fov_range[1] < 180)) throw ValidationError("fov range must lie in (0, 180)");
  if (elevation_range[0] <= -90 || elevation_range[1] >= 90) throw ValidationError("elevations must lie in (-90, 90)");
}

ObjectField init_from_points(std::span<const Vec3> points, const ForgeConfig& config, const std::string& id) {
  if (points.empty()) throw ValidationError("cannot initialise an object from an empty point set");
  std::mt19937_64 rng(config.seed);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::vector<Gaussian> gs(points.size());
  for (std::size_t i = 0; i < points.size(); ++i) {
    gs[i].mean = points[i];
    gs[i].scale = Vec3::Constant(config.init_scale);
    gs[i].opacity = config.init_opacity;
    gs[i].color = Vec3(u(rng), u(rng), u(rng));
  }
  ObjectField field(id, std::move(gs));
  field.set_init_points(std::vector<Vec3>(points.begin(), points.end()));
  return field;
}

KnnResult knn_loss(std::span<const Gaussian> source, std::span<const Vec3> target, std::size_t k,
                   bool hinge_on_scale) {
  if (k < 1 || k > target.size()) throw ValidationError("knn_loss: k must lie in [1, target size]");
  const KdTree tree(target);
  KnnResult out;
  out.grad.assign(source.size(), Vec3::Zero());
  for (std::size_t i = 0; i < source.size(); ++i) {
    const Vec3& mu = source[i].mean;
    const double floor = hinge_on_scale ? source[i].scale.minCoeff() : 0.0;
    for (const std::size_t j : tree.knn(mu, k)) {
      const Vec3 diff = mu - target[j];
      const double d = diff.norm();
      const double gap = d - floor;
      if (gap <= 0.0 || d == 0.0) continue;
      out.loss += gap * gap;
      out.grad[i] += 2.0 * gap * diff / d;
    }
  }
  return out;
}

namespace {

// True when open arcs (start, start + length) cover the whole circle.
bool arcs_cover_circle(const std::vector<std::pair<double, double>>& arcs) {
  constexpr double kTwoPi = 2.0 * kPi, kEps = 1e-12;
  std::vector<std::pair<double, double>> pieces;
  for (const auto& [start, len] : arcs) {
    double s = std::fmod(start, kTwoPi);
    if (s < 0.0) s += kTwoPi;
    const double e = s + len;
    if (e > kTwoPi) {
      pieces.emplace_back(s, kTwoPi);
      pieces.emplace_back(0.0, e - kTwoPi);
    } else {
      pieces.emplace_back(s, e);
    }
  }
  if (pieces.empty()) return false;
  std::sort(pieces.begin(), pieces.end());
  double reach = 0.0;
  for (const auto& [s, e] : pieces) {
    if (s > reach + kEps) return false;
    reach = std::max(reach, e);
  }
  return reach >= kTwoPi - kEps;
}

}  // namespace

std::vector<std::size_t> alpha_hull_members(std::span<const Vec3> points, double alpha) {
  if (points.size() < 2) throw ValidationError("alpha hull needs at least two points");
  if (!(alpha > 0.0)) throw ValidationError("alpha must be positive");
  const double rho = 1.0 / alpha;
  // Points strictly closer than this to a sphere center count as inside.
  const double rho_in = rho * (1.0 - 1e-9);
  const KdTree tree(points);
  std::vector<char> on(points.size(), 0);
  std::vector<std::pair<double, double>> arcs;

  for (std::size_t i = 0; i < points.size(); ++i) {
    for (const std::size_t j : tree.within(points[i], 2.0 * rho)) {
      if (j <= i || (on[i] && on[j])) continue;
      const Vec3 pq = points[j] - points[i];
      const double d = pq.norm();
      if (d < 1e-12) continue;
      // Centers of radius-rho spheres through both points form a circle around the midpoint.
      const Vec3 m = 0.5 * (points[i] + points[j]);
      const Vec3 e = pq / d;
      const double rc = std::sqrt(std::max(rho * rho - 0.25 * d * d, 0.0));
      const Vec3 u = e.unitOrthogonal(), v = e.cross(u);

      arcs.clear();
      bool blocked = false;
      for (const std::size_t x : tree.within(m, rho + rc)) {
        if (x == i || x == j) continue;
        const Vec3 w = points[x] - m;
        const double wu = w.dot(u), wv = w.dot(v);
        // |c(theta) - x|^2 = rc^2 + |w|^2 - 2 rc (wu cos + wv sin) < rho_in^2
        const double a = std::hypot(wu, wv);
        const double lhs = rc * rc + w.squaredNorm() - rho_in * rho_in;
        if (rc < 1e-12) {
          if (lhs < 0.0) blocked = true;
          if (blocked) break;
          continue;
        }
        const double k = lhs / (2.0 * rc);
        if (a <= k) continue;
        if (k < -a) {
          blocked = true;
          break;
        }
        const double half = std::acos(k / a);
        arcs.emplace_back(std::atan2(wv, wu) - half, 2.0 * half);
      }
      if (blocked || arcs_cover_circle(arcs)) continue;
      on[i] = on[j] = 1;
    }
  }
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < on.size(); ++i)
    if (on[i]) out.push_back(i);
  return out;
}

AlphaHull alpha_hull(const ObjectField& field, double alpha, std::size_t fps_count) {
  if (fps_count < 2) throw ValidationError("alpha hull needs at least two subset points");
  if (fps_count > field.size()) throw ValidationError("fps_count exceeds the number of Gaussians");
  std::vector<Vec3> means(field.size());
  for (std::size_t i = 0; i < means.size(); ++i) means[i] = field[i].mean;
  AlphaHull out;
  out.subset = farthest_point_sample(means, fps_count);
  std::vector<Vec3> pts(out.subset.size());
  for (std::size_t i = 0; i < pts.size(); ++i) pts[i] = means[out.subset[i]];
  for (const std::size_t k : alpha_hull_members(pts, alpha)) out.members.push_back(out.subset[k]);
  std::sort(out.members.begin(), out.members.end());
  return out;
}

void DensifyStats::reset(std::size_t n) {
  grad_sum.assign(n, 0.0);
  views.assign(n, 0);
}

void DensifyStats::add(const GaussianGradients& g) {
  if (g.d_mean2d.size() != grad_sum.size()) throw ShapeError("densify statistics size mismatch");
  for (std::size_t i = 0; i < grad_sum.size(); ++i)
    if (g.contribution[i] > 0.0) {
      grad_sum[i] += g.d_mean2d[i].norm();
      ++views[i];
    }
}

std::vector<Gaussian> densify(std::span<const Gaussian> gaussians, const DensifyStats& stats, const ForgeConfig& config,
                              std::mt19937_64& rng, std::vector<std::ptrdiff_t>* source) {
  if (stats.grad_sum.size() != gaussians.size()) throw ShapeError("densify statistics size mismatch");
  std::vector<Gaussian> out;
  std::vector<std::ptrdiff_t> src;
  out.reserve(gaussians.size());
  std::normal_distribution<double> n01(0.0, 1.0);
  for (std::size_t i = 0; i < gaussians.size(); ++i) {
    const Gaussian& g = gaussians[i];
    const auto idx = static_cast<std::ptrdiff_t>(i);
    if (stats.average(i) < config.densify_grad_threshold || out.size() + (gaussians.size() - i) >= config.max_gaussians) {
      out.push_back(g);
      src.push_back(idx);
      continue;
    }
    const Mat3 r = quat_to_matrix(g.rotation);
    if (g.scale.minCoeff() < config.densify_clone_scale) {
      int axis = 0;
      g.scale.maxCoeff(&axis);
      Gaussian copy = g;
      copy.mean += g.scale[axis] * r.col(axis);
      out.push_back(g);
      out.push_back(copy);
      src.push_back(idx);
      src.push_back(idx);
    } else {
      for (int c = 0; c < 2; ++c) {
        Gaussian child = g;
        child.mean += r * g.scale.cwiseProduct(Vec3(n01(rng), n01(rng), n01(rng)));
        child.scale = g.scale / 1.6;
        out.push_back(child);
        src.push_back(idx);
      }
    }
  }
  if (source) *source = std::move(src);
  return out;
}

Camera sample_camera(std::mt19937_64& rng, const Vec3& center, double radius, const ForgeConfig& config) {
  std::uniform_real_distribution<double> az(config.azimuth_range[0], config.azimuth_range[1]),
      el(config.elevation_range[0], config.elevation_range[1]), fov(config.fov_range[0], config.fov_range[1]);
  const double a = az(rng), e = el(rng), f = fov(rng);
  const double dist = radius / (config.framing * std::tan(0.5 * deg_to_rad(f)));
  return orbit_camera(center, dist, a, e, f, config.render_size, config.render_size);
}

std::string view_suffix(double azimuth_deg, double elevation_deg) {
  if (elevation_deg > 60.0) return "overhead view";
  double a = std::fmod(azimuth_deg, 360.0);
  if (a < 0.0) a += 360.0;
  if (a < 45.0 || a >= 315.0) return "front view";
  if (a >= 135.0 && a < 225.0) return "back view";
  return "side view";
}

namespace {

double bounding_radius(std::span<const Vec3> pts, const Vec3& c) {
  double r = 0.0;
  for (const auto& p : pts) r = std::max(r, (p - c).norm());
  return std::max(r, 1e-6);
}

}  // namespace

ObjectField generate_object(const std::string& prompt, std::span<const Vec3> init_points, GuidanceOracle& oracle,
                            const ForgeConfig& config, bool use_pointe_knn,
                            const std::function<void(const ForgeProgress&)>& progress) {
  config.validate();
  require_residuals(oracle);
  ObjectField field = init_from_points(init_points, config);
  field.set_prompt(prompt);
  if (config.iterations == 0) return field;

  const std::vector<Vec3> anchor_points(init_points.begin(), init_points.end());
  Vec3 center = Vec3::Zero();
  for (const auto& p : anchor_points) center += p;
  center /= static_cast<double>(anchor_points.size());
  const double radius = bounding_radius(anchor_points, center);

  std::vector<Gaussian> gs(field.gaussians().begin(), field.gaussians().end());
  std::mt19937_64 rng(combine_seed(config.seed, 0x5eed));
  GaussianAdam adam(gs.size());
  DensifyStats stats;
  stats.reset(gs.size());
  std::vector<std::size_t> hull;
  bool hull_stale = true;
  RenderOptions opts;

  for (int it = 0; it < config.iterations; ++it) {
    if (hull_stale || it % config.hull_refresh_interval == 0) {
      const ObjectField current("object", gs);
      std::vector<Vec3> means(gs.size());
      for (std::size_t i = 0; i < gs.size(); ++i) means[i] = gs[i].mean;
      const double rho = config.hull_radius_factor * bounding_radius(means, current.geometric_center());
      hull = gs.size() >= 2 ? alpha_hull(current, 1.0 / rho, std::min(gs.size(), config.hull_fps_count)).members
                            : std::vector<std::size_t>{};
      hull_stale = false;
    }

    const double frac = config.timestep_anneal_steps > 0
                            ? std::min(1.0, static_cast<double>(it) / config.timestep_anneal_steps)
                            : 1.0;
    std::array<int, 2> timesteps;
    for (int c = 0; c < 2; ++c)
      timesteps[c] = static_cast<int>(std::lround(config.timestep_range_start[c] +
                                                  frac * (config.timestep_range_end[c] - config.timestep_range_start[c])));

    GaussianGradients total;
    total.resize(gs.size());
    ForgeProgress report;
    report.iteration = it;
    for (int b = 0; b < config.batch_size; ++b) {
      const Camera cam = sample_camera(rng, center, radius, config);
      const Vec3 dir = (cam.position - center).normalized();
      const double a = std::atan2(dir.x(), dir.z()) * 180.0 / kPi, e = std::asin(dir.y()) * 180.0 / kPi;
      OracleRequest req;
      req.prompt = prompt;
      req.view_suffix = view_suffix(a, e);
      req.images.push_back(render(gs, cam, opts).color);
      req.cameras.push_back(cam);
      req.cfg_scale = config.cfg_scale;
      req.timestep_range = timesteps;
      req.loss_scale = config.loss_scale;
      req.rescale_factor = config.rescale_factor;
      req.want_residual = true;
      req.seed = combine_seed(config.seed, static_cast<std::uint64_t>(it) * 1024 + static_cast<std::uint64_t>(b));
      const OracleResponse res = oracle.evaluate(req);
      if (res.residuals.size() != 1) throw OracleError("guidance oracle returned no residual");
      report.oracle_score += res.score / config.batch_size;
      const GaussianGradients g = render_backward(gs, cam, res.residuals[0], opts);
      stats.add(g);
      total.accumulate(g);
    }
    const double inv_batch = 1.0 / config.batch_size;
    for (std::size_t i = 0; i < gs.size(); ++i) {
      total.d_mean[i] *= inv_batch;
      total.d_rotation[i] *= inv_batch;
      total.d_scale[i] *= inv_batch;
      total.d_opacity[i] *= inv_batch;
      total.d_color[i] *= inv_batch;
    }

    if (hull.size() >= static_cast<std::size_t>(config.knn_k_hull)) {
      std::vector<Vec3> targets(hull.size());
      for (std::size_t k = 0; k < hull.size(); ++k) targets[k] = gs[hull[k]].mean;
      const KnnResult r = knn_loss(gs, targets, static_cast<std::size_t>(config.knn_k_hull), true);
      report.hull_loss = r.loss;
      for (std::size_t i = 0; i < gs.size(); ++i) total.d_mean[i] += config.beta_hull * r.grad[i];
    }
    if (use_pointe_knn) {
      const KnnResult r = knn_loss(gs, anchor_points, static_cast<std::size_t>(config.knn_k_pointe), false);
      for (std::size_t i = 0; i < gs.size(); ++i) total.d_mean[i] += config.pointe_knn_weight * r.grad[i];
    }

    LearningRates lr;
    const double t = config.iterations > 1 ? static_cast<double>(it) / (config.iterations - 1) : 0.0;
    lr.mean = config.lr_mean_start * std::pow(config.lr_mean_end / config.lr_mean_start, t);
    lr.scale = config.lr_scale;
    lr.rotation = config.lr_rotation;
    lr.opacity = config.lr_opacity;
    lr.color = config.lr_color;
    adam.step(gs, total, lr);

    const int done = it + 1;
    if (done % config.densify_interval == 0 && done >= config.densify_window[0] && done <= config.densify_window[1]) {
      std::vector<std::ptrdiff_t> source;
      gs = densify(gs, stats, config, rng, &source);
      adam.remap(source);
      stats.reset(gs.size());
      hull_stale = true;
    }
    report.gaussians = gs.size();
    if (progress) progress(report);
  }

  ObjectField out(field.id(), std::move(gs), prompt);
  out.set_init_points(anchor_points);
  return out;
}

}  // namespace cg3d
