#include "cg3d/distill.hpp"

#include <cmath>
#include <limits>

#include "cg3d/errors.hpp"
#include "cg3d/oracle.hpp"
#include "cg3d/spatial.hpp"

namespace cg3d {

double psnr(const Image& a, const Image& b, bool quantize) {
  if (!a.same_shape(b) || a.rgb.size() != b.rgb.size()) throw ShapeError("psnr: image shapes differ");
  if (a.rgb.empty()) throw ShapeError("psnr: empty images");
  const auto q = [quantize](double v) { return quantize ? std::round(std::clamp(v, 0.0, 1.0) * 255.0) / 255.0 : v; };
  double se = 0.0;
  for (std::size_t i = 0; i < a.rgb.size(); ++i) {
    const double d = q(a.rgb[i]) - q(b.rgb[i]);
    se += d * d;
  }
  if (se == 0.0) return std::numeric_limits<double>::infinity();
  return -10.0 * std::log10(se / static_cast<double>(a.rgb.size()));
}

void DistillConfig::validate() const {
  if (render_size < 1 || heldout_views < 1 || monitor_views < 1 || eval_interval < 1)
    throw ValidationError("distill sizes and intervals must be at least 1");
  if (!(radius_range[0] > 0 && radius_range[0] <= radius_range[1])) throw ValidationError("bad distill radius range");
  if (!(fov > 0 && fov < 180)) throw ValidationError("distill fov must lie in (0, 180)");
  if (lr_half_life < 0.0 || !(lr_floor > 0.0 && lr_floor <= 1.0)) throw ValidationError("bad distill lr decay");
}

Camera distill_camera(std::mt19937_64& rng, const Vec3& center, const DistillConfig& config) {
  std::uniform_real_distribution<double> u(-1.0, 1.0), az(0.0, 360.0), r(config.radius_range[0], config.radius_range[1]);
  // Uniform direction: sin(elevation) uniform in [-1, 1].
  const double el = std::asin(u(rng)) * 180.0 / kPi;
  const double a = az(rng);
  return orbit_camera(center, r(rng), a, el, config.fov, config.render_size, config.render_size);
}

double mean_psnr(std::span<const Gaussian> student, std::span<const Gaussian> teacher, std::span<const Camera> cameras,
                 const RenderOptions& options) {
  if (cameras.empty()) throw ValidationError("mean_psnr needs at least one camera");
  double sum = 0.0;
  for (const auto& cam : cameras) sum += psnr(render(student, cam, options).color, render(teacher, cam, options).color);
  return sum / static_cast<double>(cameras.size());
}

namespace {

double mse(const Image& a, const Image& b) {
  double se = 0.0;
  for (std::size_t i = 0; i < a.rgb.size(); ++i) se += (a.rgb[i] - b.rgb[i]) * (a.rgb[i] - b.rgb[i]);
  return se / static_cast<double>(a.rgb.size());
}

}  // namespace

DistillResult distill(const ObjectField& field, double target_fraction, int view_count, int iterations,
                      const DistillConfig& config) {
  config.validate();
  if (!(target_fraction > 0.0 && target_fraction < 1.0)) throw ValidationError("target_fraction must lie in (0, 1)");
  if (view_count < 1 || iterations < 0) throw ValidationError("distill needs view_count >= 1 and iterations >= 0");
  const std::size_t count = static_cast<std::size_t>(std::floor(target_fraction * static_cast<double>(field.size())));
  if (count < config.min_gaussians) throw ValidationError("target_fraction leaves fewer than 16 Gaussians");

  const auto teacher = field.gaussians();
  std::vector<Vec3> means(teacher.size());
  for (std::size_t i = 0; i < means.size(); ++i) means[i] = teacher[i].mean;
  // Each survivor stands in for 1/fraction originals spread over a surface, so its footprint
  // grows by the square root of that.
  const double boost = 1.0 / std::sqrt(target_fraction);
  std::vector<Gaussian> student;
  student.reserve(count);
  for (const std::size_t i : farthest_point_sample(means, count)) {
    Gaussian g = teacher[i];
    g.scale *= boost;
    student.push_back(g);
  }

  const Vec3 center = field.geometric_center();
  std::mt19937_64 train_rng(combine_seed(config.seed, 1)), monitor_rng(combine_seed(config.seed, 2)),
      heldout_rng(combine_seed(config.seed, 3));
  const RenderOptions opts;
  std::vector<Camera> monitor;
  std::vector<Image> monitor_target;
  for (int v = 0; v < config.monitor_views; ++v) {
    monitor.push_back(distill_camera(monitor_rng, center, config));
    monitor_target.push_back(render(teacher, monitor.back(), opts).color);
  }
  const auto monitor_loss = [&](const std::vector<Gaussian>& gs) {
    double sum = 0.0;
    for (std::size_t v = 0; v < monitor.size(); ++v) sum += mse(render(gs, monitor[v], opts).color, monitor_target[v]);
    return sum / static_cast<double>(monitor.size());
  };

  DistillResult out;
  std::vector<Gaussian> best = student;
  out.monitor_loss = monitor_loss(student);
  GaussianAdam adam(student.size());
  for (int it = 1; it <= iterations; ++it) {
    GaussianGradients total;
    total.resize(student.size());
    for (int v = 0; v < view_count; ++v) {
      const Camera cam = distill_camera(train_rng, center, config);
      const Image target = render(teacher, cam, opts).color;
      Image residual = render(student, cam, opts).color;
      // Gradient of the per-pixel mean squared error, averaged over the batch.
      const double k = 2.0 / (static_cast<double>(residual.rgb.size()) * view_count);
      for (std::size_t p = 0; p < residual.rgb.size(); ++p) residual.rgb[p] = k * (residual.rgb[p] - target.rgb[p]);
      total.accumulate(render_backward(student, cam, residual, opts));
    }
    LearningRates lr = config.lr;
    if (config.lr_half_life > 0.0) {
      const double f = std::max(config.lr_floor, std::pow(0.5, (it - 1) / config.lr_half_life));
      lr.mean *= f;
      lr.scale *= f;
      lr.rotation *= f;
      lr.opacity *= f;
      lr.color *= f;
    }
    adam.step(student, total, lr);
    if (it % config.eval_interval == 0 || it == iterations) {
      const double loss = monitor_loss(student);
      if (loss < out.monitor_loss) {
        out.monitor_loss = loss;
        out.best_iteration = it;
        best = student;
      }
    }
  }

  std::vector<Camera> heldout;
  for (int v = 0; v < config.heldout_views; ++v) heldout.push_back(distill_camera(heldout_rng, center, config));
  out.psnr = mean_psnr(best, teacher, heldout, opts);
  out.field = ObjectField(field.id(), std::move(best), field.prompt());
  return out;
}

}  // namespace cg3d
