#pragma once

#include <array>
#include <cstdint>
#include <random>
#include <vector>

#include "cg3d/field.hpp"
#include "cg3d/optim.hpp"
#include "cg3d/render.hpp"

namespace cg3d {

/// 10 log10(1 / MSE) over RGB. Identical images give +infinity. With `quantize`, both images
/// are first rounded to 8 bits per channel.
double psnr(const Image& a, const Image& b, bool quantize = false);

struct DistillConfig {
  int render_size = 64;
  double fov = 45.0;
  std::array<double, 2> radius_range{2.0, 4.5};
  int heldout_views = 32;
  /// Fixed training-distribution views on which the best-so-far snapshot is judged.
  int monitor_views = 8;
  int eval_interval = 25;
  std::size_t min_gaussians = 16;
  LearningRates lr{2e-4, 5e-3, 2e-3, 0.02, 0.01};
  /// Every learning rate halves over this many iterations (0 keeps them constant). The decay
  /// depends only on the iteration index, so a shorter run is a prefix of a longer one.
  double lr_half_life = 300.0;
  double lr_floor = 0.05;  // the decay stops at this fraction of the initial rates
  std::uint64_t seed = 0;

  void validate() const;
};

struct DistillResult {
  ObjectField field;
  double psnr = 0.0;          // mean over the held-out views
  double monitor_loss = 0.0;  // MSE of the returned snapshot on the monitor views
  int best_iteration = 0;
};

/// Random camera looking at `center` from a uniformly random direction at a distance drawn
/// from the configured radius range.
Camera distill_camera(std::mt19937_64& rng, const Vec3& center, const DistillConfig& config);

/// Retrains a field of floor(target_fraction * N) Gaussians, seeded by farthest-point sampling
/// of the original, on freshly rendered views of the original. `view_count` views per
/// iteration. The returned field is the best snapshot on the monitor views, checked at the
/// start, every `eval_interval` iterations and at the end.
DistillResult distill(const ObjectField& field, double target_fraction, int view_count, int iterations,
                      const DistillConfig& config = {});

/// Mean PSNR of `student` against `teacher` over `cameras`.
double mean_psnr(std::span<const Gaussian> student, std::span<const Gaussian> teacher, std::span<const Camera> cameras,
                 const RenderOptions& options = {});

}  // namespace cg3d
