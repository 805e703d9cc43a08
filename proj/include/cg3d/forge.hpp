#pragma once

#include <array>
#include <cstdint>
#include <functional>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "cg3d/field.hpp"
#include "cg3d/oracle.hpp"
#include "cg3d/render.hpp"

namespace cg3d {

struct ForgeConfig {
  int iterations = 3000;
  int batch_size = 4;
  double cfg_scale = 100.0;
  double loss_scale = 0.5;
  double rescale_factor = 0.7;
  std::array<int, 2> timestep_range_start{2, 980};
  std::array<int, 2> timestep_range_end{2, 500};
  int timestep_anneal_steps = 2000;

  double lr_mean_start = 2e-3;  // decays exponentially to lr_mean_end over the run
  double lr_mean_end = 1e-4;
  double lr_color = 0.01;
  double lr_opacity = 0.01;
  double lr_scale = 0.002;
  double lr_rotation = 0.001;

  std::array<int, 2> densify_window{0, 2000};
  int densify_interval = 250;
  double densify_grad_threshold = 0.5;
  /// Below this smallest scale a hot Gaussian is cloned, above it split.
  double densify_clone_scale = 0.01;
  std::size_t max_gaussians = 200000;

  double beta_hull = 5.0;
  int knn_k_hull = 5;
  double pointe_knn_weight = 20.0;
  int knn_k_pointe = 1;
  int hull_refresh_interval = 100;
  std::size_t hull_fps_count = 2048;
  /// Hull sphere radius 1/alpha as a multiple of the current bounding radius.
  double hull_radius_factor = 0.25;

  std::size_t init_count = 4096;
  double init_scale = 0.02;
  double init_opacity = 0.8;

  std::array<double, 2> azimuth_range{0.0, 360.0};
  std::array<double, 2> elevation_range{-30.0, 80.0};
  std::array<double, 2> fov_range{30.0, 55.0};
  /// The object's bounding sphere spans this fraction of the image height.
  double framing = 0.6;
  int render_size = 64;

  std::uint64_t seed = 0;

  void validate() const;
};

/// One isotropic Gaussian per point with random colour; the points are kept as init_points.
ObjectField init_from_points(std::span<const Vec3> points, const ForgeConfig& config = {},
                             const std::string& id = "object");

struct KnnResult {
  double loss = 0.0;
  std::vector<Vec3> grad;  // d loss / d source mean
};

/// Sum over source Gaussians i and their k nearest targets j of max(0, |mu_i - t_j| - m_i)^2,
/// where m_i is Gaussian i's smallest scale when `hinge_on_scale`, else 0. Targets are constant.
KnnResult knn_loss(std::span<const Gaussian> source, std::span<const Vec3> target, std::size_t k,
                   bool hinge_on_scale);

/// Points of `points` on the alpha hull: i belongs when, for some j, a sphere of radius
/// 1/alpha through both contains no other point. Indices ascending.
std::vector<std::size_t> alpha_hull_members(std::span<const Vec3> points, double alpha);

struct AlphaHull {
  std::vector<std::size_t> subset;   // FPS subset, indices into the field
  std::vector<std::size_t> members;  // hull members, indices into the field, ascending
};

/// Alpha hull of a farthest-point subset of the field's means.
AlphaHull alpha_hull(const ObjectField& field, double alpha, std::size_t fps_count);

/// Per-Gaussian running statistic used by densification: mean over views of the screen-space
/// mean-gradient norm, counted only in views where the Gaussian contributed.
struct DensifyStats {
  std::vector<double> grad_sum;
  std::vector<int> views;

  void reset(std::size_t n);
  void add(const GaussianGradients& g);
  double average(std::size_t i) const { return views[i] ? grad_sum[i] / views[i] : 0.0; }
};

/// Clones small hot Gaussians and splits large ones. `source` receives, for each output
/// Gaussian, the input index it came from (-1 for none), so optimizer state can follow.
std::vector<Gaussian> densify(std::span<const Gaussian> gaussians, const DensifyStats& stats,
                              const ForgeConfig& config, std::mt19937_64& rng,
                              std::vector<std::ptrdiff_t>* source = nullptr);

/// Random training camera from the configured ranges, aimed at `center` from a distance that
/// makes a sphere of `radius` fill `framing` of the image height.
Camera sample_camera(std::mt19937_64& rng, const Vec3& center, double radius, const ForgeConfig& config);

/// Direction words appended to the prompt for a view ("front view", "side view", ...).
std::string view_suffix(double azimuth_deg, double elevation_deg);

struct ForgeProgress {
  int iteration = 0;
  std::size_t gaussians = 0;
  double hull_loss = 0.0;
  double oracle_score = 0.0;
};

/// Guidance-driven object generation. Throws CapabilityError before the first iteration when the
/// oracle cannot supply residuals.
ObjectField generate_object(const std::string& prompt, std::span<const Vec3> init_points, GuidanceOracle& oracle,
                            const ForgeConfig& config = {}, bool use_pointe_knn = false,
                            const std::function<void(const ForgeProgress&)>& progress = {});

}  // namespace cg3d
