#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "cg3d/field.hpp"
#include "cg3d/oracle.hpp"
#include "cg3d/render.hpp"
#include "cg3d/spatial.hpp"

namespace cg3d {

struct InitConfig {
  double camera_radius_primary = 4.5;
  double camera_radius_reduced = 2.5;
  std::array<double, 2> scale_range_primary{0.3, 0.7};
  std::array<double, 2> scale_range_reduced{0.2, 0.6};
  /// A scale estimate below this switches to the reduced radius and range for later rounds.
  double scale_switch_threshold = 0.35;
  int scale_samples = 50;
  int scale_top_k = 5;
  int translation_samples = 50;
  int joint_samples = 150;
  int alternating_rounds = 3;
  double visibility_exponent = 0.5;
  std::vector<double> camera_elevations{30.0, 60.0};
  std::vector<double> camera_azimuths{0.0, 90.0, 180.0, 270.0};

  /// Translation candidates live on a sphere of this multiple of the anchor's bounding radius.
  double sphere_radius_factor = 1.2;
  /// Attempts at drawing a survivor before giving up; each attempt grows the sphere by 10%.
  int max_attempts = 3;
  /// Draws per attempt are capped at this multiple of the requested sample count.
  int draw_factor = 20;
  int render_size = 64;
  double camera_fov = 45.0;
  unsigned threads = 0;  // 0: hardware concurrency

  void validate() const;
};

enum class PruneReason { None, Intersection, BelowFloor, OutOfRange };
const char* to_string(PruneReason r);

struct CandidateScore {
  InteractionParams params;
  std::optional<double> f;  // absent when pruned or the oracle failed
  double f_trans = 0.0;
  double visibility = 0.0;
  PruneReason pruned = PruneReason::None;
  bool failed = false;
};

struct StepDiagnostics {
  std::string stage;  // "joint", "translation" or "scale"
  int round = 0;
  int attempts = 0;
  double sphere_radius = 0.0;
  std::size_t drawn = 0;
  std::size_t pruned_intersection = 0;
  std::size_t pruned_below_floor = 0;
  std::size_t pruned_out_of_range = 0;
  std::size_t scored = 0;
  std::size_t failed = 0;
  double best = 0.0;
};

struct InitDiagnostics {
  std::vector<StepDiagnostics> steps;
  bool radius_switched = false;
  std::size_t oracle_calls = 0;
};

/// Visibility-corrected translation score f / max(v / s^2, 1e-8)^gamma. For negative f the
/// correction multiplies instead, so lower visibility always raises the score.
double f_trans(double f, double visibility, double s, double gamma);

/// Monte-Carlo initialization state for one interaction. Holds the current (t, s) estimate and
/// the sticky scale-guard switch; each sampling step replaces the estimate.
class InitSession {
 public:
  InitSession(const Scene& scene, std::size_t interaction, CLFOracle& oracle, InitConfig config = {},
              std::uint64_t seed = 0);

  const InteractionParams& params() const noexcept { return params_; }
  void set_params(const InteractionParams& p);
  bool radius_switched() const noexcept { return diag_.radius_switched; }
  const InitDiagnostics& diagnostics() const noexcept { return diag_; }
  double sphere_radius() const noexcept { return sphere_radius_; }
  const Vec3& sphere_center() const noexcept { return sphere_center_; }
  double floor() const noexcept { return floor_; }

  /// The fixed init views at the currently active radius, aimed at the anchor's world center.
  std::vector<Camera> cameras() const;

  /// Best single (t, s) over `joint_samples` draws by f_trans.
  void joint_init();
  /// Mean of the `scale_top_k` best of `scale_samples` scales with t frozen. Returns the scale.
  double sample_scale();
  /// Best of `translation_samples` sphere points by f_trans with s frozen. The current
  /// translation is re-scored as one of the samples, so with a noiseless oracle the estimate
  /// never gets worse.
  Vec3 sample_translation();
  /// joint_init, then `alternating_rounds` of (translation, scale).
  InteractionParams run();

  /// Pruning test for a candidate against the anchor and floor.
  PruneReason prune(const InteractionParams& p) const;
  /// Renders and scores one candidate. `seed` is forwarded to the oracle.
  CandidateScore evaluate(const InteractionParams& p, std::uint64_t seed) const;

 private:
  template <class Draw>
  std::vector<CandidateScore> step(const char* stage, int count, const std::optional<InteractionParams>& incumbent,
                                   Draw&& draw);
  std::array<double, 2> scale_range() const;
  Vec3 sphere_point(std::mt19937_64& rng, double radius) const;

  CLFOracle& oracle_;
  InitConfig config_;
  std::uint64_t seed_;
  std::uint64_t step_counter_ = 0;
  int round_ = 0;
  InteractionParams params_;

  Similarity anchor_xf_;
  ObjectField anchor_world_;
  ObjectField child_local_;
  KdTree anchor_index_;
  double floor_ = 0.0;
  Vec3 sphere_center_;
  double sphere_radius_ = 0.0;
  double camera_radius_ = 0.0;
  InitDiagnostics diag_;
};

/// Full structured initialization of one Unset interaction. The result has R = identity and
/// status Initialized.
InteractionParams structured_init(const Scene& scene, std::size_t interaction, CLFOracle& oracle,
                                  const InitConfig& config = {}, std::uint64_t seed = 0,
                                  InitDiagnostics* diagnostics = nullptr);

}  // namespace cg3d
