#pragma once

#include <array>
#include <optional>
#include <span>
#include <vector>

#include "cg3d/field.hpp"
#include "cg3d/oracle.hpp"
#include "cg3d/render.hpp"
#include "cg3d/spatial.hpp"

namespace cg3d {

/// How penetrating child Gaussians are penalised.
///  - NegativeCosine: mean of -cos(angle) over the intersecting set, as the loss is usually written.
///  - PenetrationDepth: the same cosine weighted by |mu_i - mu_j|, which vanishes smoothly as
///    the child leaves the anchor and whose gradient always points outward.
enum class ContactLossMode { NegativeCosine, PenetrationDepth };

struct PhysicsConfig {
  double lambda_g = 10000.0;
  double lambda_c_factor = 30000.0;
  double k_comb = 2000.0;
  int steps = 200;
  double learning_rate = 0.005;
  double impulse_distance = 0.3;
  double impulse_angle_deg = 60.0;
  std::array<double, 2> impulse_overlap_range{0.40, 0.95};
  int impulse_budget = 5;
  bool freeze_scale = true;
  ContactLossMode contact_mode = ContactLossMode::PenetrationDepth;
  /// Below-floor tolerance for accepting an iterate, as a fraction of the child extent.
  double floor_tolerance = 0.005;
  /// Cameras used for the guidance term when an oracle is supplied.
  int render_size = 64;
  double camera_fov = 45.0;
  std::string prompt;

  void validate() const;
};

struct LossAndGrad {
  double loss = 0.0;
  std::vector<Vec3> grad;  // per child Gaussian mean
};

LossAndGrad gravity_loss(std::span<const Gaussian> child, double floor, double k_comb);

/// Angle at the nearest anchor mean between the directions to the child's center and to the
/// child Gaussian. Obtuse means the child Gaussian is inside the anchor.
double contact_angle(const Vec3& mu_j, const Vec3& mu_i_nearest, const Vec3& q_child);

struct ContactResult {
  double loss = 0.0;
  std::vector<Vec3> grad;
  std::size_t intersecting = 0;
  double max_angle = 0.0;
};

/// `anchor_index` must index the anchor means when given; otherwise one is built.
ContactResult contact_loss(std::span<const Gaussian> child, std::span<const Gaussian> anchor,
                           ContactLossMode mode = ContactLossMode::NegativeCosine,
                           const KdTree* anchor_index = nullptr);

/// Fraction of the child's top-view (xz) footprint covered by the anchor's footprint, measured
/// on a 64x64 occupancy grid spanning both objects.
double overlap_fraction(std::span<const Gaussian> child, std::span<const Gaussian> anchor);

struct ImpulseState {
  int remaining = 5;
  bool contact = false;  // latched by the settle loop once contact_loss > 0
};

/// World-space translation kick toward the anchor's vertical axis, or nothing when the overlap is
/// outside the configured band, the budget is spent, or contact has not been made.
std::optional<Vec3> stabilizing_impulse(std::span<const Gaussian> child, std::span<const Gaussian> anchor,
                                        ImpulseState& state, const PhysicsConfig& config);

struct SettleReport {
  InteractionParams params;
  int steps = 0;
  std::vector<Vec3> impulses;  // world-space kicks in firing order
  bool oracle_failed = false;
  bool feasible = true;  // false when no iterate met the floor and contact conditions
  double final_gravity = 0.0;
  double final_max_angle = 0.0;
};

/// Physics finetuning of one interaction (index into scene.interactions).
SettleReport settle(const Scene& scene, std::size_t interaction, GuidanceOracle* oracle,
                    const PhysicsConfig& config = {});

}  // namespace cg3d
