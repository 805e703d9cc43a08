#include "cg3d/physics.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "cg3d/errors.hpp"

namespace cg3d {

void PhysicsConfig::validate() const {
  if (!(lambda_g > 0 && lambda_c_factor > 0 && k_comb > 0 && learning_rate > 0 && impulse_distance > 0 &&
        impulse_angle_deg > 0))
    throw ValidationError("physics config scalars must be positive");
  if (steps < 0 || impulse_budget < 0) throw ValidationError("physics config counts must be non-negative");
  const auto [lo, hi] = impulse_overlap_range;
  if (!(lo >= 0.0 && hi <= 1.0 && lo < hi)) throw ValidationError("impulse overlap range must satisfy 0 <= lo < hi <= 1");
  if (render_size < 1) throw ValidationError("physics render_size must be positive");
}

LossAndGrad gravity_loss(std::span<const Gaussian> child, double floor, double k_comb) {
  LossAndGrad out;
  out.grad.assign(child.size(), Vec3::Zero());
  if (child.empty()) return out;
  std::size_t below = 0;
  double sum_above = 0.0, sum_below = 0.0;
  for (const auto& g : child) {
    const double h = g.mean.y() - floor;
    if (h < 0.0) {
      ++below;
      sum_below -= h;
    } else {
      sum_above += h;
    }
  }
  const std::size_t above = child.size() - below;
  if (below == 0) {
    const double n = static_cast<double>(child.size());
    out.loss = sum_above / n;
    for (auto& g : out.grad) g.y() = 1.0 / n;
    return out;
  }
  const double w_above = above ? 1.0 / (k_comb * static_cast<double>(above)) : 0.0;
  const double w_below = 1.0 / static_cast<double>(below);
  out.loss = w_above * sum_above + w_below * sum_below;
  for (std::size_t i = 0; i < child.size(); ++i)
    out.grad[i].y() = child[i].mean.y() < floor ? -w_below : w_above;
  return out;
}

double contact_angle(const Vec3& mu_j, const Vec3& mu_i, const Vec3& q) {
  const Vec3 a = mu_i - q, b = mu_i - mu_j;
  const double na = a.norm(), nb = b.norm();
  if (na < 1e-12 || nb < 1e-12) return 0.0;
  return std::acos(std::clamp(a.dot(b) / (na * nb), -1.0, 1.0));
}

ContactResult contact_loss(std::span<const Gaussian> child, std::span<const Gaussian> anchor, ContactLossMode mode,
                           const KdTree* anchor_index) {
  if (child.empty() || anchor.empty()) throw ValidationError("contact_loss needs two nonempty fields");
  KdTree local;
  if (!anchor_index) {
    std::vector<Vec3> pts(anchor.size());
    for (std::size_t i = 0; i < anchor.size(); ++i) pts[i] = anchor[i].mean;
    local = KdTree(pts);
    anchor_index = &local;
  }
  const Vec3 q = geometric_center(child);
  const std::size_t n = child.size();

  ContactResult out;
  out.grad.assign(n, Vec3::Zero());
  struct Term {
    std::size_t j;
    Vec3 a, b;
    double na, nb, cosv;
  };
  std::vector<Term> terms;
  for (std::size_t j = 0; j < n; ++j) {
    const Vec3& mu_i = anchor[anchor_index->nearest(child[j].mean)].mean;
    const Vec3 a = mu_i - q, b = mu_i - child[j].mean;
    const double na = a.norm(), nb = b.norm();
    if (na < 1e-12 || nb < 1e-12) continue;
    const double c = a.dot(b) / (na * nb);
    out.max_angle = std::max(out.max_angle, std::acos(std::clamp(c, -1.0, 1.0)));
    if (c < 0.0) terms.push_back({j, a, b, na, nb, c});
  }
  out.intersecting = terms.size();
  if (terms.empty()) return out;

  const double inv_s = 1.0 / static_cast<double>(terms.size());
  Vec3 d_q = Vec3::Zero();
  for (const Term& t : terms) {
    // Per-term loss l(a, b) with a = mu_i - q and b = mu_i - mu_j; da/dq = db/dmu_j = -I.
    Vec3 dl_da, dl_db;
    if (mode == ContactLossMode::NegativeCosine) {
      out.loss -= t.cosv * inv_s;
      dl_da = -(t.b / (t.na * t.nb) - t.cosv * t.a / (t.na * t.na));
      dl_db = -(t.a / (t.na * t.nb) - t.cosv * t.b / (t.nb * t.nb));
    } else {
      // -cos * |b| = -(a . b) / |a|
      out.loss -= t.a.dot(t.b) / t.na * inv_s;
      dl_da = -(t.b / t.na - t.a.dot(t.b) * t.a / (t.na * t.na * t.na));
      dl_db = -t.a / t.na;
    }
    out.grad[t.j] -= dl_db * inv_s;
    d_q -= dl_da * inv_s;
  }
  // q is the mean of all child means.
  const Vec3 share = d_q / static_cast<double>(n);
  for (auto& g : out.grad) g += share;
  return out;
}

double overlap_fraction(std::span<const Gaussian> child, std::span<const Gaussian> anchor) {
  constexpr int kGrid = 64;
  if (child.empty() || anchor.empty()) return 0.0;
  double x0 = INFINITY, x1 = -INFINITY, z0 = INFINITY, z1 = -INFINITY;
  for (const auto* set : {&child, &anchor})
    for (const auto& g : *set) {
      x0 = std::min(x0, g.mean.x());
      x1 = std::max(x1, g.mean.x());
      z0 = std::min(z0, g.mean.z());
      z1 = std::max(z1, g.mean.z());
    }
  const double wx = std::max(x1 - x0, 1e-12), wz = std::max(z1 - z0, 1e-12);
  const double cw = wx / kGrid, ch = wz / kGrid;
  const auto footprint = [&](std::span<const Gaussian> gs) {
    std::vector<std::uint8_t> cells(kGrid * kGrid, 0);
    for (const auto& g : gs) {
      const int cx = std::clamp(static_cast<int>((g.mean.x() - x0) / cw), 0, kGrid - 1);
      const int cz = std::clamp(static_cast<int>((g.mean.z() - z0) / ch), 0, kGrid - 1);
      cells[cz * kGrid + cx] = 1;
    }
    // Close each row, then each column, between its extreme occupied cells. Hollow shells and
    // samplings sparser than the grid then count as solid sections.
    for (int pass = 0; pass < 2; ++pass)
      for (int line = 0; line < kGrid; ++line) {
        const auto at = [&](int k) -> std::uint8_t& { return pass == 0 ? cells[line * kGrid + k] : cells[k * kGrid + line]; };
        int lo = kGrid, hi = -1;
        for (int k = 0; k < kGrid; ++k)
          if (at(k)) {
            lo = std::min(lo, k);
            hi = k;
          }
        for (int k = lo; k <= hi; ++k) at(k) = 1;
      }
    return cells;
  };
  const auto a = footprint(child), b = footprint(anchor);
  std::size_t area = 0, both = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    area += a[i];
    both += a[i] & b[i];
  }
  return area ? static_cast<double>(both) / static_cast<double>(area) : 0.0;
}

std::optional<Vec3> stabilizing_impulse(std::span<const Gaussian> child, std::span<const Gaussian> anchor,
                                        ImpulseState& state, const PhysicsConfig& config) {
  if (!state.contact || state.remaining <= 0) return std::nullopt;
  const double overlap = overlap_fraction(child, anchor);
  if (overlap < config.impulse_overlap_range[0] || overlap > config.impulse_overlap_range[1]) return std::nullopt;
  const Vec3 qc = geometric_center(child), qa = geometric_center(anchor);
  Vec3 h(qa.x() - qc.x(), 0.0, qa.z() - qc.z());
  if (h.norm() < 1e-9) return std::nullopt;
  h.normalize();
  const double el = deg_to_rad(config.impulse_angle_deg);
  --state.remaining;
  // A kick lifts the child off; the next impulse needs fresh contact.
  state.contact = false;
  return config.impulse_distance * (std::cos(el) * h + std::sin(el) * Vec3::UnitY());
}

namespace {

double extent_of(std::span<const Gaussian> gs) {
  const Vec3 c = geometric_center(gs);
  double r = 0.0;
  for (const auto& g : gs) r = std::max(r, (g.mean - c).norm());
  return r;
}

double min_height(std::span<const Gaussian> gs) {
  double m = INFINITY;
  for (const auto& g : gs) m = std::min(m, g.mean.y());
  return m;
}

// Guidance gradient of F for the current pair from views around the anchor.
PoseGradient guidance_gradient(GuidanceOracle& oracle, const Similarity& anchor_xf, const InteractionParams& p,
                               const ObjectField& anchor_world, const ObjectField& child_world,
                               const PhysicsConfig& config, std::uint64_t seed) {
  std::vector<Gaussian> pair(anchor_world.gaussians().begin(), anchor_world.gaussians().end());
  pair.insert(pair.end(), child_world.gaussians().begin(), child_world.gaussians().end());
  std::vector<std::size_t> members(child_world.size());
  std::iota(members.begin(), members.end(), anchor_world.size());

  const Vec3 center = anchor_world.geometric_center();
  const double radius = 3.0 * std::max(extent_of(pair), 1e-3);
  OracleRequest req;
  req.prompt = config.prompt.empty() ? p.prompt : config.prompt;
  req.want_residual = true;
  req.seed = seed;
  req.candidate = p;
  for (double el : {30.0, 60.0})
    for (double az : {0.0, 90.0, 180.0, 270.0}) {
      req.cameras.push_back(orbit_camera(center, radius, az, el, config.camera_fov, config.render_size,
                                         config.render_size));
      req.images.push_back(render(pair, req.cameras.back()).color);
    }
  const OracleResponse res = oracle.evaluate(req);
  if (res.residuals.size() != req.images.size()) throw OracleError("oracle returned the wrong number of residuals");
  GaussianGradients total;
  for (std::size_t v = 0; v < req.cameras.size(); ++v)
    total.accumulate(render_backward(pair, req.cameras[v], res.residuals[v]));
  return chain_pose(anchor_xf, p, pair, total, members);
}

}  // namespace

SettleReport settle(const Scene& scene, std::size_t interaction, GuidanceOracle* oracle, const PhysicsConfig& config) {
  config.validate();
  scene.validate();
  if (interaction >= scene.interactions.size()) throw SceneGraphError("interaction index out of range");
  const InteractionParams& start = scene.interactions[interaction];
  if (start.status == InteractionStatus::Unset)
    throw StatusError("interaction '" + start.anchor_id + "' -> '" + start.child_id + "' must be initialized before settling");

  const Similarity anchor_xf = scene.world_transform(start.anchor_id);
  const ObjectField anchor_world = transform_field(scene.object(start.anchor_id), anchor_xf);
  const ObjectField& child_local = scene.object(start.child_id);
  std::vector<Vec3> anchor_pts(anchor_world.size());
  for (std::size_t i = 0; i < anchor_pts.size(); ++i) anchor_pts[i] = anchor_world[i].mean;
  const KdTree index(anchor_pts);
  const double floor = floor_height(anchor_world);
  const Mat3 anchor_rot_t = quat_to_matrix(anchor_xf.rotation).transpose();

  if (oracle && !oracle->has_residuals()) oracle = nullptr;

  SettleReport report;
  InteractionParams p = start;
  // Child extent in its local frame; anchor-frame extent is this times p.scale.
  const double rho_local = std::max(extent_of(child_local.gaussians()), 1e-9);
  std::vector<std::size_t> members(child_local.size());
  std::iota(members.begin(), members.end(), 0);

  ImpulseState impulses{config.impulse_budget, false};
  double eta = config.learning_rate;
  Eigen::VectorXd prev_dir;
  std::optional<InteractionParams> accepted;

  for (int step = 0;; ++step) {
    const ObjectField child_world = transform_field(child_local, anchor_xf.compose(p.transform()));
    const LossAndGrad grav = gravity_loss(child_world.gaussians(), floor, config.k_comb);
    const ContactResult contact = contact_loss(child_world.gaussians(), anchor_world.gaussians(), config.contact_mode, &index);
    const double tol = config.floor_tolerance * extent_of(child_world.gaussians());
    const double lowest = min_height(child_world.gaussians());
    // Resting on the anchor's floor counts as contact too: there the gravity term alone holds
    // the child at the surface and the intersection test never fires.
    if (contact.intersecting > 0 || lowest <= floor + tol) impulses.contact = true;
    if (lowest >= floor - tol && contact.max_angle <= kPi / 2 + 1e-3) accepted = p;
    if (step == config.steps) break;
    report.steps = step + 1;

    if (const auto kick = stabilizing_impulse(child_world.gaussians(), anchor_world.gaussians(), impulses, config)) {
      p.translation += anchor_rot_t * *kick / anchor_xf.scale;
      report.impulses.push_back(*kick);
      eta = config.learning_rate;
      prev_dir.resize(0);
      continue;
    }

    const double lambda_c = contact.intersecting > 0 ? config.lambda_c_factor * grav.loss : 0.0;
    GaussianGradients g;
    g.resize(child_world.size());
    for (std::size_t i = 0; i < child_world.size(); ++i)
      g.d_mean[i] = config.lambda_g * grav.grad[i] + lambda_c * contact.grad[i];
    PoseGradient pose = chain_pose(anchor_xf, p, child_world.gaussians(), g, members);

    if (oracle) {
      try {
        const PoseGradient f = guidance_gradient(*oracle, anchor_xf, p, anchor_world, child_world, config,
                                                 combine_seed(static_cast<std::uint64_t>(step), interaction));
        pose.d_translation += f.d_translation;
        pose.d_rotation += f.d_rotation;
        pose.d_scale += f.d_scale;
      } catch (const OracleError&) {
        report.oracle_failed = true;
        oracle = nullptr;
      }
    }

    // Normalised step in displacement units: translation directly, rotation through the arc
    // length 2 * rho * |dq| it sweeps at the child's extent, scale through rho_local * ds.
    const double rho = rho_local * p.scale;
    Eigen::VectorXd v(config.freeze_scale ? 7 : 8);
    v.head<3>() = pose.d_translation;
    v.segment<4>(3) = pose.d_rotation / (2.0 * rho);
    if (!config.freeze_scale) v[7] = pose.d_scale / rho_local;
    const double norm = v.norm();
    if (!(norm > 0.0) || !std::isfinite(norm)) continue;
    v /= norm;
    if (prev_dir.size() == v.size()) eta = v.dot(prev_dir) < 0.0 ? 0.5 * eta : std::min(1.2 * eta, config.learning_rate);
    prev_dir = v;

    p.translation -= eta * v.head<3>();
    p.rotation -= eta * v.segment<4>(3) / (2.0 * rho);
    p.rotation.normalize();
    if (!config.freeze_scale) p.scale = std::max(p.scale - eta * v[7] / rho_local, 1e-6);
  }

  report.feasible = accepted.has_value();
  report.params = accepted ? *accepted : p;
  report.params.status = InteractionStatus::Settled;
  const ObjectField final_child = transform_field(child_local, anchor_xf.compose(report.params.transform()));
  report.final_gravity = gravity_loss(final_child.gaussians(), floor, config.k_comb).loss;
  report.final_max_angle =
      contact_loss(final_child.gaussians(), anchor_world.gaussians(), config.contact_mode, &index).max_angle;
  return report;
}

}  // namespace cg3d
