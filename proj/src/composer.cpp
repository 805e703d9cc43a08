#include "cg3d/composer.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "cg3d/errors.hpp"
#include "cg3d/parallel.hpp"
#include "cg3d/physics.hpp"

namespace cg3d {

void InitConfig::validate() const {
  const auto ordered = [](const std::array<double, 2>& r) { return r[0] > 0.0 && r[0] < r[1]; };
  if (!ordered(scale_range_primary) || !ordered(scale_range_reduced))
    throw ValidationError("scale ranges must be positive and ordered");
  if (!(camera_radius_primary > 0 && camera_radius_reduced > 0 && sphere_radius_factor > 0 && camera_fov > 0))
    throw ValidationError("init radii and fov must be positive");
  if (scale_samples < 1 || translation_samples < 1 || joint_samples < 1 || alternating_rounds < 0 ||
      max_attempts < 1 || draw_factor < 1 || render_size < 1)
    throw ValidationError("init sample counts must be at least 1");
  if (scale_top_k < 1 || scale_top_k > scale_samples) throw ValidationError("scale_top_k must lie in [1, scale_samples]");
  if (!(visibility_exponent > 0.0 && visibility_exponent <= 1.0))
    throw ValidationError("visibility exponent must lie in (0, 1]");
  if (camera_elevations.empty() || camera_azimuths.empty()) throw ValidationError("init cameras must be nonempty");
  for (double e : camera_elevations)
    if (e < 0.0) throw ValidationError("init camera elevations must be non-negative");
}

const char* to_string(PruneReason r) {
  switch (r) {
    case PruneReason::None: return "none";
    case PruneReason::Intersection: return "intersection";
    case PruneReason::BelowFloor: return "below-floor";
    case PruneReason::OutOfRange: return "out-of-range";
  }
  return "?";
}

double f_trans(double f, double visibility, double s, double gamma) {
  if (!(s > 0.0)) throw ValidationError("f_trans needs a positive scale");
  if (visibility < 0.0) throw ValidationError("visibility must be non-negative");
  if (!(gamma > 0.0 && gamma <= 1.0)) throw ValidationError("visibility exponent must lie in (0, 1]");
  const double w = std::pow(std::max(visibility / (s * s), 1e-8), gamma);
  return f >= 0.0 ? f / w : f * w;
}

InitSession::InitSession(const Scene& scene, std::size_t interaction, CLFOracle& oracle, InitConfig config,
                         std::uint64_t seed)
    : oracle_(oracle), config_(std::move(config)), seed_(seed) {
  config_.validate();
  scene.validate();
  if (interaction >= scene.interactions.size()) throw SceneGraphError("interaction index out of range");
  params_ = scene.interactions[interaction];
  anchor_xf_ = scene.world_transform(params_.anchor_id);
  const ObjectField& anchor_local = scene.object(params_.anchor_id);
  anchor_world_ = transform_field(anchor_local, anchor_xf_);
  child_local_ = scene.object(params_.child_id);

  std::vector<Vec3> pts(anchor_world_.size());
  for (std::size_t i = 0; i < pts.size(); ++i) pts[i] = anchor_world_[i].mean;
  anchor_index_ = KdTree(pts);
  floor_ = floor_height(anchor_world_);

  sphere_center_ = anchor_local.geometric_center();
  double r = 0.0;
  for (const auto& g : anchor_local.gaussians()) r = std::max(r, (g.mean - sphere_center_).norm());
  sphere_radius_ = config_.sphere_radius_factor * std::max(r, 1e-6);
  camera_radius_ = config_.camera_radius_primary;
}

void InitSession::set_params(const InteractionParams& p) {
  if (p.anchor_id != params_.anchor_id || p.child_id != params_.child_id)
    throw ValidationError("parameters belong to a different interaction");
  params_ = p;
}

std::vector<Camera> InitSession::cameras() const {
  std::vector<Camera> cams;
  for (double el : config_.camera_elevations)
    for (double az : config_.camera_azimuths)
      cams.push_back(orbit_camera(anchor_world_.geometric_center(), camera_radius_, az, el, config_.camera_fov,
                                  config_.render_size, config_.render_size));
  return cams;
}

std::array<double, 2> InitSession::scale_range() const {
  return diag_.radius_switched ? config_.scale_range_reduced : config_.scale_range_primary;
}

Vec3 InitSession::sphere_point(std::mt19937_64& rng, double radius) const {
  std::normal_distribution<double> n(0.0, 1.0);
  Vec3 d;
  do d = Vec3(n(rng), n(rng), n(rng));
  while (d.norm() < 1e-12);
  return sphere_center_ + radius * d.normalized();
}

PruneReason InitSession::prune(const InteractionParams& p) const {
  const auto range = scale_range();
  if (p.scale < range[0] || p.scale > range[1]) return PruneReason::OutOfRange;
  const ObjectField child = transform_field(child_local_, anchor_xf_.compose(p.transform()));
  for (const auto& g : child.gaussians())
    if (g.mean.y() < floor_) return PruneReason::BelowFloor;
  const Vec3 q = child.geometric_center();
  for (const auto& g : child.gaussians())
    if (contact_angle(g.mean, anchor_world_[anchor_index_.nearest(g.mean)].mean, q) > kPi / 2)
      return PruneReason::Intersection;
  return PruneReason::None;
}

CandidateScore InitSession::evaluate(const InteractionParams& p, std::uint64_t seed) const {
  CandidateScore out;
  out.params = p;
  const ObjectField child = transform_field(child_local_, anchor_xf_.compose(p.transform()));
  std::vector<Gaussian> pair(anchor_world_.gaussians().begin(), anchor_world_.gaussians().end());
  pair.insert(pair.end(), child.gaussians().begin(), child.gaussians().end());

  OracleRequest req;
  req.prompt = p.prompt;
  req.seed = seed;
  req.candidate = p;
  req.cameras = cameras();
  RenderOptions opts;
  opts.threads = 1;  // candidates already run in parallel
  std::vector<double> contribution;
  double vis = 0.0;
  for (const Camera& cam : req.cameras) {
    req.images.push_back(render(pair, cam, opts, nullptr, &contribution).color);
    double sum = 0.0;
    for (std::size_t i = anchor_world_.size(); i < pair.size(); ++i) sum += contribution[i];
    vis += sum / static_cast<double>(child.size());
  }
  out.visibility = vis / static_cast<double>(req.cameras.size());
  try {
    out.f = oracle_.evaluate(req).score;
    if (!std::isfinite(*out.f)) throw OracleError("oracle returned a non-finite score");
    out.f_trans = f_trans(*out.f, out.visibility, p.scale, config_.visibility_exponent);
  } catch (const OracleError&) {
    out.f.reset();
    out.failed = true;
  }
  return out;
}

template <class Draw>
std::vector<CandidateScore> InitSession::step(const char* stage, int count,
                                              const std::optional<InteractionParams>& incumbent, Draw&& draw) {
  const std::uint64_t key = combine_seed(seed_, ++step_counter_);
  std::mt19937_64 rng(key);
  StepDiagnostics d;
  d.stage = stage;
  d.round = round_;

  std::vector<InteractionParams> accepted;
  const auto consider = [&](const InteractionParams& p) {
    ++d.drawn;
    switch (prune(p)) {
      case PruneReason::None: accepted.push_back(p); break;
      case PruneReason::Intersection: ++d.pruned_intersection; break;
      case PruneReason::BelowFloor: ++d.pruned_below_floor; break;
      case PruneReason::OutOfRange: ++d.pruned_out_of_range; break;
    }
  };
  for (int attempt = 0; attempt < config_.max_attempts && accepted.empty(); ++attempt) {
    d.attempts = attempt + 1;
    d.sphere_radius = sphere_radius_ * std::pow(1.1, attempt);
    // The incumbent takes one of the slots so the call budget stays at `count`.
    if (incumbent && attempt == 0) consider(*incumbent);
    const std::size_t cap = static_cast<std::size_t>(count) * static_cast<std::size_t>(config_.draw_factor);
    for (std::size_t n = 0; accepted.size() < static_cast<std::size_t>(count) && n < cap; ++n)
      consider(draw(rng, d.sphere_radius));
  }
  if (accepted.empty()) {
    diag_.steps.push_back(d);
    throw SamplingError(std::string(stage) + " sampling: every candidate was pruned (" +
                        std::to_string(d.pruned_intersection) + " intersecting, " +
                        std::to_string(d.pruned_below_floor) + " below floor, " +
                        std::to_string(d.pruned_out_of_range) + " out of range)");
  }

  std::vector<CandidateScore> scores(accepted.size());
  const unsigned workers =
      std::min(config_.threads ? config_.threads : default_threads(), std::max(1u, oracle_.concurrency_limit()));
  parallel_chunks(accepted.size(), workers, [&](unsigned, std::size_t b, std::size_t e) {
    for (std::size_t i = b; i < e; ++i) scores[i] = evaluate(accepted[i], combine_seed(key, i));
  });
  d.scored = scores.size();
  diag_.oracle_calls += scores.size();
  for (const auto& s : scores) d.failed += s.failed;
  if (2 * d.failed > d.scored) {
    diag_.steps.push_back(d);
    throw OracleError(std::string(stage) + " sampling: the oracle failed on " + std::to_string(d.failed) + " of " +
                      std::to_string(d.scored) + " candidates");
  }
  diag_.steps.push_back(d);
  return scores;
}

namespace {

// Index of the smallest key among scored candidates; ties go to the lower index.
template <class Key>
std::size_t argmin(const std::vector<CandidateScore>& c, Key key) {
  std::size_t best = c.size();
  for (std::size_t i = 0; i < c.size(); ++i) {
    if (!c[i].f) continue;
    if (best == c.size() || key(c[i]) < key(c[best])) best = i;
  }
  return best;
}

}  // namespace

void InitSession::joint_init() {
  const auto range = scale_range();
  auto scores = step("joint", config_.joint_samples, std::nullopt, [&](std::mt19937_64& rng, double radius) {
    InteractionParams p = params_;
    p.rotation = identity_quat();
    p.translation = sphere_point(rng, radius);
    p.scale = std::uniform_real_distribution<double>(range[0], range[1])(rng);
    return p;
  });
  const std::size_t best = argmin(scores, [](const CandidateScore& c) { return c.f_trans; });
  diag_.steps.back().best = scores[best].f_trans;
  params_.rotation = identity_quat();
  params_.translation = scores[best].params.translation;
  params_.scale = scores[best].params.scale;
}

Vec3 InitSession::sample_translation() {
  auto scores = step("translation", config_.translation_samples, params_, [&](std::mt19937_64& rng, double radius) {
    InteractionParams p = params_;
    p.translation = sphere_point(rng, radius);
    return p;
  });
  const std::size_t best = argmin(scores, [](const CandidateScore& c) { return c.f_trans; });
  diag_.steps.back().best = scores[best].f_trans;
  params_.translation = scores[best].params.translation;
  return params_.translation;
}

double InitSession::sample_scale() {
  const auto range = scale_range();
  auto scores = step("scale", config_.scale_samples, std::nullopt, [&](std::mt19937_64& rng, double) {
    InteractionParams p = params_;
    p.scale = std::uniform_real_distribution<double>(range[0], range[1])(rng);
    return p;
  });
  std::vector<std::size_t> order;
  for (std::size_t i = 0; i < scores.size(); ++i)
    if (scores[i].f) order.push_back(i);
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return *scores[a].f < *scores[b].f || (*scores[a].f == *scores[b].f && a < b);
  });
  const std::size_t k = std::min<std::size_t>(static_cast<std::size_t>(config_.scale_top_k), order.size());
  double s = 0.0;
  for (std::size_t i = 0; i < k; ++i) s += scores[order[i]].params.scale;
  s /= static_cast<double>(k);
  diag_.steps.back().best = *scores[order[0]].f;
  InteractionParams trial = params_;
  trial.scale = s;
  // The average of valid scales can still collide with the anchor; keep the best single one then.
  params_.scale = prune(trial) == PruneReason::None ? s : scores[order[0]].params.scale;
  s = params_.scale;

  // Scale-anomaly guard: an estimate hugging the bottom of the primary range means the object
  // is probably smaller than the range allows. Sticky for the rest of the session.
  if (!diag_.radius_switched && s < config_.scale_switch_threshold) {
    diag_.radius_switched = true;
    camera_radius_ = config_.camera_radius_reduced;
  }
  return s;
}

InteractionParams InitSession::run() {
  round_ = 0;
  joint_init();
  for (round_ = 1; round_ <= config_.alternating_rounds; ++round_) {
    sample_translation();
    sample_scale();
  }
  params_.rotation = identity_quat();
  params_.status = InteractionStatus::Initialized;
  return params_;
}

InteractionParams structured_init(const Scene& scene, std::size_t interaction, CLFOracle& oracle,
                                  const InitConfig& config, std::uint64_t seed, InitDiagnostics* diagnostics) {
  if (interaction < scene.interactions.size() && scene.interactions[interaction].status != InteractionStatus::Unset)
    throw StatusError("interaction '" + scene.interactions[interaction].anchor_id + "' -> '" +
                      scene.interactions[interaction].child_id + "' is already initialized");
  InitSession session(scene, interaction, oracle, config, seed);
  InteractionParams out;
  try {
    out = session.run();
  } catch (...) {
    if (diagnostics) *diagnostics = session.diagnostics();
    throw;
  }
  if (diagnostics) *diagnostics = session.diagnostics();
  return out;
}

}  // namespace cg3d
