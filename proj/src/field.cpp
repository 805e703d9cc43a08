#include "cg3d/field.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <set>
#include <sstream>

#include "cg3d/errors.hpp"

namespace cg3d {

Mat3 Gaussian::covariance() const {
  const Mat3 m = quat_to_matrix(rotation) * scale.asDiagonal();
  return m * m.transpose();
}

void validate(const Gaussian& g) {
  if (!g.mean.allFinite()) throw ValidationError("gaussian mean is not finite");
  if (std::abs(g.rotation.norm() - 1.0) > kUnitTolerance)
    throw ValidationError("gaussian rotation is not unit norm");
  if (!(g.scale.array() > 0.0).all() || !g.scale.allFinite())
    throw ValidationError("gaussian scale must be strictly positive");
  if (!(g.opacity >= 0.0 && g.opacity <= 1.0)) throw ValidationError("gaussian opacity outside [0,1]");
  if (!((g.color.array() >= 0.0).all() && (g.color.array() <= 1.0).all()))
    throw ValidationError("gaussian color outside [0,1]");
}

ObjectField::ObjectField(std::string id, std::vector<Gaussian> gaussians, std::string prompt)
    : id_(std::move(id)), prompt_(std::move(prompt)), gaussians_(std::move(gaussians)) {
  if (gaussians_.empty()) throw ValidationError("object field '" + id_ + "' has no gaussians");
  sources_ = {id_};
  refresh();
}

void ObjectField::set_id(std::string id) {
  id_ = std::move(id);
  if (provenance_.empty()) sources_ = {id_};
}

void ObjectField::set_gaussians(std::vector<Gaussian> gaussians) {
  if (gaussians.empty()) throw ValidationError("object field '" + id_ + "' has no gaussians");
  gaussians_ = std::move(gaussians);
  provenance_.clear();
  sources_ = {id_};
  refresh();
}

void ObjectField::refresh() {
  center_ = cg3d::geometric_center(std::span<const Gaussian>(gaussians_));
  ++revision_;
}

std::vector<std::size_t> ObjectField::indices_from(const std::string& source_id) const {
  std::vector<std::size_t> out;
  const auto it = std::find(sources_.begin(), sources_.end(), source_id);
  if (it == sources_.end()) return out;
  const auto src = static_cast<std::uint32_t>(it - sources_.begin());
  for (std::size_t i = 0; i < gaussians_.size(); ++i)
    if (source_of(i) == src) out.push_back(i);
  return out;
}

ObjectField ObjectField::concatenate(std::string id, std::span<const ObjectField> parts) {
  std::vector<Gaussian> all;
  std::vector<std::uint32_t> provenance;
  std::vector<std::string> sources;
  for (const auto& part : parts) {
    const auto src = static_cast<std::uint32_t>(sources.size());
    sources.push_back(part.id());
    all.insert(all.end(), part.gaussians().begin(), part.gaussians().end());
    provenance.insert(provenance.end(), part.size(), src);
  }
  ObjectField out(std::move(id), std::move(all));
  out.sources_ = std::move(sources);
  out.provenance_ = std::move(provenance);
  return out;
}

const char* to_string(InteractionStatus status) {
  switch (status) {
    case InteractionStatus::Unset: return "unset";
    case InteractionStatus::Initialized: return "initialized";
    case InteractionStatus::Settled: return "settled";
  }
  return "unset";
}

InteractionStatus interaction_status_from_string(const std::string& s) {
  if (s == "unset") return InteractionStatus::Unset;
  if (s == "initialized") return InteractionStatus::Initialized;
  if (s == "settled") return InteractionStatus::Settled;
  throw ValidationError("unknown interaction status '" + s + "'");
}

void InteractionParams::validate() const {
  if (anchor_id == child_id) throw ValidationError("interaction anchor and child are both '" + anchor_id + "'");
  if (!(scale > 0.0) || !std::isfinite(scale)) throw ValidationError("interaction scale must be positive");
  if (std::abs(rotation.norm() - 1.0) > kUnitTolerance)
    throw ValidationError("interaction rotation is not unit norm");
  if (!translation.allFinite()) throw ValidationError("interaction translation is not finite");
}

void Scene::validate() const {
  std::set<std::pair<std::string, std::string>> pairs;
  for (const auto& p : interactions) {
    p.validate();
    if (!objects.count(p.anchor_id))
      throw SceneGraphError("interaction references unknown anchor '" + p.anchor_id + "'");
    if (!objects.count(p.child_id))
      throw SceneGraphError("interaction references unknown child '" + p.child_id + "'");
    auto key = std::minmax(p.anchor_id, p.child_id);
    if (!pairs.emplace(key.first, key.second).second)
      throw SceneGraphError("more than one interaction between '" + key.first + "' and '" + key.second + "'");
  }
  // Three-colour DFS over anchor -> child edges.
  std::map<std::string, int> colour;
  std::function<void(const std::string&)> visit = [&](const std::string& id) {
    colour[id] = 1;
    for (const auto& p : interactions) {
      if (p.anchor_id != id) continue;
      const int c = colour[p.child_id];
      if (c == 1) throw SceneGraphError("interaction graph has a cycle through '" + p.child_id + "'");
      if (c == 0) visit(p.child_id);
    }
    colour[id] = 2;
  };
  for (const auto& [id, _] : objects)
    if (colour[id] == 0) visit(id);
}

const ObjectField& Scene::object(const std::string& id) const {
  const auto it = objects.find(id);
  if (it == objects.end()) throw SceneGraphError("unknown object '" + id + "'");
  return it->second;
}

std::size_t Scene::interaction_index(const std::string& anchor, const std::string& child) const {
  for (std::size_t i = 0; i < interactions.size(); ++i)
    if (interactions[i].anchor_id == anchor && interactions[i].child_id == child) return i;
  throw SceneGraphError("no interaction with anchor '" + anchor + "' and child '" + child + "'");
}

std::vector<std::size_t> Scene::inbound(const std::string& id) const {
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < interactions.size(); ++i)
    if (interactions[i].child_id == id) out.push_back(i);
  return out;
}

Similarity Scene::world_transform(const std::string& id) const {
  object(id);
  std::vector<std::size_t> chain;
  std::string cur = id;
  for (;;) {
    const auto in = inbound(cur);
    if (in.empty()) break;
    if (in.size() > 1) throw SceneGraphError("object '" + cur + "' has more than one anchor chain");
    chain.push_back(in.front());
    cur = interactions[in.front()].anchor_id;
    if (chain.size() > interactions.size()) throw SceneGraphError("interaction graph has a cycle");
  }
  Similarity xf{identity_quat(), Vec3::Zero(), anchor_scale};
  for (auto it = chain.rbegin(); it != chain.rend(); ++it) {
    const auto& p = interactions[*it];
    if (p.status == InteractionStatus::Unset)
      throw StatusError("interaction '" + p.anchor_id + "' -> '" + p.child_id +
                        "' must be initialized before composition");
    xf = xf.compose(p.transform());
  }
  return xf;
}

std::vector<std::size_t> Scene::ancestral_order() const {
  std::vector<std::size_t> order;
  std::vector<bool> done(interactions.size(), false);
  std::set<std::string> placed;
  for (const auto& [id, _] : objects)
    if (inbound(id).empty()) placed.insert(id);
  bool progress = true;
  while (progress) {
    progress = false;
    for (std::size_t i = 0; i < interactions.size(); ++i) {
      if (done[i] || !placed.count(interactions[i].anchor_id)) continue;
      done[i] = true;
      order.push_back(i);
      placed.insert(interactions[i].child_id);
      progress = true;
    }
  }
  if (order.size() != interactions.size())
    throw SceneGraphError("interaction graph is not reachable from a root object");
  return order;
}

std::vector<std::string> Scene::subtree(const std::string& id) const {
  std::vector<std::string> out{id};
  for (std::size_t k = 0; k < out.size(); ++k)
    for (const auto& p : interactions)
      if (p.anchor_id == out[k] && std::find(out.begin(), out.end(), p.child_id) == out.end())
        out.push_back(p.child_id);
  return out;
}

ObjectField transform_field(const ObjectField& field, const Similarity& xf) {
  const Mat3 rot = quat_to_matrix(xf.rotation);
  ObjectField out = field;
  out.mutate([&](std::vector<Gaussian>& gs) {
    for (auto& g : gs) {
      g.mean = xf.scale * (rot * g.mean) + xf.translation;
      g.rotation = quat_mul(xf.rotation, g.rotation);
      g.scale = g.scale * xf.scale;
    }
  });
  return out;
}

ObjectField transform_to_composition(const ObjectField& field, const InteractionParams& params) {
  if (std::abs(params.rotation.norm() - 1.0) > kUnitTolerance)
    throw ValidationError("interaction rotation is not unit norm");
  if (!(params.scale > 0.0)) throw ValidationError("interaction scale must be positive");
  return transform_field(field, params.transform());
}

ObjectField flatten_scene(const Scene& scene) {
  scene.validate();
  if (scene.objects.empty()) throw SceneGraphError("scene has no objects");
  std::vector<ObjectField> parts;
  parts.reserve(scene.objects.size());
  for (const auto& [id, field] : scene.objects) parts.push_back(transform_field(field, scene.world_transform(id)));
  return ObjectField::concatenate("scene", parts);
}

double floor_height(std::span<const Gaussian> gaussians) {
  const std::size_t n = gaussians.size();
  if (n == 0) throw ValidationError("floor_height of an empty field");
  const auto k = std::max<std::size_t>(1, static_cast<std::size_t>(std::ceil(0.001 * static_cast<double>(n))));
  std::vector<double> ys(n);
  for (std::size_t i = 0; i < n; ++i) ys[i] = gaussians[i].mean.y();
  std::partial_sort(ys.begin(), ys.begin() + static_cast<std::ptrdiff_t>(k), ys.end());
  if (k % 2 == 1) return ys[k / 2];
  return 0.5 * (ys[k / 2 - 1] + ys[k / 2]);
}

Vec3 geometric_center(std::span<const Gaussian> gaussians) {
  if (gaussians.empty()) return Vec3::Zero();
  Vec3 sum = Vec3::Zero();
  for (const auto& g : gaussians) sum += g.mean;
  return sum / static_cast<double>(gaussians.size());
}

}  // namespace cg3d
