#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "cg3d/math.hpp"

namespace cg3d {

/// One anisotropic 3D primitive. Covariance is kept factored as R(rotation) diag(scale^2) R^T.
struct Gaussian {
  Vec3 mean = Vec3::Zero();
  Quat rotation = identity_quat();
  Vec3 scale = Vec3::Constant(0.01);
  double opacity = 1.0;
  Vec3 color = Vec3::Zero();

  Mat3 covariance() const;
};

inline constexpr double kUnitTolerance = 1e-6;

/// Throws ValidationError when a Gaussian breaks its invariants.
void validate(const Gaussian& g);

/// An ordered set of Gaussians in object-local coordinates.
///
/// Flattened scene fields additionally carry per-Gaussian provenance (an index into
/// `sources()`); a plain object field reports itself as the only source.
class ObjectField {
 public:
  ObjectField() = default;
  ObjectField(std::string id, std::vector<Gaussian> gaussians, std::string prompt = {});

  const std::string& id() const noexcept { return id_; }
  void set_id(std::string id);
  const std::string& prompt() const noexcept { return prompt_; }
  void set_prompt(std::string prompt) { prompt_ = std::move(prompt); }

  std::span<const Gaussian> gaussians() const noexcept { return gaussians_; }
  std::size_t size() const noexcept { return gaussians_.size(); }
  bool empty() const noexcept { return gaussians_.empty(); }
  const Gaussian& operator[](std::size_t i) const { return gaussians_[i]; }

  /// Arithmetic mean of the Gaussian means, refreshed on every mutation.
  const Vec3& geometric_center() const noexcept { return center_; }
  std::uint64_t revision() const noexcept { return revision_; }

  const std::optional<std::vector<Vec3>>& init_points() const noexcept { return init_points_; }
  void set_init_points(std::optional<std::vector<Vec3>> points) { init_points_ = std::move(points); }

  void set_gaussians(std::vector<Gaussian> gaussians);

  /// Runs `fn(std::vector<Gaussian>&)` and refreshes cached data. Provenance is kept
  /// only when the count is unchanged.
  template <class Fn>
  void mutate(Fn&& fn) {
    const std::size_t before = gaussians_.size();
    fn(gaussians_);
    if (gaussians_.size() != before) provenance_.clear();
    refresh();
  }

  const std::vector<std::string>& sources() const noexcept { return sources_; }
  std::uint32_t source_of(std::size_t i) const { return provenance_.empty() ? 0u : provenance_[i]; }
  /// Indices of Gaussians that came from `source_id`.
  std::vector<std::size_t> indices_from(const std::string& source_id) const;

  /// Concatenates fields, recording provenance by each part's id.
  static ObjectField concatenate(std::string id, std::span<const ObjectField> parts);

 private:
  void refresh();

  std::string id_;
  std::string prompt_;
  std::vector<Gaussian> gaussians_;
  std::optional<std::vector<Vec3>> init_points_;
  std::vector<std::string> sources_;
  std::vector<std::uint32_t> provenance_;
  Vec3 center_ = Vec3::Zero();
  std::uint64_t revision_ = 0;
};

enum class InteractionStatus { Unset, Initialized, Settled };

const char* to_string(InteractionStatus status);
InteractionStatus interaction_status_from_string(const std::string& s);

/// Pair transform P = (R, t, s) placing `child_id` in the frame of `anchor_id`.
struct InteractionParams {
  std::string anchor_id;
  std::string child_id;
  Quat rotation = identity_quat();
  Vec3 translation = Vec3::Zero();
  double scale = 1.0;
  std::string prompt;
  InteractionStatus status = InteractionStatus::Unset;

  Similarity transform() const { return {rotation, translation, scale}; }
  void validate() const;
};

/// Objects plus the pairwise interaction graph (anchor -> child edges).
struct Scene {
  std::map<std::string, ObjectField> objects;
  std::vector<InteractionParams> interactions;
  double anchor_scale = 0.8;

  /// Ids exist, no self pairs, one interaction per unordered pair, graph acyclic.
  void validate() const;

  const ObjectField& object(const std::string& id) const;
  /// Index of the interaction for (anchor, child); throws SceneGraphError when absent.
  std::size_t interaction_index(const std::string& anchor, const std::string& child) const;
  /// Interactions whose child is `id`.
  std::vector<std::size_t> inbound(const std::string& id) const;
  /// World transform of an object: roots get (I, 0, anchor_scale), children compose along
  /// their anchor chain. Throws StatusError when the chain holds an Unset interaction.
  Similarity world_transform(const std::string& id) const;
  /// Interaction indices in ancestral (topological) order.
  std::vector<std::size_t> ancestral_order() const;
  /// `id` and every object reachable from it through anchor -> child edges.
  std::vector<std::string> subtree(const std::string& id) const;
};

ObjectField transform_field(const ObjectField& field, const Similarity& xf);

/// Applies P to every Gaussian: mean s R mu + t, rotation R ∘ q, scale * s.
ObjectField transform_to_composition(const ObjectField& field, const InteractionParams& params);

/// Combines every object into world coordinates, objects ordered by id.
ObjectField flatten_scene(const Scene& scene);

/// Median y over the ceil(0.1% N) lowest Gaussian means (at least one).
double floor_height(std::span<const Gaussian> gaussians);
inline double floor_height(const ObjectField& field) { return floor_height(field.gaussians()); }

Vec3 geometric_center(std::span<const Gaussian> gaussians);
inline Vec3 geometric_center(const ObjectField& field) { return geometric_center(field.gaussians()); }

}  // namespace cg3d
