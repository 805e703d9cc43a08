#pragma once

#include <cstddef>
#include <optional>
#include <span>
#include <vector>

#include "cg3d/field.hpp"

namespace cg3d {

/// Pinhole camera. View axes follow the OpenCV convention: x right, y down, z forward.
/// Pixel centers sit on integer coordinates; the principal point is the image center.
struct Camera {
  Vec3 position = Vec3(0, 0, 4);
  Vec3 look_at = Vec3::Zero();
  Vec3 up = Vec3::UnitY();
  double fov_y = 45.0;  // degrees
  int width = 64;
  int height = 64;
  double near = 0.01;

  void validate() const;
  /// Rows are the view-space axes expressed in world coordinates.
  Mat3 world_to_view() const;
  double focal() const;
  double cx() const { return 0.5 * (width - 1); }
  double cy() const { return 0.5 * (height - 1); }
};

/// Camera on a sphere around `target`. Azimuth 0 looks from +z, 90 from +x; elevation is
/// measured up from the horizontal plane.
Camera orbit_camera(const Vec3& target, double radius, double azimuth_deg, double elevation_deg, double fov_y,
                    int width, int height);

struct Image {
  int width = 0;
  int height = 0;
  std::vector<double> rgb;  // interleaved, row-major

  Image() = default;
  Image(int w, int h, double fill = 0.0) : width(w), height(h), rgb(static_cast<std::size_t>(w) * h * 3, fill) {}
  double& at(int x, int y, int c) { return rgb[(static_cast<std::size_t>(y) * width + x) * 3 + c]; }
  double at(int x, int y, int c) const { return rgb[(static_cast<std::size_t>(y) * width + x) * 3 + c]; }
  bool same_shape(const Image& o) const { return width == o.width && height == o.height; }
};

struct RenderedImage {
  Image color;
  std::vector<double> alpha;  // accumulated opacity 1 - T, row-major
};

struct Projection {
  Vec2 mean;
  Mat2 cov;  // includes the 0.3 px^2 inflation
  double depth = 0.0;
  bool culled = false;
};

inline constexpr double kCovInflation = 0.3;

Projection project(const Gaussian& g, const Camera& camera);

struct RenderOptions {
  /// Three-sigma footprint and the transmittance floor. Disable for exact reference comparisons.
  bool cutoffs = true;
  double min_transmittance = 1e-4;
  unsigned threads = 0;  // 0 = hardware concurrency
};

struct RenderStats {
  std::size_t culled = 0;
  std::size_t degenerate = 0;
};

/// Front-to-back alpha blending of the projected Gaussians over a black background.
/// When `contribution` is given it receives, per Gaussian, the summed weight alpha * T.
RenderedImage render(std::span<const Gaussian> gaussians, const Camera& camera, const RenderOptions& options = {},
                     RenderStats* stats = nullptr, std::vector<double>* contribution = nullptr);
inline RenderedImage render(const ObjectField& field, const Camera& camera, const RenderOptions& options = {}) {
  return render(field.gaussians(), camera, options);
}

/// Gradients of sum_p residual(p) . C(p) with respect to each Gaussian's attributes.
struct GaussianGradients {
  std::vector<Vec3> d_mean;
  std::vector<Mat3> d_rotation;  // with respect to the rotation matrix
  std::vector<Vec3> d_scale;
  std::vector<double> d_opacity;
  std::vector<Vec3> d_color;
  std::vector<Vec2> d_mean2d;  // view-space (pixel) gradient, used by densification
  std::vector<double> contribution;

  void resize(std::size_t n);
  void accumulate(const GaussianGradients& other);
};

/// Reverse pass of `render`. Uses the same cutoffs as the forward pass.
GaussianGradients render_backward(std::span<const Gaussian> gaussians, const Camera& camera, const Image& residual,
                                  const RenderOptions& options = {});

struct PoseGradient {
  Quat d_rotation = Quat::Zero();
  Vec3 d_translation = Vec3::Zero();
  double d_scale = 0.0;
};

/// Chains per-Gaussian gradients into the pair transform P of one interaction.
/// `anchor` is the world transform of P's anchor frame; `members` lists the indices (into
/// `world` and `grads`) of Gaussians placed through P, i.e. the child and its descendants.
PoseGradient chain_pose(const Similarity& anchor, const InteractionParams& params, std::span<const Gaussian> world,
                        const GaussianGradients& grads, std::span<const std::size_t> members);

struct ViewGradients {
  GaussianGradients gaussians;  // indexed like flatten_scene(scene)
  std::vector<PoseGradient> d_pose;  // one per requested interaction
};

/// Renders the flattened scene, back-propagates `residual`, and chains into the requested
/// interactions (indices into scene.interactions).
ViewGradients render_backward(const Scene& scene, const Camera& camera, const Image& residual,
                              std::span<const std::size_t> interactions, const RenderOptions& options = {});

/// Mean over `members` of their blending contribution, averaged over cameras.
double visibility(std::span<const Gaussian> gaussians, std::span<const std::size_t> members,
                  std::span<const Camera> cameras, const RenderOptions& options = {});
double visibility(const Scene& scene, const std::string& child_id, std::span<const Camera> cameras,
                  const RenderOptions& options = {});

}  // namespace cg3d
