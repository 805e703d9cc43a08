#pragma once

#include <cstddef>
#include <vector>

#include "cg3d/field.hpp"
#include "cg3d/render.hpp"

namespace cg3d {

struct LearningRates {
  double mean = 1e-3;
  double scale = 2e-3;     // on log-scale
  double rotation = 1e-3;  // on the raw quaternion, renormalised after each step
  double opacity = 1e-2;   // on logit(opacity)
  double color = 1e-2;     // clamped to [0, 1] after each step
};

/// Adam over every Gaussian attribute. Scales are optimised in log space and opacities through
/// a logistic, so steps never leave the valid domain; colours are projected back onto [0, 1].
class GaussianAdam {
 public:
  explicit GaussianAdam(std::size_t n = 0) { resize(n); }

  std::size_t size() const noexcept { return moments_.size(); }
  void resize(std::size_t n) { moments_.assign(n, {}); }

  /// Rebuilds the moment table after the Gaussian set changed. `source[i]` is the old index the
  /// new Gaussian i inherits its moments from, or -1 for fresh zero moments.
  void remap(const std::vector<std::ptrdiff_t>& source);

  /// One step with gradients taken with respect to the activated attributes.
  void step(std::vector<Gaussian>& gaussians, const GaussianGradients& grads, const LearningRates& lr);

  int steps() const noexcept { return t_; }

 private:
  struct Moments {
    Eigen::Matrix<double, 14, 1> m = Eigen::Matrix<double, 14, 1>::Zero();
    Eigen::Matrix<double, 14, 1> v = Eigen::Matrix<double, 14, 1>::Zero();
  };
  std::vector<Moments> moments_;
  int t_ = 0;
  double beta1_ = 0.9, beta2_ = 0.999, eps_ = 1e-15;
};

}  // namespace cg3d
