#include "cg3d/optim.hpp"

#include <algorithm>
#include <cmath>

#include "cg3d/errors.hpp"

namespace cg3d {

void GaussianAdam::remap(const std::vector<std::ptrdiff_t>& source) {
  std::vector<Moments> next(source.size());
  for (std::size_t i = 0; i < source.size(); ++i)
    if (source[i] >= 0) next[i] = moments_.at(static_cast<std::size_t>(source[i]));
  moments_ = std::move(next);
}

void GaussianAdam::step(std::vector<Gaussian>& gs, const GaussianGradients& g, const LearningRates& lr) {
  if (gs.size() != moments_.size() || g.d_mean.size() != gs.size()) throw ShapeError("optimizer state does not match");
  ++t_;
  const double c1 = 1.0 - std::pow(beta1_, t_), c2 = 1.0 - std::pow(beta2_, t_);
  // Layout of the 14-vector: mean(3) log-scale(3) quaternion(4) logit-opacity(1) colour(3).
  Eigen::Matrix<double, 14, 1> rates;
  rates << Vec3::Constant(lr.mean), Vec3::Constant(lr.scale), Quat::Constant(lr.rotation), lr.opacity,
      Vec3::Constant(lr.color);

  for (std::size_t i = 0; i < gs.size(); ++i) {
    Gaussian& x = gs[i];
    Eigen::Matrix<double, 14, 1> grad;
    grad.segment<3>(0) = g.d_mean[i];
    grad.segment<3>(3) = g.d_scale[i].cwiseProduct(x.scale);
    grad.segment<4>(6) = rotation_grad_to_quat(x.rotation, g.d_rotation[i]);
    grad[10] = g.d_opacity[i] * x.opacity * (1.0 - x.opacity);
    grad.segment<3>(11) = g.d_color[i];

    Moments& mo = moments_[i];
    mo.m = beta1_ * mo.m + (1.0 - beta1_) * grad;
    mo.v = beta2_ * mo.v + (1.0 - beta2_) * grad.cwiseProduct(grad);
    const Eigen::Matrix<double, 14, 1> delta =
        rates.cwiseProduct((mo.m / c1).cwiseQuotient(((mo.v / c2).cwiseSqrt().array() + eps_).matrix()));

    x.mean -= delta.segment<3>(0);
    x.scale = (x.scale.array().log() - delta.segment<3>(3).array()).exp().matrix();
    x.rotation -= delta.segment<4>(6);
    x.rotation.normalize();
    const double o = std::clamp(x.opacity, 1e-6, 1.0 - 1e-6);
    x.opacity = 1.0 / (1.0 + std::exp(-(std::log(o / (1.0 - o)) - delta[10])));
    x.color = (x.color - delta.segment<3>(11)).cwiseMax(0.0).cwiseMin(1.0);
  }
}

}  // namespace cg3d
