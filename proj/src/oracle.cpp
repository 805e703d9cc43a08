#include "cg3d/oracle.hpp"

#include <bit>
#include <random>

#include "cg3d/errors.hpp"

namespace cg3d {

std::uint64_t mix_seed(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

std::uint64_t combine_seed(std::uint64_t a, std::uint64_t b) { return mix_seed(a ^ (mix_seed(b) + 0x632be59bd9b4e019ULL)); }

void require_residuals(const GuidanceOracle& oracle) {
  if (!oracle.has_residuals()) throw CapabilityError("guidance oracle does not provide residuals");
}

SyntheticClf::SyntheticClf(Vec3 target_t, double target_s, double noise_sd, std::uint64_t seed)
    : target_t_(std::move(target_t)), target_s_(target_s), noise_sd_(noise_sd), seed_(seed) {}

double SyntheticClf::noiseless(const Vec3& t, double s) const {
  return (t - target_t_).squaredNorm() + 10.0 * (s - target_s_) * (s - target_s_);
}

OracleResponse SyntheticClf::evaluate(const OracleRequest& request) {
  if (!request.candidate) throw OracleError("synthetic CLF needs the candidate parameters in the request");
  const InteractionParams& p = *request.candidate;
  OracleResponse out;
  out.score = noiseless(p.translation, p.scale);
  if (noise_sd_ > 0.0) {
    std::uint64_t h = combine_seed(seed_, request.seed);
    for (int c = 0; c < 3; ++c) h = combine_seed(h, std::bit_cast<std::uint64_t>(p.translation[c]));
    h = combine_seed(h, std::bit_cast<std::uint64_t>(p.scale));
    std::mt19937_64 rng(h);
    out.score += std::normal_distribution<double>(0.0, noise_sd_)(rng);
  }
  return out;
}

std::unique_ptr<GuidanceOracle> synthetic_clf(const Vec3& target_t, double target_s, double noise_sd,
                                              std::uint64_t seed) {
  return std::make_unique<SyntheticClf>(target_t, target_s, noise_sd, seed);
}

PhotometricOracle::PhotometricOracle(ObjectField target, RenderOptions options)
    : target_(std::move(target)), options_(options) {}

OracleResponse PhotometricOracle::evaluate(const OracleRequest& request) {
  if (request.cameras.size() != request.images.size())
    throw OracleError("photometric oracle needs one camera per image");
  OracleResponse out;
  double sse = 0.0;
  std::size_t count = 0;
  for (std::size_t v = 0; v < request.images.size(); ++v) {
    const Image& img = request.images[v];
    const Image target = render(target_.gaussians(), request.cameras[v], options_).color;
    if (!img.same_shape(target)) throw ShapeError("image does not match its camera");
    Image res(img.width, img.height);
    for (std::size_t i = 0; i < img.rgb.size(); ++i) {
      const double d = img.rgb[i] - target.rgb[i];
      sse += d * d;
      res.rgb[i] = request.loss_scale * d;
    }
    count += img.rgb.size();
    if (request.want_residual) out.residuals.push_back(std::move(res));
  }
  out.score = count ? sse / static_cast<double>(count) : 0.0;
  return out;
}

}  // namespace cg3d
