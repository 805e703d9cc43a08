#pragma once

#include <array>
#include <atomic>
#include <cstdint>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "cg3d/field.hpp"
#include "cg3d/render.hpp"

namespace cg3d {

enum class OracleCapability { ScoreOnly, ScoreAndResidual };

/// One scoring request. The first block mirrors the wire protocol; `cameras` and `candidate`
/// are extensions that let synthetic oracles score without looking at pixels.
struct OracleRequest {
  std::string prompt;
  std::string view_suffix;
  std::vector<Image> images;
  double cfg_scale = 100.0;
  std::array<int, 2> timestep_range{2, 980};
  double loss_scale = 0.5;
  double rescale_factor = 0.7;
  bool want_residual = false;
  std::uint64_t seed = 0;

  std::vector<Camera> cameras;
  std::optional<InteractionParams> candidate;
};

struct OracleResponse {
  double score = 0.0;
  std::vector<Image> residuals;  // one per request image when residuals were requested
};

/// Scores rendered views against a prompt. Lower scores are better. Scoring must be a pure
/// function of the request (including its seed). Implementations must tolerate concurrent
/// `evaluate` calls up to `concurrency_limit()`.
class GuidanceOracle {
 public:
  virtual ~GuidanceOracle() = default;
  virtual OracleCapability capability() const = 0;
  virtual unsigned concurrency_limit() const { return 1; }
  virtual OracleResponse evaluate(const OracleRequest& request) = 0;

  bool has_residuals() const { return capability() == OracleCapability::ScoreAndResidual; }
};

/// The composition stage only needs scores; same interface.
using CLFOracle = GuidanceOracle;

/// Throws CapabilityError when residuals are needed but the oracle only scores.
void require_residuals(const GuidanceOracle& oracle);

/// ||t - t*||^2 + 10 (s - s*)^2 + N(0, noise_sd), reading the candidate parameters from the
/// request. The noise draw is a deterministic function of (candidate, request seed, oracle seed).
class SyntheticClf final : public GuidanceOracle {
 public:
  SyntheticClf(Vec3 target_t, double target_s, double noise_sd, std::uint64_t seed);
  OracleCapability capability() const override { return OracleCapability::ScoreOnly; }
  unsigned concurrency_limit() const override { return 64; }
  OracleResponse evaluate(const OracleRequest& request) override;

  double noiseless(const Vec3& t, double s) const;

 private:
  Vec3 target_t_;
  double target_s_;
  double noise_sd_;
  std::uint64_t seed_;
};

std::unique_ptr<GuidanceOracle> synthetic_clf(const Vec3& target_t, double target_s, double noise_sd,
                                              std::uint64_t seed);

/// Self-supervised stand-in for a diffusion model: renders a target field from the request's
/// cameras and returns residual = loss_scale * (image - target). Score is the mean squared error.
class PhotometricOracle final : public GuidanceOracle {
 public:
  explicit PhotometricOracle(ObjectField target, RenderOptions options = {});
  OracleCapability capability() const override { return OracleCapability::ScoreAndResidual; }
  unsigned concurrency_limit() const override { return 64; }
  OracleResponse evaluate(const OracleRequest& request) override;

 private:
  ObjectField target_;
  RenderOptions options_;
};

/// Scores every request with the same constant.
class ConstantOracle final : public GuidanceOracle {
 public:
  explicit ConstantOracle(double value = 1.0) : value_(value) {}
  OracleCapability capability() const override { return OracleCapability::ScoreOnly; }
  unsigned concurrency_limit() const override { return 64; }
  OracleResponse evaluate(const OracleRequest&) override { return {value_, {}}; }

 private:
  double value_;
};

/// Forwards to another oracle and counts calls.
class CountingOracle final : public GuidanceOracle {
 public:
  explicit CountingOracle(GuidanceOracle& inner) : inner_(inner) {}
  OracleCapability capability() const override { return inner_.capability(); }
  unsigned concurrency_limit() const override { return inner_.concurrency_limit(); }
  OracleResponse evaluate(const OracleRequest& request) override {
    calls_.fetch_add(1, std::memory_order_relaxed);
    return inner_.evaluate(request);
  }
  std::size_t calls() const { return calls_.load(); }

 private:
  GuidanceOracle& inner_;
  std::atomic<std::size_t> calls_{0};
};

/// splitmix64 finaliser; used to derive independent seeds from structured keys.
std::uint64_t mix_seed(std::uint64_t x);
std::uint64_t combine_seed(std::uint64_t a, std::uint64_t b);

}  // namespace cg3d
