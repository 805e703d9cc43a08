#pragma once

#include <cstddef>

namespace cg3d::simd {

enum class Isa { Scalar, Avx2 };

const char* name(Isa isa);
bool supported(Isa isa);

/// ISA used by `kernels()`. Picked once from CPU features; the CG3D_SIMD environment
/// variable (`scalar` or `avx2`) overrides the choice when the ISA is supported.
Isa active_isa();
/// Forces an ISA for the rest of the process. Throws std::invalid_argument if unsupported.
void set_active_isa(Isa isa);

/// One projected Gaussian as seen by the blending kernel.
struct Splat {
  double mx, my;     // pixel-space mean
  double ca, cb, cc; // conic (inverse 2D covariance): [[ca, cb], [cb, cc]]
  double opacity;
  double r, g, b;
};

/// Pixel rows are stored planar: separate arrays for T, R, G, B.
struct SpanBuffers {
  double* transmittance;
  double* r;
  double* g;
  double* b;
};

struct Kernels {
  /// Blends `s` into `n` consecutive pixels of row `y`, starting at column `x0`. Pixels whose
  /// transmittance is below `min_transmittance` are left alone; with `sigma_cutoff` set, so
  /// are pixels beyond three standard deviations (Mahalanobis distance squared above 9).
  /// Returns the summed blending weight alpha * T over the span.
  double (*blend_span)(const Splat& s, int y, int x0, int n, SpanBuffers px, double min_transmittance,
                       bool sigma_cutoff);

  /// Farthest-point step: min_d2[i] = min(min_d2[i], |p_i - q|^2). Returns the index of the
  /// largest updated value (lowest index on ties).
  std::size_t (*fps_update)(const double* xs, const double* ys, const double* zs, std::size_t n, double qx,
                            double qy, double qz, double* min_d2);

  /// Brute-force nearest point to q; writes the squared distance. Lowest index on ties.
  std::size_t (*nearest)(const double* xs, const double* ys, const double* zs, std::size_t n, double qx,
                         double qy, double qz, double* best_d2);
};

const Kernels& kernels();
const Kernels& kernels_for(Isa isa);

namespace detail {
extern const Kernels kScalarKernels;
#if defined(CG3D_HAVE_AVX2)
extern const Kernels kAvx2Kernels;
#endif
}  // namespace detail

}  // namespace cg3d::simd
