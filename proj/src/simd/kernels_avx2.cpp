// Built with -mavx2 -mfma; only reached after a runtime CPU check.
#include <immintrin.h>

#include <cmath>
#include <cstdint>

#include "cg3d/simd.hpp"

namespace cg3d::simd {
namespace {

// exp(x) for x <= 0. Range reduction x = n ln2 + r with |r| <= ln2/2, then a degree-12
// Taylor polynomial for exp(r); truncation error is below 2e-16 relative on that interval.
inline __m256d exp_nonpositive(__m256d x) {
  const __m256d lo = _mm256_set1_pd(-708.0);
  x = _mm256_max_pd(x, lo);
  const __m256d n = _mm256_round_pd(_mm256_mul_pd(x, _mm256_set1_pd(1.4426950408889634)),
                                    _MM_FROUND_TO_NEAREST_INT | _MM_FROUND_NO_EXC);
  __m256d r = _mm256_fnmadd_pd(n, _mm256_set1_pd(6.93147180369123816490e-01), x);
  r = _mm256_fnmadd_pd(n, _mm256_set1_pd(1.90821492927058770002e-10), r);

  static constexpr double kInvFact[] = {1.0 / 479001600.0, 1.0 / 39916800.0, 1.0 / 3628800.0, 1.0 / 362880.0,
                                        1.0 / 40320.0,     1.0 / 5040.0,     1.0 / 720.0,     1.0 / 120.0,
                                        1.0 / 24.0,        1.0 / 6.0,        0.5,             1.0,
                                        1.0};
  __m256d p = _mm256_set1_pd(kInvFact[0]);
  for (int k = 1; k < 13; ++k) p = _mm256_fmadd_pd(p, r, _mm256_set1_pd(kInvFact[k]));

  // 2^n through the exponent field; n >= -1022 after the clamp above.
  const __m128i ni = _mm256_cvtpd_epi32(n);
  const __m256i e = _mm256_slli_epi64(_mm256_add_epi64(_mm256_cvtepi32_epi64(ni), _mm256_set1_epi64x(1023)), 52);
  return _mm256_mul_pd(p, _mm256_castsi256_pd(e));
}

double blend_span(const Splat& s, int y, int x0, int n, SpanBuffers px, double min_t, bool cutoff) {
  const double dy = static_cast<double>(y) - s.my;
  const __m256d vdy = _mm256_set1_pd(dy);
  const __m256d vca = _mm256_set1_pd(s.ca), vcb = _mm256_set1_pd(s.cb), vcc = _mm256_set1_pd(s.cc);
  const __m256d vop = _mm256_set1_pd(s.opacity);
  const __m256d vr = _mm256_set1_pd(s.r), vg = _mm256_set1_pd(s.g), vb = _mm256_set1_pd(s.b);
  const __m256d vmin_t = _mm256_set1_pd(min_t);
  const __m256d cut = _mm256_set1_pd(cutoff ? -4.5 : -INFINITY);
  const __m256d half = _mm256_set1_pd(-0.5), one = _mm256_set1_pd(1.0);
  const __m256d dyy = _mm256_mul_pd(_mm256_mul_pd(vcc, vdy), vdy);
  __m256d acc = _mm256_setzero_pd();

  int i = 0;
  for (; i + 4 <= n; i += 4) {
    const double base = static_cast<double>(x0 + i) - s.mx;
    const __m256d dx = _mm256_add_pd(_mm256_set1_pd(base), _mm256_set_pd(3.0, 2.0, 1.0, 0.0));
    const __m256d quad = _mm256_add_pd(_mm256_mul_pd(_mm256_mul_pd(vca, dx), dx), dyy);
    const __m256d power = _mm256_sub_pd(_mm256_mul_pd(half, quad), _mm256_mul_pd(_mm256_mul_pd(vcb, dx), vdy));
    const __m256d t = _mm256_loadu_pd(px.transmittance + i);
    const __m256d live = _mm256_and_pd(_mm256_cmp_pd(t, vmin_t, _CMP_GE_OQ), _mm256_cmp_pd(power, cut, _CMP_GE_OQ));
    if (_mm256_movemask_pd(live) == 0) continue;
    const __m256d alpha = _mm256_and_pd(live, _mm256_mul_pd(vop, exp_nonpositive(power)));
    const __m256d w = _mm256_mul_pd(alpha, t);
    _mm256_storeu_pd(px.r + i, _mm256_fmadd_pd(w, vr, _mm256_loadu_pd(px.r + i)));
    _mm256_storeu_pd(px.g + i, _mm256_fmadd_pd(w, vg, _mm256_loadu_pd(px.g + i)));
    _mm256_storeu_pd(px.b + i, _mm256_fmadd_pd(w, vb, _mm256_loadu_pd(px.b + i)));
    _mm256_storeu_pd(px.transmittance + i, _mm256_mul_pd(t, _mm256_sub_pd(one, alpha)));
    acc = _mm256_add_pd(acc, w);
  }
  alignas(32) double lanes[4];
  _mm256_store_pd(lanes, acc);
  double weight = (lanes[0] + lanes[1]) + (lanes[2] + lanes[3]);

  for (; i < n; ++i) {
    const double t = px.transmittance[i];
    if (t < min_t) continue;
    const double dx = static_cast<double>(x0 + i) - s.mx;
    const double power = -0.5 * (s.ca * dx * dx + s.cc * dy * dy) - s.cb * dx * dy;
    if (cutoff && power < -4.5) continue;
    const double alpha = s.opacity * std::exp(power);
    const double w = alpha * t;
    px.r[i] += w * s.r;
    px.g[i] += w * s.g;
    px.b[i] += w * s.b;
    px.transmittance[i] = t * (1.0 - alpha);
    weight += w;
  }
  return weight;
}

inline __m256d dist2(const double* xs, const double* ys, const double* zs, std::size_t i, __m256d qx, __m256d qy,
                     __m256d qz) {
  const __m256d dx = _mm256_sub_pd(_mm256_loadu_pd(xs + i), qx);
  const __m256d dy = _mm256_sub_pd(_mm256_loadu_pd(ys + i), qy);
  const __m256d dz = _mm256_sub_pd(_mm256_loadu_pd(zs + i), qz);
  // Plain mul/add, no fused ops, so the result matches the scalar kernel bit for bit.
  return _mm256_add_pd(_mm256_add_pd(_mm256_mul_pd(dx, dx), _mm256_mul_pd(dy, dy)), _mm256_mul_pd(dz, dz));
}

// Reduces per-lane (value, index) winners; ties go to the lower index.
template <bool Max>
void reduce_lanes(__m256d best, __m256d idx, double& best_v, std::size_t& best_i) {
  alignas(32) double v[4], ix[4];
  _mm256_store_pd(v, best);
  _mm256_store_pd(ix, idx);
  for (int l = 0; l < 4; ++l) {
    const auto li = static_cast<std::size_t>(ix[l]);
    const bool better = Max ? (v[l] > best_v) : (v[l] < best_v);
    if (better || (v[l] == best_v && li < best_i)) {
      best_v = v[l];
      best_i = li;
    }
  }
}

std::size_t fps_update(const double* xs, const double* ys, const double* zs, std::size_t n, double qx, double qy,
                       double qz, double* min_d2) {
  const __m256d vqx = _mm256_set1_pd(qx), vqy = _mm256_set1_pd(qy), vqz = _mm256_set1_pd(qz);
  __m256d best = _mm256_set1_pd(-1.0);
  __m256d best_idx = _mm256_setzero_pd();
  __m256d idx = _mm256_set_pd(3.0, 2.0, 1.0, 0.0);
  const __m256d four = _mm256_set1_pd(4.0);
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    const __m256d m = _mm256_min_pd(_mm256_loadu_pd(min_d2 + i), dist2(xs, ys, zs, i, vqx, vqy, vqz));
    _mm256_storeu_pd(min_d2 + i, m);
    const __m256d gt = _mm256_cmp_pd(m, best, _CMP_GT_OQ);
    best = _mm256_blendv_pd(best, m, gt);
    best_idx = _mm256_blendv_pd(best_idx, idx, gt);
    idx = _mm256_add_pd(idx, four);
  }
  double best_v = -1.0;
  std::size_t best_i = 0;
  reduce_lanes<true>(best, best_idx, best_v, best_i);
  for (; i < n; ++i) {
    const double dx = xs[i] - qx, dy = ys[i] - qy, dz = zs[i] - qz;
    const double d = dx * dx + dy * dy + dz * dz;
    if (d < min_d2[i]) min_d2[i] = d;
    if (min_d2[i] > best_v) {
      best_v = min_d2[i];
      best_i = i;
    }
  }
  return best_i;
}

std::size_t nearest(const double* xs, const double* ys, const double* zs, std::size_t n, double qx, double qy,
                    double qz, double* best_d2) {
  const __m256d vqx = _mm256_set1_pd(qx), vqy = _mm256_set1_pd(qy), vqz = _mm256_set1_pd(qz);
  __m256d best = _mm256_set1_pd(INFINITY);
  __m256d best_idx = _mm256_setzero_pd();
  __m256d idx = _mm256_set_pd(3.0, 2.0, 1.0, 0.0);
  const __m256d four = _mm256_set1_pd(4.0);
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    const __m256d d = dist2(xs, ys, zs, i, vqx, vqy, vqz);
    const __m256d lt = _mm256_cmp_pd(d, best, _CMP_LT_OQ);
    best = _mm256_blendv_pd(best, d, lt);
    best_idx = _mm256_blendv_pd(best_idx, idx, lt);
    idx = _mm256_add_pd(idx, four);
  }
  double best_v = INFINITY;
  std::size_t best_i = 0;
  reduce_lanes<false>(best, best_idx, best_v, best_i);
  for (; i < n; ++i) {
    const double dx = xs[i] - qx, dy = ys[i] - qy, dz = zs[i] - qz;
    const double d = dx * dx + dy * dy + dz * dz;
    if (d < best_v) {
      best_v = d;
      best_i = i;
    }
  }
  *best_d2 = best_v;
  return best_i;
}

}  // namespace

namespace detail {
const Kernels kAvx2Kernels{&blend_span, &fps_update, &nearest};
}

}  // namespace cg3d::simd
