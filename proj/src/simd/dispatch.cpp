#include <atomic>
#include <cstdlib>
#include <stdexcept>
#include <string>

#include "cg3d/simd.hpp"

namespace cg3d::simd {
namespace {

Isa detect() {
  Isa isa = supported(Isa::Avx2) ? Isa::Avx2 : Isa::Scalar;
  if (const char* env = std::getenv("CG3D_SIMD")) {
    const std::string want(env);
    if (want == "scalar") isa = Isa::Scalar;
    else if (want == "avx2" && supported(Isa::Avx2)) isa = Isa::Avx2;
  }
  return isa;
}

std::atomic<Isa>& active() {
  static std::atomic<Isa> isa{detect()};
  return isa;
}

}  // namespace

const char* name(Isa isa) { return isa == Isa::Avx2 ? "avx2" : "scalar"; }

bool supported(Isa isa) {
  switch (isa) {
    case Isa::Scalar: return true;
    case Isa::Avx2:
#if defined(CG3D_HAVE_AVX2)
      return __builtin_cpu_supports("avx2") && __builtin_cpu_supports("fma");
#else
      return false;
#endif
  }
  return false;
}

Isa active_isa() { return active().load(std::memory_order_relaxed); }

void set_active_isa(Isa isa) {
  if (!supported(isa)) throw std::invalid_argument(std::string("SIMD ISA not available: ") + name(isa));
  active().store(isa, std::memory_order_relaxed);
}

const Kernels& kernels_for(Isa isa) {
#if defined(CG3D_HAVE_AVX2)
  if (isa == Isa::Avx2) return detail::kAvx2Kernels;
#endif
  (void)isa;
  return detail::kScalarKernels;
}

const Kernels& kernels() { return kernels_for(active_isa()); }

}  // namespace cg3d::simd
