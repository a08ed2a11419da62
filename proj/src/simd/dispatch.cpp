#include <cstdlib>
#include <stdexcept>
#include <string>

#include "ossdet/simd/kernels.hpp"

namespace ossdet::simd {

#if defined(OSSDET_HAVE_AVX2)
extern const KernelTable kAvx2Table;
#endif

namespace {

const KernelTable* initial_table() {
  const char* env = std::getenv("OSSDET_SIMD");
  const std::string choice = env ? env : "auto";
  if (choice == "scalar") return &scalar_kernels();
  if (choice == "avx2") {
    if (!cpu_supports(Isa::avx2)) {
      throw std::runtime_error("OSSDET_SIMD=avx2 requested but AVX2/FMA is unavailable");
    }
    return avx2_kernels();
  }
  if (choice != "auto") throw std::runtime_error("OSSDET_SIMD must be scalar, avx2 or auto");
  if (const KernelTable* t = avx2_kernels()) return t;
  return &scalar_kernels();
}

const KernelTable*& active_slot() {
  static const KernelTable* slot = initial_table();
  return slot;
}

}  // namespace

std::string_view isa_name(Isa isa) {
  switch (isa) {
    case Isa::scalar: return "scalar";
    case Isa::avx2: return "avx2";
  }
  return "unknown";
}

bool cpu_supports(Isa isa) {
  switch (isa) {
    case Isa::scalar: return true;
    case Isa::avx2:
#if defined(OSSDET_HAVE_AVX2) && (defined(__GNUC__) || defined(__clang__))
      return __builtin_cpu_supports("avx2") && __builtin_cpu_supports("fma");
#else
      return false;
#endif
  }
  return false;
}

const KernelTable* avx2_kernels() {
#if defined(OSSDET_HAVE_AVX2)
  if (cpu_supports(Isa::avx2)) return &kAvx2Table;
#endif
  return nullptr;
}

const KernelTable& kernels() { return *active_slot(); }

void select(Isa isa) {
  if (isa == Isa::scalar) {
    active_slot() = &scalar_kernels();
    return;
  }
  const KernelTable* t = avx2_kernels();
  if (!t) throw std::invalid_argument("AVX2 kernels are not available on this machine");
  active_slot() = t;
}

Isa active_isa() { return kernels().isa; }

}  // namespace ossdet::simd
