#include <cstdlib>
#include <string_view>

#include "suas/simd/kernels.hpp"

namespace suas::simd {

#if defined(SUAS_HAVE_AVX2_KERNELS)
namespace avx2 {
const KernelTable& Table();
}
#endif

const KernelTable* Avx2Kernels() {
#if defined(SUAS_HAVE_AVX2_KERNELS)
  static const bool supported = [] {
    __builtin_cpu_init();
    return __builtin_cpu_supports("avx2") != 0;
  }();
  if (supported) return &avx2::Table();
#endif
  return nullptr;
}

const KernelTable& ActiveKernels() {
  static const KernelTable& active = []() -> const KernelTable& {
    const char* env = std::getenv("SUAS_SIMD");
    const std::string_view choice = env != nullptr ? env : "";
    if (choice == "scalar") return ScalarKernels();
    if (const KernelTable* avx2 = Avx2Kernels()) return *avx2;
    return ScalarKernels();
  }();
  return active;
}

}  // namespace suas::simd
