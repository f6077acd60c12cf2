#include <cmath>

#include "suas/simd/kernels.hpp"

namespace suas::simd {
namespace {

double SumScalar(const float* data, std::size_t n) {
  double acc = 0.0;
  for (std::size_t i = 0; i < n; ++i) acc += static_cast<double>(data[i]);
  return acc;
}

void FillUniformScalar(std::uint32_t row_key, std::uint32_t col_begin,
                       float* out, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) {
    const std::uint32_t h =
        UniformHash(row_key, col_begin + static_cast<std::uint32_t>(i));
    out[i] = static_cast<float>(h >> 8) * kLatticeScale;
  }
}

void RgbToGrayScalar(const std::uint8_t* rgb, float* out, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) {
    const float r = rgb[3 * i];
    const float g = rgb[3 * i + 1];
    const float b = rgb[3 * i + 2];
    const float rg = r * 0.299f + g * 0.587f;
    out[i] = rg + b * 0.114f;
  }
}

void GradientMagnitudeScalar(const float* above, const float* row,
                             const float* below, float* out, std::size_t n) {
  if (n == 0) return;
  for (std::size_t x = 0; x < n; ++x) {
    const float left = row[x == 0 ? 0 : x - 1];
    const float right = row[x + 1 == n ? x : x + 1];
    const float gx = (right - left) * 0.5f;
    const float gy = (below[x] - above[x]) * 0.5f;
    const float gx2 = gx * gx;
    const float gy2 = gy * gy;
    out[x] = std::sqrt(gx2 + gy2);
  }
}

}  // namespace

const KernelTable& ScalarKernels() {
  static const KernelTable table{"scalar", &SumScalar, &FillUniformScalar,
                                 &RgbToGrayScalar, &GradientMagnitudeScalar};
  return table;
}

}  // namespace suas::simd
