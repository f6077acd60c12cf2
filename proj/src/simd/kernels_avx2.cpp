// Compiled with -mavx2 on x86 targets only; see src/CMakeLists.txt.

#include <immintrin.h>

#include <cmath>

#include "suas/simd/kernels.hpp"

namespace suas::simd::avx2 {
namespace {

double SumAvx2(const float* data, std::size_t n) {
  __m256d acc0 = _mm256_setzero_pd();
  __m256d acc1 = _mm256_setzero_pd();
  std::size_t i = 0;
  for (; i + 8 <= n; i += 8) {
    const __m256 v = _mm256_loadu_ps(data + i);
    acc0 = _mm256_add_pd(acc0, _mm256_cvtps_pd(_mm256_castps256_ps128(v)));
    acc1 = _mm256_add_pd(acc1, _mm256_cvtps_pd(_mm256_extractf128_ps(v, 1)));
  }
  alignas(32) double lanes[4];
  _mm256_store_pd(lanes, _mm256_add_pd(acc0, acc1));
  double acc = (lanes[0] + lanes[1]) + (lanes[2] + lanes[3]);
  for (; i < n; ++i) acc += static_cast<double>(data[i]);
  return acc;
}

inline __m256i MulLo(__m256i a, std::uint32_t c) {
  return _mm256_mullo_epi32(a, _mm256_set1_epi32(static_cast<int>(c)));
}

void FillUniformAvx2(std::uint32_t row_key, std::uint32_t col_begin,
                     float* out, std::size_t n) {
  const __m256i key = _mm256_set1_epi32(static_cast<int>(row_key));
  const __m256i lane = _mm256_setr_epi32(0, 1, 2, 3, 4, 5, 6, 7);
  const __m256 scale = _mm256_set1_ps(kLatticeScale);
  std::size_t i = 0;
  for (; i + 8 <= n; i += 8) {
    const __m256i col = _mm256_add_epi32(
        _mm256_set1_epi32(static_cast<int>(col_begin + static_cast<std::uint32_t>(i))),
        lane);
    __m256i h = _mm256_xor_si256(key, MulLo(col, 0x9E3779B1u));
    h = _mm256_xor_si256(h, _mm256_srli_epi32(h, 16));
    h = MulLo(h, 0x85EBCA6Bu);
    h = _mm256_xor_si256(h, _mm256_srli_epi32(h, 13));
    h = MulLo(h, 0xC2B2AE35u);
    h = _mm256_xor_si256(h, _mm256_srli_epi32(h, 16));
    const __m256 f = _mm256_cvtepi32_ps(_mm256_srli_epi32(h, 8));
    _mm256_storeu_ps(out + i, _mm256_mul_ps(f, scale));
  }
  for (; i < n; ++i) {
    const std::uint32_t h =
        UniformHash(row_key, col_begin + static_cast<std::uint32_t>(i));
    out[i] = static_cast<float>(h >> 8) * kLatticeScale;
  }
}

void RgbToGrayAvx2(const std::uint8_t* rgb, float* out, std::size_t n) {
  const __m256 wr = _mm256_set1_ps(0.299f);
  const __m256 wg = _mm256_set1_ps(0.587f);
  const __m256 wb = _mm256_set1_ps(0.114f);
  alignas(32) std::int32_t r[8], g[8], b[8];
  std::size_t i = 0;
  for (; i + 8 <= n; i += 8) {
    // Deinterleave through the stack; the arithmetic is what we vectorise.
    const std::uint8_t* p = rgb + 3 * i;
    for (int k = 0; k < 8; ++k) {
      r[k] = p[3 * k];
      g[k] = p[3 * k + 1];
      b[k] = p[3 * k + 2];
    }
    const __m256 fr = _mm256_cvtepi32_ps(_mm256_load_si256(reinterpret_cast<const __m256i*>(r)));
    const __m256 fg = _mm256_cvtepi32_ps(_mm256_load_si256(reinterpret_cast<const __m256i*>(g)));
    const __m256 fb = _mm256_cvtepi32_ps(_mm256_load_si256(reinterpret_cast<const __m256i*>(b)));
    const __m256 rg = _mm256_add_ps(_mm256_mul_ps(fr, wr), _mm256_mul_ps(fg, wg));
    _mm256_storeu_ps(out + i, _mm256_add_ps(rg, _mm256_mul_ps(fb, wb)));
  }
  for (; i < n; ++i) {
    const float fr = rgb[3 * i];
    const float fg = rgb[3 * i + 1];
    const float fb = rgb[3 * i + 2];
    const float rg = fr * 0.299f + fg * 0.587f;
    out[i] = rg + fb * 0.114f;
  }
}

inline float GradientAt(const float* above, const float* row,
                        const float* below, std::size_t x, std::size_t n) {
  const float left = row[x == 0 ? 0 : x - 1];
  const float right = row[x + 1 == n ? x : x + 1];
  const float gx = (right - left) * 0.5f;
  const float gy = (below[x] - above[x]) * 0.5f;
  const float gx2 = gx * gx;
  const float gy2 = gy * gy;
  return std::sqrt(gx2 + gy2);
}

void GradientMagnitudeAvx2(const float* above, const float* row,
                           const float* below, float* out, std::size_t n) {
  if (n == 0) return;
  out[0] = GradientAt(above, row, below, 0, n);
  const __m256 half = _mm256_set1_ps(0.5f);
  std::size_t x = 1;
  for (; x + 8 < n; x += 8) {
    const __m256 left = _mm256_loadu_ps(row + x - 1);
    const __m256 right = _mm256_loadu_ps(row + x + 1);
    const __m256 gx = _mm256_mul_ps(_mm256_sub_ps(right, left), half);
    const __m256 gy = _mm256_mul_ps(
        _mm256_sub_ps(_mm256_loadu_ps(below + x), _mm256_loadu_ps(above + x)), half);
    const __m256 mag = _mm256_sqrt_ps(
        _mm256_add_ps(_mm256_mul_ps(gx, gx), _mm256_mul_ps(gy, gy)));
    _mm256_storeu_ps(out + x, mag);
  }
  for (; x < n; ++x) out[x] = GradientAt(above, row, below, x, n);
}

}  // namespace

const KernelTable& Table() {
  static const KernelTable table{"avx2", &SumAvx2, &FillUniformAvx2,
                                 &RgbToGrayAvx2, &GradientMagnitudeAvx2};
  return table;
}

}  // namespace suas::simd::avx2
