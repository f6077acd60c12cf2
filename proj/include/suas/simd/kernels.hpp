#pragma once

// Data-parallel inner loops of the pipeline. Every kernel has a scalar
// reference implementation; vector variants must agree with it (bit-exactly
// except `sum_f32`, whose association order differs; see tests/simd_test.cpp).

#include <cstddef>
#include <cstdint>
#include <string_view>

namespace suas::simd {

struct KernelTable {
  std::string_view name;

  // Sum of n floats, accumulated in double.
  double (*sum_f32)(const float* data, std::size_t n);

  // Counter-based uniform scores in [0, 1) on the 2^-24 lattice:
  // out[i] = Hash(row_key, col_begin + i).
  void (*fill_uniform)(std::uint32_t row_key, std::uint32_t col_begin,
                       float* out, std::size_t n);

  // Interleaved RGB (3 bytes per pixel) to luma.
  void (*rgb_to_gray)(const std::uint8_t* rgb, float* out, std::size_t n);

  // Central-difference gradient magnitude of `row`, with `above`/`below`
  // the neighbouring rows (callers clamp at image borders). Column borders
  // replicate the edge sample.
  void (*gradient_magnitude)(const float* above, const float* row,
                             const float* below, float* out, std::size_t n);
};

const KernelTable& ScalarKernels();

// nullptr when the AVX2 variant is not compiled in or the CPU lacks AVX2.
const KernelTable* Avx2Kernels();

// Best available table. The SUAS_SIMD environment variable ("scalar" or
// "avx2") overrides the choice; it is read once.
const KernelTable& ActiveKernels();

// Scalar element hash shared by all variants; exposed for tests.
inline std::uint32_t UniformHash(std::uint32_t row_key, std::uint32_t col) {
  std::uint32_t h = row_key ^ (col * 0x9E3779B1u);
  h ^= h >> 16;
  h *= 0x85EBCA6Bu;
  h ^= h >> 13;
  h *= 0xC2B2AE35u;
  h ^= h >> 16;
  return h;
}

inline constexpr float kLatticeScale = 1.0f / 16777216.0f;  // 2^-24

}  // namespace suas::simd
