#pragma once

#include <bit>
#include <cmath>
#include <cstdint>
#include <cstddef>
#include <limits>

#if defined(__AVX2__) && defined(__FMA__)
#include <immintrin.h>
#endif

namespace frl::detail {

// Polynomial expf (Cephes-style range reduction, degree-5 minimax). std::expf
// is a libm call the vectorizer cannot touch; exp_span below runs the same
// arithmetic 8 or 16 lanes wide with intrinsics. The scalar version places
// std::fma exactly where the vector kernels fuse, so a value produces the
// same bits whether it lands in the vector body or the scalar tail of a
// span. Relative error stays within ~1.5 ulp of std::expf, which the float32
// training path never notices. Double-precision code keeps std::exp.

inline constexpr float kExpC5 = 1.9875691500e-4f;
inline constexpr float kExpC4 = 1.3981999507e-3f;
inline constexpr float kExpC3 = 8.3334519073e-3f;
inline constexpr float kExpC2 = 4.1665795894e-2f;
inline constexpr float kExpC1 = 1.6666665459e-1f;
inline constexpr float kExpC0 = 5.0000001201e-1f;
inline constexpr float kLog2e = 1.44269504088896341f;
inline constexpr float kLn2Hi = 0.693359375f;  // 11 bits: kf * kLn2Hi is exact
inline constexpr float kLn2Lo = -2.12194440e-4f;

inline float fast_expf(float x) {
  const float z = x * kLog2e;
  const int32_t ki = static_cast<int32_t>(z + std::copysign(0.5f, z));  // round half away
  const float kf = static_cast<float>(ki);
  float r = std::fma(-kf, kLn2Hi, x);
  r = std::fma(-kf, kLn2Lo, r);
  float p = kExpC5;
  p = std::fma(p, r, kExpC4);
  p = std::fma(p, r, kExpC3);
  p = std::fma(p, r, kExpC2);
  p = std::fma(p, r, kExpC1);
  p = std::fma(p, r, kExpC0);
  float y = std::fma(p, r * r, r) + 1.0f;
  // scale by 2^ki through the exponent field; the clamps below keep ki in a
  // range where the addition cannot leave the normal-number band
  y = std::bit_cast<float>(std::bit_cast<int32_t>(y) + (ki << 23));
  y = x < -86.0f ? 0.0f : y;
  y = x > 88.0f ? std::numeric_limits<float>::infinity() : y;
  return x != x ? x : y;
}

#if defined(__AVX512F__)

inline __m512 exp_lanes16(__m512 x) {
  const __m512 z = _mm512_mul_ps(x, _mm512_set1_ps(kLog2e));
  const __m512 half =
      _mm512_or_ps(_mm512_and_ps(z, _mm512_set1_ps(-0.0f)), _mm512_set1_ps(0.5f));
  const __m512i ki = _mm512_cvttps_epi32(_mm512_add_ps(z, half));
  const __m512 kf = _mm512_cvtepi32_ps(ki);
  __m512 r = _mm512_fnmadd_ps(kf, _mm512_set1_ps(kLn2Hi), x);
  r = _mm512_fnmadd_ps(kf, _mm512_set1_ps(kLn2Lo), r);
  __m512 p = _mm512_set1_ps(kExpC5);
  p = _mm512_fmadd_ps(p, r, _mm512_set1_ps(kExpC4));
  p = _mm512_fmadd_ps(p, r, _mm512_set1_ps(kExpC3));
  p = _mm512_fmadd_ps(p, r, _mm512_set1_ps(kExpC2));
  p = _mm512_fmadd_ps(p, r, _mm512_set1_ps(kExpC1));
  p = _mm512_fmadd_ps(p, r, _mm512_set1_ps(kExpC0));
  __m512 y = _mm512_add_ps(_mm512_fmadd_ps(p, _mm512_mul_ps(r, r), r), _mm512_set1_ps(1.0f));
  y = _mm512_castsi512_ps(_mm512_add_epi32(_mm512_castps_si512(y), _mm512_slli_epi32(ki, 23)));
  y = _mm512_mask_mov_ps(y, _mm512_cmp_ps_mask(x, _mm512_set1_ps(-86.0f), _CMP_LT_OQ),
                         _mm512_setzero_ps());
  y = _mm512_mask_mov_ps(y, _mm512_cmp_ps_mask(x, _mm512_set1_ps(88.0f), _CMP_GT_OQ),
                         _mm512_set1_ps(std::numeric_limits<float>::infinity()));
  return _mm512_mask_mov_ps(y, _mm512_cmp_ps_mask(x, x, _CMP_UNORD_Q), x);
}

#endif

#if defined(__AVX2__) && defined(__FMA__)

inline __m256 exp_lanes8(__m256 x) {
  const __m256 z = _mm256_mul_ps(x, _mm256_set1_ps(kLog2e));
  const __m256 half =
      _mm256_or_ps(_mm256_and_ps(z, _mm256_set1_ps(-0.0f)), _mm256_set1_ps(0.5f));
  const __m256i ki = _mm256_cvttps_epi32(_mm256_add_ps(z, half));
  const __m256 kf = _mm256_cvtepi32_ps(ki);
  __m256 r = _mm256_fnmadd_ps(kf, _mm256_set1_ps(kLn2Hi), x);
  r = _mm256_fnmadd_ps(kf, _mm256_set1_ps(kLn2Lo), r);
  __m256 p = _mm256_set1_ps(kExpC5);
  p = _mm256_fmadd_ps(p, r, _mm256_set1_ps(kExpC4));
  p = _mm256_fmadd_ps(p, r, _mm256_set1_ps(kExpC3));
  p = _mm256_fmadd_ps(p, r, _mm256_set1_ps(kExpC2));
  p = _mm256_fmadd_ps(p, r, _mm256_set1_ps(kExpC1));
  p = _mm256_fmadd_ps(p, r, _mm256_set1_ps(kExpC0));
  __m256 y = _mm256_add_ps(_mm256_fmadd_ps(p, _mm256_mul_ps(r, r), r), _mm256_set1_ps(1.0f));
  y = _mm256_castsi256_ps(_mm256_add_epi32(_mm256_castps_si256(y), _mm256_slli_epi32(ki, 23)));
  y = _mm256_blendv_ps(y, _mm256_setzero_ps(),
                       _mm256_cmp_ps(x, _mm256_set1_ps(-86.0f), _CMP_LT_OQ));
  y = _mm256_blendv_ps(y, _mm256_set1_ps(std::numeric_limits<float>::infinity()),
                       _mm256_cmp_ps(x, _mm256_set1_ps(88.0f), _CMP_GT_OQ));
  return _mm256_blendv_ps(y, x, _mm256_cmp_ps(x, x, _CMP_UNORD_Q));
}

#endif

// y[i] = exp(x[i]) over a contiguous block; x and y may alias exactly.
inline void exp_span(const float* x, float* y, size_t n) {
  size_t i = 0;
#if defined(__AVX512F__)
  for (; i + 16 <= n; i += 16) _mm512_storeu_ps(y + i, exp_lanes16(_mm512_loadu_ps(x + i)));
#endif
#if defined(__AVX2__) && defined(__FMA__)
  for (; i + 8 <= n; i += 8) _mm256_storeu_ps(y + i, exp_lanes8(_mm256_loadu_ps(x + i)));
#endif
  for (; i < n; ++i) y[i] = fast_expf(x[i]);
}

inline void exp_span(const double* x, double* y, size_t n) {
  for (size_t i = 0; i < n; ++i) y[i] = std::exp(x[i]);
}

inline float op_exp(float v) { return fast_expf(v); }
inline double op_exp(double v) { return std::exp(v); }

}  // namespace frl::detail
