#pragma once

#include <cstdint>
#include <vector>

#if defined(__AVX2__) && defined(__FMA__)
#include <immintrin.h>
#endif

namespace frl {

namespace detail {

// Dot product of two contiguous rows. Written with explicit lanes because the
// compiler refuses to reassociate a float reduction on its own; four parallel
// accumulators also hide the FMA latency chain.
template <typename T>
T dot_rows(const T* a, const T* b, int64_t n) {
  T s0 = T(0), s1 = T(0), s2 = T(0), s3 = T(0);
  int64_t k = 0;
  for (; k + 4 <= n; k += 4) {
    s0 += a[k] * b[k];
    s1 += a[k + 1] * b[k + 1];
    s2 += a[k + 2] * b[k + 2];
    s3 += a[k + 3] * b[k + 3];
  }
  for (; k < n; ++k) s0 += a[k] * b[k];
  return (s0 + s1) + (s2 + s3);
}

#if defined(__AVX512F__)

inline float dot_rows(const float* a, const float* b, int64_t n) {
  __m512 s0 = _mm512_setzero_ps(), s1 = _mm512_setzero_ps();
  __m512 s2 = _mm512_setzero_ps(), s3 = _mm512_setzero_ps();
  int64_t k = 0;
  for (; k + 64 <= n; k += 64) {
    s0 = _mm512_fmadd_ps(_mm512_loadu_ps(a + k), _mm512_loadu_ps(b + k), s0);
    s1 = _mm512_fmadd_ps(_mm512_loadu_ps(a + k + 16), _mm512_loadu_ps(b + k + 16), s1);
    s2 = _mm512_fmadd_ps(_mm512_loadu_ps(a + k + 32), _mm512_loadu_ps(b + k + 32), s2);
    s3 = _mm512_fmadd_ps(_mm512_loadu_ps(a + k + 48), _mm512_loadu_ps(b + k + 48), s3);
  }
  for (; k + 16 <= n; k += 16)
    s0 = _mm512_fmadd_ps(_mm512_loadu_ps(a + k), _mm512_loadu_ps(b + k), s0);
  float r = _mm512_reduce_add_ps(_mm512_add_ps(_mm512_add_ps(s0, s1), _mm512_add_ps(s2, s3)));
  for (; k < n; ++k) r += a[k] * b[k];
  return r;
}

#elif defined(__AVX2__) && defined(__FMA__)

inline float dot_rows(const float* a, const float* b, int64_t n) {
  __m256 s0 = _mm256_setzero_ps(), s1 = _mm256_setzero_ps();
  __m256 s2 = _mm256_setzero_ps(), s3 = _mm256_setzero_ps();
  int64_t k = 0;
  for (; k + 32 <= n; k += 32) {
    s0 = _mm256_fmadd_ps(_mm256_loadu_ps(a + k), _mm256_loadu_ps(b + k), s0);
    s1 = _mm256_fmadd_ps(_mm256_loadu_ps(a + k + 8), _mm256_loadu_ps(b + k + 8), s1);
    s2 = _mm256_fmadd_ps(_mm256_loadu_ps(a + k + 16), _mm256_loadu_ps(b + k + 16), s2);
    s3 = _mm256_fmadd_ps(_mm256_loadu_ps(a + k + 24), _mm256_loadu_ps(b + k + 24), s3);
  }
  for (; k + 8 <= n; k += 8)
    s0 = _mm256_fmadd_ps(_mm256_loadu_ps(a + k), _mm256_loadu_ps(b + k), s0);
  const __m256 s = _mm256_add_ps(_mm256_add_ps(s0, s1), _mm256_add_ps(s2, s3));
  const __m128 lo = _mm256_castps256_ps128(s);
  const __m128 hi = _mm256_extractf128_ps(s, 1);
  __m128 q = _mm_add_ps(lo, hi);
  q = _mm_add_ps(q, _mm_movehl_ps(q, q));
  q = _mm_add_ss(q, _mm_shuffle_ps(q, q, 1));
  float r = _mm_cvtss_f32(q);
  for (; k < n; ++k) r += a[k] * b[k];
  return r;
}

#endif

}  // namespace detail

// Small row-major GEMM kernels. The i-k-j/axpy ordering keeps the innermost
// loop a contiguous stream over B and C, which the compiler vectorizes; that
// is all the speed this project needs.

// C[M,N] (+)= A[M,K] * B[K,N]
template <typename T>
void gemm_nn(int64_t M, int64_t K, int64_t N, const T* A, const T* B, T* C, bool accum) {
  for (int64_t i = 0; i < M; ++i) {
    T* c = C + i * N;
    if (!accum)
      for (int64_t j = 0; j < N; ++j) c[j] = T(0);
    const T* a = A + i * K;
    for (int64_t k = 0; k < K; ++k) {
      const T av = a[k];
      if (av == T(0)) continue;
      const T* b = B + k * N;
      for (int64_t j = 0; j < N; ++j) c[j] += av * b[j];
    }
  }
}

#if defined(__AVX2__) && defined(__FMA__)

// float fast path: 4x16 register tile. Eight accumulators hide the FMA
// latency chain and cut the C-row load/store traffic of the axpy ordering by
// a factor of four; edges fall back to axpy.
inline void gemm_nn(int64_t M, int64_t K, int64_t N, const float* A, const float* B, float* C,
                    bool accum) {
  const int64_t ib = M & ~int64_t(3);
  const int64_t jb = N & ~int64_t(15);
  for (int64_t i = 0; i < ib; i += 4) {
    const float* a0 = A + i * K;
    const float* a1 = a0 + K;
    const float* a2 = a1 + K;
    const float* a3 = a2 + K;
    float* c0 = C + i * N;
    float* c1 = c0 + N;
    float* c2 = c1 + N;
    float* c3 = c2 + N;
    for (int64_t j = 0; j < jb; j += 16) {
      __m256 s00, s01, s10, s11, s20, s21, s30, s31;
      if (accum) {
        s00 = _mm256_loadu_ps(c0 + j);
        s01 = _mm256_loadu_ps(c0 + j + 8);
        s10 = _mm256_loadu_ps(c1 + j);
        s11 = _mm256_loadu_ps(c1 + j + 8);
        s20 = _mm256_loadu_ps(c2 + j);
        s21 = _mm256_loadu_ps(c2 + j + 8);
        s30 = _mm256_loadu_ps(c3 + j);
        s31 = _mm256_loadu_ps(c3 + j + 8);
      } else {
        s00 = s01 = s10 = s11 = s20 = s21 = s30 = s31 = _mm256_setzero_ps();
      }
      for (int64_t k = 0; k < K; ++k) {
        const float* b = B + k * N + j;
        const __m256 b0 = _mm256_loadu_ps(b);
        const __m256 b1 = _mm256_loadu_ps(b + 8);
        __m256 av = _mm256_set1_ps(a0[k]);
        s00 = _mm256_fmadd_ps(av, b0, s00);
        s01 = _mm256_fmadd_ps(av, b1, s01);
        av = _mm256_set1_ps(a1[k]);
        s10 = _mm256_fmadd_ps(av, b0, s10);
        s11 = _mm256_fmadd_ps(av, b1, s11);
        av = _mm256_set1_ps(a2[k]);
        s20 = _mm256_fmadd_ps(av, b0, s20);
        s21 = _mm256_fmadd_ps(av, b1, s21);
        av = _mm256_set1_ps(a3[k]);
        s30 = _mm256_fmadd_ps(av, b0, s30);
        s31 = _mm256_fmadd_ps(av, b1, s31);
      }
      _mm256_storeu_ps(c0 + j, s00);
      _mm256_storeu_ps(c0 + j + 8, s01);
      _mm256_storeu_ps(c1 + j, s10);
      _mm256_storeu_ps(c1 + j + 8, s11);
      _mm256_storeu_ps(c2 + j, s20);
      _mm256_storeu_ps(c2 + j + 8, s21);
      _mm256_storeu_ps(c3 + j, s30);
      _mm256_storeu_ps(c3 + j + 8, s31);
    }
    if (jb < N) {
      for (int64_t r = 0; r < 4; ++r) {
        const float* a = A + (i + r) * K;
        float* c = C + (i + r) * N;
        if (!accum)
          for (int64_t j = jb; j < N; ++j) c[j] = 0.0f;
        for (int64_t k = 0; k < K; ++k) {
          const float av = a[k];
          const float* b = B + k * N;
          for (int64_t j = jb; j < N; ++j) c[j] += av * b[j];
        }
      }
    }
  }
  for (int64_t i = ib; i < M; ++i) {
    const float* a = A + i * K;
    float* c = C + i * N;
    if (!accum)
      for (int64_t j = 0; j < N; ++j) c[j] = 0.0f;
    for (int64_t k = 0; k < K; ++k) {
      const float av = a[k];
      const float* b = B + k * N;
      for (int64_t j = 0; j < N; ++j) c[j] += av * b[j];
    }
  }
}

#endif

// C[M,N] (+)= A[M,K] * B[N,K]^T  (rows of A dotted with rows of B). Short
// reductions spend their time in dot-call overhead and scalar tails, so for
// small K the B block is transposed into a scratch buffer and the work goes
// through the axpy kernel instead.
template <typename T>
void gemm_nt(int64_t M, int64_t K, int64_t N, const T* A, const T* B, T* C, bool accum) {
  if (K < 32) {
    thread_local std::vector<T> bt;
    if (static_cast<int64_t>(bt.size()) < K * N) bt.resize(K * N);
    for (int64_t j = 0; j < N; ++j)
      for (int64_t k = 0; k < K; ++k) bt[k * N + j] = B[j * K + k];
    gemm_nn(M, K, N, A, bt.data(), C, accum);
    return;
  }
  for (int64_t i = 0; i < M; ++i) {
    const T* a = A + i * K;
    T* c = C + i * N;
    for (int64_t j = 0; j < N; ++j) {
      const T d = detail::dot_rows(a, B + j * K, K);
      c[j] = accum ? c[j] + d : d;
    }
  }
}

// C[M,N] (+)= A[K,M]^T * B[K,N]
template <typename T>
void gemm_tn(int64_t M, int64_t K, int64_t N, const T* A, const T* B, T* C, bool accum) {
  if (!accum)
    for (int64_t i = 0; i < M * N; ++i) C[i] = T(0);
  for (int64_t k = 0; k < K; ++k) {
    const T* a = A + k * M;
    const T* b = B + k * N;
    for (int64_t i = 0; i < M; ++i) {
      const T av = a[i];
      if (av == T(0)) continue;
      T* c = C + i * N;
      for (int64_t j = 0; j < N; ++j) c[j] += av * b[j];
    }
  }
}

#if defined(__AVX2__) && defined(__FMA__)

// float fast path: transpose A into a scratch row-major copy (cheap next to
// the multiply) and reuse the tiled kernel.
inline void gemm_tn(int64_t M, int64_t K, int64_t N, const float* A, const float* B, float* C,
                    bool accum) {
  thread_local std::vector<float> at;
  if (static_cast<int64_t>(at.size()) < M * K) at.resize(M * K);
  for (int64_t k = 0; k < K; ++k)
    for (int64_t i = 0; i < M; ++i) at[i * K + k] = A[k * M + i];
  gemm_nn(M, K, N, at.data(), B, C, accum);
}

#endif

// Unrolls one image [C,H,W] into columns [C*kh*kw, A*B] where column (a,b)
// holds the receptive-field patch whose top-left tap sits at
// (a*stride - pad, b*stride - pad). Out-of-bounds taps read as zero.
template <typename T>
void im2col(const T* img, int64_t C, int64_t H, int64_t W, int64_t kh, int64_t kw,
            int64_t stride, int64_t pad, int64_t A, int64_t B, T* col) {
  int64_t row = 0;
  for (int64_t c = 0; c < C; ++c) {
    const T* plane = img + c * H * W;
    for (int64_t i = 0; i < kh; ++i) {
      for (int64_t j = 0; j < kw; ++j, ++row) {
        T* dst = col + row * A * B;
        for (int64_t a = 0; a < A; ++a) {
          const int64_t y = a * stride - pad + i;
          if (y < 0 || y >= H) {
            for (int64_t b = 0; b < B; ++b) dst[a * B + b] = T(0);
            continue;
          }
          const T* src = plane + y * W;
          for (int64_t b = 0; b < B; ++b) {
            const int64_t x = b * stride - pad + j;
            dst[a * B + b] = (x >= 0 && x < W) ? src[x] : T(0);
          }
        }
      }
    }
  }
}

// Adjoint of im2col: scatter-adds columns back into the image.
template <typename T>
void col2im_add(const T* col, int64_t C, int64_t H, int64_t W, int64_t kh, int64_t kw,
                int64_t stride, int64_t pad, int64_t A, int64_t B, T* img) {
  int64_t row = 0;
  for (int64_t c = 0; c < C; ++c) {
    T* plane = img + c * H * W;
    for (int64_t i = 0; i < kh; ++i) {
      for (int64_t j = 0; j < kw; ++j, ++row) {
        const T* src = col + row * A * B;
        for (int64_t a = 0; a < A; ++a) {
          const int64_t y = a * stride - pad + i;
          if (y < 0 || y >= H) continue;
          T* dst = plane + y * W;
          for (int64_t b = 0; b < B; ++b) {
            const int64_t x = b * stride - pad + j;
            if (x >= 0 && x < W) dst[x] += src[a * B + b];
          }
        }
      }
    }
  }
}

}  // namespace frl
