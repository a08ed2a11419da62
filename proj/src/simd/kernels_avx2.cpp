// Built with -mavx2 -mfma. Only reachable through the dispatch table after a
// runtime CPU check; keep standard-library templates out of this file so no
// AVX-compiled inline instantiation can leak into the rest of the program.

#include <immintrin.h>

#include "ossdet/simd/kernels.hpp"

namespace ossdet::simd {
namespace {

constexpr std::size_t kPanelCols = 128;

inline std::size_t min_size(std::size_t a, std::size_t b) { return a < b ? a : b; }

inline double hsum(__m256d v) {
  const __m128d lo = _mm256_castpd256_pd128(v);
  const __m128d hi = _mm256_extractf128_pd(v, 1);
  const __m128d s = _mm_add_pd(lo, hi);
  return _mm_cvtsd_f64(_mm_add_sd(s, _mm_unpackhi_pd(s, s)));
}

// A element (row i, reduction index p); row-major A[m,k] or transposed A[k,m].
template <bool TransA>
inline double a_at(const double* a, std::size_t lda, std::size_t i, std::size_t p) {
  return TransA ? a[p * lda + i] : a[i * lda + p];
}

template <bool TransA>
void gemm_panel(std::size_t m, std::size_t j0, std::size_t j1, std::size_t k, const double* a,
                std::size_t lda, const double* b, std::size_t ldb, double* c, std::size_t ldc) {
  std::size_t i = 0;
  for (; i + 4 <= m; i += 4) {
    std::size_t j = j0;
    for (; j + 8 <= j1; j += 8) {
      __m256d c00 = _mm256_setzero_pd(), c01 = _mm256_setzero_pd();
      __m256d c10 = _mm256_setzero_pd(), c11 = _mm256_setzero_pd();
      __m256d c20 = _mm256_setzero_pd(), c21 = _mm256_setzero_pd();
      __m256d c30 = _mm256_setzero_pd(), c31 = _mm256_setzero_pd();
      for (std::size_t p = 0; p < k; ++p) {
        const double* bp = b + p * ldb + j;
        const __m256d b0 = _mm256_loadu_pd(bp);
        const __m256d b1 = _mm256_loadu_pd(bp + 4);
        __m256d av = _mm256_set1_pd(a_at<TransA>(a, lda, i, p));
        c00 = _mm256_fmadd_pd(av, b0, c00);
        c01 = _mm256_fmadd_pd(av, b1, c01);
        av = _mm256_set1_pd(a_at<TransA>(a, lda, i + 1, p));
        c10 = _mm256_fmadd_pd(av, b0, c10);
        c11 = _mm256_fmadd_pd(av, b1, c11);
        av = _mm256_set1_pd(a_at<TransA>(a, lda, i + 2, p));
        c20 = _mm256_fmadd_pd(av, b0, c20);
        c21 = _mm256_fmadd_pd(av, b1, c21);
        av = _mm256_set1_pd(a_at<TransA>(a, lda, i + 3, p));
        c30 = _mm256_fmadd_pd(av, b0, c30);
        c31 = _mm256_fmadd_pd(av, b1, c31);
      }
      double* cr = c + i * ldc + j;
      _mm256_storeu_pd(cr, _mm256_add_pd(_mm256_loadu_pd(cr), c00));
      _mm256_storeu_pd(cr + 4, _mm256_add_pd(_mm256_loadu_pd(cr + 4), c01));
      cr += ldc;
      _mm256_storeu_pd(cr, _mm256_add_pd(_mm256_loadu_pd(cr), c10));
      _mm256_storeu_pd(cr + 4, _mm256_add_pd(_mm256_loadu_pd(cr + 4), c11));
      cr += ldc;
      _mm256_storeu_pd(cr, _mm256_add_pd(_mm256_loadu_pd(cr), c20));
      _mm256_storeu_pd(cr + 4, _mm256_add_pd(_mm256_loadu_pd(cr + 4), c21));
      cr += ldc;
      _mm256_storeu_pd(cr, _mm256_add_pd(_mm256_loadu_pd(cr), c30));
      _mm256_storeu_pd(cr + 4, _mm256_add_pd(_mm256_loadu_pd(cr + 4), c31));
    }
    for (; j + 4 <= j1; j += 4) {
      __m256d c0 = _mm256_setzero_pd(), c1 = _mm256_setzero_pd();
      __m256d c2 = _mm256_setzero_pd(), c3 = _mm256_setzero_pd();
      for (std::size_t p = 0; p < k; ++p) {
        const __m256d bv = _mm256_loadu_pd(b + p * ldb + j);
        c0 = _mm256_fmadd_pd(_mm256_set1_pd(a_at<TransA>(a, lda, i, p)), bv, c0);
        c1 = _mm256_fmadd_pd(_mm256_set1_pd(a_at<TransA>(a, lda, i + 1, p)), bv, c1);
        c2 = _mm256_fmadd_pd(_mm256_set1_pd(a_at<TransA>(a, lda, i + 2, p)), bv, c2);
        c3 = _mm256_fmadd_pd(_mm256_set1_pd(a_at<TransA>(a, lda, i + 3, p)), bv, c3);
      }
      double* cr = c + i * ldc + j;
      _mm256_storeu_pd(cr, _mm256_add_pd(_mm256_loadu_pd(cr), c0));
      _mm256_storeu_pd(cr + ldc, _mm256_add_pd(_mm256_loadu_pd(cr + ldc), c1));
      _mm256_storeu_pd(cr + 2 * ldc, _mm256_add_pd(_mm256_loadu_pd(cr + 2 * ldc), c2));
      _mm256_storeu_pd(cr + 3 * ldc, _mm256_add_pd(_mm256_loadu_pd(cr + 3 * ldc), c3));
    }
    for (; j < j1; ++j) {
      for (std::size_t r = 0; r < 4; ++r) {
        double s = 0.0;
        for (std::size_t p = 0; p < k; ++p) s += a_at<TransA>(a, lda, i + r, p) * b[p * ldb + j];
        c[(i + r) * ldc + j] += s;
      }
    }
  }
  for (; i < m; ++i) {
    std::size_t j = j0;
    for (; j + 4 <= j1; j += 4) {
      __m256d acc = _mm256_setzero_pd();
      for (std::size_t p = 0; p < k; ++p) {
        acc = _mm256_fmadd_pd(_mm256_set1_pd(a_at<TransA>(a, lda, i, p)),
                              _mm256_loadu_pd(b + p * ldb + j), acc);
      }
      double* cr = c + i * ldc + j;
      _mm256_storeu_pd(cr, _mm256_add_pd(_mm256_loadu_pd(cr), acc));
    }
    for (; j < j1; ++j) {
      double s = 0.0;
      for (std::size_t p = 0; p < k; ++p) s += a_at<TransA>(a, lda, i, p) * b[p * ldb + j];
      c[i * ldc + j] += s;
    }
  }
}

template <bool TransA>
void gemm_xn(std::size_t m, std::size_t n, std::size_t k, const double* a, std::size_t lda,
             const double* b, std::size_t ldb, double* c, std::size_t ldc) {
  for (std::size_t j0 = 0; j0 < n; j0 += kPanelCols) {
    gemm_panel<TransA>(m, j0, min_size(n, j0 + kPanelCols), k, a, lda, b, ldb, c, ldc);
  }
}

void gemm_nn(std::size_t m, std::size_t n, std::size_t k, const double* a, std::size_t lda,
             const double* b, std::size_t ldb, double* c, std::size_t ldc) {
  gemm_xn<false>(m, n, k, a, lda, b, ldb, c, ldc);
}

void gemm_tn(std::size_t m, std::size_t n, std::size_t k, const double* a, std::size_t lda,
             const double* b, std::size_t ldb, double* c, std::size_t ldc) {
  gemm_xn<true>(m, n, k, a, lda, b, ldb, c, ldc);
}

// One row of A against four rows of B; the reduction runs along contiguous k.
void gemm_nt(std::size_t m, std::size_t n, std::size_t k, const double* a, std::size_t lda,
             const double* b, std::size_t ldb, double* c, std::size_t ldc) {
  const std::size_t kv = k & ~std::size_t{3};
  for (std::size_t i = 0; i < m; ++i) {
    const double* ar = a + i * lda;
    std::size_t j = 0;
    for (; j + 4 <= n; j += 4) {
      const double* b0 = b + j * ldb;
      const double* b1 = b0 + ldb;
      const double* b2 = b1 + ldb;
      const double* b3 = b2 + ldb;
      __m256d s0 = _mm256_setzero_pd(), s1 = _mm256_setzero_pd();
      __m256d s2 = _mm256_setzero_pd(), s3 = _mm256_setzero_pd();
      for (std::size_t p = 0; p < kv; p += 4) {
        const __m256d av = _mm256_loadu_pd(ar + p);
        s0 = _mm256_fmadd_pd(av, _mm256_loadu_pd(b0 + p), s0);
        s1 = _mm256_fmadd_pd(av, _mm256_loadu_pd(b1 + p), s1);
        s2 = _mm256_fmadd_pd(av, _mm256_loadu_pd(b2 + p), s2);
        s3 = _mm256_fmadd_pd(av, _mm256_loadu_pd(b3 + p), s3);
      }
      double t0 = hsum(s0), t1 = hsum(s1), t2 = hsum(s2), t3 = hsum(s3);
      for (std::size_t p = kv; p < k; ++p) {
        t0 += ar[p] * b0[p];
        t1 += ar[p] * b1[p];
        t2 += ar[p] * b2[p];
        t3 += ar[p] * b3[p];
      }
      double* cr = c + i * ldc + j;
      cr[0] += t0;
      cr[1] += t1;
      cr[2] += t2;
      cr[3] += t3;
    }
    for (; j < n; ++j) {
      const double* br = b + j * ldb;
      __m256d s = _mm256_setzero_pd();
      for (std::size_t p = 0; p < kv; p += 4) {
        s = _mm256_fmadd_pd(_mm256_loadu_pd(ar + p), _mm256_loadu_pd(br + p), s);
      }
      double t = hsum(s);
      for (std::size_t p = kv; p < k; ++p) t += ar[p] * br[p];
      c[i * ldc + j] += t;
    }
  }
}

double dot(const double* x, const double* y, std::size_t n) {
  const std::size_t nv = n & ~std::size_t{7};
  __m256d s0 = _mm256_setzero_pd(), s1 = _mm256_setzero_pd();
  for (std::size_t i = 0; i < nv; i += 8) {
    s0 = _mm256_fmadd_pd(_mm256_loadu_pd(x + i), _mm256_loadu_pd(y + i), s0);
    s1 = _mm256_fmadd_pd(_mm256_loadu_pd(x + i + 4), _mm256_loadu_pd(y + i + 4), s1);
  }
  double t = hsum(_mm256_add_pd(s0, s1));
  for (std::size_t i = nv; i < n; ++i) t += x[i] * y[i];
  return t;
}

void axpy(double alpha, const double* x, double* y, std::size_t n) {
  const __m256d av = _mm256_set1_pd(alpha);
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    _mm256_storeu_pd(y + i, _mm256_fmadd_pd(av, _mm256_loadu_pd(x + i), _mm256_loadu_pd(y + i)));
  }
  for (; i < n; ++i) y[i] += alpha * x[i];
}

}  // namespace

extern const KernelTable kAvx2Table;
const KernelTable kAvx2Table{Isa::avx2, gemm_nn, gemm_tn, gemm_nt, dot, axpy};

}  // namespace ossdet::simd
