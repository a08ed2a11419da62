#pragma once

// Dense double-precision kernels backing the tensor core.
//
// Every kernel exists as a scalar reference implementation and, where the
// compiler and CPU allow it, an AVX2+FMA variant. The active table is chosen
// once per process: OSSDET_SIMD=scalar|avx2|auto (default auto). All matrices
// are row-major with explicit leading dimensions and every GEMM accumulates
// into C (C += op(A) * op(B)).

#include <cstddef>
#include <string_view>

namespace ossdet::simd {

enum class Isa { scalar, avx2 };

std::string_view isa_name(Isa isa);

using GemmFn = void (*)(std::size_t m, std::size_t n, std::size_t k,
                        const double* a, std::size_t lda,
                        const double* b, std::size_t ldb,
                        double* c, std::size_t ldc);
using DotFn = double (*)(const double* x, const double* y, std::size_t n);
using AxpyFn = void (*)(double alpha, const double* x, double* y, std::size_t n);

struct KernelTable {
  Isa isa;
  /// C[m,n] += A[m,k] * B[k,n]
  GemmFn gemm_nn;
  /// C[m,n] += A[k,m]^T * B[k,n]
  GemmFn gemm_tn;
  /// C[m,n] += A[m,k] * B[n,k]^T
  GemmFn gemm_nt;
  DotFn dot;
  /// y += alpha * x
  AxpyFn axpy;
};

const KernelTable& scalar_kernels();

/// AVX2 table, or nullptr when it was not compiled in or the CPU lacks AVX2/FMA.
const KernelTable* avx2_kernels();

bool cpu_supports(Isa isa);

/// Table used by the tensor core.
const KernelTable& kernels();

/// Overrides the active table. Throws std::invalid_argument if unsupported.
/// Not thread-safe with respect to concurrent kernel calls; call at startup.
void select(Isa isa);

Isa active_isa();

}  // namespace ossdet::simd
