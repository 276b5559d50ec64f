// SPDX-License-Identifier: Apache-2.0
#pragma once

// Dense f64 kernels behind the autodiff tape. Each entry point has a scalar
// reference and (on x86-64) an AVX2+FMA variant; the active table is chosen
// once at first use from CPUID, or forced via WINDGNN_ISA=scalar|avx2.

#include <cstddef>
#include <string_view>

namespace windgnn::simd {

enum class Isa { scalar, avx2 };

std::string_view isa_name(Isa isa);

struct KernelTable {
  Isa isa;
  // C[m x n] (+)= A[m x k] * B[k x n]
  void (*gemm_nn)(const double* a, const double* b, double* c, std::size_t m,
                  std::size_t k, std::size_t n, bool accumulate);
  // C[k x n] += A[m x k]^T * B[m x n]
  void (*gemm_tn)(const double* a, const double* b, double* c, std::size_t m,
                  std::size_t k, std::size_t n);
  // C[m x k] += A[m x n] * B[k x n]^T
  void (*gemm_nt)(const double* a, const double* b, double* c, std::size_t m,
                  std::size_t n, std::size_t k);
  double (*dot)(const double* x, const double* y, std::size_t n);
  // y += alpha * x
  void (*axpy)(double alpha, const double* x, double* y, std::size_t n);
};

const KernelTable& scalar_kernels();
/// nullptr when the host or build lacks AVX2+FMA.
const KernelTable* avx2_kernels();

bool cpu_supports(Isa isa);

/// Table used by every tensor operation.
const KernelTable& active();
Isa active_isa();
/// Overrides runtime detection; throws ConfigError if the ISA is unavailable.
void force_isa(Isa isa);

}  // namespace windgnn::simd
