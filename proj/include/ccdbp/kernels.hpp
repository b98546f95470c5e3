#pragma once

#include <cstddef>
#include <string_view>

#include "ccdbp/aligned_vector.hpp"

/// Data-parallel inner loops of the propagation and backpropagation engines.
///
/// Every kernel has a portable scalar reference and, on x86-64, an AVX2
/// variant. The AVX2 variants use the same operation order as the scalar
/// code and no fused multiply-add, so both tables produce bit-identical
/// results; `tests/unit/test_kernels.cpp` holds them to that.
///
/// The active table is chosen once at first use: AVX2 when the CPU supports
/// it, unless the environment variable CCDBP_SIMD is set to "scalar".
namespace ccdbp::kernels {

struct KernelTable {
  std::string_view name;

  /// out[k] = |x[k]|^2 + |y[k]|^2
  void (*intensity2)(const cplx* x, const cplx* y, double* out, std::size_t n);
  /// out[k] = |x[k]|^2
  void (*intensity)(const cplx* x, double* out, std::size_t n);
  /// x[k] *= amp * exp(j * scale * phase[k])
  void (*rotate)(cplx* x, const double* phase, double scale, double amp, std::size_t n);
  /// x[k] *= amp * exp(j * scale * phase[k]); y[k] likewise, one sincos per k
  void (*rotate2)(cplx* x, cplx* y, const double* phase, double scale, double amp,
                  std::size_t n);
  /// x[k] *= h[k]
  void (*cmul)(cplx* x, const cplx* h, std::size_t n);
  /// acc[k] += scale * a[k] * b[k]
  void (*cmul_acc)(cplx* acc, const cplx* a, const cplx* b, double scale, std::size_t n);
  /// out[k] = sum_{t < ntaps} taps[t] * in[k + t], t ascending; `in` holds n + ntaps - 1 values
  void (*correlate)(const double* in, const double* taps, std::size_t ntaps, double* out,
                    std::size_t n);
  /// s[k] = sin(x[k]), c[k] = cos(x[k])
  void (*sincos)(const double* x, double* s, double* c, std::size_t n);
};

const KernelTable& scalar();
/// Null when the build or the CPU lacks AVX2.
const KernelTable* avx2();
/// The table selected for this process.
const KernelTable& active();

}  // namespace ccdbp::kernels
