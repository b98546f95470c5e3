#pragma once

#include <span>

#include "ccdbp/aligned_vector.hpp"

/// Thin wrapper over FFTW's double-precision 1-D transforms.
///
/// Plans are created once per (kind, size, placement, alignment) with
/// FFTW_ESTIMATE, which makes the chosen algorithm, and therefore every
/// output bit, independent of timing. Execution is thread-safe.
/// None of the transforms normalize: inverse(forward(x)) == n * x.
namespace ccdbp::fft {

void forward(std::span<const cplx> in, std::span<cplx> out);
void inverse(std::span<const cplx> in, std::span<cplx> out);

/// Real-to-complex; `out` holds n/2 + 1 bins.
void forward_real(std::span<const double> in, std::span<cplx> out);
/// Complex-to-real of n/2 + 1 bins into n samples. `in` is left untouched.
void inverse_real(std::span<const cplx> in, std::span<double> out);

inline CVec forward(const CVec& in) {
  CVec out(in.size());
  forward(in, out);
  return out;
}

inline CVec inverse(const CVec& in) {
  CVec out(in.size());
  inverse(in, out);
  return out;
}

}  // namespace ccdbp::fft
