#pragma once

#include <cstddef>

#include "ccdbp/aligned_vector.hpp"
#include "kernels/sincos_poly.hpp"

// Scalar reference kernels. The SIMD variants call these for loop tails, so
// the operation order written here is the contract for every variant.
namespace ccdbp::kernels::ref {

inline void intensity2(const cplx* x, const cplx* y, double* out, std::size_t n) {
  const auto* xd = reinterpret_cast<const double*>(x);
  const auto* yd = reinterpret_cast<const double*>(y);
  for (std::size_t k = 0; k < n; ++k) {
    const double ix = xd[2 * k] * xd[2 * k] + xd[2 * k + 1] * xd[2 * k + 1];
    const double iy = yd[2 * k] * yd[2 * k] + yd[2 * k + 1] * yd[2 * k + 1];
    out[k] = ix + iy;
  }
}

inline void intensity(const cplx* x, double* out, std::size_t n) {
  const auto* xd = reinterpret_cast<const double*>(x);
  for (std::size_t k = 0; k < n; ++k)
    out[k] = xd[2 * k] * xd[2 * k] + xd[2 * k + 1] * xd[2 * k + 1];
}

inline void rotate_one(double* v, double c, double s, double amp) {
  const double re = (v[0] * c - v[1] * s) * amp;
  const double im = (v[1] * c + v[0] * s) * amp;
  v[0] = re;
  v[1] = im;
}

inline void rotate(cplx* x, const double* phase, double scale, double amp, std::size_t n) {
  auto* xd = reinterpret_cast<double*>(x);
  for (std::size_t k = 0; k < n; ++k) {
    double s, c;
    detail::sincos_one(scale * phase[k], s, c);
    rotate_one(xd + 2 * k, c, s, amp);
  }
}

inline void rotate2(cplx* x, cplx* y, const double* phase, double scale, double amp,
                    std::size_t n) {
  auto* xd = reinterpret_cast<double*>(x);
  auto* yd = reinterpret_cast<double*>(y);
  for (std::size_t k = 0; k < n; ++k) {
    double s, c;
    detail::sincos_one(scale * phase[k], s, c);
    rotate_one(xd + 2 * k, c, s, amp);
    rotate_one(yd + 2 * k, c, s, amp);
  }
}

inline void cmul(cplx* x, const cplx* h, std::size_t n) {
  auto* xd = reinterpret_cast<double*>(x);
  const auto* hd = reinterpret_cast<const double*>(h);
  for (std::size_t k = 0; k < n; ++k) {
    const double re = xd[2 * k] * hd[2 * k] - xd[2 * k + 1] * hd[2 * k + 1];
    const double im = xd[2 * k + 1] * hd[2 * k] + xd[2 * k] * hd[2 * k + 1];
    xd[2 * k] = re;
    xd[2 * k + 1] = im;
  }
}

inline void cmul_acc(cplx* acc, const cplx* a, const cplx* b, double scale, std::size_t n) {
  auto* ad = reinterpret_cast<double*>(acc);
  const auto* xd = reinterpret_cast<const double*>(a);
  const auto* hd = reinterpret_cast<const double*>(b);
  for (std::size_t k = 0; k < n; ++k) {
    const double re = xd[2 * k] * hd[2 * k] - xd[2 * k + 1] * hd[2 * k + 1];
    const double im = xd[2 * k + 1] * hd[2 * k] + xd[2 * k] * hd[2 * k + 1];
    ad[2 * k] += scale * re;
    ad[2 * k + 1] += scale * im;
  }
}

inline void correlate(const double* in, const double* taps, std::size_t ntaps, double* out,
                      std::size_t n) {
  for (std::size_t k = 0; k < n; ++k) {
    double acc = 0.0;
    for (std::size_t t = 0; t < ntaps; ++t) acc += taps[t] * in[k + t];
    out[k] = acc;
  }
}

inline void sincos(const double* x, double* s, double* c, std::size_t n) {
  for (std::size_t k = 0; k < n; ++k) detail::sincos_one(x[k], s[k], c[k]);
}

}  // namespace ccdbp::kernels::ref
