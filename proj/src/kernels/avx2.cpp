// Compiled with -mavx2 (and without FMA); only reached after a runtime CPU check.
#include <immintrin.h>

#include "ccdbp/kernels.hpp"
#include "kernels/scalar_impl.hpp"

namespace ccdbp::kernels {
namespace {

// [c0, s0, c1, s1] from the sin/cos of two phases, lane order matching
// interleaved complex storage.
inline __m256d interleave(__m128d c, __m128d s) {
  const __m256d lo = _mm256_castpd128_pd256(_mm_unpacklo_pd(c, s));
  return _mm256_insertf128_pd(lo, _mm_unpackhi_pd(c, s), 1);
}

// Complex product of interleaved pairs: (ar*br - ai*bi, ai*br + ar*bi).
inline __m256d cmul_pd(__m256d a, __m256d b) {
  const __m256d br = _mm256_movedup_pd(b);
  const __m256d bi = _mm256_permute_pd(b, 0xF);
  const __m256d as = _mm256_permute_pd(a, 0x5);
  return _mm256_addsub_pd(_mm256_mul_pd(a, br), _mm256_mul_pd(as, bi));
}

void sincos4(__m256d x, __m256d& s_out, __m256d& c_out) {
  using namespace detail;
  const __m256d abs_mask = _mm256_castsi256_pd(_mm256_set1_epi64x(0x7FFFFFFFFFFFFFFFLL));
  const __m256d ax = _mm256_and_pd(x, abs_mask);
  // Ordered compare is false for NaN, which also routes NaN to the fallback.
  const __m256d in_range = _mm256_cmp_pd(ax, _mm256_set1_pd(kReduceLimit), _CMP_LE_OQ);
  if (_mm256_movemask_pd(in_range) != 0xF) {
    alignas(32) double xs[4], ss[4], cs[4];
    _mm256_store_pd(xs, x);
    for (int i = 0; i < 4; ++i) sincos_one(xs[i], ss[i], cs[i]);
    s_out = _mm256_load_pd(ss);
    c_out = _mm256_load_pd(cs);
    return;
  }

  const __m256d j = _mm256_round_pd(_mm256_mul_pd(x, _mm256_set1_pd(kTwoOverPi)),
                                    _MM_FROUND_TO_NEAREST_INT | _MM_FROUND_NO_EXC);
  __m256d z = _mm256_sub_pd(x, _mm256_mul_pd(j, _mm256_set1_pd(kPio2Hi)));
  z = _mm256_sub_pd(z, _mm256_mul_pd(j, _mm256_set1_pd(kPio2Mid)));
  z = _mm256_sub_pd(z, _mm256_mul_pd(j, _mm256_set1_pd(kPio2Lo)));
  const __m256d zz = _mm256_mul_pd(z, z);

  __m256d ps = _mm256_set1_pd(kSin[0]);
  for (int i = 1; i < 6; ++i) ps = _mm256_add_pd(_mm256_mul_pd(ps, zz), _mm256_set1_pd(kSin[i]));
  const __m256d sz = _mm256_add_pd(z, _mm256_mul_pd(_mm256_mul_pd(z, zz), ps));

  __m256d pc = _mm256_set1_pd(kCos[0]);
  for (int i = 1; i < 6; ++i) pc = _mm256_add_pd(_mm256_mul_pd(pc, zz), _mm256_set1_pd(kCos[i]));
  const __m256d cz = _mm256_add_pd(_mm256_sub_pd(_mm256_set1_pd(1.0), _mm256_mul_pd(_mm256_set1_pd(0.5), zz)),
                                   _mm256_mul_pd(_mm256_mul_pd(zz, zz), pc));

  const __m256d q = _mm256_sub_pd(
      j, _mm256_mul_pd(_mm256_set1_pd(4.0),
                       _mm256_floor_pd(_mm256_mul_pd(j, _mm256_set1_pd(0.25)))));
  const __m256d odd = _mm256_or_pd(_mm256_cmp_pd(q, _mm256_set1_pd(1.0), _CMP_EQ_OQ),
                                   _mm256_cmp_pd(q, _mm256_set1_pd(3.0), _CMP_EQ_OQ));
  const __m256d neg_s = _mm256_cmp_pd(q, _mm256_set1_pd(2.0), _CMP_GE_OQ);  // q in {2,3}
  const __m256d neg_c = _mm256_or_pd(_mm256_cmp_pd(q, _mm256_set1_pd(1.0), _CMP_EQ_OQ),
                                     _mm256_cmp_pd(q, _mm256_set1_pd(2.0), _CMP_EQ_OQ));
  const __m256d sign = _mm256_set1_pd(-0.0);
  __m256d s = _mm256_blendv_pd(sz, cz, odd);
  __m256d c = _mm256_blendv_pd(cz, sz, odd);
  s = _mm256_xor_pd(s, _mm256_and_pd(neg_s, sign));
  c = _mm256_xor_pd(c, _mm256_and_pd(neg_c, sign));
  s_out = s;
  c_out = c;
}

void intensity2(const cplx* x, const cplx* y, double* out, std::size_t n) {
  const auto* xd = reinterpret_cast<const double*>(x);
  const auto* yd = reinterpret_cast<const double*>(y);
  std::size_t k = 0;
  for (; k + 4 <= n; k += 4) {
    const __m256d x01 = _mm256_loadu_pd(xd + 2 * k);
    const __m256d x23 = _mm256_loadu_pd(xd + 2 * k + 4);
    const __m256d y01 = _mm256_loadu_pd(yd + 2 * k);
    const __m256d y23 = _mm256_loadu_pd(yd + 2 * k + 4);
    // hadd gives [|v0|^2, |v2|^2, |v1|^2, |v3|^2]
    const __m256d ix = _mm256_hadd_pd(_mm256_mul_pd(x01, x01), _mm256_mul_pd(x23, x23));
    const __m256d iy = _mm256_hadd_pd(_mm256_mul_pd(y01, y01), _mm256_mul_pd(y23, y23));
    const __m256d sum = _mm256_add_pd(ix, iy);
    _mm256_storeu_pd(out + k, _mm256_permute4x64_pd(sum, 0xD8));
  }
  ref::intensity2(x + k, y + k, out + k, n - k);
}

void intensity(const cplx* x, double* out, std::size_t n) {
  const auto* xd = reinterpret_cast<const double*>(x);
  std::size_t k = 0;
  for (; k + 4 <= n; k += 4) {
    const __m256d x01 = _mm256_loadu_pd(xd + 2 * k);
    const __m256d x23 = _mm256_loadu_pd(xd + 2 * k + 4);
    const __m256d ix = _mm256_hadd_pd(_mm256_mul_pd(x01, x01), _mm256_mul_pd(x23, x23));
    _mm256_storeu_pd(out + k, _mm256_permute4x64_pd(ix, 0xD8));
  }
  ref::intensity(x + k, out + k, n - k);
}

inline void rotate_block(double* xd, __m256d s, __m256d c, __m256d amp) {
  const __m256d lo = interleave(_mm256_castpd256_pd128(c), _mm256_castpd256_pd128(s));
  const __m256d hi = interleave(_mm256_extractf128_pd(c, 1), _mm256_extractf128_pd(s, 1));
  _mm256_storeu_pd(xd, _mm256_mul_pd(cmul_pd(_mm256_loadu_pd(xd), lo), amp));
  _mm256_storeu_pd(xd + 4, _mm256_mul_pd(cmul_pd(_mm256_loadu_pd(xd + 4), hi), amp));
}

void rotate(cplx* x, const double* phase, double scale, double amp, std::size_t n) {
  auto* xd = reinterpret_cast<double*>(x);
  const __m256d vscale = _mm256_set1_pd(scale);
  const __m256d vamp = _mm256_set1_pd(amp);
  std::size_t k = 0;
  for (; k + 4 <= n; k += 4) {
    __m256d s, c;
    sincos4(_mm256_mul_pd(vscale, _mm256_loadu_pd(phase + k)), s, c);
    rotate_block(xd + 2 * k, s, c, vamp);
  }
  ref::rotate(x + k, phase + k, scale, amp, n - k);
}

void rotate2(cplx* x, cplx* y, const double* phase, double scale, double amp, std::size_t n) {
  auto* xd = reinterpret_cast<double*>(x);
  auto* yd = reinterpret_cast<double*>(y);
  const __m256d vscale = _mm256_set1_pd(scale);
  const __m256d vamp = _mm256_set1_pd(amp);
  std::size_t k = 0;
  for (; k + 4 <= n; k += 4) {
    __m256d s, c;
    sincos4(_mm256_mul_pd(vscale, _mm256_loadu_pd(phase + k)), s, c);
    rotate_block(xd + 2 * k, s, c, vamp);
    rotate_block(yd + 2 * k, s, c, vamp);
  }
  ref::rotate2(x + k, y + k, phase + k, scale, amp, n - k);
}

void cmul(cplx* x, const cplx* h, std::size_t n) {
  auto* xd = reinterpret_cast<double*>(x);
  const auto* hd = reinterpret_cast<const double*>(h);
  std::size_t k = 0;
  for (; k + 2 <= n; k += 2)
    _mm256_storeu_pd(xd + 2 * k, cmul_pd(_mm256_loadu_pd(xd + 2 * k), _mm256_loadu_pd(hd + 2 * k)));
  ref::cmul(x + k, h + k, n - k);
}

void cmul_acc(cplx* acc, const cplx* a, const cplx* b, double scale, std::size_t n) {
  auto* ad = reinterpret_cast<double*>(acc);
  const auto* xd = reinterpret_cast<const double*>(a);
  const auto* hd = reinterpret_cast<const double*>(b);
  const __m256d vscale = _mm256_set1_pd(scale);
  std::size_t k = 0;
  for (; k + 2 <= n; k += 2) {
    const __m256d prod = cmul_pd(_mm256_loadu_pd(xd + 2 * k), _mm256_loadu_pd(hd + 2 * k));
    _mm256_storeu_pd(ad + 2 * k,
                     _mm256_add_pd(_mm256_loadu_pd(ad + 2 * k), _mm256_mul_pd(vscale, prod)));
  }
  ref::cmul_acc(acc + k, a + k, b + k, scale, n - k);
}

void correlate(const double* in, const double* taps, std::size_t ntaps, double* out,
               std::size_t n) {
  std::size_t k = 0;
  for (; k + 16 <= n; k += 16) {
    __m256d a0 = _mm256_setzero_pd(), a1 = _mm256_setzero_pd();
    __m256d a2 = _mm256_setzero_pd(), a3 = _mm256_setzero_pd();
    for (std::size_t t = 0; t < ntaps; ++t) {
      const __m256d w = _mm256_set1_pd(taps[t]);
      const double* p = in + k + t;
      a0 = _mm256_add_pd(a0, _mm256_mul_pd(w, _mm256_loadu_pd(p)));
      a1 = _mm256_add_pd(a1, _mm256_mul_pd(w, _mm256_loadu_pd(p + 4)));
      a2 = _mm256_add_pd(a2, _mm256_mul_pd(w, _mm256_loadu_pd(p + 8)));
      a3 = _mm256_add_pd(a3, _mm256_mul_pd(w, _mm256_loadu_pd(p + 12)));
    }
    _mm256_storeu_pd(out + k, a0);
    _mm256_storeu_pd(out + k + 4, a1);
    _mm256_storeu_pd(out + k + 8, a2);
    _mm256_storeu_pd(out + k + 12, a3);
  }
  for (; k + 4 <= n; k += 4) {
    __m256d a0 = _mm256_setzero_pd();
    for (std::size_t t = 0; t < ntaps; ++t)
      a0 = _mm256_add_pd(a0, _mm256_mul_pd(_mm256_set1_pd(taps[t]), _mm256_loadu_pd(in + k + t)));
    _mm256_storeu_pd(out + k, a0);
  }
  ref::correlate(in + k, taps, ntaps, out + k, n - k);
}

void sincos(const double* x, double* s, double* c, std::size_t n) {
  std::size_t k = 0;
  for (; k + 4 <= n; k += 4) {
    __m256d vs, vc;
    sincos4(_mm256_loadu_pd(x + k), vs, vc);
    _mm256_storeu_pd(s + k, vs);
    _mm256_storeu_pd(c + k, vc);
  }
  ref::sincos(x + k, s + k, c + k, n - k);
}

}  // namespace

const KernelTable* avx2_table() {
  static const KernelTable table{
      "avx2", &intensity2, &intensity, &rotate, &rotate2, &cmul, &cmul_acc, &correlate, &sincos,
  };
  return &table;
}

}  // namespace ccdbp::kernels
