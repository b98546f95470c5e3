#pragma once

#include <cmath>

// Polynomial sin/cos shared by the scalar and SIMD kernels. Arguments are
// reduced to [-pi/4, pi/4] with a three-part Cody-Waite split of pi/2 and
// evaluated with the Cephes minimax polynomials. The SIMD code repeats these
// exact operations lane-wise; keep both in sync.
namespace ccdbp::kernels::detail {

inline constexpr double kTwoOverPi = 0.636619772367581343076;
inline constexpr double kPio2Hi = 1.57079625129699707031;
inline constexpr double kPio2Mid = 7.54978941586159635335e-8;
inline constexpr double kPio2Lo = 5.39030285815811905290e-15;
// j * kPio2Hi stays exact up to here; larger arguments go to libm.
inline constexpr double kReduceLimit = 1.0e8;

inline constexpr double kSin[6] = {
    1.58962301576546568060e-10, -2.50507477628578072866e-8, 2.75573136213857245213e-6,
    -1.98412698295895385996e-4, 8.33333333332211858878e-3,  -1.66666666666666307295e-1,
};
inline constexpr double kCos[6] = {
    -1.13585365213876817300e-11, 2.08757008419747316778e-9, -2.75573141792967388112e-7,
    2.48015872888517045348e-5,   -1.38888888888730564116e-3, 4.16666666666665929218e-2,
};

inline void sincos_one(double x, double& s, double& c) {
  if (!(std::fabs(x) <= kReduceLimit)) {
    s = std::sin(x);
    c = std::cos(x);
    return;
  }
  const double j = std::nearbyint(x * kTwoOverPi);
  const double z = ((x - j * kPio2Hi) - j * kPio2Mid) - j * kPio2Lo;
  const double zz = z * z;

  double ps = kSin[0];
  for (int i = 1; i < 6; ++i) ps = ps * zz + kSin[i];
  const double sz = z + (z * zz) * ps;

  double pc = kCos[0];
  for (int i = 1; i < 6; ++i) pc = pc * zz + kCos[i];
  const double cz = (1.0 - 0.5 * zz) + (zz * zz) * pc;

  const double q = j - 4.0 * std::floor(j * 0.25);
  if (q == 0.0) {
    s = sz;
    c = cz;
  } else if (q == 1.0) {
    s = cz;
    c = -sz;
  } else if (q == 2.0) {
    s = -sz;
    c = -cz;
  } else {
    s = -cz;
    c = sz;
  }
}

}  // namespace ccdbp::kernels::detail
