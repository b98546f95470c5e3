#include <doctest.h>

#include <cmath>
#include <numbers>
#include <random>

#include "ccdbp/errors.hpp"
#include "ccdbp/fft.hpp"
#include "ccdbp/signal.hpp"

using namespace ccdbp;

namespace {

constexpr double kPi = std::numbers::pi;

// Random signal whose spectrum is confined to |f| < half_band.
DualPolSignal band_limited(std::size_t n, double fs, double half_band, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> nd;
  DualPolSignal s(n, fs);
  for (auto* pol : {&s.x, &s.y}) {
    CVec spec(n);
    for (std::size_t k = 0; k < n; ++k)
      if (std::abs(bin_frequency(k, n, fs)) < half_band) spec[k] = cplx(nd(rng), nd(rng));
    fft::inverse(spec, *pol);
  }
  return s;
}

double max_diff(const CVec& a, const CVec& b) {
  double m = 0.0;
  for (std::size_t k = 0; k < a.size(); ++k) m = std::max(m, std::abs(a[k] - b[k]));
  return m;
}

double max_abs(const CVec& a) {
  double m = 0.0;
  for (const auto& v : a) m = std::max(m, std::abs(v));
  return m;
}

}  // namespace

TEST_CASE("bin frequencies follow the FFT layout") {
  CHECK(bin_frequency(0, 8, 8.0) == 0.0);
  CHECK(bin_frequency(3, 8, 8.0) == 3.0);
  CHECK(bin_frequency(4, 8, 8.0) == -4.0);
  CHECK(bin_frequency(7, 8, 8.0) == -1.0);
  CHECK(bin_frequency(2, 5, 5.0) == 2.0);
  CHECK(bin_frequency(3, 5, 5.0) == -2.0);
}

TEST_CASE("resampling agrees with direct band-limited interpolation") {
  const std::size_t n = 96;
  const double fs = 96.0;
  const DualPolSignal s = band_limited(n, fs, 30.0, 3);
  const CVec spec = fft::forward(s.x);
  for (double rate : {64.0, 160.0, 200.0}) {
    CAPTURE(rate);
    const DualPolSignal r = resample(s, rate, 60.0);
    REQUIRE(r.size() == static_cast<std::size_t>(n * rate / fs));
    CVec direct(r.size());
    for (std::size_t m = 0; m < r.size(); ++m) {
      const double t = m / rate;
      cplx acc(0.0, 0.0);
      for (std::size_t k = 0; k < n; ++k)
        acc += spec[k] * std::polar(1.0, 2.0 * kPi * bin_frequency(k, n, fs) * t);
      direct[m] = acc / static_cast<double>(n);
    }
    CHECK(max_diff(r.x, direct) < 1e-12 * max_abs(direct));
  }
}

TEST_CASE("resampling up and back down is the identity") {
  const DualPolSignal s = band_limited(128, 2.0, 0.45, 4);
  const DualPolSignal back = resample(resample(s, 6.0, 0.9), 2.0, 0.9);
  CHECK(max_diff(back.x, s.x) < 1e-13 * max_abs(s.x));
  CHECK(max_diff(back.y, s.y) < 1e-13 * max_abs(s.y));
}

TEST_CASE("resampling rejects aliasing and fractional lengths") {
  const DualPolSignal s = band_limited(64, 4.0, 1.0, 5);
  CHECK_THROWS_AS(resample(s, 1.0, 2.0), ConfigError);
  CHECK_THROWS_AS(resampled_length(64, 4.0, 3.3), ConfigError);
  CHECK(resampled_length(64, 4.0, 2.0) == 32);
}

TEST_CASE("dispersion is all-pass and inverted by the opposite distance") {
  const DualPolSignal s = band_limited(512, 100e9, 40e9, 6);
  const double beta2 = -2.168e-26;
  const auto fwd = SpectralFilter::dispersion(beta2, 80e3);
  const auto bwd = SpectralFilter::dispersion(beta2, -80e3);
  CHECK(fwd.all_pass());
  const DualPolSignal d = apply_spectral_filter(s, fwd);
  CHECK(d.energy() == doctest::Approx(s.energy()).epsilon(1e-12));
  const DualPolSignal r = apply_spectral_filter(d, bwd);
  CHECK(max_diff(r.x, s.x) < 1e-12 * max_abs(s.x));
}

TEST_CASE("delay by a whole number of samples is a circular shift") {
  const std::size_t n = 64;
  const double fs = 8.0;
  DualPolSignal s(n, fs);
  s.x[5] = 1.0;
  s.y[0] = cplx(0.0, 2.0);
  const DualPolSignal d = apply_spectral_filter(s, SpectralFilter::delay(3.0 / fs));
  CHECK(std::abs(d.x[8] - 1.0) < 1e-14);
  CHECK(std::abs(d.y[3] - cplx(0.0, 2.0)) < 1e-14);
  CHECK(std::abs(d.x[5]) < 1e-14);
}

TEST_CASE("brick-wall passes [-bw/2, bw/2)") {
  const CVec h = SpectralFilter::brickwall(4.0).response(8, 8.0);
  // bins: 0 1 2 3 -4 -3 -2 -1
  const double expect[] = {1, 1, 0, 0, 0, 0, 1, 1};
  for (std::size_t k = 0; k < 8; ++k) CHECK(h[k].real() == expect[k]);
  CHECK_FALSE(SpectralFilter::brickwall(4.0).all_pass());
}

TEST_CASE("root-raised-cosine squared satisfies the Nyquist fold") {
  const double rs = 1.0, rho = 0.1;
  const std::size_t n = 800;
  const double fs = 4.0;
  const CVec h = SpectralFilter::root_raised_cosine(rs, rho).response(n, fs);
  const std::size_t per_rs = n / 4;
  for (std::size_t k = 0; k < per_rs; ++k) {
    double fold = 0.0;
    for (std::size_t j = k; j < n; j += per_rs) fold += std::norm(h[j]);
    CHECK(fold == doctest::Approx(1.0).epsilon(1e-12));
  }
}

TEST_CASE("frequency shift moves content and is undone by the opposite shift") {
  const std::size_t n = 100;
  DualPolSignal s(n, 100.0, 0.0);
  for (auto& v : s.x) v = 1.0;
  const DualPolSignal sh = frequency_shift(s, 7.0);
  CHECK(sh.center_offset == -7.0);
  const CVec spec = fft::forward(sh.x);
  CHECK(std::abs(spec[7] - 100.0) < 1e-11);
  CHECK(std::abs(spec[0]) < 1e-11);
  const DualPolSignal b = band_limited(n, 100.0, 20.0, 7);
  const DualPolSignal rt = frequency_shift(frequency_shift(b, 13.0), -13.0);
  CHECK(max_diff(rt.x, b.x) < 1e-13 * max_abs(b.x));
  CHECK(rt.center_offset == b.center_offset);
}

TEST_CASE("mismatched polarizations are rejected") {
  DualPolSignal s(4, 1.0);
  s.y.resize(3);
  CHECK_THROWS_AS(s.validate(), ConfigError);
  CHECK_THROWS_AS(apply_spectral_filter(s, SpectralFilter::delay(0.0)), ConfigError);
}
