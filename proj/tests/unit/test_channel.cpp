#include <doctest.h>

#include <cmath>
#include <numbers>
#include <random>

#include "ccdbp/channel.hpp"
#include "ccdbp/errors.hpp"
#include "ccdbp/fft.hpp"
#include "ccdbp/txrx.hpp"

using namespace ccdbp;

namespace {

DualPolSignal random_field(std::size_t n, double fs, std::uint64_t seed, double power) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> nd(0.0, std::sqrt(power / 4.0));
  DualPolSignal s(n, fs);
  for (auto* pol : {&s.x, &s.y})
    for (auto& v : *pol) v = cplx(nd(rng), nd(rng));
  return s;
}

}  // namespace

TEST_CASE("beta2 of standard fiber") {
  FiberSpan f;
  CHECK(f.beta2(1550e-9) == doctest::Approx(-2.1683e-26).epsilon(1e-4));
  CHECK(f.alpha() == doctest::Approx(4.6052e-5).epsilon(1e-4));
}

TEST_CASE("ASE density for 16 dB gain and 5 dB noise figure") {
  const AmpConfig amp{16.0, 5.0, true};
  CHECK(amp.ase_psd() == doctest::Approx(8.07e-18).epsilon(2e-3));
}

TEST_CASE("logarithmic steps carry equal effective length") {
  FiberSpan f;
  StepPlan plan;
  const auto z = plan.boundaries(f);
  REQUIRE(z.size() == 101);
  const double first = f.effective_length(z[0], z[1]);
  for (std::size_t k = 1; k + 1 < z.size(); ++k)
    CHECK(f.effective_length(z[k], z[k + 1]) == doctest::Approx(first).epsilon(1e-9));
  CHECK(z[1] - z[0] < z[100] - z[99]);
}

TEST_CASE("lossy linear span attenuates by the span loss") {
  FiberSpan f;
  f.gamma_per_w_km = 0.0;
  f.dispersion_ps_nm_km = 0.0;
  const DualPolSignal s = random_field(256, 1e11, 1, 1e-3);
  const DualPolSignal out = propagate_span(s, f, StepPlan{});
  CHECK(10.0 * std::log10(out.mean_power() / s.mean_power()) == doctest::Approx(-16.0).epsilon(1e-9));
}

TEST_CASE("dispersion-free lossless span applies the full Kerr phase") {
  FiberSpan f;
  f.dispersion_ps_nm_km = 0.0;
  f.alpha_db_km = 0.0;
  const DualPolSignal s = random_field(64, 1e11, 2, 1e-2);
  const DualPolSignal out = propagate_span(s, f, StepPlan{10, StepPlan::Spacing::uniform});
  for (std::size_t k = 0; k < s.size(); ++k) {
    const double p = std::norm(s.x[k]) + std::norm(s.y[k]);
    const cplx rot = std::polar(1.0, kManakovFactor * f.gamma() * p * f.length());
    CHECK(std::abs(out.x[k] - s.x[k] * rot) < 1e-12 * std::abs(s.x[k]) + 1e-18);
    CHECK(std::abs(out.y[k] - s.y[k] * rot) < 1e-12 * std::abs(s.y[k]) + 1e-18);
  }
}

TEST_CASE("dispersion-free lossy span applies the effective-length Kerr phase") {
  FiberSpan f;
  f.dispersion_ps_nm_km = 0.0;
  const DualPolSignal s = random_field(64, 1e11, 4, 1e-2);
  const double leff = -std::expm1(-f.alpha() * f.length()) / f.alpha();
  for (int steps : {1, 7, 100}) {
    const DualPolSignal out = propagate_span(s, f, StepPlan{steps});
    const double loss = std::exp(-0.5 * f.alpha() * f.length());
    for (std::size_t k = 0; k < s.size(); ++k) {
      const double p = std::norm(s.x[k]) + std::norm(s.y[k]);
      const cplx rot = loss * std::polar(1.0, kManakovFactor * f.gamma() * p * leff);
      CHECK(std::abs(out.x[k] - s.x[k] * rot) < 1e-12 * std::abs(s.x[k] * loss) + 1e-18);
    }
  }
}

TEST_CASE("linear span equals the dispersion filter times the loss") {
  FiberSpan f;
  f.gamma_per_w_km = 0.0;
  DualPolSignal s = random_field(512, 6.667e11, 3, 1e-3);
  s.center_offset = 75e9;
  const DualPolSignal out = propagate_span(s, f, StepPlan{});
  DualPolSignal ref = apply_spectral_filter(s, SpectralFilter::dispersion(f.beta2(1550e-9), f.length()));
  const double loss = std::exp(-0.5 * f.alpha() * f.length());
  double worst = 0.0, peak = 0.0;
  for (std::size_t k = 0; k < s.size(); ++k) {
    worst = std::max(worst, std::abs(out.x[k] - ref.x[k] * loss));
    peak = std::max(peak, std::abs(ref.x[k] * loss));
  }
  CHECK(worst < 1e-11 * peak);
}

TEST_CASE("noiseless amplifier restores the launch power") {
  FiberSpan f;
  const Link link = Link::uniform(3, f, 5.0, false);
  const DualPolSignal s = random_field(256, 1e11, 4, 1e-3);
  std::mt19937_64 rng(1);
  FiberSpan lin = f;
  lin.gamma_per_w_km = 0.0;
  const Link lin_link = Link::uniform(3, lin, 5.0, false);
  const DualPolSignal out = propagate_link(s, lin_link, StepPlan{}, rng);
  CHECK(out.mean_power() == doctest::Approx(s.mean_power()).epsilon(1e-10));
  CHECK(link.total_length() == doctest::Approx(240e3));
}

TEST_CASE("ASE variance per sample matches the density") {
  const AmpConfig amp{16.0, 5.0, true};
  DualPolSignal s(200000, 1e11);
  std::mt19937_64 rng(5);
  const DualPolSignal out = amplify_with_ase(s, amp, rng);
  const double var = out.mean_power() / 2.0;
  CHECK(var == doctest::Approx(amp.ase_psd() * 1e11).epsilon(0.01));
  std::mt19937_64 rng2(5);
  CHECK(amplify_with_ase(s, amp, rng2).x == out.x);
}

TEST_CASE("walk-off between adjacent channels over one span") {
  FiberSpan f;
  const double tau = -f.beta2(1550e-9) * 2.0 * std::numbers::pi * 75e9 * f.length();
  CHECK(tau * 1e12 == doctest::Approx(817.0).epsilon(2e-3));
}

TEST_CASE("invalid spans are rejected") {
  FiberSpan f;
  f.length_km = 0.0;
  CHECK_THROWS_AS(f.validate(), ConfigError);
  AmpConfig amp;
  amp.gain_db = -1.0;
  std::mt19937_64 rng;
  CHECK_THROWS_AS(amplify_with_ase(DualPolSignal(4, 1.0), amp, rng), ConfigError);
}
