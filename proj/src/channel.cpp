#include "ccdbp/channel.hpp"

#include <cmath>
#include <numbers>
#include <string>

#include "ccdbp/errors.hpp"
#include "ccdbp/fft.hpp"
#include "ccdbp/kernels.hpp"

namespace ccdbp {

void FiberSpan::validate() const {
  if (!(length_km > 0.0)) throw ConfigError("span length must be positive");
  if (alpha_db_km < 0.0) throw ConfigError("attenuation must be non-negative");
  if (gamma_per_w_km < 0.0) throw ConfigError("nonlinear coefficient must be non-negative");
}

double FiberSpan::beta2(double wavelength) const {
  const double d_si = dispersion_ps_nm_km * 1e-6;  // ps/(nm km) -> s/m^2
  return -d_si * wavelength * wavelength / (2.0 * std::numbers::pi * kSpeedOfLight);
}

double FiberSpan::alpha() const { return alpha_db_km * 1e-3 * std::log(10.0) / 10.0; }

double FiberSpan::effective_length(double z0, double z1) const {
  const double a = alpha();
  if (a == 0.0) return z1 - z0;
  return (std::exp(-a * z0) - std::exp(-a * z1)) / a;
}

double AmpConfig::ase_psd() const {
  const double g = std::pow(10.0, gain_db / 10.0);
  const double nf = std::pow(10.0, noise_figure_db / 10.0);
  if (g <= 1.0) return 0.0;
  const double n_sp = nf * g / (2.0 * (g - 1.0));
  return (g - 1.0) * n_sp * kPlanck * frequency;
}

Link Link::uniform(int count, const FiberSpan& fiber, double noise_figure_db, bool noise) {
  Link link;
  for (int i = 0; i < count; ++i)
    link.spans.push_back({fiber, AmpConfig{fiber.loss_db(), noise_figure_db, noise}});
  return link;
}

void Link::validate() const {
  for (const auto& s : spans) {
    s.fiber.validate();
    if (s.amp.gain_db < 0.0) throw ConfigError("amplifier gain must be >= 0 dB");
  }
}

double Link::total_length() const {
  double z = 0.0;
  for (const auto& s : spans) z += s.fiber.length();
  return z;
}

std::vector<double> StepPlan::boundaries(const FiberSpan& fiber) const {
  if (steps_per_span < 1) throw ConfigError("steps_per_span must be >= 1");
  const int m = steps_per_span;
  const double length = fiber.length();
  const double a = fiber.alpha();
  std::vector<double> z(static_cast<std::size_t>(m) + 1);
  for (int k = 0; k <= m; ++k) {
    const double frac = static_cast<double>(k) / m;
    if (spacing == Spacing::uniform || a == 0.0) {
      z[k] = frac * length;
    } else {
      z[k] = -std::log(1.0 - frac * (1.0 - std::exp(-a * length))) / a;
    }
  }
  z.back() = length;
  return z;
}

DualPolSignal propagate_span(const DualPolSignal& sig, const FiberSpan& fiber,
                             const StepPlan& plan, double wavelength) {
  sig.validate();
  fiber.validate();
  const std::size_t n = sig.size();
  const std::vector<double> z = plan.boundaries(fiber);
  const double beta2 = fiber.beta2(wavelength);
  const double alpha = fiber.alpha();
  const double gamma_eff = kManakovFactor * fiber.gamma();
  const auto& kt = kernels::active();

  RVec w2(n);
  for (std::size_t k = 0; k < n; ++k) {
    const double w = 2.0 * std::numbers::pi * (bin_frequency(k, n, sig.sample_rate) + sig.center_offset);
    w2[k] = w * w;
  }
  const double inv_n = 1.0 / static_cast<double>(n);

  DualPolSignal out = sig;
  CVec fx(n), fy(n);
  RVec power(n);
  fft::forward(out.x, fx);
  fft::forward(out.y, fy);
  double pending = 0.5 * (z[1] - z[0]);
  const std::size_t steps = z.size() - 1;
  for (std::size_t s = 0; s < steps; ++s) {
    const double dz = z[s + 1] - z[s];
    kt.rotate2(fx.data(), fy.data(), w2.data(), 0.5 * beta2 * pending, inv_n, n);
    fft::inverse(fx, out.x);
    fft::inverse(fy, out.y);
    kt.intensity2(out.x.data(), out.y.data(), power.data(), n);
    // The field already carries the loss up to z[s].
    const double leff = fiber.effective_length(0.0, dz);
    kt.rotate2(out.x.data(), out.y.data(), power.data(), gamma_eff * leff,
               std::exp(-0.5 * alpha * dz), n);
    fft::forward(out.x, fx);
    fft::forward(out.y, fy);
    pending = 0.5 * dz + (s + 1 < steps ? 0.5 * (z[s + 2] - z[s + 1]) : 0.0);
  }
  kt.rotate2(fx.data(), fy.data(), w2.data(), 0.5 * beta2 * pending, inv_n, n);
  fft::inverse(fx, out.x);
  fft::inverse(fy, out.y);
  return out;
}

DualPolSignal amplify_with_ase(const DualPolSignal& sig, const AmpConfig& amp,
                               std::mt19937_64& rng) {
  sig.validate();
  if (amp.gain_db < 0.0) throw ConfigError("amplifier gain must be >= 0 dB");
  const double g = std::sqrt(std::pow(10.0, amp.gain_db / 10.0));
  DualPolSignal out = sig;
  for (auto& v : out.x) v *= g;
  for (auto& v : out.y) v *= g;
  if (!amp.noise) return out;
  const double variance = amp.ase_psd() * sig.sample_rate;
  std::normal_distribution<double> nd(0.0, std::sqrt(variance / 2.0));
  for (auto* pol : {&out.x, &out.y}) {
    for (auto& v : *pol) {
      const double re = nd(rng);
      const double im = nd(rng);
      v += cplx(re, im);
    }
  }
  return out;
}

DualPolSignal propagate_link(const DualPolSignal& sig, const Link& link, const StepPlan& plan,
                             std::mt19937_64& rng) {
  link.validate();
  DualPolSignal cur = sig;
  for (const auto& seg : link.spans) {
    cur = propagate_span(cur, seg.fiber, plan, link.reference_wavelength);
    cur = amplify_with_ase(cur, seg.amp, rng);
  }
  return cur;
}

}  // namespace ccdbp
