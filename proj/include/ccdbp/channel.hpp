#pragma once

#include <cstdint>
#include <random>
#include <vector>

#include "ccdbp/signal.hpp"

namespace ccdbp {

inline constexpr double kSpeedOfLight = 299792458.0;
inline constexpr double kPlanck = 6.62607015e-34;
/// Manakov averaging of the Kerr term over random birefringence.
inline constexpr double kManakovFactor = 8.0 / 9.0;

/// Single-mode fiber span. Parameters use the customary engineering units;
/// the accessors return SI values.
struct FiberSpan {
  double length_km = 80.0;
  double dispersion_ps_nm_km = 17.0;
  double alpha_db_km = 0.2;
  double gamma_per_w_km = 1.3;

  void validate() const;
  double length() const { return length_km * 1e3; }
  /// beta2 = -D * lambda^2 / (2*pi*c), in s^2/m.
  double beta2(double wavelength) const;
  /// Power attenuation coefficient in 1/m.
  double alpha() const;
  /// Nonlinear coefficient in 1/(W m).
  double gamma() const { return gamma_per_w_km * 1e-3; }
  /// Integral of exp(-alpha z) over [z0, z1] (m), both inside the span.
  double effective_length(double z0, double z1) const;
  /// Span loss in dB.
  double loss_db() const { return alpha_db_km * length_km; }
};

/// Lumped amplifier. `noise` false gives a noiseless gain stage.
struct AmpConfig {
  double gain_db = 16.0;
  double noise_figure_db = 5.0;
  bool noise = true;
  double frequency = 193.41e12;

  /// Single-sided ASE PSD per polarization, (G-1) * n_sp * h * nu, in W/Hz,
  /// with n_sp = NF * G / (2 (G - 1)).
  double ase_psd() const;
};

struct LinkSegment {
  FiberSpan fiber;
  AmpConfig amp;
};

struct Link {
  std::vector<LinkSegment> spans;
  double reference_wavelength = 1550e-9;

  /// `count` identical spans, each followed by an amplifier whose gain equals the span loss.
  static Link uniform(int count, const FiberSpan& fiber, double noise_figure_db, bool noise);
  void validate() const;
  double total_length() const;
};

/// Step placement inside each span for the forward model.
struct StepPlan {
  enum class Spacing { uniform, logarithmic };
  int steps_per_span = 100;
  /// logarithmic: every step carries the same effective length.
  Spacing spacing = Spacing::logarithmic;

  /// Step boundaries from 0 to the span length, in m.
  std::vector<double> boundaries(const FiberSpan& fiber) const;
};

/// Symmetric split-step integration of the Manakov equation over one span.
///
/// Per step of length dz: half-step dispersion exp(j beta2/2 w^2 dz/2), the
/// phase (8/9) gamma L_eff(dz) (|x|^2 + |y|^2) on both polarizations,
/// amplitude decay exp(-alpha dz / 2), and the second half-step dispersion.
/// Adjacent half-steps are merged. w is the absolute angular frequency
/// 2*pi*(f + center_offset).
DualPolSignal propagate_span(const DualPolSignal& sig, const FiberSpan& fiber,
                             const StepPlan& plan, double wavelength = 1550e-9);

/// Amplitude gain sqrt(G) plus circular white Gaussian ASE of variance
/// ase_psd() * sample_rate per sample and polarization.
DualPolSignal amplify_with_ase(const DualPolSignal& sig, const AmpConfig& amp,
                               std::mt19937_64& rng);

DualPolSignal propagate_link(const DualPolSignal& sig, const Link& link, const StepPlan& plan,
                             std::mt19937_64& rng);

}  // namespace ccdbp
