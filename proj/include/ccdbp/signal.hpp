#pragma once

#include <cstddef>
#include <vector>

#include "ccdbp/aligned_vector.hpp"

namespace ccdbp {

/// Two polarization components sampled on a common grid.
///
/// `center_offset` is the frequency (Hz) that baseband 0 Hz of this
/// representation corresponds to, measured from the simulation reference
/// (the center of the superchannel of interest).
struct DualPolSignal {
  CVec x;
  CVec y;
  double sample_rate = 0.0;
  double center_offset = 0.0;

  DualPolSignal() = default;
  DualPolSignal(std::size_t n, double rate, double offset = 0.0)
      : x(n), y(n), sample_rate(rate), center_offset(offset) {}

  std::size_t size() const { return x.size(); }
  /// Sum of |x|^2 + |y|^2 over all samples.
  double energy() const;
  /// Mean of |x|^2 + |y|^2 per sample (W for physical fields).
  double mean_power() const;
  /// Throws ConfigError when the polarizations differ in length or the rate is not positive.
  void validate() const;
};

struct WdmSignal {
  std::vector<DualPolSignal> channels;
  double grid_spacing = 0.0;
  double symbol_rate = 0.0;
};

/// Frequency (Hz) of bin k on an n-point grid at rate fs. Bins at or above
/// n/2 map to negative frequencies, so an even grid's Nyquist bin is -fs/2.
double bin_frequency(std::size_t k, std::size_t n, double fs);

/// Frequency response on the FFT grid of a signal.
///
/// A filter is a cascade of parametric factors, optionally times an explicit
/// sampled response. Dispersion is the only factor that depends on absolute
/// frequency; it is evaluated at f + center_offset of the signal it is
/// applied to.
class SpectralFilter {
 public:
  /// Explicit response; must match the length of the signal it is applied to.
  static SpectralFilter sampled(CVec response);
  /// Unit gain on [-bandwidth/2, bandwidth/2), zero elsewhere.
  static SpectralFilter brickwall(double bandwidth);
  /// Square root of a raised-cosine spectrum with unit passband gain.
  static SpectralFilter root_raised_cosine(double symbol_rate, double rolloff);
  /// exp(j * beta2/2 * w^2 * distance) with w = 2*pi*(f + center_offset).
  /// beta2 in s^2/m, distance in m. Positive distance propagates forward.
  static SpectralFilter dispersion(double beta2, double distance);
  /// exp(-j * 2*pi * f * tau): delays the signal by tau seconds.
  static SpectralFilter delay(double tau);

  SpectralFilter operator*(const SpectralFilter& other) const;

  CVec response(std::size_t n, double fs, double center_offset = 0.0) const;
  /// True when every factor has unit magnitude at every frequency.
  bool all_pass() const;

 private:
  enum class Kind { brickwall, rrc, dispersion, delay };
  struct Factor {
    Kind kind;
    double a;
    double b;
  };
  std::vector<Factor> factors_;
  CVec sampled_;
  bool has_sampled_ = false;
  bool sampled_all_pass_ = false;
};

/// Multiplies every sample by exp(j*2*pi*df*k/sample_rate); center_offset decreases by df.
DualPolSignal frequency_shift(const DualPolSignal& sig, double df);

/// Circular filtering of both polarizations by the response of `f`.
DualPolSignal apply_spectral_filter(const DualPolSignal& sig, const SpectralFilter& f);

/// Band-limited rate change by zero-padding or truncating the spectrum.
///
/// `occupied_bandwidth` is the two-sided width of the content; it must fit
/// within both rates. The new length (size * new_rate / sample_rate) must be
/// an integer.
DualPolSignal resample(const DualPolSignal& sig, double new_rate, double occupied_bandwidth);

/// Length of `n` samples at `from_rate` after resampling to `to_rate`;
/// throws ConfigError when that is not an integer.
std::size_t resampled_length(std::size_t n, double from_rate, double to_rate);

}  // namespace ccdbp
