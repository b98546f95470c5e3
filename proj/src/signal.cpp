#include "ccdbp/signal.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <string>

#include "ccdbp/errors.hpp"
#include "ccdbp/fft.hpp"
#include "ccdbp/kernels.hpp"

namespace ccdbp {

double DualPolSignal::energy() const {
  double e = 0.0;
  for (std::size_t k = 0; k < x.size(); ++k) e += std::norm(x[k]) + std::norm(y[k]);
  return e;
}

double DualPolSignal::mean_power() const {
  return x.empty() ? 0.0 : energy() / static_cast<double>(x.size());
}

void DualPolSignal::validate() const {
  if (x.size() != y.size())
    throw ConfigError("polarization lengths differ: " + std::to_string(x.size()) + " vs " +
                      std::to_string(y.size()));
  if (!(sample_rate > 0.0)) throw ConfigError("sample rate must be positive");
}

double bin_frequency(std::size_t k, std::size_t n, double fs) {
  const auto ki = static_cast<double>(k);
  const auto ni = static_cast<double>(n);
  return (2 * k < n ? ki : ki - ni) * fs / ni;
}

SpectralFilter SpectralFilter::sampled(CVec response) {
  SpectralFilter f;
  f.sampled_all_pass_ = std::all_of(response.begin(), response.end(),
                                    [](cplx v) { return std::abs(std::abs(v) - 1.0) < 1e-14; });
  f.sampled_ = std::move(response);
  f.has_sampled_ = true;
  return f;
}

SpectralFilter SpectralFilter::brickwall(double bandwidth) {
  if (!(bandwidth > 0.0)) throw ConfigError("brick-wall bandwidth must be positive");
  SpectralFilter f;
  f.factors_.push_back({Kind::brickwall, bandwidth, 0.0});
  return f;
}

SpectralFilter SpectralFilter::root_raised_cosine(double symbol_rate, double rolloff) {
  if (!(symbol_rate > 0.0)) throw ConfigError("symbol rate must be positive");
  if (rolloff < 0.0 || rolloff > 1.0) throw ConfigError("roll-off must lie in [0, 1]");
  SpectralFilter f;
  f.factors_.push_back({Kind::rrc, symbol_rate, rolloff});
  return f;
}

SpectralFilter SpectralFilter::dispersion(double beta2, double distance) {
  SpectralFilter f;
  f.factors_.push_back({Kind::dispersion, beta2, distance});
  return f;
}

SpectralFilter SpectralFilter::delay(double tau) {
  SpectralFilter f;
  f.factors_.push_back({Kind::delay, tau, 0.0});
  return f;
}

SpectralFilter SpectralFilter::operator*(const SpectralFilter& other) const {
  SpectralFilter out = *this;
  out.factors_.insert(out.factors_.end(), other.factors_.begin(), other.factors_.end());
  if (other.has_sampled_) {
    if (out.has_sampled_) {
      if (out.sampled_.size() != other.sampled_.size())
        throw ConfigError("cannot cascade sampled responses of different lengths");
      for (std::size_t k = 0; k < out.sampled_.size(); ++k) out.sampled_[k] *= other.sampled_[k];
      out.sampled_all_pass_ = out.sampled_all_pass_ && other.sampled_all_pass_;
    } else {
      out.sampled_ = other.sampled_;
      out.has_sampled_ = true;
      out.sampled_all_pass_ = other.sampled_all_pass_;
    }
  }
  return out;
}

bool SpectralFilter::all_pass() const {
  if (has_sampled_ && !sampled_all_pass_) return false;
  return std::all_of(factors_.begin(), factors_.end(), [](const Factor& f) {
    return f.kind == Kind::dispersion || f.kind == Kind::delay;
  });
}

namespace {

double raised_cosine(double f, double symbol_rate, double rolloff) {
  const double af = std::abs(f);
  const double lo = (1.0 - rolloff) * symbol_rate / 2.0;
  const double hi = (1.0 + rolloff) * symbol_rate / 2.0;
  if (af <= lo) return 1.0;
  if (af >= hi) return 0.0;
  return 0.5 * (1.0 + std::cos(std::numbers::pi / (rolloff * symbol_rate) * (af - lo)));
}

}  // namespace

CVec SpectralFilter::response(std::size_t n, double fs, double center_offset) const {
  CVec h;
  if (has_sampled_) {
    if (sampled_.size() != n)
      throw ConfigError("filter response has " + std::to_string(sampled_.size()) +
                        " bins, signal grid has " + std::to_string(n));
    h = sampled_;
  } else {
    h.assign(n, cplx(1.0, 0.0));
  }
  constexpr double two_pi = 2.0 * std::numbers::pi;
  for (const Factor& fac : factors_) {
    for (std::size_t k = 0; k < n; ++k) {
      const double f = bin_frequency(k, n, fs);
      switch (fac.kind) {
        case Kind::brickwall:
          if (!(f >= -fac.a / 2.0 && f < fac.a / 2.0)) h[k] = 0.0;
          break;
        case Kind::rrc:
          h[k] *= std::sqrt(raised_cosine(f, fac.a, fac.b));
          break;
        case Kind::dispersion: {
          const double w = two_pi * (f + center_offset);
          h[k] *= std::polar(1.0, 0.5 * fac.a * w * w * fac.b);
          break;
        }
        case Kind::delay:
          h[k] *= std::polar(1.0, -two_pi * f * fac.a);
          break;
      }
    }
  }
  return h;
}

DualPolSignal frequency_shift(const DualPolSignal& sig, double df) {
  sig.validate();
  DualPolSignal out = sig;
  out.center_offset = sig.center_offset - df;
  if (df == 0.0) return out;
  const double cycles_per_sample = df / sig.sample_rate;
  CVec rot(sig.size());
  for (std::size_t k = 0; k < sig.size(); ++k) {
    const double c = cycles_per_sample * static_cast<double>(k);
    rot[k] = std::polar(1.0, 2.0 * std::numbers::pi * (c - std::round(c)));
  }
  const auto& kt = kernels::active();
  kt.cmul(out.x.data(), rot.data(), out.size());
  kt.cmul(out.y.data(), rot.data(), out.size());
  return out;
}

DualPolSignal apply_spectral_filter(const DualPolSignal& sig, const SpectralFilter& f) {
  sig.validate();
  const std::size_t n = sig.size();
  CVec h = f.response(n, sig.sample_rate, sig.center_offset);
  const double inv_n = 1.0 / static_cast<double>(n);
  for (auto& v : h) v *= inv_n;

  DualPolSignal out(n, sig.sample_rate, sig.center_offset);
  const auto& kt = kernels::active();
  for (auto [in, dst] : {std::pair{&sig.x, &out.x}, std::pair{&sig.y, &out.y}}) {
    CVec spec(n);
    fft::forward(*in, spec);
    kt.cmul(spec.data(), h.data(), n);
    fft::inverse(spec, *dst);
  }
  return out;
}

std::size_t resampled_length(std::size_t n, double from_rate, double to_rate) {
  const double exact = static_cast<double>(n) * to_rate / from_rate;
  const double rounded = std::round(exact);
  if (std::abs(exact - rounded) > 1e-6 * std::max(1.0, exact) || rounded < 1.0)
    throw ConfigError("resampling " + std::to_string(n) + " samples from " +
                      std::to_string(from_rate) + " to " + std::to_string(to_rate) +
                      " Hz does not give an integer length");
  return static_cast<std::size_t>(rounded);
}

DualPolSignal resample(const DualPolSignal& sig, double new_rate, double occupied_bandwidth) {
  sig.validate();
  if (!(new_rate > 0.0)) throw ConfigError("target sample rate must be positive");
  if (occupied_bandwidth > new_rate * (1.0 + 1e-12))
    throw ConfigError("target rate " + std::to_string(new_rate) +
                      " Hz would alias content of bandwidth " +
                      std::to_string(occupied_bandwidth) + " Hz");
  if (new_rate == sig.sample_rate) return sig;

  const std::size_t n_in = sig.size();
  const std::size_t n_out = resampled_length(n_in, sig.sample_rate, new_rate);
  // Both grids share the bin spacing fs/n, so bin k of one maps to bin k of
  // the other for non-negative frequencies and to n - k for negative ones.
  const std::size_t n_min = std::min(n_in, n_out);
  const std::size_t pos = (n_min + 1) / 2;  // bins 0 .. pos-1 are positive
  const std::size_t neg = n_min / 2;       // bins carrying strictly negative frequencies
  const std::size_t neg_keep = (n_min % 2 == 0) ? neg - (neg > 0 ? 1 : 0) : neg;
  const double scale = 1.0 / static_cast<double>(n_in);

  DualPolSignal out(n_out, new_rate, sig.center_offset);
  for (auto [in, dst] : {std::pair{&sig.x, &out.x}, std::pair{&sig.y, &out.y}}) {
    CVec spec(n_in);
    fft::forward(*in, spec);
    CVec mapped(n_out, cplx(0.0, 0.0));
    for (std::size_t k = 0; k < pos; ++k) mapped[k] = spec[k] * scale;
    // Negative frequencies; an even-length smaller grid drops its Nyquist bin.
    for (std::size_t k = 1; k <= neg_keep; ++k) mapped[n_out - k] = spec[n_in - k] * scale;
    fft::inverse(mapped, *dst);
  }
  return out;
}

}  // namespace ccdbp
