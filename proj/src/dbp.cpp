#include "ccdbp/dbp.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <numbers>
#include <string>

#include "ccdbp/errors.hpp"
#include "ccdbp/fft.hpp"
#include "ccdbp/kernels.hpp"

namespace ccdbp {

namespace {

constexpr std::array<std::pair<Method, std::string_view>, 8> kMethodNames{{
    {Method::gvd_only, "GVD_ONLY"},
    {Method::ssfm, "SSFM"},
    {Method::ossfm, "OSSFM"},
    {Method::essfm, "ESSFM"},
    {Method::cc_essfm, "CC_ESSFM"},
    {Method::ff_ssfm, "FF_SSFM"},
    {Method::ff_ossfm, "FF_OSSFM"},
    {Method::ff_essfm, "FF_ESSFM"},
}};

constexpr long double kTwoPiL = 6.283185307179586476925286766559005768L;

long signed_bin(std::size_t k, std::size_t n) {
  return 2 * k < n ? static_cast<long>(k) : static_cast<long>(k) - static_cast<long>(n);
}

std::size_t wrap(long k, std::size_t n) {
  const long ni = static_cast<long>(n);
  return static_cast<std::size_t>(((k % ni) + ni) % ni);
}

// exp(j/2 * w^2 * dispersion) / scale on an n-point grid, w = 2*pi*(f + offset).
CVec dispersion_response(std::size_t n, double fs, double offset, long double dispersion,
                         double scale) {
  CVec h(n);
  const long double df = static_cast<long double>(fs) / static_cast<long double>(n);
  for (std::size_t k = 0; k < n; ++k) {
    const long double f = static_cast<long double>(signed_bin(k, n)) * df + offset;
    const long double w = kTwoPiL * f;
    long double ph = 0.5L * w * w * dispersion;
    ph = std::fmod(ph, kTwoPiL);
    h[k] = std::polar(1.0 / scale, static_cast<double>(ph));
  }
  return h;
}

// Circular extension: out[t] = in[(t - pad) mod n] for t in [0, n + 2 pad).
void extend(const double* in, std::size_t n, std::size_t pad, RVec& out) {
  out.resize(n + 2 * pad);
  for (std::size_t t = 0; t < out.size(); ++t)
    out[t] = in[wrap(static_cast<long>(t) - static_cast<long>(pad), n)];
}

}  // namespace

std::string_view method_name(Method m) {
  for (const auto& [method, name] : kMethodNames)
    if (method == m) return name;
  return "UNKNOWN";
}

Method parse_method(std::string_view name) {
  for (const auto& [method, text] : kMethodNames)
    if (text == name) return method;
  throw ConfigError("unknown DBP method '" + std::string(name) + "'");
}

bool is_full_field(Method m) {
  return m == Method::ff_ssfm || m == Method::ff_ossfm || m == Method::ff_essfm;
}

bool uses_coefficients(Method m) {
  return m == Method::essfm || m == Method::cc_essfm || m == Method::ff_essfm;
}

bool uses_nl_scale(Method m) { return m == Method::ossfm || m == Method::ff_ossfm; }

CoefficientSet::CoefficientSet(int n_channels, int nc0, int nc)
    : n_ch_(n_channels), nc0_(nc0), nc_(nc) {
  if (n_channels < 1) throw ConfigError("coefficient set needs at least one channel");
  if (nc0 < 0 || nc < 0) throw ConfigError("coefficient half-lengths must be non-negative");
  free_.resize(static_cast<std::size_t>(n_channels));
  free_[0].assign(static_cast<std::size_t>(nc0) + 1, 0.0);
  for (int h = 1; h < n_channels; ++h) free_[h].assign(2 * static_cast<std::size_t>(nc) + 1, 0.0);
}

CoefficientSet CoefficientSet::impulse(int n_channels, int nc0, int nc) {
  CoefficientSet c(n_channels, nc0, nc);
  c.free_[0][0] = 1.0;
  return c;
}

double CoefficientSet::at(int h, int m) const {
  if (std::abs(h) >= n_ch_) return 0.0;
  if (h == 0) return std::abs(m) > nc0_ ? 0.0 : free_[0][std::abs(m)];
  if (std::abs(m) > nc_) return 0.0;
  return h > 0 ? free_[h][m + nc_] : free_[-h][nc_ - m];
}

std::vector<double> CoefficientSet::taps(int h) const {
  const int half = half_length(h);
  std::vector<double> t;
  t.reserve(2 * static_cast<std::size_t>(half) + 1);
  for (int m = -half; m <= half; ++m) t.push_back(at(h, m));
  return t;
}

bool CoefficientSet::is_zero(int h) const {
  if (std::abs(h) >= n_ch_) return true;
  const auto& b = free_[std::abs(h)];
  return std::all_of(b.begin(), b.end(), [](double v) { return v == 0.0; });
}

std::span<double> CoefficientSet::block(int h) {
  if (h < 0 || h >= n_ch_) throw ConfigError("coefficient block " + std::to_string(h) + " out of range");
  return free_[h];
}

std::span<const double> CoefficientSet::block(int h) const {
  if (h < 0 || h >= n_ch_) throw ConfigError("coefficient block " + std::to_string(h) + " out of range");
  return free_[h];
}

std::size_t CoefficientSet::free_count() const {
  std::size_t n = 0;
  for (const auto& b : free_) n += b.size();
  return n;
}

void BlockPlan::validate() const {
  if (fft_size < 2 || (fft_size & (fft_size - 1)) != 0)
    throw ConfigError("block FFT size must be a power of two");
  if (!(Rational(1) < eta)) throw ConfigError("eta must exceed 1");
  const Rational kept_r = Rational(static_cast<std::int64_t>(fft_size)) / eta;
  if (!kept_r.is_integer()) throw ConfigError("N / eta must be an integer");
}

std::size_t BlockPlan::kept() const {
  return static_cast<std::size_t>((Rational(static_cast<std::int64_t>(fft_size)) / eta).num());
}

void DbpConfig::validate() const {
  if (n_steps < 1) throw ConfigError("N_s must be >= 1");
  if (!(Rational(0) < samples_per_symbol)) throw ConfigError("samples per symbol must be positive");
  if (!std::isfinite(nl_scale)) throw ConfigError("nonlinear scale must be finite");
  if (!(gamma_factor >= 0.0)) throw ConfigError("gamma factor must be non-negative");
  block.validate();
}

std::vector<DbpStep> plan_dbp_steps(const Link& link, int n_steps, double gamma_factor,
                                    NlPosition position) {
  if (n_steps < 1) throw ConfigError("N_s must be >= 1");
  link.validate();
  const double total = link.total_length();
  if (!(total > 0.0)) throw ConfigError("link has no fiber to backpropagate");
  const double delta = total / n_steps;
  constexpr double tol = 1e-6;  // m

  struct Piece {
    const LinkSegment* span;
    double start;
    double length;
  };
  // Fiber pieces of [a, b]; a piece inside one span of nominal length `len`
  // is snapped so that identical interior pieces are bit-identical.
  const auto pieces_of = [&](double a, double b, double len) {
    std::vector<Piece> pieces;
    double z0 = 0.0;
    for (const auto& seg : link.spans) {
      const double l = seg.fiber.length();
      const double lo = std::max(a, z0), hi = std::min(b, z0 + l);
      if (hi - lo > tol) pieces.push_back({&seg, lo - z0, hi - lo});
      z0 += l;
    }
    if (pieces.size() == 1) {
      pieces[0].length = len;
      if (pieces[0].start < tol) pieces[0].start = 0.0;
    }
    return pieces;
  };
  const auto dispersion_of = [&](const std::vector<Piece>& pieces) {
    long double d = 0.0L;
    for (const Piece& p : pieces)
      d += static_cast<long double>(p.span->fiber.beta2(link.reference_wavelength)) * p.length;
    return -d;
  };

  struct Segment {
    long double first_half, second_half, whole;
    double weight;
  };
  std::vector<Segment> segments(static_cast<std::size_t>(n_steps));
  for (int s = 0; s < n_steps; ++s) {
    const double a = s * delta;
    const double b = s + 1 == n_steps ? total : (s + 1) * delta;
    const double mid = a + 0.5 * delta;
    Segment& seg = segments[static_cast<std::size_t>(s)];
    seg.weight = 0.0;
    for (const Piece& p : pieces_of(a, b, delta)) {
      const FiberSpan& f = p.span->fiber;
      const double alpha = f.alpha();
      const double integral =
          alpha == 0.0 ? p.length
                       : std::exp(-alpha * p.start) * -std::expm1(-alpha * p.length) / alpha;
      seg.weight += gamma_factor * f.gamma() * integral;
    }
    seg.whole = dispersion_of(pieces_of(a, b, delta));
    seg.first_half = dispersion_of(pieces_of(a, mid, 0.5 * delta));
    seg.second_half = dispersion_of(pieces_of(mid, b, 0.5 * delta));
  }

  std::vector<DbpStep> steps;
  if (position == NlPosition::start) {
    for (int s = n_steps; s-- > 0;) {
      const Segment& seg = segments[static_cast<std::size_t>(s)];
      steps.push_back({seg.whole, seg.weight});
    }
    return steps;
  }
  for (int s = n_steps; s-- > 0;) {
    const Segment& seg = segments[static_cast<std::size_t>(s)];
    const long double before =
        s + 1 == n_steps ? 0.0L : segments[static_cast<std::size_t>(s + 1)].first_half;
    steps.push_back({before + seg.second_half, seg.weight});
  }
  steps.push_back({segments[0].first_half, 0.0});
  return steps;
}

NonlinearStepParams NonlinearStepParams::from_powers(std::span<const double> powers_w,
                                                     double phase_weight) {
  NonlinearStepParams p;
  for (double pw : powers_w) p.phi_perp.push_back(pw * phase_weight);
  return p;
}

std::vector<DualPolSignal> linear_step(const std::vector<DualPolSignal>& channels, double beta2,
                                       double dz) {
  std::vector<DualPolSignal> out;
  out.reserve(channels.size());
  for (const auto& ch : channels)
    out.push_back(apply_spectral_filter(ch, SpectralFilter::dispersion(beta2, dz)));
  return out;
}

// ---------------------------------------------------------------------------
// Coupled-channel intensity filter

namespace {

class CoupledFilter {
 public:
  struct Work {
    std::vector<RVec> total;   // |x_i|^2 + |y_i|^2
    std::vector<RVec> self;    // C_0 correlated with total
    std::vector<RVec> cross;   // x0, y0, x1, ... cross-channel sums (scaled by phi)
    std::vector<CVec> wx, wy;  // spectra of 2|x|^2 + |y|^2 and |x|^2 + 2|y|^2
    RVec ext;
  };

  CoupledFilter(const CoefficientSet& c, std::size_t n) : n_ch_(c.n_channels()), n_(n) {
    if (2 * static_cast<std::size_t>(c.nc0()) + 1 > n ||
        (n_ch_ > 1 && 2 * static_cast<std::size_t>(c.nc()) + 1 > n))
      throw ConfigError("coefficient window is longer than the signal");
    nc0_ = static_cast<std::size_t>(c.nc0());
    nc_ = c.nc();
    self_taps_ = c.taps(0);
    const std::size_t bins = n / 2 + 1;
    kernels_.resize(2 * static_cast<std::size_t>(n_ch_) - 1);
    active_.assign(kernels_.size(), false);
    RVec k(n);
    for (int h = -(n_ch_ - 1); h < n_ch_; ++h) {
      if (h == 0) continue;
      const std::size_t idx = static_cast<std::size_t>(h + n_ch_ - 1);
      active_[idx] = !c.is_zero(h);
      std::fill(k.begin(), k.end(), 0.0);
      for (int m = -nc_; m <= nc_; ++m) k[wrap(-m, n)] += c.at(h, m);
      kernels_[idx].resize(bins);
      fft::forward_real(k, kernels_[idx]);
      any_cross_ = any_cross_ || active_[idx];
    }
  }

  int n_channels() const { return n_ch_; }
  bool any_cross() const { return any_cross_; }
  std::size_t nc0() const { return nc0_; }
  const std::vector<double>& self_taps() const { return self_taps_; }
  const CVec& kernel(int h) const { return kernels_[static_cast<std::size_t>(h + n_ch_ - 1)]; }
  bool active(int h) const { return active_[static_cast<std::size_t>(h + n_ch_ - 1)]; }

  // Fills work.total and work.self; work.wx/wy when `spectra` or cross terms
  // are active; work.cross when cross terms are active.
  void evaluate(const std::vector<cplx*>& pols, std::span<const double> phi, Work& w,
                bool spectra) const {
    const auto& kt = kernels::active();
    const std::size_t n = n_;
    const auto nch = static_cast<std::size_t>(n_ch_);
    w.total.resize(nch);
    w.self.resize(nch);
    for (std::size_t i = 0; i < nch; ++i) {
      w.total[i].resize(n);
      w.self[i].resize(n);
      kt.intensity2(pols[2 * i], pols[2 * i + 1], w.total[i].data(), n);
      extend(w.total[i].data(), n, nc0_, w.ext);
      kt.correlate(w.ext.data(), self_taps_.data(), self_taps_.size(), w.self[i].data(), n);
    }
    if (!any_cross_ && !spectra) return;
    const std::size_t bins = n / 2 + 1;
    w.wx.resize(nch);
    w.wy.resize(nch);
    RVec ix(n), iy(n);
    CVec fx(bins), fy(bins);
    for (std::size_t l = 0; l < nch; ++l) {
      kt.intensity(pols[2 * l], ix.data(), n);
      kt.intensity(pols[2 * l + 1], iy.data(), n);
      fft::forward_real(ix, fx);
      fft::forward_real(iy, fy);
      w.wx[l].resize(bins);
      w.wy[l].resize(bins);
      for (std::size_t f = 0; f < bins; ++f) {
        w.wx[l][f] = 2.0 * fx[f] + fy[f];
        w.wy[l][f] = fx[f] + 2.0 * fy[f];
      }
    }
    if (!any_cross_) return;
    w.cross.resize(2 * nch);
    CVec ax(bins), ay(bins);
    const double inv_n = 1.0 / static_cast<double>(n);
    for (std::size_t i = 0; i < nch; ++i) {
      std::fill(ax.begin(), ax.end(), cplx(0.0, 0.0));
      std::fill(ay.begin(), ay.end(), cplx(0.0, 0.0));
      for (std::size_t l = 0; l < nch; ++l) {
        const int h = static_cast<int>(l) - static_cast<int>(i);
        if (h == 0 || !active(h)) continue;
        kt.cmul_acc(ax.data(), kernel(h).data(), w.wx[l].data(), phi[l] * inv_n, bins);
        kt.cmul_acc(ay.data(), kernel(h).data(), w.wy[l].data(), phi[l] * inv_n, bins);
      }
      w.cross[2 * i].resize(n);
      w.cross[2 * i + 1].resize(n);
      fft::inverse_real(ax, w.cross[2 * i]);
      fft::inverse_real(ay, w.cross[2 * i + 1]);
    }
  }

  // theta for polarization p of channel i, in the exact arithmetic of apply().
  void theta(const Work& w, std::span<const double> phi, std::size_t i, int p, RVec& out) const {
    out.resize(n_);
    if (!any_cross_) {
      const double s = -phi[i];
      for (std::size_t k = 0; k < n_; ++k) out[k] = s * w.self[i][k];
    } else {
      const RVec& c = w.cross[2 * i + static_cast<std::size_t>(p)];
      for (std::size_t k = 0; k < n_; ++k) out[k] = -(phi[i] * w.self[i][k] + c[k]);
    }
  }

  void apply(const std::vector<cplx*>& pols, std::span<const double> phi, Work& w) const {
    evaluate(pols, phi, w, false);
    const auto& kt = kernels::active();
    for (std::size_t i = 0; i < static_cast<std::size_t>(n_ch_); ++i) {
      if (!any_cross_) {
        kt.rotate2(pols[2 * i], pols[2 * i + 1], w.self[i].data(), -phi[i], 1.0, n_);
        continue;
      }
      RVec tmp(n_);
      for (int p = 0; p < 2; ++p) {
        const RVec& c = w.cross[2 * i + static_cast<std::size_t>(p)];
        for (std::size_t k = 0; k < n_; ++k) tmp[k] = phi[i] * w.self[i][k] + c[k];
        kt.rotate(pols[2 * i + static_cast<std::size_t>(p)], tmp.data(), -1.0, 1.0, n_);
      }
    }
  }

 private:
  int n_ch_;
  std::size_t n_;
  std::size_t nc0_ = 0;
  int nc_ = 0;
  std::vector<double> self_taps_;
  std::vector<CVec> kernels_;
  std::vector<bool> active_;
  bool any_cross_ = false;
};

std::vector<cplx*> pol_pointers(std::vector<DualPolSignal>& channels) {
  std::vector<cplx*> p;
  for (auto& ch : channels) {
    p.push_back(ch.x.data());
    p.push_back(ch.y.data());
  }
  return p;
}

std::size_t common_length(const std::vector<DualPolSignal>& channels) {
  if (channels.empty()) throw ConfigError("no channels given");
  const std::size_t n = channels[0].size();
  for (const auto& ch : channels) {
    ch.validate();
    if (ch.size() != n) throw ConfigError("channels differ in length");
  }
  return n;
}

void ssfm_rotate(const std::vector<cplx*>& pols, std::span<const double> phi, std::size_t n) {
  const auto& kt = kernels::active();
  RVec power(n);
  for (std::size_t i = 0; i < phi.size(); ++i) {
    kt.intensity2(pols[2 * i], pols[2 * i + 1], power.data(), n);
    kt.rotate2(pols[2 * i], pols[2 * i + 1], power.data(), -phi[i], 1.0, n);
  }
}

}  // namespace

void nonlinear_step_ssfm(std::vector<DualPolSignal>& channels, const NonlinearStepParams& params,
                         double xi) {
  const std::size_t n = common_length(channels);
  if (params.phi_perp.size() != channels.size())
    throw ConfigError("phase parameters do not match the channel count");
  std::vector<double> phi;
  for (double p : params.phi_perp) phi.push_back(xi * p);
  ssfm_rotate(pol_pointers(channels), phi, n);
}

void nonlinear_step_essfm(DualPolSignal& sig, double phi, const CoefficientSet& coeffs) {
  sig.validate();
  if (coeffs.n_channels() != 1) throw ConfigError("ESSFM needs a single-channel coefficient set");
  const CoupledFilter filt(coeffs, sig.size());
  CoupledFilter::Work w;
  const double phis[1] = {phi};
  filt.apply({sig.x.data(), sig.y.data()}, phis, w);
}

void nonlinear_step_cc_essfm(std::vector<DualPolSignal>& channels,
                             const NonlinearStepParams& params, const CoefficientSet& coeffs) {
  const std::size_t n = common_length(channels);
  if (static_cast<std::size_t>(coeffs.n_channels()) != channels.size() ||
      params.phi_perp.size() != channels.size())
    throw ConfigError("coefficient set has " + std::to_string(coeffs.n_channels()) +
                      " channels, signal has " + std::to_string(channels.size()));
  const CoupledFilter filt(coeffs, n);
  CoupledFilter::Work w;
  filt.apply(pol_pointers(channels), params.phi_perp, w);
}

std::vector<RVec> cc_essfm_phases(const std::vector<DualPolSignal>& channels,
                                  const NonlinearStepParams& params,
                                  const CoefficientSet& coeffs) {
  const std::size_t n = common_length(channels);
  if (static_cast<std::size_t>(coeffs.n_channels()) != channels.size() ||
      params.phi_perp.size() != channels.size())
    throw ConfigError("coefficient set does not match the channel count");
  const CoupledFilter filt(coeffs, n);
  CoupledFilter::Work w;
  std::vector<cplx*> pols;
  for (const auto& ch : channels) {
    pols.push_back(const_cast<cplx*>(ch.x.data()));
    pols.push_back(const_cast<cplx*>(ch.y.data()));
  }
  filt.evaluate(pols, params.phi_perp, w, false);
  std::vector<RVec> out(2 * channels.size());
  for (std::size_t i = 0; i < channels.size(); ++i) {
    filt.theta(w, params.phi_perp, i, 0, out[2 * i]);
    filt.theta(w, params.phi_perp, i, 1, out[2 * i + 1]);
  }
  return out;
}

// ---------------------------------------------------------------------------
// Engine

struct DbpEngine::Filters : CoupledFilter {
  using CoupledFilter::CoupledFilter;
};

DbpEngine::DbpEngine(const Link& link, const DbpConfig& cfg, std::vector<double> channel_power_w,
                     std::vector<double> center_offsets, std::size_t n_samples, double sample_rate)
    : cfg_(cfg),
      power_(std::move(channel_power_w)),
      offsets_(std::move(center_offsets)),
      n_(n_samples),
      fs_(sample_rate) {
  cfg_.validate();
  if (power_.empty() || power_.size() != offsets_.size())
    throw ConfigError("DBP needs one power and one offset per channel");
  for (double p : power_)
    if (!(p > 0.0)) throw ConfigError("channel power must be positive");
  if (is_full_field(cfg_.method) && power_.size() != 1)
    throw ConfigError("full-field DBP takes a single aggregate field");
  if (n_ == 0 || !(fs_ > 0.0)) throw ConfigError("DBP needs a non-empty sampled signal");

  steps_ = plan_dbp_steps(link, cfg_.n_steps, cfg_.gamma_factor, cfg_.nl_position);
  if (cfg_.method == Method::gvd_only) {
    long double total = 0.0L;
    for (const auto& s : steps_) total += s.dispersion;
    steps_ = {DbpStep{total, 0.0}};
  }

  for (const auto& s : steps_) {
    for (long double d : {s.dispersion, -s.dispersion}) {
      if (std::find(dispersions_.begin(), dispersions_.end(), d) != dispersions_.end()) continue;
      dispersions_.push_back(d);
      std::vector<CVec> per_channel;
      for (double off : offsets_)
        per_channel.push_back(dispersion_response(n_, fs_, off, d, static_cast<double>(n_)));
      responses_.push_back(std::move(per_channel));
    }
  }

  if (cfg_.block_mode) {
    const std::size_t big_n = cfg_.block.fft_size;
    const std::size_t ov = cfg_.block.overlap();
    for (long double d : dispersions_) {
      std::vector<BlockKernel> per_channel;
      for (double off : offsets_) {
        const CVec h = fft::inverse(dispersion_response(big_n, fs_, off, d, static_cast<double>(big_n)));
        const double delay = -static_cast<double>(kTwoPiL * off * d) * fs_;
        const long start = std::lround(delay) - static_cast<long>(ov / 2);
        // Hard truncation leaves an edge error of order h[ov/2]; a cosine taper
        // over the outer quarters confines the mismatch to the band edge.
        const std::size_t taper = ov / 4;
        CVec g(big_n);
        for (std::size_t t = 0; t <= ov; ++t) {
          const std::size_t edge = std::min(t, ov - t);
          double wgt = 1.0;
          if (edge < taper) {
            const double s = std::sin(0.5 * std::numbers::pi * static_cast<double>(edge + 1) /
                                      static_cast<double>(taper + 1));
            wgt = s * s;
          }
          g[t] = h[wrap(start + static_cast<long>(t), big_n)] * wgt;
        }
        CVec spec = fft::forward(g);
        for (auto& v : spec) v /= static_cast<double>(big_n);
        per_channel.push_back({std::move(spec), start});
      }
      blocks_.push_back(std::move(per_channel));
    }
  }

  if (uses_coefficients(cfg_.method)) {
    if (!cfg_.coefficients) throw ConfigError(std::string(method_name(cfg_.method)) + " needs coefficients");
    set_coefficients(*cfg_.coefficients);
  }
}

void DbpEngine::set_coefficients(const CoefficientSet& coeffs) {
  if (!uses_coefficients(cfg_.method))
    throw ConfigError(std::string(method_name(cfg_.method)) + " takes no coefficients");
  if (cfg_.method == Method::cc_essfm) {
    if (static_cast<std::size_t>(coeffs.n_channels()) != n_channels())
      throw ConfigError("coefficient set has " + std::to_string(coeffs.n_channels()) +
                        " channels, DBP has " + std::to_string(n_channels()));
  } else if (coeffs.n_channels() != 1) {
    throw ConfigError("ESSFM needs a single-channel coefficient set");
  }
  cfg_.coefficients = coeffs;
  filters_ = std::make_shared<const Filters>(coeffs, n_);
}

bool DbpEngine::coupled() const { return uses_coefficients(cfg_.method); }

std::size_t DbpEngine::response_index(long double dispersion) const {
  const auto it = std::find(dispersions_.begin(), dispersions_.end(), dispersion);
  if (it == dispersions_.end()) throw NumericalError("no response for dispersion value");
  return static_cast<std::size_t>(it - dispersions_.begin());
}

std::vector<double> DbpEngine::step_phases(const DbpStep& step) const {
  std::vector<double> phi;
  for (double p : power_) phi.push_back(cfg_.nl_scale * (p * step.phase_weight));
  return phi;
}

void DbpEngine::apply_linear(State& state, long double dispersion) const {
  if (cfg_.block_mode) {
    apply_linear_blocks(state, dispersion);
    return;
  }
  const auto& resp = responses_[response_index(dispersion)];
  const auto& kt = kernels::active();
  CVec spec(n_);
  for (std::size_t p = 0; p < state.size(); ++p) {
    fft::forward(state[p], spec);
    kt.cmul(spec.data(), resp[p / 2].data(), n_);
    fft::inverse(spec, state[p]);
  }
}

void DbpEngine::apply_linear_blocks(State& state, long double dispersion) const {
  const auto& kern = blocks_[response_index(dispersion)];
  const auto& kt = kernels::active();
  const std::size_t big_n = cfg_.block.fft_size;
  const std::size_t kept = cfg_.block.kept();
  const std::size_t ov = big_n - kept;
  CVec blk(big_n), spec(big_n), out(n_);
  for (std::size_t p = 0; p < state.size(); ++p) {
    const BlockKernel& k = kern[p / 2];
    const long last_lag = k.lag_start + static_cast<long>(ov);
    for (std::size_t n0 = 0; n0 < n_; n0 += kept) {
      for (std::size_t t = 0; t < big_n; ++t)
        blk[t] = state[p][wrap(static_cast<long>(n0) - last_lag + static_cast<long>(t), n_)];
      fft::forward(blk, spec);
      kt.cmul(spec.data(), k.spectrum.data(), big_n);
      fft::inverse(spec, blk);
      for (std::size_t t = ov; t < big_n && n0 + t - ov < n_; ++t) out[n0 + t - ov] = blk[t];
    }
    state[p] = out;
  }
}

void DbpEngine::apply_nonlinear(State& state, const DbpStep& step) const {
  const std::vector<double> phi = step_phases(step);
  std::vector<cplx*> pols;
  for (auto& v : state) pols.push_back(v.data());
  if (!coupled()) {
    ssfm_rotate(pols, phi, n_);
    return;
  }
  CoupledFilter::Work w;
  if (filters_->n_channels() == 1) {
    for (std::size_t i = 0; i < n_channels(); ++i)
      filters_->apply({pols[2 * i], pols[2 * i + 1]}, std::span(phi).subspan(i, 1), w);
  } else {
    filters_->apply(pols, phi, w);
  }
}

void DbpEngine::propagate(State& state, Tape* tape) const {
  if (state.size() != 2 * n_channels()) throw ConfigError("state has the wrong channel count");
  for (const auto& v : state)
    if (v.size() != n_) throw ConfigError("state has the wrong length");
  if (tape != nullptr) tape->pre_nonlinear.clear();
  for (const auto& step : steps_) {
    apply_linear(state, step.dispersion);
    if (cfg_.method == Method::gvd_only) continue;
    if (tape != nullptr) tape->pre_nonlinear.push_back(state);
    if (step.phase_weight != 0.0) apply_nonlinear(state, step);
  }
}

std::vector<DualPolSignal> DbpEngine::run(const std::vector<DualPolSignal>& input) const {
  if (input.size() != n_channels())
    throw ConfigError("DBP expects " + std::to_string(n_channels()) + " input signals, got " +
                      std::to_string(input.size()));
  State state;
  for (std::size_t i = 0; i < input.size(); ++i) {
    const DualPolSignal& ch = input[i];
    ch.validate();
    if (ch.size() != n_ || std::abs(ch.sample_rate - fs_) > 1e-9 * fs_ ||
        ch.center_offset != offsets_[i])
      throw ConfigError("input signal " + std::to_string(i) + " does not match the DBP layout");
    const double s = 1.0 / std::sqrt(power_[i]);
    for (const CVec* pol : {&ch.x, &ch.y}) {
      CVec v(*pol);
      for (auto& z : v) z *= s;
      state.push_back(std::move(v));
    }
  }
  propagate(state);
  std::vector<DualPolSignal> out;
  for (std::size_t i = 0; i < input.size(); ++i) {
    DualPolSignal o(0, fs_, offsets_[i]);
    const double s = std::sqrt(power_[i]);
    o.x = std::move(state[2 * i]);
    o.y = std::move(state[2 * i + 1]);
    for (auto& z : o.x) z *= s;
    for (auto& z : o.y) z *= s;
    out.push_back(std::move(o));
  }
  return out;
}

void DbpEngine::nonlinear_gradient(const State& v, const DbpStep& step, State& grad,
                                   std::vector<std::vector<double>>* coeff_grad,
                                   std::vector<CVec>* cross_acc) const {
  const auto& kt = kernels::active();
  const std::size_t n = n_;
  const std::size_t nch = n_channels();
  const std::vector<double> phi = step_phases(step);

  // lambda = dJ/dtheta for every polarization, and g <- g * exp(-j theta).
  std::vector<RVec> lambda(2 * nch, RVec(n));
  RVec s(n), c(n);
  auto rotate_back = [&](std::size_t p, const RVec& theta) {
    kt.sincos(theta.data(), s.data(), c.data(), n);
    for (std::size_t k = 0; k < n; ++k) {
      const cplx e(c[k], s[k]);
      const cplx u = v[p][k] * e;
      const cplx g = grad[p][k];
      lambda[p][k] = g.imag() * u.real() - g.real() * u.imag();
      grad[p][k] = g * std::conj(e);
    }
  };

  if (!coupled()) {
    RVec power(n), theta(n);
    for (std::size_t i = 0; i < nch; ++i) {
      kt.intensity2(v[2 * i].data(), v[2 * i + 1].data(), power.data(), n);
      for (std::size_t k = 0; k < n; ++k) theta[k] = -phi[i] * power[k];
      rotate_back(2 * i, theta);
      rotate_back(2 * i + 1, theta);
      for (std::size_t k = 0; k < n; ++k) {
        const double di = -phi[i] * (lambda[2 * i][k] + lambda[2 * i + 1][k]);
        grad[2 * i][k] += 2.0 * di * v[2 * i][k];
        grad[2 * i + 1][k] += 2.0 * di * v[2 * i + 1][k];
      }
    }
    return;
  }

  const Filters& filt = *filters_;
  const bool per_channel = filt.n_channels() == 1;
  const bool want_spectra = cross_acc != nullptr && !per_channel;
  std::vector<cplx*> pols;
  for (const auto& p : v) pols.push_back(const_cast<cplx*>(p.data()));

  // Forward quantities, grouped the same way apply_nonlinear groups them.
  std::vector<CoupledFilter::Work> works(per_channel ? nch : 1);
  if (per_channel) {
    for (std::size_t i = 0; i < nch; ++i)
      filt.evaluate({pols[2 * i], pols[2 * i + 1]}, std::span(phi).subspan(i, 1), works[i], false);
  } else {
    filt.evaluate(pols, phi, works[0], want_spectra);
  }
  auto work_of = [&](std::size_t i) -> const CoupledFilter::Work& {
    return per_channel ? works[i] : works[0];
  };
  auto local = [&](std::size_t i) { return per_channel ? std::size_t{0} : i; };

  RVec theta;
  for (std::size_t i = 0; i < nch; ++i) {
    const std::span<const double> ph = per_channel ? std::span<const double>(phi).subspan(i, 1)
                                                   : std::span<const double>(phi);
    for (int p = 0; p < 2; ++p) {
      filt.theta(work_of(i), ph, local(i), p, theta);
      rotate_back(2 * i + static_cast<std::size_t>(p), theta);
    }
  }

  // dJ/d|x_l|^2 and dJ/d|y_l|^2.
  std::vector<RVec> d_int(2 * nch, RVec(n, 0.0));
  const std::size_t nc0 = filt.nc0();
  const auto& taps0 = filt.self_taps();
  RVec mu(n), ext, tmp(n), g0(2 * nc0 + 1);
  for (std::size_t i = 0; i < nch; ++i) {
    for (std::size_t k = 0; k < n; ++k) mu[k] = -phi[i] * (lambda[2 * i][k] + lambda[2 * i + 1][k]);
    extend(mu.data(), n, nc0, ext);
    kt.correlate(ext.data(), taps0.data(), taps0.size(), tmp.data(), n);
    for (std::size_t k = 0; k < n; ++k) {
      d_int[2 * i][k] += tmp[k];
      d_int[2 * i + 1][k] += tmp[k];
    }
    if (coeff_grad != nullptr) {
      extend(work_of(i).total[local(i)].data(), n, nc0, ext);
      kt.correlate(ext.data(), mu.data(), n, g0.data(), 2 * nc0 + 1);
      auto& dst = (*coeff_grad)[nch - 1];
      for (std::size_t m = 0; m < g0.size(); ++m) dst[m] += g0[m];
    }
  }

  if (!per_channel && (filt.any_cross() || want_spectra)) {
    const CoupledFilter::Work& w = works[0];
    const std::size_t bins = n / 2 + 1;
    std::vector<CVec> lam_f(2 * nch, CVec(bins)), lam_conj(2 * nch, CVec(bins));
    for (std::size_t p = 0; p < 2 * nch; ++p) {
      fft::forward_real(lambda[p], lam_f[p]);
      for (std::size_t f = 0; f < bins; ++f) lam_conj[p][f] = std::conj(lam_f[p][f]);
    }
    std::vector<CVec> dwx(nch, CVec(bins)), dwy(nch, CVec(bins));
    for (std::size_t i = 0; i < nch; ++i) {
      for (std::size_t l = 0; l < nch; ++l) {
        const int h = static_cast<int>(l) - static_cast<int>(i);
        if (h == 0) continue;
        if (want_spectra) {
          CVec& acc = (*cross_acc)[static_cast<std::size_t>(h + static_cast<int>(nch) - 1)];
          kt.cmul_acc(acc.data(), lam_conj[2 * i].data(), w.wx[l].data(), -phi[l], bins);
          kt.cmul_acc(acc.data(), lam_conj[2 * i + 1].data(), w.wy[l].data(), -phi[l], bins);
        }
        if (filt.active(h)) {
          const CVec& kc = filt.kernel(-h);  // conj(K_h)
          kt.cmul_acc(dwx[l].data(), kc.data(), lam_f[2 * i].data(), -phi[l], bins);
          kt.cmul_acc(dwy[l].data(), kc.data(), lam_f[2 * i + 1].data(), -phi[l], bins);
        }
      }
    }
    if (filt.any_cross()) {
      const double inv_n = 1.0 / static_cast<double>(n);
      CVec spec(bins);
      RVec out(n);
      for (std::size_t l = 0; l < nch; ++l) {
        for (int p = 0; p < 2; ++p) {
          for (std::size_t f = 0; f < bins; ++f)
            spec[f] = p == 0 ? 2.0 * dwx[l][f] + dwy[l][f] : dwx[l][f] + 2.0 * dwy[l][f];
          fft::inverse_real(spec, out);
          RVec& d = d_int[2 * l + static_cast<std::size_t>(p)];
          for (std::size_t k = 0; k < n; ++k) d[k] += out[k] * inv_n;
        }
      }
    }
  }

  for (std::size_t p = 0; p < 2 * nch; ++p)
    for (std::size_t k = 0; k < n; ++k) grad[p][k] += 2.0 * d_int[p][k] * v[p][k];
}

void DbpEngine::gradient(const Tape& tape, State& grad,
                         std::vector<std::vector<double>>* coeff_grad) const {
  if (cfg_.block_mode) throw ConfigError("gradients require whole-sequence DBP");
  if (grad.size() != 2 * n_channels()) throw ConfigError("gradient has the wrong channel count");
  const bool nl = cfg_.method != Method::gvd_only;
  if (nl && tape.pre_nonlinear.size() != steps_.size()) throw ConfigError("tape does not match the steps");

  const std::size_t nch = n_channels();
  std::vector<CVec> cross_acc;
  if (coeff_grad != nullptr) {
    if (!coupled()) throw ConfigError("coefficient gradient requested for a method without coefficients");
    const int nc_total = filters_->n_channels();
    coeff_grad->assign(2 * static_cast<std::size_t>(nc_total) - 1, {});
    const CoefficientSet& cs = *cfg_.coefficients;
    for (int h = -(nc_total - 1); h < nc_total; ++h)
      (*coeff_grad)[static_cast<std::size_t>(h + nc_total - 1)].assign(
          2 * static_cast<std::size_t>(cs.half_length(h)) + 1, 0.0);
    if (nc_total > 1) cross_acc.assign(2 * nch - 1, CVec(n_ / 2 + 1));
  }
  // Per-channel ESSFM stores its C_0 gradient at index 0 of a 1-channel layout.
  std::vector<std::vector<double>> local;
  std::vector<std::vector<double>>* target = coeff_grad;
  if (coeff_grad != nullptr && filters_->n_channels() == 1 && nch > 1) {
    local.assign(2 * nch - 1, {});
    local[nch - 1].assign(2 * filters_->nc0() + 1, 0.0);
    target = &local;
  }

  for (std::size_t s = steps_.size(); s-- > 0;) {
    if (nl && steps_[s].phase_weight != 0.0) nonlinear_gradient(tape.pre_nonlinear[s], steps_[s], grad, target,
                               cross_acc.empty() ? nullptr : &cross_acc);
    apply_linear(grad, -steps_[s].dispersion);
  }

  if (coeff_grad == nullptr) return;
  if (target == &local) (*coeff_grad)[0] = std::move(local[nch - 1]);
  if (!cross_acc.empty()) {
    const int nc = cfg_.coefficients->nc();
    const double inv_n = 1.0 / static_cast<double>(n_);
    RVec corr(n_);
    for (int h = -static_cast<int>(nch - 1); h < static_cast<int>(nch); ++h) {
      if (h == 0) continue;
      const std::size_t idx = static_cast<std::size_t>(h + static_cast<int>(nch) - 1);
      fft::inverse_real(cross_acc[idx], corr);
      for (int m = -nc; m <= nc; ++m) (*coeff_grad)[idx][static_cast<std::size_t>(m + nc)] = corr[wrap(m, n_)] * inv_n;
    }
  }
}

std::vector<double> block_gradient(const CoefficientSet& coeffs,
                                   const std::vector<std::vector<double>>& materialized, int h) {
  const int nch = coeffs.n_channels();
  if (h < 0 || h >= nch) throw ConfigError("coefficient block out of range");
  if (materialized.size() != 2 * static_cast<std::size_t>(nch) - 1)
    throw ConfigError("gradient layout does not match the coefficient set");
  const auto& pos = materialized[static_cast<std::size_t>(h + nch - 1)];
  if (h == 0) {
    const int nc0 = coeffs.nc0();
    std::vector<double> g(static_cast<std::size_t>(nc0) + 1);
    g[0] = pos[static_cast<std::size_t>(nc0)];
    for (int m = 1; m <= nc0; ++m)
      g[m] = pos[static_cast<std::size_t>(nc0 + m)] + pos[static_cast<std::size_t>(nc0 - m)];
    return g;
  }
  const int nc = coeffs.nc();
  const auto& neg = materialized[static_cast<std::size_t>(-h + nch - 1)];
  std::vector<double> g(2 * static_cast<std::size_t>(nc) + 1);
  for (int m = -nc; m <= nc; ++m)
    g[static_cast<std::size_t>(m + nc)] =
        pos[static_cast<std::size_t>(m + nc)] + neg[static_cast<std::size_t>(-m + nc)];
  return g;
}

std::vector<DualPolSignal> run_dbp(const std::vector<DualPolSignal>& input, const Link& link,
                                   const DbpConfig& cfg, std::span<const double> channel_power_w) {
  const std::size_t n = common_length(input);
  if (channel_power_w.size() != input.size())
    throw ConfigError("one launch power per input signal is required");
  std::vector<double> offsets;
  for (const auto& ch : input) {
    if (ch.sample_rate != input[0].sample_rate) throw ConfigError("input sample rates differ");
    offsets.push_back(ch.center_offset);
  }
  const DbpEngine engine(link, cfg, {channel_power_w.begin(), channel_power_w.end()}, offsets, n,
                         input[0].sample_rate);
  return engine.run(input);
}

Rational complexity(Method method, int n_steps, std::size_t fft_size, const Rational& eta,
                    const Rational& samples_per_symbol, int nc, int n_channels) {
  if (fft_size < 2 || (fft_size & (fft_size - 1)) != 0)
    throw ConfigError("FFT size must be a power of two");
  if (n_steps < 1) throw ConfigError("N_s must be >= 1");
  std::int64_t log2n = 0;
  while ((std::size_t{1} << log2n) < fft_size) ++log2n;
  const Rational per = eta * samples_per_symbol;
  const Rational ns(n_steps);
  switch (method) {
    case Method::gvd_only:
      return per * Rational(8 * log2n + 8);
    case Method::ssfm:
    case Method::ossfm:
    case Method::ff_ssfm:
    case Method::ff_ossfm:
      return ns * per * Rational(8 * log2n + 21);
    case Method::essfm:
    case Method::ff_essfm:
      return ns * per * Rational(8 * log2n + 21 + nc);
    case Method::cc_essfm:
      return ns * per * Rational(12 * log2n + 20 + 4 * static_cast<std::int64_t>(n_channels));
  }
  throw ConfigError("unknown method");
}

}  // namespace ccdbp
