#pragma once

#include <cstddef>
#include <memory>
#include <optional>
#include <span>
#include <string_view>
#include <vector>

#include "ccdbp/aligned_vector.hpp"
#include "ccdbp/channel.hpp"
#include "ccdbp/rational.hpp"
#include "ccdbp/signal.hpp"

namespace ccdbp {

enum class Method { gvd_only, ssfm, ossfm, essfm, cc_essfm, ff_ssfm, ff_ossfm, ff_essfm };

std::string_view method_name(Method m);
/// Accepts the upper-case names (GVD_ONLY, CC_ESSFM, ...); throws ConfigError otherwise.
Method parse_method(std::string_view name);
bool is_full_field(Method m);
/// ESSFM, CC_ESSFM and FF_ESSFM carry a CoefficientSet.
bool uses_coefficients(Method m);
/// OSSFM and FF_OSSFM carry a trained nonlinear scale.
bool uses_nl_scale(Method m);

/// Real filter taps C_h[m] of the coupled-channel intensity filter.
///
/// Only C_0[0..Nc0] and C_h[-Nc..Nc] for h = 1..N_ch-1 are stored; every
/// other tap follows from C_0[-m] = C_0[m] and C_{-h}[-m] = C_h[m].
class CoefficientSet {
 public:
  CoefficientSet(int n_channels, int nc0, int nc);
  /// C_0 = unit impulse, everything else zero: the SSFM step.
  static CoefficientSet impulse(int n_channels, int nc0, int nc);

  int n_channels() const { return n_ch_; }
  int nc0() const { return nc0_; }
  int nc() const { return nc_; }
  /// Half-length of C_h (Nc0 for h = 0, Nc otherwise).
  int half_length(int h) const { return h == 0 ? nc0_ : nc_; }

  /// Materialized C_h[m] for |h| < N_ch; zero outside the tap window.
  double at(int h, int m) const;
  /// C_h[-N..N] in ascending m.
  std::vector<double> taps(int h) const;
  bool is_zero(int h) const;

  /// Free parameters of block h >= 0: C_0[0..Nc0] or C_h[-Nc..Nc].
  std::span<double> block(int h);
  std::span<const double> block(int h) const;
  std::size_t free_count() const;

  friend bool operator==(const CoefficientSet&, const CoefficientSet&) = default;

 private:
  int n_ch_;
  int nc0_;
  int nc_;
  std::vector<std::vector<double>> free_;
};

/// Overlap-and-save geometry: FFT length N and eta = N / (samples kept per block).
struct BlockPlan {
  std::size_t fft_size = 4096;
  Rational eta{4, 3};

  void validate() const;
  std::size_t kept() const;
  std::size_t overlap() const { return fft_size - kept(); }
};

/// Where the nonlinear part of a step sits inside its segment. midpoint:
/// half the segment's dispersion on each side. start: all dispersion first,
/// nonlinearity lumped where the forward segment begins.
enum class NlPosition { midpoint, start };

struct DbpConfig {
  Method method = Method::cc_essfm;
  int n_steps = 15;
  /// Samples per symbol at the DBP rate.
  Rational samples_per_symbol{5, 4};
  double nl_scale = 1.0;
  std::optional<CoefficientSet> coefficients;
  BlockPlan block;
  /// Use overlap-and-save linear steps instead of whole-sequence filtering.
  bool block_mode = false;
  /// gamma_eff = gamma_factor * gamma.
  double gamma_factor = kManakovFactor;
  NlPosition nl_position = NlPosition::midpoint;

  void validate() const;
};

/// One backward step: a linear part undoing the dispersion of a forward
/// segment, followed by a nonlinear part lumped at the segment start.
struct DbpStep {
  /// Signed dispersion to apply, -(sum of beta2 * length) over the segment (s^2).
  /// Extended precision keeps sums of steps consistent with a single step
  /// when phases reach 10^4 rad.
  long double dispersion = 0.0L;
  /// sum over spans of gamma_eff * integral of g(z) over the segment (1/W).
  double phase_weight = 0.0;
};

/// Steps in processing order (from the receiver back to the transmitter),
/// uniform in total distance; a step may straddle span boundaries. With
/// midpoint placement a final linear-only step (phase_weight 0) covers the
/// first half of the first segment.
std::vector<DbpStep> plan_dbp_steps(const Link& link, int n_steps, double gamma_factor,
                                    NlPosition position = NlPosition::midpoint);

struct NonlinearStepParams {
  /// phi_perp[l] = gamma_eff * P_l * integral of g over the step (rad).
  std::vector<double> phi_perp;

  static NonlinearStepParams from_powers(std::span<const double> powers_w, double phase_weight);
  double phi_par(std::size_t i, std::size_t l) const {
    return (i == l ? 1.0 : 2.0) * phi_perp[l];
  }
};

/// Dispersion over signed distance dz at each channel's absolute frequency;
/// the offset term delays channel i by beta2 * 2*pi * center_offset * dz.
std::vector<DualPolSignal> linear_step(const std::vector<DualPolSignal>& channels, double beta2,
                                       double dz);

/// Phase -xi * phi_perp[i] * (|x|^2 + |y|^2) on both polarizations of channel i.
void nonlinear_step_ssfm(std::vector<DualPolSignal>& channels, const NonlinearStepParams& params,
                         double xi);
/// Phase -phi * (C_0 correlated with |x|^2 + |y|^2), circular indexing.
void nonlinear_step_essfm(DualPolSignal& sig, double phi, const CoefficientSet& coeffs);
void nonlinear_step_cc_essfm(std::vector<DualPolSignal>& channels,
                             const NonlinearStepParams& params, const CoefficientSet& coeffs);

/// theta^x_i and theta^y_i of the coupled step, ordered x0, y0, x1, y1, ...
std::vector<RVec> cc_essfm_phases(const std::vector<DualPolSignal>& channels,
                                  const NonlinearStepParams& params,
                                  const CoefficientSet& coeffs);

/// Precomputed backpropagation over a link for a fixed channel layout.
///
/// Samples are carried normalized by sqrt(channel power); the State layout is
/// x0, y0, x1, y1, ... The engine is immutable after construction apart from
/// the coefficient and scale setters, and const methods are thread-safe.
class DbpEngine {
 public:
  using State = std::vector<CVec>;
  struct Tape {
    /// Input of every nonlinear part, in processing order.
    std::vector<State> pre_nonlinear;
  };

  DbpEngine(const Link& link, const DbpConfig& cfg, std::vector<double> channel_power_w,
            std::vector<double> center_offsets, std::size_t n_samples, double sample_rate);

  std::size_t n_channels() const { return power_.size(); }
  std::size_t n_samples() const { return n_; }
  double sample_rate() const { return fs_; }
  const std::vector<DbpStep>& steps() const { return steps_; }
  const std::vector<double>& channel_power() const { return power_; }
  const DbpConfig& config() const { return cfg_; }

  void set_coefficients(const CoefficientSet& coeffs);
  void set_nl_scale(double xi) { cfg_.nl_scale = xi; }

  std::vector<DualPolSignal> run(const std::vector<DualPolSignal>& input) const;

  /// Backpropagates a normalized state in place, optionally recording the tape.
  void propagate(State& state, Tape* tape = nullptr) const;

  /// Reverse-mode pass. On entry `grad` holds dJ/d(output) as
  /// dJ/dRe + j dJ/dIm; on exit it holds dJ/d(input). When `coeff_grad` is
  /// given it receives dJ/dC_h[m] for h = -(N_ch-1)..N_ch-1 (index h + N_ch - 1),
  /// m ascending over the tap window of h.
  void gradient(const Tape& tape, State& grad, std::vector<std::vector<double>>* coeff_grad) const;

 private:
  struct Filters;
  struct BlockKernel {
    CVec spectrum;
    long lag_start;
  };
  void apply_linear(State& state, long double dispersion) const;
  void apply_linear_blocks(State& state, long double dispersion) const;
  void apply_nonlinear(State& state, const DbpStep& step) const;
  void nonlinear_gradient(const State& v, const DbpStep& step, State& grad,
                          std::vector<std::vector<double>>* coeff_grad,
                          std::vector<CVec>* cross_acc) const;
  std::size_t response_index(long double dispersion) const;
  std::vector<double> step_phases(const DbpStep& step) const;
  bool coupled() const;

  DbpConfig cfg_;
  std::vector<DbpStep> steps_;
  std::vector<double> power_;
  std::vector<double> offsets_;
  std::size_t n_;
  double fs_;
  std::vector<long double> dispersions_;
  std::vector<std::vector<CVec>> responses_;        // [dispersion][channel], 1/n folded in
  std::vector<std::vector<BlockKernel>> blocks_;    // [dispersion][channel], block mode only
  std::shared_ptr<const Filters> filters_;
};

/// Gradient with respect to the free parameters of block h, from the
/// materialized gradient layout produced by DbpEngine::gradient.
std::vector<double> block_gradient(const CoefficientSet& coeffs,
                                   const std::vector<std::vector<double>>& materialized, int h);

/// Backpropagates physical-unit channels. `channel_power_w` holds the nominal
/// launch power of each input signal (the total for full-field inputs).
std::vector<DualPolSignal> run_dbp(const std::vector<DualPolSignal>& input, const Link& link,
                                   const DbpConfig& cfg, std::span<const double> channel_power_w);

/// Real multiplications per 4D symbol per channel for the given method.
/// FF_ variants use the formula of their per-channel counterpart with the
/// caller's n.
Rational complexity(Method method, int n_steps, std::size_t fft_size, const Rational& eta,
                    const Rational& samples_per_symbol, int nc, int n_channels);

}  // namespace ccdbp
