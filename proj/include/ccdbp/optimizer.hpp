#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "ccdbp/dbp.hpp"
#include "ccdbp/errors.hpp"
#include "ccdbp/receiver.hpp"
#include "ccdbp/txrx.hpp"

namespace ccdbp {

/// Mean over symbols and polarizations of |rx - tx|^2.
double mse(const ChannelRx& rx, const ChannelSymbols& tx);

struct TrainingConfig {
  std::size_t n_train_symbols = 1024;
  double train_power_dbm = 1.0;
  /// Accepted gradient steps per h.
  int max_iterations = 300;
  /// Stop an h-iteration when the relative MSE change of a step falls below this.
  double tolerance = 1e-7;
  std::uint64_t rng_seed = 1001;
  /// Train on a noisy received field (false: amplifiers without ASE).
  bool noisy = true;

  void validate() const;
};

struct ObjectiveReport {
  /// MSE at the initialization, then after each h-iteration.
  std::vector<double> trajectory;
  /// MSE after every accepted step, all h-iterations concatenated.
  std::vector<double> history;
  double final_mse = 0.0;
  std::optional<CoefficientSet> coefficients;
  double nl_scale = 1.0;
};

/// Thrown when the objective exceeds ten times its initial value or stops being finite.
class TrainingDiverged : public NumericalError {
 public:
  TrainingDiverged(const std::string& what, ObjectiveReport report)
      : NumericalError(what), report_(std::move(report)) {}
  const ObjectiveReport& report() const { return report_; }

 private:
  ObjectiveReport report_;
};

/// Training MSE of a receiver on one received field, averaged over the SCOI.
///
/// Each channel's symbols are derotated by their mean phase and scaled to the
/// reference energy before the squared error is taken, so the objective
/// matches what the GMI estimator sees.
class TrainingObjective {
 public:
  /// `captured` as produced by capture_scoi.
  TrainingObjective(Receiver receiver, const std::vector<DualPolSignal>& captured);

  const Receiver& receiver() const { return rx_; }
  /// With the receiver's current coefficients and scale.
  double value() { return evaluate(nullptr); }
  double value(const CoefficientSet& coeffs);
  double value_at_scale(double xi);
  /// Value and dJ/dC in the materialized layout of DbpEngine::gradient.
  double value_and_gradient(const CoefficientSet& coeffs, std::vector<std::vector<double>>& grad);

 private:
  double evaluate(std::vector<ChannelRx>* symbol_grads);

  Receiver rx_;
  DbpEngine::State input_;
};

/// MSE after MPR removal and power matching, with d/d(rx) in dRe + j dIm form.
double matched_mse(const ChannelRx& rx, const ChannelSymbols& tx, ChannelRx* grad);

/// Iterates h = 0..N_ch-1, fitting the free taps of C_h by gradient descent
/// with Barzilai-Borwein steps and an Armijo backtracking line search while
/// earlier blocks stay fixed and later blocks stay zero. `init` warm-starts.
ObjectiveReport optimize_coefficients(TrainingObjective& objective, const TrainingConfig& cfg,
                                      const CoefficientSet& init);

/// Golden-section search for the nonlinear scale on [0, 1.5].
ObjectiveReport optimize_nl_scale(TrainingObjective& objective, double tolerance = 1e-3);

/// Contents of a coefficient file.
struct CoefficientFile {
  Method method = Method::essfm;
  double gamma_eff = 0.0;
  std::optional<CoefficientSet> coefficients;
  std::optional<double> nl_scale;
  std::map<std::string, std::string> metadata;
};

/// Versioned text file: key/value header, then one "h m value" row per free
/// parameter, with values in shortest round-trip decimal form.
void write_coefficients(const std::string& path, const CoefficientFile& file);
CoefficientFile read_coefficients(const std::string& path);

}  // namespace ccdbp
