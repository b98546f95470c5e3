#pragma once

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "ccdbp/config.hpp"
#include "ccdbp/metrics.hpp"
#include "ccdbp/optimizer.hpp"
#include "ccdbp/receiver.hpp"

namespace ccdbp {

inline constexpr const char* kCsvHeader = "method,N_s,power_dBm,channel,gmi_bits_per_4D,nmse_dB,seed,peak_flag";

/// Detail rows of one report: one per channel, then the channel average.
std::vector<std::string> csv_rows(const MetricsReport& report, std::uint64_t seed);
/// The channel-average row with peak_flag set.
std::string csv_peak_row(const MetricsReport& report, std::uint64_t seed);

/// Training data: the captured SCOI channels of the training frame.
struct TrainingData {
  TxConfig tx;
  SymbolFrame frame;
  std::vector<DualPolSignal> captured;
};

/// Simulates the configured training frame.
TrainingData simulate_training_data(const ExperimentConfig& cfg);

/// Trains one method at one step count. Methods without trainables return a
/// file with neither coefficients nor scale. `init` warm-starts ESSFM-type
/// methods and must have the configured shape.
CoefficientFile train_method(const ExperimentConfig& cfg, Method method, int n_steps,
                             const TrainingData& data, const std::optional<CoefficientSet>& init,
                             double* final_mse = nullptr);

/// Builds the DBP configuration for evaluating `file` and checks it matches
/// the configured method, shape and nonlinear coefficient.
DbpConfig apply_coefficients(const ExperimentConfig& cfg, Method method, int n_steps,
                             const CoefficientFile& file);

/// Runs the ccdbp command line. Returns the process exit code: 0 success,
/// 2 configuration error, 3 numerical failure, 4 I/O failure.
int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace ccdbp
