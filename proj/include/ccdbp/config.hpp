#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "ccdbp/channel.hpp"
#include "ccdbp/dbp.hpp"
#include "ccdbp/optimizer.hpp"
#include "ccdbp/txrx.hpp"

namespace ccdbp {

/// Everything one experiment needs. Defaults reproduce the reference setup:
/// a 4-channel 41.67 GBd 64-QAM superchannel with two neighbours, 15 x 80 km
/// of SMF with 5 dB noise figure EDFAs, and CC-ESSFM at 15 steps.
struct ExperimentConfig {
  std::uint64_t seed = 1;
  TxConfig tx;
  Link link;
  StepPlan plan;
  DbpConfig dbp;
  int nc0 = 32;
  int nc = 128;
  /// Half-length of the FF_ESSFM filter, at the full-field rate.
  int ff_nc0 = 128;
  Rational ff_samples_per_symbol{8};
  TrainingConfig training;
  std::vector<double> sweep_powers_dbm;
  std::vector<int> sweep_steps;
  std::vector<Method> sweep_methods;
  std::string output_dir = ".";

  ExperimentConfig();
  void validate() const;

  /// Sets the global seed and the training frame seed derived from it.
  void reseed(std::uint64_t s);
  std::uint64_t symbol_seed() const;
  std::uint64_t noise_seed() const;
  std::uint64_t training_symbol_seed() const;
  std::uint64_t training_noise_seed() const;

  /// DBP settings for one method and step count: the rate, the coefficient
  /// shape (impulse initialization) and the scale reset to 1.
  DbpConfig dbp_for(Method method, int n_steps) const;
  /// Transmitter for the evaluation frame at the configured launch power.
  TxConfig eval_tx() const;
  /// Transmitter for the training frame.
  TxConfig training_tx() const;
  /// The link with ASE switched on or off.
  Link link_with_noise(bool noise) const;
};

/// INI-style file: [section] headers and key = value lines. Unknown sections
/// or keys are errors; missing keys keep their defaults.
ExperimentConfig load_config(const std::string& path);
ExperimentConfig parse_config(const std::string& text);

/// "a:step:b" ranges and comma-separated lists.
std::vector<double> parse_number_list(const std::string& text);

}  // namespace ccdbp
