#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "ccdbp/channel.hpp"
#include "ccdbp/dbp.hpp"
#include "ccdbp/txrx.hpp"

namespace ccdbp {

/// GMI in bits per symbol of one polarization under a circular Gaussian
/// auxiliary channel whose variance is the mean squared residual to the
/// transmitted points. Bit LLRs use exact log-sum-exp over the constellation.
/// `rx` should already be phase-corrected and normalized to unit power.
double estimate_gmi(const CVec& rx, const std::vector<std::uint8_t>& labels, const Qam64& qam);

/// 10 log10(sum |rx - tx|^2 / sum |tx|^2), floored at -150 dB.
double nmse_db(const CVec& rx, const CVec& tx);
double nmse_db(const ChannelRx& rx, const ChannelSymbols& tx);

struct ChannelMetrics {
  double gmi_4d = 0.0;
  double nmse_db = 0.0;
};

struct MetricsReport {
  std::string method;
  int n_steps = 0;
  double power_dbm = 0.0;
  std::vector<ChannelMetrics> channels;
  /// Mean of the per-channel values.
  double avg_gmi_4d = 0.0;
  double avg_nmse_db = 0.0;
};

/// Removes the mean phase, matches power and scores each channel
/// (GMI summed over both polarizations).
MetricsReport score(const std::vector<ChannelRx>& rx, const std::vector<ChannelSymbols>& tx);

/// Transmission setup shared by every point of a launch-power sweep.
struct Scenario {
  TxConfig tx;
  Link link;
  StepPlan plan;
  std::uint64_t noise_seed = 1;
};

struct SweepResult {
  /// reports[e][p]: equalizer e at power grid point p.
  std::vector<std::vector<MetricsReport>> reports;
  /// Grid index of the highest average GMI, per equalizer.
  std::vector<std::size_t> peak;
};

/// Runs transmission, DBP and scoring at every power of the grid. Every
/// equalizer sees the same simulated field at a given power, and all powers
/// share the symbol and noise seeds. Grid points run on up to `threads` workers.
SweepResult sweep_launch_power(const Scenario& scenario, const std::vector<DbpConfig>& equalizers,
                               const std::vector<double>& powers_dbm, unsigned threads = 1);

}  // namespace ccdbp
