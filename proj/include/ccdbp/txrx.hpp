#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <vector>

#include "ccdbp/aligned_vector.hpp"
#include "ccdbp/signal.hpp"

namespace ccdbp {

/// Square 64-QAM with unit average energy. Labels are 6 bits: the upper three
/// select the in-phase level and the lower three the quadrature level, each
/// through a reflected Gray code over the levels -7, -5, ..., 7.
class Qam64 {
 public:
  static constexpr int bits_per_symbol = 6;
  static constexpr int size = 64;

  Qam64();
  cplx point(std::uint8_t label) const { return points_[label]; }
  const std::array<cplx, size>& points() const { return points_; }
  /// Raw level (odd integer in [-7, 7]) of a 3-bit Gray-coded rail label.
  static int rail_level(unsigned gray3);
  /// 1/sqrt(42): mean |a + jb|^2 over the raw grid is 42.
  static double scale();

 private:
  std::array<cplx, size> points_;
};

const Qam64& qam64();

struct TxConfig {
  double symbol_rate = 41.67e9;
  double grid_spacing = 75e9;
  double rolloff = 0.1;
  int channels_per_superchannel = 4;
  /// 0 or an even count, split evenly below and above the SCOI.
  int side_superchannels = 0;
  double launch_power_dbm = 0.0;
  std::size_t n_symbols = 8192;
  std::uint64_t rng_seed = 1;
  /// Samples per symbol of the aggregate simulated field.
  int sim_samples_per_symbol = 16;

  void validate() const;
  int total_channels() const;
  /// Global index of SCOI channel i (channels are ordered by frequency).
  int scoi_channel(int i) const;
  /// Grid spacing snapped so that half of it is a whole number of frame bins
  /// (symbol_rate / n_symbols), keeping every channel on the periodic grid.
  double effective_grid_spacing() const;
  /// Carrier offset of global channel `index` from the SCOI center.
  double channel_offset(int index) const;
  double launch_power_w() const;
  double sim_sample_rate() const { return symbol_rate * sim_samples_per_symbol; }
};

struct PolSymbols {
  std::vector<std::uint8_t> labels;
  CVec symbols;
};

struct ChannelSymbols {
  PolSymbols x;
  PolSymbols y;
  /// Empirical mean of |symbol|^2 over both polarizations.
  double mean_energy() const;
};

struct SymbolFrame {
  std::vector<ChannelSymbols> channels;
  std::size_t n_symbols() const { return channels.empty() ? 0 : channels[0].x.labels.size(); }
};

/// Received symbols of one channel, aligned with its ChannelSymbols.
struct ChannelRx {
  CVec x;
  CVec y;
};

/// i.i.d. uniform labels per channel and polarization from seeded streams.
SymbolFrame generate_frame(const TxConfig& cfg);

/// RRC-shaped, power-scaled and multiplexed field at cfg.sim_sample_rate().
///
/// Each channel is scaled so its mean power over the frame equals the launch
/// power exactly, split equally between polarizations (the gain divides out
/// the frame's empirical symbol energy; see `receiver_gain`).
DualPolSignal shape_and_mux(const SymbolFrame& frame, const TxConfig& cfg);

/// Sample amplitude of one channel's transmitted symbols in the line field.
double transmit_amplitude(const ChannelSymbols& ch, const TxConfig& cfg);

/// Brings global channel `channel_index` to baseband, applies a brick-wall of
/// width min(grid spacing, target_rate) and resamples to `target_rate`.
DualPolSignal demux_channel(const DualPolSignal& field, int channel_index, const TxConfig& cfg,
                            double target_rate);

/// Inverse of demux for slots sampled at >= grid spacing: sums the given
/// baseband channels into one field at `rate`, centered at `center_offset`.
DualPolSignal remux(const std::vector<DualPolSignal>& channels, double rate,
                    std::size_t n_samples, double center_offset);

/// RRC matched filter followed by symbol-time sampling, as a linear map from
/// one polarization's samples to its symbols, with its exact adjoint.
///
/// The channel sits at `channel_offset` Hz from the baseband of the input;
/// the offset must be a whole number of bins. `gain` scales the output.
class SymbolExtractor {
 public:
  SymbolExtractor(std::size_t n_samples, double sample_rate, std::size_t n_symbols,
                  double symbol_rate, double rolloff, double channel_offset, double gain);

  std::size_t n_samples() const { return n_samples_; }
  std::size_t n_symbols() const { return n_symbols_; }

  void apply(const CVec& samples, CVec& symbols) const;
  /// samples_grad = A^H symbols_grad for the linear map A implemented by apply().
  void adjoint(const CVec& symbols_grad, CVec& samples_grad) const;

 private:
  struct Tap {
    std::size_t bin;
    std::size_t fold;
    double weight;
  };
  std::size_t n_samples_;
  std::size_t n_symbols_;
  double scale_;
  std::vector<Tap> taps_;
};

/// Gain that maps the line amplitude of `ch` back to unit-scale constellation points.
double receiver_gain(const ChannelSymbols& ch, const TxConfig& cfg);

/// Matched filter and sampling of a baseband channel; `gain` as in receiver_gain.
ChannelRx matched_filter_and_sample(const DualPolSignal& sig, const TxConfig& cfg, double gain);

/// arg(sum rx * conj(tx)) over both polarizations; 0 for an all-zero correlation.
double estimate_mpr(const ChannelRx& rx, const ChannelSymbols& tx);
/// rx * exp(-j * estimate_mpr(rx, tx)).
ChannelRx remove_mpr(const ChannelRx& rx, const ChannelSymbols& tx);
/// Scales rx so that its energy equals the energy of the reference symbols.
ChannelRx match_power(const ChannelRx& rx, const ChannelSymbols& tx);

}  // namespace ccdbp
