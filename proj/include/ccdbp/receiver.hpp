#pragma once

#include <cstddef>
#include <vector>

#include "ccdbp/dbp.hpp"
#include "ccdbp/txrx.hpp"

namespace ccdbp {

/// Smallest multiple of symbol_rate / 4 that holds a whole grid slot.
Rational capture_samples_per_symbol(const TxConfig& tx);

/// The SCOI channels of a received field, each demultiplexed to baseband at
/// capture_samples_per_symbol and tagged with its carrier offset.
std::vector<DualPolSignal> capture_scoi(const DualPolSignal& field, const TxConfig& tx);

/// Receiver chain for the channels of the superchannel of interest: DBP,
/// matched filtering and symbol-time sampling of captured channels.
///
/// Per-channel methods see each channel resampled to
/// samples_per_symbol * symbol_rate. Full-field methods see the channels
/// recombined into one field at that rate, centered on the superchannel.
class Receiver {
 public:
  Receiver(const Link& link, const DbpConfig& dbp, const TxConfig& tx, const SymbolFrame& frame);

  std::size_t n_channels() const { return gains_.size(); }
  const DbpEngine& engine() const { return engine_; }
  DbpEngine& engine() { return engine_; }
  const TxConfig& tx() const { return tx_; }
  /// Transmitted symbols of SCOI channel i.
  const ChannelSymbols& reference(std::size_t i) const;

  /// Normalized DBP input state from the output of capture_scoi.
  DbpEngine::State prepare(const std::vector<DualPolSignal>& captured) const;
  /// Matched-filter outputs of a DBP output state, before MPR removal.
  std::vector<ChannelRx> extract(const DbpEngine::State& out) const;
  /// d(objective)/d(state) from per-channel symbol gradients (adjoint of extract).
  DbpEngine::State extract_adjoint(const std::vector<ChannelRx>& grads) const;

  /// prepare, propagate and extract.
  std::vector<ChannelRx> process(const std::vector<DualPolSignal>& captured) const;

 private:
  TxConfig tx_;
  std::vector<ChannelSymbols> refs_;
  std::vector<double> gains_;
  DbpEngine engine_;
  std::vector<SymbolExtractor> extractors_;
  double dbp_rate_;
};

/// Sample rate the receiver runs DBP at.
double dbp_sample_rate(const TxConfig& tx, const DbpConfig& dbp);

}  // namespace ccdbp
