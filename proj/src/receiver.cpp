#include "ccdbp/receiver.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "ccdbp/errors.hpp"

namespace ccdbp {

namespace {

std::vector<double> engine_powers(const TxConfig& tx, const DbpConfig& dbp) {
  const double p = tx.launch_power_w();
  if (is_full_field(dbp.method)) return {p * tx.channels_per_superchannel};
  return std::vector<double>(static_cast<std::size_t>(tx.channels_per_superchannel), p);
}

std::vector<double> engine_offsets(const TxConfig& tx, const DbpConfig& dbp) {
  if (is_full_field(dbp.method)) return {0.0};
  std::vector<double> off;
  for (int i = 0; i < tx.channels_per_superchannel; ++i)
    off.push_back(tx.channel_offset(tx.scoi_channel(i)));
  return off;
}

std::size_t dbp_length(const TxConfig& tx, const DbpConfig& dbp) {
  const Rational n = Rational(static_cast<std::int64_t>(tx.n_symbols)) * dbp.samples_per_symbol;
  if (!n.is_integer())
    throw ConfigError("n_symbols * samples_per_symbol = " + n.str() + " is not an integer");
  return static_cast<std::size_t>(n.num());
}

}  // namespace

Rational capture_samples_per_symbol(const TxConfig& tx) {
  const double need = std::max(tx.effective_grid_spacing(), (1.0 + tx.rolloff) * tx.symbol_rate);
  const auto quarters = static_cast<std::int64_t>(std::ceil(4.0 * need / tx.symbol_rate - 1e-9));
  return Rational(quarters, 4);
}

std::vector<DualPolSignal> capture_scoi(const DualPolSignal& field, const TxConfig& tx) {
  const Rational sps = capture_samples_per_symbol(tx);
  if (!(Rational(static_cast<std::int64_t>(tx.n_symbols)) * sps).is_integer())
    throw ConfigError("n_symbols must be a multiple of " + std::to_string(sps.den()));
  std::vector<DualPolSignal> out;
  for (int i = 0; i < tx.channels_per_superchannel; ++i) {
    DualPolSignal ch = demux_channel(field, tx.scoi_channel(i), tx, tx.symbol_rate * sps.value());
    ch.center_offset = tx.channel_offset(tx.scoi_channel(i));
    out.push_back(std::move(ch));
  }
  return out;
}

double dbp_sample_rate(const TxConfig& tx, const DbpConfig& dbp) {
  return tx.symbol_rate * dbp.samples_per_symbol.value();
}

Receiver::Receiver(const Link& link, const DbpConfig& dbp, const TxConfig& tx,
                   const SymbolFrame& frame)
    : tx_(tx),
      engine_(link, dbp, engine_powers(tx, dbp), engine_offsets(tx, dbp), dbp_length(tx, dbp),
              dbp_sample_rate(tx, dbp)),
      dbp_rate_(dbp_sample_rate(tx, dbp)) {
  tx_.validate();
  if (frame.channels.size() != static_cast<std::size_t>(tx_.total_channels()) ||
      frame.n_symbols() != tx_.n_symbols)
    throw ConfigError("symbol frame does not match the transmitter configuration");
  const bool ff = is_full_field(dbp.method);
  const double norm = std::sqrt(engine_.channel_power()[0]);
  for (int i = 0; i < tx_.channels_per_superchannel; ++i) {
    const ChannelSymbols& ch = frame.channels[static_cast<std::size_t>(tx_.scoi_channel(i))];
    refs_.push_back(ch);
    gains_.push_back(receiver_gain(ch, tx_));
    const double offset = ff ? tx_.channel_offset(tx_.scoi_channel(i)) : 0.0;
    const double scale = ff ? norm : std::sqrt(engine_.channel_power()[static_cast<std::size_t>(i)]);
    extractors_.emplace_back(engine_.n_samples(), dbp_rate_, tx_.n_symbols, tx_.symbol_rate,
                             tx_.rolloff, offset, scale * gains_.back());
  }
}

const ChannelSymbols& Receiver::reference(std::size_t i) const {
  if (i >= refs_.size()) throw ConfigError("SCOI channel " + std::to_string(i) + " out of range");
  return refs_[i];
}

DbpEngine::State Receiver::prepare(const std::vector<DualPolSignal>& captured) const {
  if (captured.size() != n_channels())
    throw ConfigError("expected " + std::to_string(n_channels()) + " captured channels, got " +
                      std::to_string(captured.size()));
  const bool ff = is_full_field(engine_.config().method);
  std::vector<DualPolSignal> chans;
  for (std::size_t i = 0; i < captured.size(); ++i) {
    const double carrier = tx_.channel_offset(tx_.scoi_channel(static_cast<int>(i)));
    if (std::abs(captured[i].center_offset - carrier) > 1e-6 * tx_.symbol_rate)
      throw ConfigError("captured channel " + std::to_string(i) + " is not at its grid slot");
    const double bw = std::min({tx_.effective_grid_spacing(), dbp_rate_, captured[i].sample_rate});
    // Full-field channels stay narrow until they are recombined.
    const double rate = ff ? captured[i].sample_rate : dbp_rate_;
    chans.push_back(resample(captured[i], rate, bw));
  }
  if (ff)
    chans = {remux(chans, dbp_rate_, engine_.n_samples(), 0.0)};
  DbpEngine::State state;
  for (std::size_t i = 0; i < chans.size(); ++i) {
    const double s = 1.0 / std::sqrt(engine_.channel_power()[i]);
    for (const CVec* pol : {&chans[i].x, &chans[i].y}) {
      CVec v(*pol);
      for (auto& z : v) z *= s;
      state.push_back(std::move(v));
    }
  }
  return state;
}

std::vector<ChannelRx> Receiver::extract(const DbpEngine::State& out) const {
  const bool ff = is_full_field(engine_.config().method);
  std::vector<ChannelRx> rx(n_channels());
  for (std::size_t i = 0; i < n_channels(); ++i) {
    const std::size_t src = ff ? 0 : 2 * i;
    extractors_[i].apply(out[src], rx[i].x);
    extractors_[i].apply(out[src + 1], rx[i].y);
  }
  return rx;
}

DbpEngine::State Receiver::extract_adjoint(const std::vector<ChannelRx>& grads) const {
  const bool ff = is_full_field(engine_.config().method);
  DbpEngine::State g(ff ? 2 : 2 * n_channels(), CVec(engine_.n_samples()));
  CVec tmp;
  for (std::size_t i = 0; i < n_channels(); ++i) {
    const std::size_t dst = ff ? 0 : 2 * i;
    extractors_[i].adjoint(grads[i].x, tmp);
    for (std::size_t k = 0; k < tmp.size(); ++k) g[dst][k] += tmp[k];
    extractors_[i].adjoint(grads[i].y, tmp);
    for (std::size_t k = 0; k < tmp.size(); ++k) g[dst + 1][k] += tmp[k];
  }
  return g;
}

std::vector<ChannelRx> Receiver::process(const std::vector<DualPolSignal>& captured) const {
  DbpEngine::State state = prepare(captured);
  engine_.propagate(state);
  return extract(state);
}

}  // namespace ccdbp
