#include "ccdbp/txrx.hpp"

#include <cmath>
#include <numbers>
#include <random>
#include <string>

#include "ccdbp/errors.hpp"
#include "ccdbp/fft.hpp"

namespace ccdbp {

Qam64::Qam64() {
  const double s = scale();
  for (int label = 0; label < size; ++label) {
    const int re = rail_level(static_cast<unsigned>(label) >> 3);
    const int im = rail_level(static_cast<unsigned>(label) & 7u);
    points_[label] = cplx(re * s, im * s);
  }
}

int Qam64::rail_level(unsigned gray3) {
  unsigned idx = gray3 & 7u;
  idx ^= idx >> 1;
  idx ^= idx >> 2;
  return 2 * static_cast<int>(idx) - 7;
}

double Qam64::scale() { return 1.0 / std::sqrt(42.0); }

const Qam64& qam64() {
  static const Qam64 instance;
  return instance;
}

void TxConfig::validate() const {
  if (!(symbol_rate > 0.0)) throw ConfigError("symbol_rate must be positive");
  if (rolloff < 0.0 || rolloff > 1.0) throw ConfigError("rolloff must lie in [0, 1]");
  if (grid_spacing < (1.0 + rolloff) * symbol_rate)
    throw ConfigError("grid spacing is narrower than the channel bandwidth");
  if (channels_per_superchannel < 1) throw ConfigError("need at least one channel");
  if (side_superchannels < 0 || side_superchannels % 2 != 0)
    throw ConfigError("side_superchannels must be 0 or an even count");
  if (n_symbols == 0) throw ConfigError("n_symbols must be positive");
  if (sim_samples_per_symbol < 2) throw ConfigError("sim_samples_per_symbol must be >= 2");
}

int TxConfig::total_channels() const {
  return channels_per_superchannel * (1 + side_superchannels);
}

int TxConfig::scoi_channel(int i) const {
  if (i < 0 || i >= channels_per_superchannel)
    throw ConfigError("SCOI channel index " + std::to_string(i) + " out of range");
  return (side_superchannels / 2) * channels_per_superchannel + i;
}

double TxConfig::effective_grid_spacing() const {
  const double bin = symbol_rate / static_cast<double>(n_symbols);
  return 2.0 * std::round(grid_spacing / (2.0 * bin)) * bin;
}

double TxConfig::channel_offset(int index) const {
  if (index < 0 || index >= total_channels())
    throw ConfigError("channel index " + std::to_string(index) + " out of range");
  const double centered = index - (total_channels() - 1) / 2.0;
  return centered * effective_grid_spacing();
}

double TxConfig::launch_power_w() const { return 1e-3 * std::pow(10.0, launch_power_dbm / 10.0); }

double ChannelSymbols::mean_energy() const {
  double e = 0.0;
  for (const cplx& s : x.symbols) e += std::norm(s);
  for (const cplx& s : y.symbols) e += std::norm(s);
  const auto n = static_cast<double>(x.symbols.size() + y.symbols.size());
  return n > 0 ? e / n : 0.0;
}

SymbolFrame generate_frame(const TxConfig& cfg) {
  cfg.validate();
  const Qam64& qam = qam64();
  SymbolFrame frame;
  frame.channels.resize(static_cast<std::size_t>(cfg.total_channels()));
  for (std::size_t c = 0; c < frame.channels.size(); ++c) {
    for (int p = 0; p < 2; ++p) {
      std::seed_seq seq{static_cast<std::uint32_t>(cfg.rng_seed),
                        static_cast<std::uint32_t>(cfg.rng_seed >> 32),
                        static_cast<std::uint32_t>(c), static_cast<std::uint32_t>(p)};
      std::mt19937_64 rng(seq);
      PolSymbols& pol = p == 0 ? frame.channels[c].x : frame.channels[c].y;
      pol.labels.resize(cfg.n_symbols);
      pol.symbols.resize(cfg.n_symbols);
      for (std::size_t k = 0; k < cfg.n_symbols; ++k) {
        const auto label = static_cast<std::uint8_t>(rng() >> 58);
        pol.labels[k] = label;
        pol.symbols[k] = qam.point(label);
      }
    }
  }
  return frame;
}

double transmit_amplitude(const ChannelSymbols& ch, const TxConfig& cfg) {
  const double e = ch.mean_energy();
  if (!(e > 0.0)) throw ConfigError("channel has zero symbol energy");
  return std::sqrt(cfg.launch_power_w() / 2.0 / e);
}

double receiver_gain(const ChannelSymbols& ch, const TxConfig& cfg) {
  return 1.0 / transmit_amplitude(ch, cfg);
}

namespace {

// Signed bin index of bin k on an n-point grid.
long signed_bin(std::size_t k, std::size_t n) {
  return 2 * k < n ? static_cast<long>(k) : static_cast<long>(k) - static_cast<long>(n);
}

std::size_t wrap(long k, std::size_t n) {
  const long ni = static_cast<long>(n);
  return static_cast<std::size_t>(((k % ni) + ni) % ni);
}

long whole_bins(double offset, std::size_t n, double fs, const char* what) {
  const double bins = offset * static_cast<double>(n) / fs;
  const double rounded = std::round(bins);
  if (std::abs(bins - rounded) > 1e-6)
    throw ConfigError(std::string(what) + " is not a whole number of frequency bins");
  return static_cast<long>(rounded);
}

// Baseband RRC-shaped polarization at `sps` samples/symbol with sample amplitude `amp`.
CVec shape_pol(const CVec& symbols, std::size_t sps, double symbol_rate, double rolloff,
               double amp) {
  const std::size_t k_sym = symbols.size();
  const std::size_t n = k_sym * sps;
  const double fs = symbol_rate * static_cast<double>(sps);
  CVec a(k_sym);
  fft::forward(symbols, a);
  const CVec h = SpectralFilter::root_raised_cosine(symbol_rate, rolloff).response(n, fs);
  // Zero-stuffing to sps samples/symbol repeats the symbol spectrum; sps
  // compensates the decimation factor so the matched filter returns `amp`.
  const double g = amp * static_cast<double>(sps) / static_cast<double>(n);
  CVec spec(n);
  for (std::size_t j = 0; j < n; ++j) {
    if (h[j] == cplx(0.0, 0.0)) continue;
    spec[j] = a[wrap(signed_bin(j, n), k_sym)] * (h[j].real() * g);
  }
  CVec out(n);
  fft::inverse(spec, out);
  return out;
}

}  // namespace

DualPolSignal shape_and_mux(const SymbolFrame& frame, const TxConfig& cfg) {
  cfg.validate();
  if (static_cast<int>(frame.channels.size()) != cfg.total_channels())
    throw ConfigError("frame channel count does not match the configuration");
  const std::size_t k_sym = frame.n_symbols();
  if (k_sym != cfg.n_symbols) throw ConfigError("frame length does not match n_symbols");
  const auto sps = static_cast<std::size_t>(cfg.sim_samples_per_symbol);
  const double fs = cfg.sim_sample_rate();
  const double edge = std::abs(cfg.channel_offset(0)) + (1.0 + cfg.rolloff) * cfg.symbol_rate / 2.0;
  if (edge >= fs / 2.0)
    throw ConfigError("simulation rate " + std::to_string(fs) +
                      " Hz is too low for the multiplex (band edge " + std::to_string(edge) +
                      " Hz)");

  DualPolSignal field(k_sym * sps, fs, 0.0);
  for (std::size_t c = 0; c < frame.channels.size(); ++c) {
    const ChannelSymbols& ch = frame.channels[c];
    const double amp = transmit_amplitude(ch, cfg);
    DualPolSignal base;
    base.sample_rate = fs;
    base.center_offset = cfg.channel_offset(static_cast<int>(c));
    base.x = shape_pol(ch.x.symbols, sps, cfg.symbol_rate, cfg.rolloff, amp);
    base.y = shape_pol(ch.y.symbols, sps, cfg.symbol_rate, cfg.rolloff, amp);
    const DualPolSignal placed = frequency_shift(base, base.center_offset);
    for (std::size_t k = 0; k < field.size(); ++k) {
      field.x[k] += placed.x[k];
      field.y[k] += placed.y[k];
    }
  }
  return field;
}

DualPolSignal demux_channel(const DualPolSignal& field, int channel_index, const TxConfig& cfg,
                            double target_rate) {
  field.validate();
  const double offset = cfg.channel_offset(channel_index);
  const double occupied = (1.0 + cfg.rolloff) * cfg.symbol_rate;
  if (target_rate < occupied * (1.0 - 1e-12))
    throw ConfigError("target rate " + std::to_string(target_rate) +
                      " Hz is below the channel bandwidth " + std::to_string(occupied) + " Hz");
  const double df = -(offset - field.center_offset);
  whole_bins(df, field.size(), field.sample_rate, "channel offset");
  DualPolSignal base = frequency_shift(field, df);
  const double bw = std::min(cfg.effective_grid_spacing(), target_rate);
  base = apply_spectral_filter(base, SpectralFilter::brickwall(bw));
  return resample(base, target_rate, std::min(bw, occupied));
}

DualPolSignal remux(const std::vector<DualPolSignal>& channels, double rate, std::size_t n_samples,
                    double center_offset) {
  DualPolSignal out(n_samples, rate, center_offset);
  CVec acc_x(n_samples), acc_y(n_samples);
  for (const DualPolSignal& ch : channels) {
    ch.validate();
    const std::size_t n_c = ch.size();
    // Both grids must share the bin spacing (same frame duration).
    if (std::abs(ch.sample_rate / static_cast<double>(n_c) - rate / static_cast<double>(n_samples)) >
        1e-9 * rate / static_cast<double>(n_samples))
      throw ConfigError("remux: channel frame duration differs from the output");
    const long off = whole_bins(ch.center_offset - center_offset, n_samples, rate, "remux offset");
    const double scale = 1.0 / static_cast<double>(n_c);
    for (auto [in, acc] : {std::pair{&ch.x, &acc_x}, std::pair{&ch.y, &acc_y}}) {
      CVec spec(n_c);
      fft::forward(*in, spec);
      for (std::size_t k = 0; k < n_c; ++k) {
        if (n_c % 2 == 0 && 2 * k == n_c) continue;
        const long target = signed_bin(k, n_c) + off;
        if (2 * std::abs(target) >= static_cast<long>(n_samples))
          throw ConfigError("remux: channel content falls outside the output band");
        (*acc)[wrap(target, n_samples)] += spec[k] * scale;
      }
    }
  }
  fft::inverse(acc_x, out.x);
  fft::inverse(acc_y, out.y);
  return out;
}

SymbolExtractor::SymbolExtractor(std::size_t n_samples, double sample_rate, std::size_t n_symbols,
                                 double symbol_rate, double rolloff, double channel_offset,
                                 double gain)
    : n_samples_(n_samples), n_symbols_(n_symbols) {
  if (n_samples == 0 || n_symbols == 0) throw ConfigError("extractor: empty frame");
  const double dur_samples = static_cast<double>(n_samples) / sample_rate;
  const double dur_symbols = static_cast<double>(n_symbols) / symbol_rate;
  if (std::abs(dur_samples - dur_symbols) > 1e-9 * dur_symbols)
    throw ConfigError("extractor: sample and symbol frames have different durations");
  const double half_band = (1.0 + rolloff) * symbol_rate / 2.0;
  if (std::abs(channel_offset) + half_band > sample_rate / 2.0 * (1.0 + 1e-12))
    throw ConfigError("extractor: channel band exceeds the sampled band");
  const long off = whole_bins(channel_offset, n_samples, sample_rate, "channel offset");
  scale_ = gain / static_cast<double>(n_samples);
  const CVec h = SpectralFilter::root_raised_cosine(symbol_rate, rolloff)
                     .response(n_samples, sample_rate, 0.0);
  // h is evaluated at baseband of the input grid; shift it onto the channel.
  for (std::size_t j = 0; j < n_samples; ++j) {
    const long rel = signed_bin(j, n_samples) - off;
    if (2 * std::abs(rel) >= static_cast<long>(n_samples)) continue;
    const double w = h[wrap(rel, n_samples)].real();
    if (w == 0.0) continue;
    taps_.push_back({j, wrap(rel, n_symbols), w});
  }
}

void SymbolExtractor::apply(const CVec& samples, CVec& symbols) const {
  if (samples.size() != n_samples_) throw ConfigError("extractor: input length mismatch");
  CVec spec(n_samples_);
  fft::forward(samples, spec);
  CVec folded(n_symbols_);
  for (const Tap& t : taps_) folded[t.fold] += spec[t.bin] * t.weight;
  symbols.resize(n_symbols_);
  fft::inverse(folded, symbols);
  for (auto& s : symbols) s *= scale_;
}

void SymbolExtractor::adjoint(const CVec& symbols_grad, CVec& samples_grad) const {
  if (symbols_grad.size() != n_symbols_) throw ConfigError("extractor: gradient length mismatch");
  CVec folded(n_symbols_);
  fft::forward(symbols_grad, folded);
  CVec spec(n_samples_);
  for (const Tap& t : taps_) spec[t.bin] += folded[t.fold] * t.weight;
  samples_grad.resize(n_samples_);
  fft::inverse(spec, samples_grad);
  for (auto& s : samples_grad) s *= scale_;
}

ChannelRx matched_filter_and_sample(const DualPolSignal& sig, const TxConfig& cfg, double gain) {
  sig.validate();
  if (sig.sample_rate < (1.0 + cfg.rolloff) * cfg.symbol_rate * (1.0 - 1e-12))
    throw ConfigError("matched filter input must have at least (1+rolloff) samples/symbol");
  const std::size_t k_sym =
      resampled_length(sig.size(), sig.sample_rate, cfg.symbol_rate);
  const SymbolExtractor ex(sig.size(), sig.sample_rate, k_sym, cfg.symbol_rate, cfg.rolloff, 0.0,
                           gain);
  ChannelRx rx;
  ex.apply(sig.x, rx.x);
  ex.apply(sig.y, rx.y);
  return rx;
}

double estimate_mpr(const ChannelRx& rx, const ChannelSymbols& tx) {
  if (rx.x.size() != tx.x.symbols.size() || rx.y.size() != tx.y.symbols.size())
    throw ConfigError("remove_mpr: length mismatch");
  cplx corr(0.0, 0.0);
  for (std::size_t k = 0; k < rx.x.size(); ++k) corr += rx.x[k] * std::conj(tx.x.symbols[k]);
  for (std::size_t k = 0; k < rx.y.size(); ++k) corr += rx.y[k] * std::conj(tx.y.symbols[k]);
  if (corr == cplx(0.0, 0.0)) return 0.0;
  return std::arg(corr);
}

ChannelRx remove_mpr(const ChannelRx& rx, const ChannelSymbols& tx) {
  const double theta = estimate_mpr(rx, tx);
  ChannelRx out = rx;
  if (theta == 0.0) return out;
  const cplx rot = std::polar(1.0, -theta);
  for (auto& v : out.x) v *= rot;
  for (auto& v : out.y) v *= rot;
  return out;
}

ChannelRx match_power(const ChannelRx& rx, const ChannelSymbols& tx) {
  double e_rx = 0.0, e_tx = 0.0;
  for (const cplx& v : rx.x) e_rx += std::norm(v);
  for (const cplx& v : rx.y) e_rx += std::norm(v);
  for (const cplx& v : tx.x.symbols) e_tx += std::norm(v);
  for (const cplx& v : tx.y.symbols) e_tx += std::norm(v);
  ChannelRx out = rx;
  if (e_rx == 0.0) return out;
  const double g = std::sqrt(e_tx / e_rx);
  for (auto& v : out.x) v *= g;
  for (auto& v : out.y) v *= g;
  return out;
}

}  // namespace ccdbp
