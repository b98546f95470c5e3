#include <doctest.h>

#include <bit>
#include <cmath>
#include <random>

#include "ccdbp/errors.hpp"
#include "ccdbp/txrx.hpp"

using namespace ccdbp;

namespace {

TxConfig small_config() {
  TxConfig cfg;
  cfg.n_symbols = 512;
  cfg.rng_seed = 77;
  cfg.launch_power_dbm = 2.0;
  return cfg;
}

double max_diff(const CVec& a, const CVec& b) {
  double m = 0.0;
  for (std::size_t k = 0; k < a.size(); ++k) m = std::max(m, std::abs(a[k] - b[k]));
  return m;
}

}  // namespace

TEST_CASE("64-QAM has unit energy and Gray-labelled rails") {
  const Qam64& q = qam64();
  double e = 0.0;
  for (const cplx& p : q.points()) e += std::norm(p);
  CHECK(e / 64.0 == doctest::Approx(1.0).epsilon(1e-15));
  for (unsigned a = 0; a < 8; ++a) {
    for (unsigned b = 0; b < 8; ++b) {
      if (std::abs(Qam64::rail_level(a) - Qam64::rail_level(b)) == 2)
        CHECK(std::popcount(a ^ b) == 1);
    }
  }
  CHECK(q.point(0).real() == doctest::Approx(-7.0 / std::sqrt(42.0)));
}

TEST_CASE("frames are reproducible per seed") {
  TxConfig cfg = small_config();
  const SymbolFrame a = generate_frame(cfg);
  const SymbolFrame b = generate_frame(cfg);
  CHECK(a.channels[2].y.labels == b.channels[2].y.labels);
  CHECK(a.channels[0].x.labels != a.channels[1].x.labels);
  CHECK(a.channels[0].x.labels != a.channels[0].y.labels);
  cfg.rng_seed = 78;
  CHECK(generate_frame(cfg).channels[0].x.labels != a.channels[0].x.labels);
}

TEST_CASE("grid spacing snaps to whole frame bins") {
  const TxConfig cfg = small_config();
  const double bin = cfg.symbol_rate / static_cast<double>(cfg.n_symbols);
  const double half = cfg.effective_grid_spacing() / 2.0 / bin;
  CHECK(std::abs(half - std::round(half)) < 1e-9);
  CHECK(std::abs(cfg.effective_grid_spacing() - cfg.grid_spacing) <= bin);
  CHECK(cfg.channel_offset(0) == doctest::Approx(-1.5 * cfg.effective_grid_spacing()));
}

TEST_CASE("each channel carries exactly the launch power") {
  const TxConfig cfg = small_config();
  const SymbolFrame frame = generate_frame(cfg);
  const DualPolSignal field = shape_and_mux(frame, cfg);
  const double p = cfg.launch_power_w();
  CHECK(field.mean_power() == doctest::Approx(4.0 * p).epsilon(1e-9));
  for (int c = 0; c < 4; ++c) {
    const DualPolSignal ch = demux_channel(field, c, cfg, 2.0 * cfg.symbol_rate);
    CHECK(std::abs(10.0 * std::log10(ch.mean_power() / p)) < 0.01);
  }
}

TEST_CASE("noiseless back-to-back returns the transmitted symbols") {
  const TxConfig cfg = small_config();
  const SymbolFrame frame = generate_frame(cfg);
  const DualPolSignal field = shape_and_mux(frame, cfg);
  for (int c = 0; c < 4; ++c) {
    CAPTURE(c);
    const DualPolSignal ch = demux_channel(field, c, cfg, 2.0 * cfg.symbol_rate);
    const ChannelRx rx = matched_filter_and_sample(ch, cfg, receiver_gain(frame.channels[c], cfg));
    CHECK(max_diff(rx.x, frame.channels[c].x.symbols) < 1e-10);
    CHECK(max_diff(rx.y, frame.channels[c].y.symbols) < 1e-10);
  }
}

TEST_CASE("remux inverts demux") {
  const TxConfig cfg = small_config();
  const DualPolSignal field = shape_and_mux(generate_frame(cfg), cfg);
  std::vector<DualPolSignal> chans;
  for (int c = 0; c < 4; ++c) chans.push_back(demux_channel(field, c, cfg, 2.0 * cfg.symbol_rate));
  const DualPolSignal back = remux(chans, field.sample_rate, field.size(), 0.0);
  CHECK(max_diff(back.x, field.x) < 1e-12);
  CHECK(max_diff(back.y, field.y) < 1e-12);
}

TEST_CASE("demux refuses a rate below the channel bandwidth") {
  const TxConfig cfg = small_config();
  const DualPolSignal field = shape_and_mux(generate_frame(cfg), cfg);
  CHECK_THROWS_AS(demux_channel(field, 0, cfg, cfg.symbol_rate), ConfigError);
}

TEST_CASE("symbol extractor adjoint satisfies the inner-product identity") {
  const std::size_t n = 256, k = 32;
  const double rs = 1.0, fs = 8.0;
  const SymbolExtractor ex(n, fs, k, rs, 0.1, 2.0, 1.7);
  std::mt19937_64 rng(9);
  std::normal_distribution<double> nd;
  CVec x(n), s(k);
  for (auto& v : x) v = cplx(nd(rng), nd(rng));
  for (auto& v : s) v = cplx(nd(rng), nd(rng));
  CVec ax, ahs;
  ex.apply(x, ax);
  ex.adjoint(s, ahs);
  cplx lhs(0, 0), rhs(0, 0);
  for (std::size_t i = 0; i < k; ++i) lhs += ax[i] * std::conj(s[i]);
  for (std::size_t i = 0; i < n; ++i) rhs += x[i] * std::conj(ahs[i]);
  CHECK(std::abs(lhs - rhs) < 1e-12 * std::abs(lhs));
}

TEST_CASE("phase rotation removal is exact and idempotent") {
  const TxConfig cfg = small_config();
  const SymbolFrame frame = generate_frame(cfg);
  const ChannelSymbols& tx = frame.channels[1];
  ChannelRx rx{tx.x.symbols, tx.y.symbols};
  const cplx rot = std::polar(0.8, 1.1);
  for (auto& v : rx.x) v *= rot;
  for (auto& v : rx.y) v *= rot;
  CHECK(estimate_mpr(rx, tx) == doctest::Approx(1.1).epsilon(1e-13));
  const ChannelRx once = remove_mpr(rx, tx);
  const ChannelRx twice = remove_mpr(once, tx);
  CHECK(max_diff(once.x, twice.x) < 1e-12);
  const ChannelRx matched = match_power(once, tx);
  CHECK(max_diff(matched.x, tx.x.symbols) < 1e-12);
  CHECK(max_diff(matched.y, tx.y.symbols) < 1e-12);
}
