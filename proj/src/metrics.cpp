#include "ccdbp/metrics.hpp"

#include <algorithm>
#include <array>
#include <atomic>
#include <cmath>
#include <exception>
#include <limits>
#include <mutex>
#include <thread>

#include "ccdbp/errors.hpp"
#include "ccdbp/experiment.hpp"
#include "ccdbp/receiver.hpp"

namespace ccdbp {

namespace {

constexpr double kNmseFloorDb = -150.0;

double log_sum_exp(const double* v, const int* idx, int count) {
  double m = -std::numeric_limits<double>::infinity();
  for (int j = 0; j < count; ++j) m = std::max(m, v[idx[j]]);
  double s = 0.0;
  for (int j = 0; j < count; ++j) s += std::exp(v[idx[j]] - m);
  return m + std::log(s);
}

struct BitSubsets {
  // members[i][b]: labels whose bit i equals b.
  std::array<std::array<std::array<int, 32>, 2>, 6> members;
  std::array<int, 64> all;
};

const BitSubsets& bit_subsets() {
  static const BitSubsets s = [] {
    BitSubsets out{};
    for (int i = 0; i < 6; ++i) {
      int n0 = 0, n1 = 0;
      for (int l = 0; l < 64; ++l) ((l >> i) & 1 ? out.members[i][1][n1++] : out.members[i][0][n0++]) = l;
    }
    for (int l = 0; l < 64; ++l) out.all[l] = l;
    return out;
  }();
  return s;
}

}  // namespace

double estimate_gmi(const CVec& rx, const std::vector<std::uint8_t>& labels, const Qam64& qam) {
  if (rx.size() != labels.size()) throw ConfigError("gmi: length mismatch");
  if (rx.empty()) throw ConfigError("gmi: empty input");
  const auto& pts = qam.points();
  double var = 0.0;
  for (std::size_t k = 0; k < rx.size(); ++k) {
    if (labels[k] >= Qam64::size) throw ConfigError("gmi: label out of range");
    var += std::norm(rx[k] - pts[labels[k]]);
  }
  var /= static_cast<double>(rx.size());
  if (!std::isfinite(var)) throw NumericalError("gmi: non-finite received symbols");
  constexpr int m = Qam64::bits_per_symbol;
  if (var == 0.0) return m;

  const BitSubsets& sub = bit_subsets();
  std::array<double, 64> metric{};
  double loss = 0.0;
  for (std::size_t k = 0; k < rx.size(); ++k) {
    for (int j = 0; j < 64; ++j) metric[j] = -std::norm(rx[k] - pts[j]) / var;
    const double total = log_sum_exp(metric.data(), sub.all.data(), 64);
    for (int i = 0; i < m; ++i) {
      const int b = (labels[k] >> i) & 1;
      loss += total - log_sum_exp(metric.data(), sub.members[i][b].data(), 32);
    }
  }
  return m - loss / (std::log(2.0) * static_cast<double>(rx.size()));
}

double nmse_db(const CVec& rx, const CVec& tx) {
  if (rx.size() != tx.size()) throw ConfigError("nmse: length mismatch");
  double err = 0.0, ref = 0.0;
  for (std::size_t k = 0; k < rx.size(); ++k) {
    err += std::norm(rx[k] - tx[k]);
    ref += std::norm(tx[k]);
  }
  if (!(ref > 0.0)) throw ConfigError("nmse: reference has zero energy");
  if (err == 0.0) return kNmseFloorDb;
  return std::max(kNmseFloorDb, 10.0 * std::log10(err / ref));
}

double nmse_db(const ChannelRx& rx, const ChannelSymbols& tx) {
  CVec r = rx.x, t = tx.x.symbols;
  r.insert(r.end(), rx.y.begin(), rx.y.end());
  t.insert(t.end(), tx.y.symbols.begin(), tx.y.symbols.end());
  return nmse_db(r, t);
}

MetricsReport score(const std::vector<ChannelRx>& rx, const std::vector<ChannelSymbols>& tx) {
  if (rx.size() != tx.size() || rx.empty()) throw ConfigError("score: channel count mismatch");
  MetricsReport rep;
  for (std::size_t i = 0; i < rx.size(); ++i) {
    const ChannelRx r = match_power(remove_mpr(rx[i], tx[i]), tx[i]);
    ChannelMetrics cm;
    cm.gmi_4d = estimate_gmi(r.x, tx[i].x.labels, qam64()) + estimate_gmi(r.y, tx[i].y.labels, qam64());
    cm.nmse_db = nmse_db(r, tx[i]);
    rep.channels.push_back(cm);
  }
  for (const auto& c : rep.channels) {
    rep.avg_gmi_4d += c.gmi_4d;
    rep.avg_nmse_db += c.nmse_db;
  }
  rep.avg_gmi_4d /= static_cast<double>(rep.channels.size());
  rep.avg_nmse_db /= static_cast<double>(rep.channels.size());
  return rep;
}

SweepResult sweep_launch_power(const Scenario& scenario, const std::vector<DbpConfig>& equalizers,
                               const std::vector<double>& powers_dbm, unsigned threads) {
  if (powers_dbm.size() < 3) throw ConfigError("a launch power sweep needs at least 3 points");
  if (equalizers.empty()) throw ConfigError("sweep needs at least one equalizer");
  for (const auto& e : equalizers) e.validate();
  SweepResult res;
  res.reports.assign(equalizers.size(), std::vector<MetricsReport>(powers_dbm.size()));

  auto run_point = [&](std::size_t p) {
    TxConfig tx = scenario.tx;
    tx.launch_power_dbm = powers_dbm[p];
    const Simulation sim = simulate(tx, scenario.link, scenario.plan, scenario.noise_seed);
    std::vector<ChannelSymbols> refs;
    for (int i = 0; i < tx.channels_per_superchannel; ++i)
      refs.push_back(sim.frame.channels[static_cast<std::size_t>(tx.scoi_channel(i))]);
    const auto captured = capture_scoi(sim.received, tx);
    for (std::size_t e = 0; e < equalizers.size(); ++e) {
      const Receiver rx(scenario.link, equalizers[e], tx, sim.frame);
      MetricsReport rep = score(rx.process(captured), refs);
      rep.method = std::string(method_name(equalizers[e].method));
      rep.n_steps = equalizers[e].n_steps;
      rep.power_dbm = powers_dbm[p];
      res.reports[e][p] = std::move(rep);
    }
  };

  const unsigned workers = std::max(1u, std::min<unsigned>(threads, static_cast<unsigned>(powers_dbm.size())));
  std::atomic<std::size_t> next{0};
  std::exception_ptr failure;
  std::mutex failure_mutex;
  auto worker = [&] {
    for (std::size_t p = next++; p < powers_dbm.size(); p = next++) {
      try {
        run_point(p);
      } catch (...) {
        std::lock_guard lock(failure_mutex);
        if (!failure) failure = std::current_exception();
      }
    }
  };
  std::vector<std::thread> pool;
  for (unsigned t = 1; t < workers; ++t) pool.emplace_back(worker);
  worker();
  for (auto& t : pool) t.join();
  if (failure) std::rethrow_exception(failure);

  for (const auto& row : res.reports) {
    std::size_t best = 0;
    for (std::size_t p = 1; p < row.size(); ++p)
      if (row[p].avg_gmi_4d > row[best].avg_gmi_4d) best = p;
    res.peak.push_back(best);
  }
  return res;
}

}  // namespace ccdbp
