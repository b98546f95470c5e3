#include "ccdbp/cli.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdio>
#include <exception>
#include <filesystem>
#include <fstream>
#include <mutex>
#include <ostream>
#include <thread>

#include <CLI11.hpp>

#include "ccdbp/errors.hpp"
#include "ccdbp/experiment.hpp"
#include "ccdbp/signal_io.hpp"

namespace ccdbp {

namespace fs = std::filesystem;

namespace {

std::string fmt(const char* spec, double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, spec, v);
  return buf;
}

std::string row(const MetricsReport& r, const std::string& channel, double gmi, double nmse,
                std::uint64_t seed, bool peak) {
  return r.method + ',' + std::to_string(r.n_steps) + ',' + fmt("%.3f", r.power_dbm) + ',' + channel + ',' +
         fmt("%.6f", gmi) + ',' + fmt("%.4f", nmse) + ',' + std::to_string(seed) + ',' + (peak ? "1" : "0");
}

double gamma_eff(const ExperimentConfig& cfg) {
  if (cfg.link.spans.empty()) throw ConfigError("DBP needs at least one span");
  return cfg.dbp.gamma_factor * cfg.link.spans.front().fiber.gamma();
}

/// Runs task(i) for i in [0, n) on up to `threads` workers; the first
/// exception is rethrown after all workers finish.
template <class F>
void parallel_for(std::size_t n, unsigned threads, F&& task) {
  std::atomic<std::size_t> next{0};
  std::exception_ptr failure;
  std::mutex m;
  auto worker = [&] {
    for (std::size_t i = next++; i < n; i = next++) {
      try {
        task(i);
      } catch (...) {
        std::lock_guard lock(m);
        if (!failure) failure = std::current_exception();
      }
    }
  };
  const unsigned k = std::max(1u, std::min<unsigned>(threads, static_cast<unsigned>(n)));
  std::vector<std::thread> pool;
  for (unsigned t = 1; t < k; ++t) pool.emplace_back(worker);
  worker();
  for (auto& t : pool) t.join();
  if (failure) std::rethrow_exception(failure);
}

void ensure_dir(const std::string& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec || !fs::is_directory(dir)) throw IoError("cannot create output directory " + dir);
}

void write_text(const std::string& path, const std::vector<std::string>& lines, bool append) {
  const bool fresh = !append || !fs::exists(path) || fs::file_size(path) == 0;
  std::ofstream out(path, std::ios::binary | (append ? std::ios::app : std::ios::trunc));
  if (!out) throw IoError("cannot write " + path);
  if (fresh) out << kCsvHeader << '\n';
  for (const auto& l : lines) out << l << '\n';
  if (!out) throw IoError("failed writing " + path);
}

std::string coefficient_name(Method m, int n_steps) {
  return "coefficients_" + std::string(method_name(m)) + "_Ns" + std::to_string(n_steps) + ".txt";
}

void check_same_layout(const TxConfig& a, const TxConfig& b) {
  if (a.symbol_rate != b.symbol_rate || a.grid_spacing != b.grid_spacing || a.rolloff != b.rolloff ||
      a.channels_per_superchannel != b.channels_per_superchannel ||
      a.side_superchannels != b.side_superchannels)
    throw ConfigError("signal file was produced with a different transmitter layout than the config");
}

bool trainable(Method m) { return uses_coefficients(m) || uses_nl_scale(m); }

struct Context {
  ExperimentConfig cfg;
  unsigned threads = 1;
  std::ostream& out;
  std::ostream& err;
};

int cmd_simulate(Context& ctx, bool training) {
  const ExperimentConfig& cfg = ctx.cfg;
  SignalFile file;
  Simulation sim;
  if (training) {
    file.tx = cfg.training_tx();
    file.noise_seed = cfg.training_noise_seed();
    sim = simulate(file.tx, cfg.link_with_noise(cfg.training.noisy), cfg.plan, file.noise_seed);
  } else {
    file.tx = cfg.eval_tx();
    file.noise_seed = cfg.noise_seed();
    sim = simulate(file.tx, cfg.link, cfg.plan, file.noise_seed);
  }
  file.channels = capture_scoi(sim.received, file.tx);
  file.metadata = {{"seed", std::to_string(cfg.seed)},
                   {"spans", std::to_string(cfg.link.spans.size())},
                   {"kind", training ? "training" : "evaluation"}};
  ensure_dir(cfg.output_dir);
  const std::string path = (fs::path(cfg.output_dir) / (training ? "training.sig" : "received.sig")).string();
  write_signal(path, file);
  ctx.out << "simulate: " << file.channels.size() << " channels x " << file.tx.n_symbols << " symbols at "
          << fmt("%.3f", file.tx.launch_power_dbm) << " dBm over " << cfg.link.spans.size() << " spans -> "
          << path << '\n';
  return 0;
}

TrainingData data_from_file(const ExperimentConfig& cfg, const std::string& path) {
  SignalFile f = read_signal(path);
  check_same_layout(f.tx, cfg.tx);
  TrainingData d;
  d.tx = f.tx;
  d.frame = generate_frame(f.tx);
  d.captured = std::move(f.channels);
  return d;
}

int cmd_train(Context& ctx, const std::string& field, const std::string& init_path) {
  const ExperimentConfig& cfg = ctx.cfg;
  const Method m = cfg.dbp.method;
  if (!trainable(m)) {
    ctx.err << "warning: " << method_name(m) << " has nothing to train; no coefficient file written\n";
    return 0;
  }
  const TrainingData data = field.empty() ? simulate_training_data(cfg) : data_from_file(cfg, field);
  std::optional<CoefficientSet> init;
  if (!init_path.empty()) {
    const CoefficientFile f = read_coefficients(init_path);
    init = apply_coefficients(cfg, m, cfg.dbp.n_steps, f).coefficients;
  }
  double final_mse = 0.0;
  CoefficientFile file = train_method(cfg, m, cfg.dbp.n_steps, data, init, &final_mse);
  ensure_dir(cfg.output_dir);
  const std::string path = (fs::path(cfg.output_dir) / coefficient_name(m, cfg.dbp.n_steps)).string();
  write_coefficients(path, file);
  ctx.out << "train: " << method_name(m) << " N_s=" << cfg.dbp.n_steps << " final MSE " << fmt("%.9e", final_mse)
          << " -> " << path << '\n';
  return 0;
}

int cmd_evaluate(Context& ctx, const std::string& field, const std::string& coeff_path) {
  const ExperimentConfig& cfg = ctx.cfg;
  const Method m = cfg.dbp.method;
  const SignalFile sig = read_signal(field);
  check_same_layout(sig.tx, cfg.tx);
  DbpConfig dbp = cfg.dbp_for(m, cfg.dbp.n_steps);
  if (!coeff_path.empty()) {
    dbp = apply_coefficients(cfg, m, cfg.dbp.n_steps, read_coefficients(coeff_path));
  } else if (trainable(m)) {
    throw ConfigError(std::string(method_name(m)) + " needs a coefficient file");
  }
  const SymbolFrame frame = generate_frame(sig.tx);
  const Receiver rx(cfg.link, dbp, sig.tx, frame);
  std::vector<ChannelSymbols> refs;
  for (std::size_t i = 0; i < rx.n_channels(); ++i) refs.push_back(rx.reference(i));
  MetricsReport rep = score(rx.process(sig.channels), refs);
  rep.method = std::string(method_name(m));
  rep.n_steps = dbp.n_steps;
  rep.power_dbm = sig.tx.launch_power_dbm;
  std::uint64_t seed = cfg.seed;
  if (const auto it = sig.metadata.find("seed"); it != sig.metadata.end()) seed = std::stoull(it->second);
  const auto lines = csv_rows(rep, seed);
  ensure_dir(cfg.output_dir);
  const std::string path = (fs::path(cfg.output_dir) / "results.csv").string();
  write_text(path, lines, true);
  for (const auto& l : lines) ctx.out << l << '\n';
  return 0;
}

int cmd_sweep(Context& ctx) {
  const ExperimentConfig& cfg = ctx.cfg;
  struct Cell {
    Method method;
    int n_steps;
    DbpConfig dbp;
  };
  std::vector<Cell> cells;
  for (int ns : cfg.sweep_steps)
    for (Method m : cfg.sweep_methods) cells.push_back({m, ns, cfg.dbp_for(m, ns)});

  ensure_dir(cfg.output_dir);
  const bool any_trainable = std::any_of(cells.begin(), cells.end(), [](const Cell& c) { return trainable(c.method); });
  if (any_trainable) {
    const TrainingData data = simulate_training_data(cfg);
    const fs::path coeff_dir = fs::path(cfg.output_dir) / "coefficients";
    ensure_dir(coeff_dir.string());
    std::vector<std::size_t> todo;
    for (std::size_t i = 0; i < cells.size(); ++i)
      if (trainable(cells[i].method)) todo.push_back(i);
    parallel_for(todo.size(), ctx.threads, [&](std::size_t k) {
      Cell& c = cells[todo[k]];
      const CoefficientFile f = train_method(cfg, c.method, c.n_steps, data, std::nullopt);
      c.dbp = apply_coefficients(cfg, c.method, c.n_steps, f);
      write_coefficients((coeff_dir / coefficient_name(c.method, c.n_steps)).string(), f);
    });
  }

  Scenario sc{cfg.eval_tx(), cfg.link, cfg.plan, cfg.noise_seed()};
  std::vector<DbpConfig> eqs;
  for (const auto& c : cells) eqs.push_back(c.dbp);
  const SweepResult res = sweep_launch_power(sc, eqs, cfg.sweep_powers_dbm, ctx.threads);

  std::vector<std::string> lines;
  for (const auto& row_reports : res.reports)
    for (const auto& r : row_reports) {
      const auto l = csv_rows(r, cfg.seed);
      lines.insert(lines.end(), l.begin(), l.end());
    }
  for (std::size_t e = 0; e < res.reports.size(); ++e) lines.push_back(csv_peak_row(res.reports[e][res.peak[e]], cfg.seed));
  const std::string path = (fs::path(cfg.output_dir) / "sweep.csv").string();
  write_text(path, lines, false);
  for (std::size_t e = 0; e < res.reports.size(); ++e) {
    const auto& r = res.reports[e][res.peak[e]];
    ctx.out << r.method << " N_s=" << r.n_steps << ": peak " << fmt("%.4f", r.avg_gmi_4d) << " bits/4D at "
            << fmt("%.2f", r.power_dbm) << " dBm\n";
  }
  ctx.out << "sweep: " << lines.size() << " rows -> " << path << '\n';
  return 0;
}

int cmd_complexity(Context& ctx) {
  const ExperimentConfig& cfg = ctx.cfg;
  std::vector<std::string> lines{"method,N_s,fft_size,eta,samples_per_symbol,n_channels,nc,real_mults_per_4D,exact"};
  for (Method m : cfg.sweep_methods)
    for (int ns : cfg.sweep_steps) {
      const DbpConfig d = cfg.dbp_for(m, ns);
      const int nc = m == Method::ff_essfm ? cfg.ff_nc0 : cfg.nc0;
      const Rational c = complexity(m, ns, d.block.fft_size, d.block.eta, d.samples_per_symbol, nc,
                                    cfg.tx.channels_per_superchannel);
      lines.push_back(std::string(method_name(m)) + ',' + std::to_string(ns) + ',' +
                      std::to_string(d.block.fft_size) + ',' + d.block.eta.str() + ',' +
                      d.samples_per_symbol.str() + ',' + std::to_string(cfg.tx.channels_per_superchannel) + ',' +
                      std::to_string(nc) + ',' + fmt("%.4f", c.value()) + ',' + c.str());
    }
  ensure_dir(cfg.output_dir);
  const std::string path = (fs::path(cfg.output_dir) / "complexity.csv").string();
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw IoError("cannot write " + path);
  for (const auto& l : lines) {
    f << l << '\n';
    ctx.out << l << '\n';
  }
  if (!f) throw IoError("failed writing " + path);
  return 0;
}

}  // namespace

std::vector<std::string> csv_rows(const MetricsReport& report, std::uint64_t seed) {
  std::vector<std::string> out;
  for (std::size_t i = 0; i < report.channels.size(); ++i)
    out.push_back(row(report, std::to_string(i), report.channels[i].gmi_4d, report.channels[i].nmse_db, seed, false));
  out.push_back(row(report, "avg", report.avg_gmi_4d, report.avg_nmse_db, seed, false));
  return out;
}

std::string csv_peak_row(const MetricsReport& report, std::uint64_t seed) {
  return row(report, "avg", report.avg_gmi_4d, report.avg_nmse_db, seed, true);
}

TrainingData simulate_training_data(const ExperimentConfig& cfg) {
  TrainingData d;
  d.tx = cfg.training_tx();
  Simulation sim = simulate(d.tx, cfg.link_with_noise(cfg.training.noisy), cfg.plan, cfg.training_noise_seed());
  d.captured = capture_scoi(sim.received, d.tx);
  d.frame = std::move(sim.frame);
  return d;
}

CoefficientFile train_method(const ExperimentConfig& cfg, Method method, int n_steps, const TrainingData& data,
                             const std::optional<CoefficientSet>& init, double* final_mse) {
  CoefficientFile file;
  file.method = method;
  file.gamma_eff = gamma_eff(cfg);
  file.metadata = {{"n_steps", std::to_string(n_steps)},
                   {"train_power_dbm", fmt("%.6g", data.tx.launch_power_dbm)},
                   {"train_symbols", std::to_string(data.tx.n_symbols)},
                   {"seed", std::to_string(cfg.seed)}};
  const DbpConfig dbp = cfg.dbp_for(method, n_steps);
  if (!trainable(method)) return file;
  TrainingObjective objective(Receiver(cfg.link, dbp, data.tx, data.frame), data.captured);
  ObjectiveReport rep;
  if (uses_coefficients(method)) {
    rep = optimize_coefficients(objective, cfg.training, init ? *init : *dbp.coefficients);
    file.coefficients = rep.coefficients;
  } else {
    rep = optimize_nl_scale(objective);
    file.nl_scale = rep.nl_scale;
  }
  if (final_mse) *final_mse = rep.final_mse;
  return file;
}

DbpConfig apply_coefficients(const ExperimentConfig& cfg, Method method, int n_steps, const CoefficientFile& file) {
  if (file.method != method)
    throw ConfigError("coefficient file is for " + std::string(method_name(file.method)) + ", config selects " +
                      std::string(method_name(method)));
  const double g = gamma_eff(cfg);
  if (std::abs(file.gamma_eff - g) > 1e-9 * g)
    throw ConfigError("coefficient file was trained for a different nonlinear coefficient");
  DbpConfig d = cfg.dbp_for(method, n_steps);
  if (uses_coefficients(method)) {
    if (!file.coefficients) throw ConfigError("coefficient file holds no filter taps");
    const CoefficientSet& want = *d.coefficients;
    const CoefficientSet& got = *file.coefficients;
    if (got.n_channels() != want.n_channels() || got.nc0() != want.nc0() || got.nc() != want.nc())
      throw ConfigError("coefficient file shape does not match the configured filter lengths");
    d.coefficients = got;
  }
  if (uses_nl_scale(method)) {
    if (!file.nl_scale) throw ConfigError("coefficient file holds no nonlinear scale");
    d.nl_scale = *file.nl_scale;
  }
  return d;
}

int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Coupled-channel digital backpropagation experiments"};
  app.require_subcommand(1);
  std::string config_path, out_dir;
  std::optional<std::uint64_t> seed;
  unsigned threads = 1;
  app.add_option("--config", config_path, "Experiment config file");
  app.add_option("--out", out_dir, "Output directory");
  app.add_option("--seed", seed, "Global seed");
  app.add_option("--threads", threads, "Worker threads")->check(CLI::Range(1u, 1024u));
  app.fallthrough();

  bool training_frame = false;
  std::string field, coeffs, init;
  auto* sim = app.add_subcommand("simulate", "Simulate a frame and store the captured channels");
  sim->add_flag("--training", training_frame, "Simulate the training frame instead");
  auto* train = app.add_subcommand("train", "Train the configured method");
  train->add_option("--field", field, "Training signal file (default: simulate one)");
  train->add_option("--init", init, "Warm-start coefficient file");
  auto* eval = app.add_subcommand("evaluate", "Score the configured method on a signal file");
  eval->add_option("--field", field, "Signal file")->required();
  eval->add_option("--coefficients", coeffs, "Coefficient file");
  auto* sweep = app.add_subcommand("sweep", "Train and evaluate over the power and step grid");
  auto* cplx = app.add_subcommand("complexity", "Real multiplications per 4D symbol");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    out << app.help();
    return 0;
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << '\n';
    return 2;
  }

  try {
    Context ctx{config_path.empty() ? ExperimentConfig{} : load_config(config_path), threads, out, err};
    if (seed) ctx.cfg.reseed(*seed);
    if (!out_dir.empty()) ctx.cfg.output_dir = out_dir;
    ctx.cfg.validate();
    if (*sim) return cmd_simulate(ctx, training_frame);
    if (*train) return cmd_train(ctx, field, init);
    if (*eval) return cmd_evaluate(ctx, field, coeffs);
    if (*sweep) return cmd_sweep(ctx);
    if (*cplx) return cmd_complexity(ctx);
  } catch (const ConfigError& e) {
    err << "config error: " << e.what() << '\n';
    return 2;
  } catch (const NumericalError& e) {
    err << "numerical error: " << e.what() << '\n';
    return 3;
  } catch (const IoError& e) {
    err << "I/O error: " << e.what() << '\n';
    return 4;
  } catch (const fs::filesystem_error& e) {
    err << "I/O error: " << e.what() << '\n';
    return 4;
  }
  return 2;
}

}  // namespace ccdbp
