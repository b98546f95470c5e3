#include "ccdbp/optimizer.hpp"

#include <charconv>
#include <cmath>
#include <fstream>
#include <limits>
#include <numeric>
#include <sstream>

#include "ccdbp/errors.hpp"

namespace ccdbp {

namespace {

constexpr std::string_view kMagic = "ccdbp-coefficients";
constexpr int kVersion = 1;

double dot(const std::vector<double>& a, const std::vector<double>& b) {
  return std::inner_product(a.begin(), a.end(), b.begin(), 0.0);
}

std::string format_double(double v) {
  char buf[64];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, ptr);
}

double parse_double(std::string_view s, const std::string& path) {
  double v = 0.0;
  auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || ptr != s.data() + s.size())
    throw IoError(path + ": bad number '" + std::string(s) + "'");
  return v;
}

int parse_int(std::string_view s, const std::string& path) {
  int v = 0;
  auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || ptr != s.data() + s.size())
    throw IoError(path + ": bad integer '" + std::string(s) + "'");
  return v;
}

}  // namespace

double mse(const ChannelRx& rx, const ChannelSymbols& tx) {
  if (rx.x.size() != tx.x.symbols.size() || rx.y.size() != tx.y.symbols.size())
    throw ConfigError("mse: length mismatch");
  const std::size_t k = rx.x.size() + rx.y.size();
  if (k == 0) throw ConfigError("mse: empty input");
  double acc = 0.0;
  for (std::size_t i = 0; i < rx.x.size(); ++i) acc += std::norm(rx.x[i] - tx.x.symbols[i]);
  for (std::size_t i = 0; i < rx.y.size(); ++i) acc += std::norm(rx.y[i] - tx.y.symbols[i]);
  return acc / static_cast<double>(k);
}

double matched_mse(const ChannelRx& rx, const ChannelSymbols& tx, ChannelRx* grad) {
  if (rx.x.size() != tx.x.symbols.size() || rx.y.size() != tx.y.symbols.size())
    throw ConfigError("mse: length mismatch");
  const std::size_t k = rx.x.size() + rx.y.size();
  if (k == 0) throw ConfigError("mse: empty input");
  double t = 0.0, b = 0.0;
  cplx a(0.0, 0.0);
  for (auto [r, s] : {std::pair{&rx.x, &tx.x.symbols}, std::pair{&rx.y, &tx.y.symbols}})
    for (std::size_t i = 0; i < r->size(); ++i) {
      t += std::norm((*s)[i]);
      b += std::norm((*r)[i]);
      a += (*r)[i] * std::conj((*s)[i]);
    }
  if (!(b > 0.0)) throw NumericalError("mse: received symbols have zero energy");
  const double kd = static_cast<double>(k);
  const double mag = std::abs(a);
  const double value = (2.0 * t - 2.0 * std::sqrt(t / b) * mag) / kd;
  if (grad) {
    const cplx rot = mag > 0.0 ? a / mag : cplx(1.0, 0.0);
    const double c = -2.0 * std::sqrt(t) / kd;
    const double sb = std::sqrt(b);
    for (auto [r, s, g] : {std::tuple{&rx.x, &tx.x.symbols, &grad->x},
                           std::tuple{&rx.y, &tx.y.symbols, &grad->y}}) {
      g->resize(r->size());
      for (std::size_t i = 0; i < r->size(); ++i)
        (*g)[i] = c * (rot * (*s)[i] / sb - mag * (*r)[i] / (b * sb));
    }
  }
  return value;
}

void TrainingConfig::validate() const {
  if (n_train_symbols < 256) throw ConfigError("training needs at least 256 symbols");
  if (!(tolerance > 0.0)) throw ConfigError("training tolerance must be positive");
  if (max_iterations < 1) throw ConfigError("training needs at least one iteration");
  if (!std::isfinite(train_power_dbm)) throw ConfigError("training power must be finite");
}

TrainingObjective::TrainingObjective(Receiver receiver,
                                     const std::vector<DualPolSignal>& captured)
    : rx_(std::move(receiver)), input_(rx_.prepare(captured)) {}

double TrainingObjective::evaluate(std::vector<ChannelRx>* symbol_grads) {
  DbpEngine::State state = input_;
  rx_.engine().propagate(state);
  const auto out = rx_.extract(state);
  const double w = 1.0 / static_cast<double>(out.size());
  double j = 0.0;
  if (symbol_grads) symbol_grads->assign(out.size(), {});
  for (std::size_t i = 0; i < out.size(); ++i) {
    ChannelRx* g = symbol_grads ? &(*symbol_grads)[i] : nullptr;
    j += w * matched_mse(out[i], rx_.reference(i), g);
    if (g) {
      for (auto& v : g->x) v *= w;
      for (auto& v : g->y) v *= w;
    }
  }
  return j;
}

double TrainingObjective::value(const CoefficientSet& coeffs) {
  rx_.engine().set_coefficients(coeffs);
  return evaluate(nullptr);
}

double TrainingObjective::value_at_scale(double xi) {
  rx_.engine().set_nl_scale(xi);
  return evaluate(nullptr);
}

double TrainingObjective::value_and_gradient(const CoefficientSet& coeffs,
                                             std::vector<std::vector<double>>& grad) {
  DbpEngine& engine = rx_.engine();
  engine.set_coefficients(coeffs);
  DbpEngine::State state = input_;
  DbpEngine::Tape tape;
  engine.propagate(state, &tape);
  const auto out = rx_.extract(state);
  const double w = 1.0 / static_cast<double>(out.size());
  std::vector<ChannelRx> sg(out.size());
  double j = 0.0;
  for (std::size_t i = 0; i < out.size(); ++i) {
    j += w * matched_mse(out[i], rx_.reference(i), &sg[i]);
    for (auto& v : sg[i].x) v *= w;
    for (auto& v : sg[i].y) v *= w;
  }
  DbpEngine::State g = rx_.extract_adjoint(sg);
  engine.gradient(tape, g, &grad);
  return j;
}

ObjectiveReport optimize_coefficients(TrainingObjective& objective, const TrainingConfig& cfg,
                                      const CoefficientSet& init) {
  cfg.validate();
  ObjectiveReport report;
  CoefficientSet c = init;
  const double f0 = objective.value(c);
  if (!std::isfinite(f0)) throw TrainingDiverged("initial MSE is not finite", report);
  report.trajectory.push_back(f0);
  report.history.push_back(f0);
  double f = f0;
  std::vector<std::vector<double>> mat;

  for (int h = 0; h < c.n_channels(); ++h) {
    objective.value_and_gradient(c, mat);
    std::vector<double> g = block_gradient(c, mat, h);
    double gnorm2 = dot(g, g);
    double alpha = gnorm2 > 0.0 ? 1e-2 / std::sqrt(gnorm2) : 0.0;
    for (int it = 0; it < cfg.max_iterations && gnorm2 > 0.0; ++it) {
      const std::vector<double> x(c.block(h).begin(), c.block(h).end());
      CoefficientSet trial = c;
      double f_new = f;
      bool accepted = false;
      for (int bt = 0; bt < 40; ++bt) {
        auto blk = trial.block(h);
        for (std::size_t p = 0; p < x.size(); ++p) blk[p] = x[p] - alpha * g[p];
        f_new = objective.value(trial);
        if (std::isfinite(f_new) && f_new <= f - 1e-4 * alpha * gnorm2) {
          accepted = true;
          break;
        }
        alpha *= 0.5;
      }
      if (!accepted) break;
      if (f_new > 10.0 * f0) {
        report.final_mse = f_new;
        report.coefficients = trial;
        throw TrainingDiverged("MSE exceeded ten times its initial value", report);
      }
      const double rel = (f - f_new) / f;
      c = trial;
      f = f_new;
      report.history.push_back(f);
      objective.value_and_gradient(c, mat);
      std::vector<double> g_new = block_gradient(c, mat, h);
      std::vector<double> s(x.size()), y(x.size());
      for (std::size_t p = 0; p < x.size(); ++p) {
        s[p] = c.block(h)[p] - x[p];
        y[p] = g_new[p] - g[p];
      }
      g = std::move(g_new);
      gnorm2 = dot(g, g);
      if (rel < cfg.tolerance) break;
      const double sy = dot(s, y);
      alpha = sy > 0.0 ? dot(s, s) / sy : 2.0 * alpha;
    }
    report.trajectory.push_back(f);
  }
  report.final_mse = f;
  report.coefficients = std::move(c);
  return report;
}

ObjectiveReport optimize_nl_scale(TrainingObjective& objective, double tolerance) {
  if (!(tolerance > 0.0)) throw ConfigError("golden-section tolerance must be positive");
  ObjectiveReport report;
  double best_x = 1.0;
  double best_f = objective.value_at_scale(1.0);
  report.trajectory.push_back(best_f);
  auto eval = [&](double x) {
    const double v = objective.value_at_scale(x);
    report.history.push_back(v);
    if (v < best_f || (v == best_f && x < best_x)) {
      best_f = v;
      best_x = x;
    }
    return v;
  };
  const double inv_phi = (std::sqrt(5.0) - 1.0) / 2.0;
  double a = 0.0, b = 1.5;
  double c = b - inv_phi * (b - a), d = a + inv_phi * (b - a);
  double fc = eval(c), fd = eval(d);
  while (b - a > tolerance) {
    if (fc <= fd) {
      b = d;
      d = c;
      fd = fc;
      c = b - inv_phi * (b - a);
      fc = eval(c);
    } else {
      a = c;
      c = d;
      fc = fd;
      d = a + inv_phi * (b - a);
      fd = eval(d);
    }
  }
  report.trajectory.push_back(best_f);
  report.final_mse = best_f;
  report.nl_scale = best_x;
  objective.value_at_scale(best_x);
  return report;
}

void write_coefficients(const std::string& path, const CoefficientFile& file) {
  std::ostringstream os;
  os << kMagic << ' ' << kVersion << '\n';
  os << "method " << method_name(file.method) << '\n';
  os << "gamma_eff " << format_double(file.gamma_eff) << '\n';
  if (file.nl_scale) os << "nl_scale " << format_double(*file.nl_scale) << '\n';
  for (const auto& [k, v] : file.metadata) {
    if (k.find_first_of(" \t\n") != std::string::npos || v.find('\n') != std::string::npos)
      throw ConfigError("metadata '" + k + "' cannot be stored on one line");
    os << "meta." << k << ' ' << v << '\n';
  }
  if (const auto& c = file.coefficients) {
    os << "n_channels " << c->n_channels() << '\n';
    os << "nc0 " << c->nc0() << '\n';
    os << "nc " << c->nc() << '\n';
    os << "rows h m value\n";
    for (int h = 0; h < c->n_channels(); ++h) {
      const auto blk = c->block(h);
      const int first = h == 0 ? 0 : -c->nc();
      for (std::size_t p = 0; p < blk.size(); ++p)
        os << h << ' ' << first + static_cast<int>(p) << ' ' << format_double(blk[p]) << '\n';
    }
  }
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot open '" + path + "' for writing");
  out << os.str();
  if (!out.flush()) throw IoError("failed writing '" + path + "'");
}

CoefficientFile read_coefficients(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open '" + path + "'");
  std::string line;
  if (!std::getline(in, line)) throw IoError(path + ": empty file");
  {
    std::istringstream ls(line);
    std::string magic;
    int version = 0;
    if (!(ls >> magic >> version) || magic != kMagic)
      throw IoError(path + ": not a coefficient file");
    if (version != kVersion)
      throw IoError(path + ": unsupported coefficient file version " + std::to_string(version));
  }
  CoefficientFile file;
  bool have_method = false, have_gamma = false;
  int n_ch = -1, nc0 = -1, nc = -1;
  bool rows = false;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const auto sp = line.find(' ');
    const std::string key = line.substr(0, sp);
    const std::string val = sp == std::string::npos ? "" : line.substr(sp + 1);
    if (key == "rows") {
      rows = true;
      break;
    }
    if (key == "method") {
      try {
        file.method = parse_method(val);
      } catch (const ConfigError& e) {
        throw IoError(path + ": " + e.what());
      }
      have_method = true;
    } else if (key == "gamma_eff") {
      file.gamma_eff = parse_double(val, path);
      have_gamma = true;
    } else if (key == "nl_scale") {
      file.nl_scale = parse_double(val, path);
    } else if (key == "n_channels") {
      n_ch = parse_int(val, path);
    } else if (key == "nc0") {
      nc0 = parse_int(val, path);
    } else if (key == "nc") {
      nc = parse_int(val, path);
    } else if (key.rfind("meta.", 0) == 0) {
      file.metadata[key.substr(5)] = val;
    } else {
      throw IoError(path + ": unknown key '" + key + "'");
    }
  }
  if (!have_method || !have_gamma) throw IoError(path + ": missing method or gamma_eff");
  if (!rows) {
    if (n_ch != -1) throw IoError(path + ": coefficient header without rows");
    return file;
  }
  if (n_ch < 1 || nc0 < 0 || nc < 0) throw IoError(path + ": missing or invalid filter sizes");
  CoefficientSet c(n_ch, nc0, nc);
  std::vector<std::vector<bool>> seen(static_cast<std::size_t>(n_ch));
  for (int h = 0; h < n_ch; ++h) seen[h].assign(c.block(h).size(), false);
  std::size_t count = 0;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::istringstream ls(line);
    std::string hs, ms, vs, extra;
    if (!(ls >> hs >> ms >> vs) || (ls >> extra)) throw IoError(path + ": bad row '" + line + "'");
    const int h = parse_int(hs, path), m = parse_int(ms, path);
    if (h < 0 || h >= n_ch) throw IoError(path + ": row h out of range");
    const int first = h == 0 ? 0 : -nc;
    const long idx = static_cast<long>(m) - first;
    if (idx < 0 || idx >= static_cast<long>(c.block(h).size()))
      throw IoError(path + ": row m out of range");
    if (seen[h][idx]) throw IoError(path + ": duplicate row");
    seen[h][idx] = true;
    c.block(h)[static_cast<std::size_t>(idx)] = parse_double(vs, path);
    ++count;
  }
  if (count != c.free_count()) throw IoError(path + ": incomplete coefficient table");
  file.coefficients = std::move(c);
  return file;
}

}  // namespace ccdbp
