#include "ccdbp/config.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <set>
#include <sstream>

#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>

#include "ccdbp/errors.hpp"

namespace ccdbp {

namespace {

namespace pt = boost::property_tree;

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

std::string trim(std::string s) {
  const auto ws = [](unsigned char c) { return std::isspace(c) != 0; };
  s.erase(s.begin(), std::find_if_not(s.begin(), s.end(), ws));
  s.erase(std::find_if_not(s.rbegin(), s.rend(), ws).base(), s.end());
  return s;
}

std::vector<std::string> split(const std::string& text, char sep) {
  std::vector<std::string> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, sep)) out.push_back(trim(item));
  return out;
}

double to_double(const std::string& key, const std::string& text) {
  double v = 0.0;
  const char* end = text.data() + text.size();
  const auto [p, ec] = std::from_chars(text.data(), end, v);
  if (ec != std::errc() || p != end || !std::isfinite(v))
    throw ConfigError(key + ": expected a number, got '" + text + "'");
  return v;
}

std::int64_t to_int(const std::string& key, const std::string& text) {
  std::int64_t v = 0;
  const char* end = text.data() + text.size();
  const auto [p, ec] = std::from_chars(text.data(), end, v);
  if (ec != std::errc() || p != end) throw ConfigError(key + ": expected an integer, got '" + text + "'");
  return v;
}

bool to_bool(const std::string& key, const std::string& text) {
  if (text == "true" || text == "1" || text == "yes") return true;
  if (text == "false" || text == "0" || text == "no") return false;
  throw ConfigError(key + ": expected true or false, got '" + text + "'");
}

Rational to_rational(const std::string& key, const std::string& text) {
  try {
    return Rational::parse(text);
  } catch (const ConfigError& e) {
    throw ConfigError(key + ": " + e.what());
  }
}

/// Reads the keys of one section, rejecting anything not in `known`.
class Section {
 public:
  Section(const pt::ptree& root, const std::string& name, std::set<std::string> known)
      : name_(name), known_(std::move(known)) {
    if (const auto child = root.get_child_optional(name)) tree_ = *child;
    for (const auto& [key, value] : tree_) {
      if (!value.empty()) throw ConfigError("[" + name + "] " + key + ": nested keys are not allowed");
      if (!known_.count(key)) throw ConfigError("unknown key [" + name + "] " + key);
    }
  }

  std::optional<std::string> get(const std::string& key) const {
    const auto v = tree_.get_optional<std::string>(pt::ptree::path_type(key, '\0'));
    if (!v) return std::nullopt;
    return trim(*v);
  }
  std::string label(const std::string& key) const { return "[" + name_ + "] " + key; }

  template <class F>
  void read(const std::string& key, F&& assign) const {
    if (const auto v = get(key)) assign(label(key), *v);
  }

 private:
  std::string name_;
  std::set<std::string> known_;
  pt::ptree tree_;
};

int auto_sim_samples_per_symbol(const TxConfig& tx) {
  const int half = (tx.total_channels() - 1);
  const double edge = 0.5 * half * tx.grid_spacing + 0.5 * (1.0 + tx.rolloff) * tx.symbol_rate;
  // 10% guard band above the outermost channel edge, even sample count.
  int s = static_cast<int>(std::ceil(2.2 * edge / tx.symbol_rate));
  if (s % 2) ++s;
  return std::max(s, 2);
}

Link make_link(int spans, const FiberSpan& fiber, double nf_db, bool noise, double wavelength) {
  Link link = spans > 0 ? Link::uniform(spans, fiber, nf_db, noise) : Link{};
  link.reference_wavelength = wavelength;
  return link;
}

}  // namespace

std::vector<double> parse_number_list(const std::string& text) {
  std::vector<double> out;
  for (const std::string& item : split(text, ',')) {
    if (item.empty()) throw ConfigError("empty entry in list '" + text + "'");
    const auto parts = split(item, ':');
    if (parts.size() == 1) {
      out.push_back(to_double("list", parts[0]));
    } else if (parts.size() == 3) {
      const double a = to_double("range", parts[0]);
      const double step = to_double("range", parts[1]);
      const double b = to_double("range", parts[2]);
      if (!(step > 0.0) || b < a) throw ConfigError("range '" + item + "' needs step > 0 and end >= start");
      const auto n = static_cast<long>(std::floor((b - a) / step + 1e-9));
      if (n > 100000) throw ConfigError("range '" + item + "' is too long");
      for (long k = 0; k <= n; ++k) out.push_back(a + static_cast<double>(k) * step);
    } else {
      throw ConfigError("cannot parse list entry '" + item + "'");
    }
  }
  if (out.empty()) throw ConfigError("empty list");
  return out;
}

ExperimentConfig::ExperimentConfig() {
  tx.symbol_rate = 41.67e9;
  tx.grid_spacing = 75e9;
  tx.rolloff = 0.1;
  tx.channels_per_superchannel = 4;
  tx.side_superchannels = 2;
  tx.launch_power_dbm = 1.0;
  tx.n_symbols = 65536;
  tx.sim_samples_per_symbol = auto_sim_samples_per_symbol(tx);
  link = make_link(15, FiberSpan{}, 5.0, true, 1550e-9);
  plan.steps_per_span = 100;
  dbp.method = Method::cc_essfm;
  dbp.n_steps = 15;
  sweep_powers_dbm = parse_number_list("-4:1:6");
  sweep_steps = {15, 30, 60, 150, 600};
  sweep_methods = {Method::gvd_only, Method::ssfm,    Method::ossfm,    Method::essfm,
                   Method::cc_essfm, Method::ff_ssfm, Method::ff_ossfm, Method::ff_essfm};
  training.train_power_dbm = 1.0;
  reseed(seed);
}

void ExperimentConfig::validate() const {
  tx.validate();
  link.validate();
  if (plan.steps_per_span < 1) throw ConfigError("steps_per_span must be >= 1");
  dbp_for(dbp.method, dbp.n_steps).validate();
  training.validate();
  if (nc0 < 0 || nc < 0 || ff_nc0 < 0) throw ConfigError("filter half-lengths must be >= 0");
  if (!(ff_samples_per_symbol.value() > 0.0)) throw ConfigError("ff_samples_per_symbol must be > 0");
  if (sweep_powers_dbm.size() < 3) throw ConfigError("the sweep power grid needs at least 3 points");
  if (sweep_steps.empty() || sweep_methods.empty()) throw ConfigError("sweep needs steps and methods");
  for (int n : sweep_steps)
    if (n < 1) throw ConfigError("sweep step counts must be >= 1");
  if (output_dir.empty()) throw ConfigError("output dir must not be empty");
}

std::uint64_t ExperimentConfig::symbol_seed() const { return splitmix64(seed ^ 0x01); }
std::uint64_t ExperimentConfig::noise_seed() const { return splitmix64(seed ^ 0x02); }
std::uint64_t ExperimentConfig::training_symbol_seed() const { return training.rng_seed; }
std::uint64_t ExperimentConfig::training_noise_seed() const { return splitmix64(training.rng_seed ^ 0x04); }

void ExperimentConfig::reseed(std::uint64_t s) {
  seed = s;
  training.rng_seed = splitmix64(seed ^ 0x03);
}

DbpConfig ExperimentConfig::dbp_for(Method method, int n_steps) const {
  DbpConfig c = dbp;
  c.method = method;
  c.n_steps = n_steps;
  c.nl_scale = 1.0;
  c.coefficients.reset();
  if (is_full_field(method)) c.samples_per_symbol = ff_samples_per_symbol;
  if (method == Method::essfm) c.coefficients = CoefficientSet::impulse(1, nc0, nc);
  if (method == Method::ff_essfm) c.coefficients = CoefficientSet::impulse(1, ff_nc0, nc);
  if (method == Method::cc_essfm)
    c.coefficients = CoefficientSet::impulse(tx.channels_per_superchannel, nc0, nc);
  return c;
}

TxConfig ExperimentConfig::eval_tx() const {
  TxConfig t = tx;
  t.rng_seed = symbol_seed();
  return t;
}

TxConfig ExperimentConfig::training_tx() const {
  TxConfig t = tx;
  t.n_symbols = training.n_train_symbols;
  t.launch_power_dbm = training.train_power_dbm;
  t.rng_seed = training_symbol_seed();
  return t;
}

Link ExperimentConfig::link_with_noise(bool noise) const {
  Link l = link;
  for (auto& s : l.spans) s.amp.noise = noise;
  return l;
}

ExperimentConfig parse_config(const std::string& text) {
  pt::ptree root;
  try {
    std::istringstream in(text);
    pt::read_ini(in, root);
  } catch (const pt::ini_parser_error& e) {
    throw ConfigError(std::string("config: ") + e.what());
  }
  static const std::set<std::string> sections{"run", "tx", "link", "dbp", "training", "sweep", "output"};
  for (const auto& [name, child] : root) {
    if (child.empty()) throw ConfigError("config: key '" + name + "' outside a section");
    if (!sections.count(name)) throw ConfigError("config: unknown section [" + name + "]");
  }

  ExperimentConfig c;
  const auto dbl = [](double& dst, double scale = 1.0) {
    return [&dst, scale](const std::string& k, const std::string& v) { dst = to_double(k, v) * scale; };
  };
  const auto integer = [](auto& dst) {
    return [&dst](const std::string& k, const std::string& v) {
      dst = static_cast<std::remove_reference_t<decltype(dst)>>(to_int(k, v));
    };
  };
  const auto boolean = [](bool& dst) {
    return [&dst](const std::string& k, const std::string& v) { dst = to_bool(k, v); };
  };

  const Section run(root, "run", {"seed"});
  run.read("seed", [&](const std::string& k, const std::string& v) {
    std::uint64_t s = 0;
    const auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), s);
    if (ec != std::errc() || p != v.data() + v.size()) throw ConfigError(k + ": expected an unsigned integer");
    c.reseed(s);
  });

  const Section tx(root, "tx", {"symbol_rate_gbd", "grid_spacing_ghz", "rolloff", "channels",
                                "side_superchannels", "launch_power_dbm", "n_symbols",
                                "sim_samples_per_symbol"});
  tx.read("symbol_rate_gbd", dbl(c.tx.symbol_rate, 1e9));
  tx.read("grid_spacing_ghz", dbl(c.tx.grid_spacing, 1e9));
  tx.read("rolloff", dbl(c.tx.rolloff));
  tx.read("channels", integer(c.tx.channels_per_superchannel));
  tx.read("side_superchannels", integer(c.tx.side_superchannels));
  tx.read("launch_power_dbm", dbl(c.tx.launch_power_dbm));
  std::int64_t n_symbols = static_cast<std::int64_t>(c.tx.n_symbols);
  tx.read("n_symbols", integer(n_symbols));
  if (n_symbols < 1) throw ConfigError("[tx] n_symbols must be >= 1");
  c.tx.n_symbols = static_cast<std::size_t>(n_symbols);
  int sim_sps = 0;
  tx.read("sim_samples_per_symbol", integer(sim_sps));
  if (sim_sps < 0) throw ConfigError("[tx] sim_samples_per_symbol must be >= 0 (0 = automatic)");
  if (c.tx.channels_per_superchannel < 1 || c.tx.side_superchannels < 0)
    throw ConfigError("[tx] channel counts must be positive");
  c.tx.sim_samples_per_symbol = sim_sps > 0 ? sim_sps : auto_sim_samples_per_symbol(c.tx);

  const Section link(root, "link", {"spans", "span_length_km", "dispersion_ps_nm_km", "alpha_db_km",
                                    "gamma_per_w_km", "noise_figure_db", "ase_noise",
                                    "wavelength_nm", "steps_per_span", "step_spacing"});
  int spans = 15;
  FiberSpan fiber;
  double nf_db = 5.0, wavelength = 1550e-9;
  bool noise = true;
  link.read("spans", integer(spans));
  link.read("span_length_km", dbl(fiber.length_km));
  link.read("dispersion_ps_nm_km", dbl(fiber.dispersion_ps_nm_km));
  link.read("alpha_db_km", dbl(fiber.alpha_db_km));
  link.read("gamma_per_w_km", dbl(fiber.gamma_per_w_km));
  link.read("noise_figure_db", dbl(nf_db));
  link.read("ase_noise", boolean(noise));
  link.read("wavelength_nm", dbl(wavelength, 1e-9));
  link.read("steps_per_span", integer(c.plan.steps_per_span));
  link.read("step_spacing", [&](const std::string& k, const std::string& v) {
    if (v == "uniform") c.plan.spacing = StepPlan::Spacing::uniform;
    else if (v == "logarithmic") c.plan.spacing = StepPlan::Spacing::logarithmic;
    else throw ConfigError(k + ": expected uniform or logarithmic");
  });
  if (spans < 0) throw ConfigError("[link] spans must be >= 0");
  fiber.validate();
  c.link = make_link(spans, fiber, nf_db, noise, wavelength);

  const Section dbp(root, "dbp", {"method", "n_steps", "samples_per_symbol", "ff_samples_per_symbol",
                                  "nl_scale", "nc0", "nc", "ff_nc0", "fft_size", "eta",
                                  "block_mode", "gamma_factor", "nl_position"});
  dbp.read("method", [&](const std::string&, const std::string& v) { c.dbp.method = parse_method(v); });
  dbp.read("n_steps", integer(c.dbp.n_steps));
  dbp.read("samples_per_symbol", [&](const std::string& k, const std::string& v) {
    c.dbp.samples_per_symbol = to_rational(k, v);
  });
  dbp.read("ff_samples_per_symbol", [&](const std::string& k, const std::string& v) {
    c.ff_samples_per_symbol = to_rational(k, v);
  });
  dbp.read("nl_scale", dbl(c.dbp.nl_scale));
  dbp.read("nc0", integer(c.nc0));
  dbp.read("nc", integer(c.nc));
  dbp.read("ff_nc0", integer(c.ff_nc0));
  std::int64_t fft = static_cast<std::int64_t>(c.dbp.block.fft_size);
  dbp.read("fft_size", integer(fft));
  if (fft < 2) throw ConfigError("[dbp] fft_size must be >= 2");
  c.dbp.block.fft_size = static_cast<std::size_t>(fft);
  dbp.read("eta", [&](const std::string& k, const std::string& v) { c.dbp.block.eta = to_rational(k, v); });
  dbp.read("block_mode", boolean(c.dbp.block_mode));
  dbp.read("nl_position", [&](const std::string& k, const std::string& v) {
    if (v == "midpoint") c.dbp.nl_position = NlPosition::midpoint;
    else if (v == "start") c.dbp.nl_position = NlPosition::start;
    else throw ConfigError(k + ": expected midpoint or start");
  });
  dbp.read("gamma_factor", [&](const std::string& k, const std::string& v) {
    c.dbp.gamma_factor = to_rational(k, v).value();
  });

  const Section sweep(root, "sweep", {"powers_dbm", "n_steps", "methods"});
  sweep.read("powers_dbm", [&](const std::string&, const std::string& v) { c.sweep_powers_dbm = parse_number_list(v); });
  sweep.read("n_steps", [&](const std::string& k, const std::string& v) {
    c.sweep_steps.clear();
    for (double s : parse_number_list(v)) {
      if (s != std::floor(s)) throw ConfigError(k + ": step counts must be integers");
      c.sweep_steps.push_back(static_cast<int>(s));
    }
  });
  sweep.read("methods", [&](const std::string&, const std::string& v) {
    c.sweep_methods.clear();
    for (const auto& m : split(v, ',')) c.sweep_methods.push_back(parse_method(m));
  });

  const Section training(root, "training", {"n_symbols", "power_dbm", "max_iterations", "tolerance", "noisy"});
  std::int64_t n_train = static_cast<std::int64_t>(c.training.n_train_symbols);
  training.read("n_symbols", integer(n_train));
  if (n_train < 1) throw ConfigError("[training] n_symbols must be >= 1");
  c.training.n_train_symbols = static_cast<std::size_t>(n_train);
  const auto [lo, hi] = std::minmax_element(c.sweep_powers_dbm.begin(), c.sweep_powers_dbm.end());
  c.training.train_power_dbm = 0.5 * (*lo + *hi);
  training.read("power_dbm", dbl(c.training.train_power_dbm));
  training.read("max_iterations", integer(c.training.max_iterations));
  training.read("tolerance", dbl(c.training.tolerance));
  training.read("noisy", boolean(c.training.noisy));

  const Section output(root, "output", {"dir"});
  output.read("dir", [&](const std::string&, const std::string& v) { c.output_dir = v; });

  c.validate();
  return c;
}

ExperimentConfig load_config(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open config file " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse_config(ss.str());
}

}  // namespace ccdbp
