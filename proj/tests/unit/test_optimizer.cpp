#include <doctest.h>

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <random>

#include "ccdbp/errors.hpp"
#include "ccdbp/experiment.hpp"
#include "ccdbp/optimizer.hpp"

using namespace ccdbp;

namespace {

struct Setup {
  TxConfig tx;
  Link link;
  StepPlan plan;
  Simulation sim;
};

Setup small_setup(double gamma_per_w_km = 1.3, double power_dbm = 4.0) {
  Setup s;
  s.tx.channels_per_superchannel = 2;
  s.tx.n_symbols = 256;
  s.tx.sim_samples_per_symbol = 4;
  s.tx.launch_power_dbm = power_dbm;
  s.tx.rng_seed = 5;
  FiberSpan f;
  f.gamma_per_w_km = gamma_per_w_km;
  s.link = Link::uniform(2, f, 5.0, true);
  s.plan.steps_per_span = 20;
  s.sim = simulate(s.tx, s.link, s.plan, 77);
  return s;
}

TrainingObjective make_objective(const Setup& s, Method m, int nc0, int nc, int n_steps = 2) {
  DbpConfig cfg;
  cfg.method = m;
  cfg.n_steps = n_steps;
  const int nch = m == Method::cc_essfm ? s.tx.channels_per_superchannel : 1;
  if (uses_coefficients(m)) cfg.coefficients = CoefficientSet::impulse(nch, nc0, nc);
  return TrainingObjective(Receiver(s.link, cfg, s.tx, s.sim.frame), capture_scoi(s.sim.received, s.tx));
}

ChannelSymbols symbols_of(const CVec& x, const CVec& y) {
  ChannelSymbols c;
  c.x.symbols = x;
  c.y.symbols = y;
  return c;
}

std::string temp_path(const char* name) {
  return (std::filesystem::temp_directory_path() / name).string();
}

}  // namespace

TEST_CASE("mse of identical, offset and rotated symbols") {
  const CVec tx{{1, 0}, {0, 1}, {-1, 0}, {0.5, -0.5}};
  const ChannelSymbols ref = symbols_of(tx, tx);
  CHECK(mse({tx, tx}, ref) == 0.0);
  const cplx c(0.3, -0.4);
  CVec off = tx;
  for (auto& v : off) v += c;
  CHECK(mse({off, off}, ref) == doctest::Approx(std::norm(c)).epsilon(1e-14));
  CVec rot = tx;
  for (auto& v : rot) v *= std::polar(1.0, 0.7);
  CHECK(mse(remove_mpr({rot, rot}, ref), ref) < 1e-12);
  CHECK_THROWS_AS(mse({CVec{}, CVec{}}, symbols_of({}, {})), ConfigError);
  CHECK_THROWS_AS(mse({tx, CVec{}}, ref), ConfigError);
}

TEST_CASE("matched mse equals mse after phase and power matching, with exact gradient") {
  std::mt19937_64 rng(3);
  std::normal_distribution<double> nd;
  CVec tx(64), ty(64), rx(64), ry(64);
  for (std::size_t k = 0; k < 64; ++k) {
    tx[k] = {nd(rng), nd(rng)};
    ty[k] = {nd(rng), nd(rng)};
    rx[k] = 1.7 * std::polar(1.0, 0.4) * tx[k] + cplx(0.3 * nd(rng), 0.3 * nd(rng));
    ry[k] = 1.7 * std::polar(1.0, 0.4) * ty[k] + cplx(0.3 * nd(rng), 0.3 * nd(rng));
  }
  const ChannelSymbols ref = symbols_of(tx, ty);
  const ChannelRx r{rx, ry};
  ChannelRx g;
  const double j = matched_mse(r, ref, &g);
  CHECK(j == doctest::Approx(mse(match_power(remove_mpr(r, ref), ref), ref)).epsilon(1e-12));
  const double h = 1e-6;
  for (std::size_t k : {0u, 17u, 63u})
    for (cplx dir : {cplx(1, 0), cplx(0, 1)}) {
      ChannelRx p = r, m = r;
      p.y[k] += h * dir;
      m.y[k] -= h * dir;
      const double fd = (matched_mse(p, ref, nullptr) - matched_mse(m, ref, nullptr)) / (2 * h);
      const double an = dir.real() * g.y[k].real() + dir.imag() * g.y[k].imag();
      CHECK(an == doctest::Approx(fd).epsilon(1e-6));
    }
  CHECK_THROWS_AS(matched_mse({CVec(64), CVec(64)}, ref, nullptr), NumericalError);
}

TEST_CASE("training objective gradient matches central differences") {
  const Setup s = small_setup();
  TrainingObjective obj = make_objective(s, Method::cc_essfm, 3, 4);
  std::mt19937_64 rng(21);
  std::uniform_real_distribution<double> ud(-0.2, 0.2);
  CoefficientSet c = CoefficientSet::impulse(2, 3, 4);
  for (int h = 0; h < 2; ++h)
    for (auto& v : c.block(h)) v += ud(rng);
  std::vector<std::vector<double>> mat;
  obj.value_and_gradient(c, mat);
  for (int h = 0; h < 2; ++h) {
    const std::vector<double> g = block_gradient(c, mat, h);
    std::vector<double> dir(g.size());
    for (auto& d : dir) d = ud(rng);
    const double eps = 1e-5;
    CoefficientSet p = c, m = c;
    for (std::size_t k = 0; k < dir.size(); ++k) {
      p.block(h)[k] += eps * dir[k];
      m.block(h)[k] -= eps * dir[k];
    }
    const double fd = (obj.value(p) - obj.value(m)) / (2 * eps);
    double an = 0.0;
    for (std::size_t k = 0; k < dir.size(); ++k) an += g[k] * dir[k];
    CHECK(an == doctest::Approx(fd).epsilon(1e-4));
  }
}

TEST_CASE("coefficient training lowers the MSE monotonically and deterministically") {
  const Setup s = small_setup();
  TrainingConfig tc;
  tc.max_iterations = 30;
  TrainingObjective obj = make_objective(s, Method::cc_essfm, 3, 4);
  const auto init = CoefficientSet::impulse(2, 3, 4);
  const ObjectiveReport rep = optimize_coefficients(obj, tc, init);
  REQUIRE(rep.trajectory.size() == 3);
  for (std::size_t k = 1; k < rep.trajectory.size(); ++k)
    CHECK(rep.trajectory[k] <= rep.trajectory[k - 1] + 1e-9);
  for (std::size_t k = 1; k < rep.history.size(); ++k) CHECK(rep.history[k] <= rep.history[k - 1]);
  CHECK(rep.final_mse < rep.trajectory.front());

  TrainingObjective ssfm = make_objective(s, Method::ssfm, 0, 0);
  CHECK(rep.final_mse <= ssfm.value());

  TrainingObjective again = make_objective(s, Method::cc_essfm, 3, 4);
  const ObjectiveReport rep2 = optimize_coefficients(again, tc, init);
  CHECK(rep2.final_mse == rep.final_mse);
  CHECK(*rep2.coefficients == *rep.coefficients);

  const auto& c = *rep.coefficients;
  for (int h = -1; h <= 1; ++h)
    for (int m = -4; m <= 4; ++m) CHECK(c.at(h, m) == c.at(-h, -m));
}

TEST_CASE("without nonlinearity training keeps the impulse and the GVD-only MSE") {
  const Setup s = small_setup(0.0);
  TrainingConfig tc;
  tc.max_iterations = 10;
  TrainingObjective obj = make_objective(s, Method::essfm, 4, 0);
  const ObjectiveReport rep = optimize_coefficients(obj, tc, CoefficientSet::impulse(1, 4, 0));
  TrainingObjective gvd = make_objective(s, Method::gvd_only, 0, 0);
  const double base = gvd.value();
  CHECK(std::abs(rep.final_mse - base) <= 0.01 * base);
  double dev = 0.0;
  const auto imp = CoefficientSet::impulse(1, 4, 0);
  for (std::size_t k = 0; k < imp.block(0).size(); ++k)
    dev += std::pow(rep.coefficients->block(0)[k] - imp.block(0)[k], 2);
  CHECK(std::sqrt(dev) <= 1e-2);

  TrainingObjective os = make_objective(s, Method::ossfm, 0, 0);
  const ObjectiveReport xi = optimize_nl_scale(os);
  CHECK(xi.nl_scale >= 0.0);
  CHECK(xi.nl_scale <= 1.5);
  for (double v : xi.history) CHECK(std::abs(v - xi.final_mse) <= 1e-9);
}

TEST_CASE("trained nonlinear scale never loses to the unscaled SSFM") {
  const Setup s = small_setup(1.3, 6.0);
  TrainingObjective os = make_objective(s, Method::ossfm, 0, 0, 1);
  const ObjectiveReport xi = optimize_nl_scale(os);
  CHECK(xi.final_mse <= xi.trajectory.front());
  CHECK(xi.nl_scale < 1.0);
  CHECK(os.value_at_scale(xi.nl_scale) == xi.final_mse);
}

TEST_CASE("coefficient files round-trip bit-exactly") {
  std::mt19937_64 rng(8);
  std::uniform_real_distribution<double> ud(-1, 1);
  CoefficientSet c(4, 32, 128);
  for (int h = 0; h < 4; ++h)
    for (auto& v : c.block(h)) v = ud(rng) * std::pow(10.0, 20 * ud(rng));
  CoefficientFile f;
  f.method = Method::cc_essfm;
  f.gamma_eff = 8.0 / 9.0 * 1.3e-3;
  f.coefficients = c;
  f.metadata = {{"train_power_dbm", "1"}, {"note", "two words"}};
  const std::string path = temp_path("ccdbp_coeffs_test.txt");
  write_coefficients(path, f);
  const CoefficientFile back = read_coefficients(path);
  CHECK(back.method == f.method);
  CHECK(back.gamma_eff == f.gamma_eff);
  CHECK(back.metadata == f.metadata);
  REQUIRE(back.coefficients);
  CHECK(*back.coefficients == c);
  CHECK(back.coefficients->free_count() == 33 + 3 * 257);
  CHECK_FALSE(back.nl_scale);

  CoefficientFile xi;
  xi.method = Method::ossfm;
  xi.gamma_eff = 1e-3;
  xi.nl_scale = 0.7312;
  write_coefficients(path, xi);
  const CoefficientFile xb = read_coefficients(path);
  CHECK(xb.nl_scale == 0.7312);
  CHECK_FALSE(xb.coefficients);
  std::filesystem::remove(path);
}

TEST_CASE("malformed coefficient files are rejected") {
  const std::string path = temp_path("ccdbp_coeffs_bad.txt");
  auto write = [&](const char* text) {
    std::ofstream(path) << text;
  };
  write("something else\n");
  CHECK_THROWS_AS(read_coefficients(path), IoError);
  write("ccdbp-coefficients 2\nmethod ESSFM\ngamma_eff 1\n");
  CHECK_THROWS_AS(read_coefficients(path), IoError);
  write("ccdbp-coefficients 1\nmethod ESSFM\ngamma_eff 1\nn_channels 1\nnc0 1\nnc 0\nrows h m value\n0 0 1\n");
  CHECK_THROWS_AS(read_coefficients(path), IoError);
  write("ccdbp-coefficients 1\nmethod ESSFM\ngamma_eff 1\nn_channels 1\nnc0 0\nnc 0\nrows h m value\n0 1 1\n");
  CHECK_THROWS_AS(read_coefficients(path), IoError);
  write("ccdbp-coefficients 1\nmethod NOPE\ngamma_eff 1\n");
  CHECK_THROWS_AS(read_coefficients(path), IoError);
  CHECK_THROWS_AS(read_coefficients(temp_path("ccdbp_does_not_exist.txt")), IoError);
  std::filesystem::remove(path);
}

TEST_CASE("training configuration is validated") {
  TrainingConfig tc;
  tc.n_train_symbols = 100;
  CHECK_THROWS_AS(tc.validate(), ConfigError);
  tc = {};
  tc.tolerance = 0.0;
  CHECK_THROWS_AS(tc.validate(), ConfigError);
}
