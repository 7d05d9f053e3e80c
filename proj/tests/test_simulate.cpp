#include <cmath>
#include <cstdio>
#include <fstream>
#include <set>
#include <string>
#include <vector>

#include "doctest.h"
#include "hlte/errors.hpp"
#include "hlte/numerics.hpp"
#include "hlte/rng.hpp"
#include "hlte/simulate.hpp"

using namespace hlte;
using namespace hlte::sim;

TEST_CASE("scenario presets map names to gamma pairs") {
  CHECK(scenario("star").gamma_pi == 0.0);
  CHECK(scenario("star").gamma_rho == 0.0);
  CHECK(scenario("t").gamma_pi == 2.0);
  CHECK(scenario("t").gamma_rho == 0.0);
  CHECK(scenario("o").gamma_pi == 0.0);
  CHECK(scenario("o").gamma_rho == 1.0);
  CHECK(scenario("t+o").gamma_pi == 2.0);
  CHECK(scenario("t+o").gamma_rho == 1.0);
  CHECK(scenario("star").n == 3000);
  CHECK(scenario("t", 500, 9).n == 500);
  CHECK(scenario("t", 500, 9).seed == 9);
  CHECK_THROWS_AS(scenario("both"), ConfigError);
  CHECK(scenario_name(scenario_from_name("t+o")) == "t+o");
}

TEST_CASE("synthetic formulas match their published forms") {
  num::RngStream rng(31, 0);
  double x[10];
  for (int rep = 0; rep < 200; ++rep) {
    for (double& v : x) v = 2.0 * rng.uniform() - 1.0;
    CHECK(syn::rho(x, 1.0) == num::sigmoid(x[0] + x[1] - 1.0));
    CHECK(syn::pi(x, 2.0) ==
          num::trim(num::sigmoid(-2.0 * (x[0] * x[1] + 1.0 + x[2] + x[3] + x[7] * x[7])), 0.1));
    CHECK(syn::e(x) == num::trim(num::sigmoid(x[1] + x[2] + x[3]), 0.1));
    CHECK(syn::tau_s(x) == 1.0 + (x[0] + x[1] + x[2] + x[3]) / 4.0);
    CHECK(syn::h_true(x, 0.3) == syn::long_term_base(x) + 0.3);
    CHECK(syn::mu_true(x, 1) - syn::mu_true(x, 0) == doctest::Approx(syn::tau_s(x)).epsilon(1e-12));
  }
  const double zero[10] = {0};
  CHECK(syn::tau_s(zero) == 1.0);
  CHECK(syn::pi(zero, 0.0) == 0.5);
  CHECK(syn::long_term_base(zero) == 0.0);
  CHECK_THROWS_AS(syn::mu_true(zero, 2), DomainError);
}

TEST_CASE("surrogate-conditional propensities stay stable far from the mean") {
  num::RngStream rng(32, 0);
  double x[10];
  for (int rep = 0; rep < 50; ++rep) {
    for (double& v : x) v = 2.0 * rng.uniform() - 1.0;
    for (double s_off : {-30.0, -2.0, -0.1, 0.0, 0.1, 2.0, 30.0}) {
      const double s = syn::surrogate_base(x) + s_off;
      const double ps = syn::pi_s_true(x, s, 2.0, 0.2);
      const double rs = syn::rho_s_true(x, s, 2.0, 1.0, 0.2);
      CHECK(ps >= 1e-3);
      CHECK(ps <= 1.0 - 1e-3);
      CHECK(std::isfinite(rs));
      CHECK(rs > 0.0);
      CHECK(rs < 1.0);
    }
    // the sign branch in the regime-density shift is continuous at q = 0
    const double a = syn::surrogate_base(x);
    const double tiny = 1e-9;
    const double up = syn::rho_s_true(x, a + tiny, 2.0, 1.0, 0.2);
    const double dn = syn::rho_s_true(x, a - tiny, 2.0, 1.0, 0.2);
    CHECK(std::abs(up - dn) < 1e-6);
  }
}

TEST_CASE("generated synthetic data has the advertised structure") {
  SyntheticConfig cfg = scenario("t+o", 4000, 11);
  auto [ds, oracle] = generate_synthetic(cfg);
  CHECK(ds.units.size() == 4000);
  CHECK(ds.d_x == 10);
  CHECK(ds.d_s == 1);
  REQUIRE(oracle.tau.size() == 4000);
  for (std::size_t i = 0; i < ds.units.size(); ++i) {
    const auto& u = ds.units[i];
    CHECK(u.a.has_value() == (u.r == 0));
    CHECK(u.y.has_value() == (u.r == 1));
    CHECK(u.s.size() == 1);
    CHECK(oracle.tau[i] == 1.0 + (u.x[0] + u.x[1] + u.x[2] + u.x[3]) / 4.0);
    CHECK(oracle.pi_true[i] == syn::pi(u.x.data(), cfg.gamma_pi));
    CHECK(oracle.rho_true[i] == syn::rho(u.x.data(), cfg.gamma_rho));
  }
  CHECK_FALSE(ds.indices_where_r(0).empty());
  CHECK_FALSE(ds.indices_where_r(1).empty());
}

TEST_CASE("zero treatment-difficulty gives a coin-flip propensity") {
  SyntheticConfig cfg = scenario("star", 10000, 3);
  auto [ds, oracle] = generate_synthetic(cfg);
  std::size_t treated = 0, experimental = 0;
  for (const auto& u : ds.units) {
    if (u.r != 0) continue;
    ++experimental;
    treated += static_cast<std::size_t>(*u.a);
  }
  const double frac = static_cast<double>(treated) / static_cast<double>(experimental);
  CHECK(frac > 0.47);
  CHECK(frac < 0.53);
  for (double p : oracle.pi_true) CHECK(p == 0.5);
}

TEST_CASE("gamma_rho shifts mass to the observational regime") {
  auto [ds, oracle] = generate_synthetic(scenario("o", 10000, 4));
  double mean_rho = 0.0;
  for (double r : oracle.rho_true) mean_rho += r;
  mean_rho /= static_cast<double>(oracle.rho_true.size());
  CHECK(mean_rho > 0.5);
}

TEST_CASE("overlap shrinks monotonically in the difficulty knob") {
  num::RngStream rng(33, 0);
  double x[10];
  double prev = 1.0;
  for (double gamma : {0.0, 1.0, 2.0, 3.0}) {
    num::RngStream fresh(33, 0);  // same covariate draws per gamma
    double acc = 0.0;
    for (int rep = 0; rep < 10000; ++rep) {
      for (double& v : x) v = 2.0 * fresh.uniform() - 1.0;
      const double p = syn::pi(x, gamma);
      acc += p * (1.0 - p);
    }
    acc /= 10000.0;
    CHECK(acc < prev);
    prev = acc;
  }
  (void)rng;
}

TEST_CASE("both potential outcomes with shared noise differ by exactly the effect") {
  num::RngStream rng(34, 0);
  double x[10];
  double worst = 0.0;
  for (int rep = 0; rep < 10000; ++rep) {
    for (double& v : x) v = 2.0 * rng.uniform() - 1.0;
    const double delta = 0.2 * rng.normal();
    const double eps = 0.5 * rng.normal();
    const double base = syn::surrogate_base(x);
    const double tau = syn::tau_s(x);
    const double s1 = base + 0.5 * tau + delta;
    const double s0 = base - 0.5 * tau + delta;
    const double y1 = syn::long_term_base(x) + s1 + eps;
    const double y0 = syn::long_term_base(x) + s0 + eps;
    worst = std::max(worst, std::abs((y1 - y0) - tau));
  }
  CHECK(worst < 1e-12);
}

TEST_CASE("long-term outcome carries no direct treatment signal") {
  SyntheticDraw full = generate_synthetic_full(scenario("t+o", 20000, 5));
  // residual against the true outcome surface, regressed on treatment among
  // experimental units where the latent long-term outcome is known
  std::vector<double> res, a;
  for (std::size_t i = 0; i < full.dataset.units.size(); ++i) {
    const auto& u = full.dataset.units[i];
    if (u.r != 0) continue;
    res.push_back(full.y_latent[i] - syn::h_true(u.x.data(), u.s[0]));
    a.push_back(static_cast<double>(full.a_latent[i]));
  }
  const std::size_t n = res.size();
  REQUIRE(n > 1000);
  double am = 0.0, rm = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    am += a[i];
    rm += res[i];
  }
  am /= static_cast<double>(n);
  rm /= static_cast<double>(n);
  double sxx = 0.0, sxy = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    sxx += (a[i] - am) * (a[i] - am);
    sxy += (a[i] - am) * (res[i] - rm);
  }
  const double slope = sxy / sxx;
  double rss = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double fit = rm + slope * (a[i] - am);
    rss += (res[i] - fit) * (res[i] - fit);
  }
  const double se = std::sqrt(rss / static_cast<double>(n - 2) / sxx);
  CHECK(std::abs(slope) < 3.0 * se);
}

TEST_CASE("synthetic generation is deterministic per seed") {
  const SyntheticConfig cfg = scenario("t", 500, 77);
  auto [d1, o1] = generate_synthetic(cfg);
  auto [d2, o2] = generate_synthetic(cfg);
  CHECK(data::fingerprint(d1) == data::fingerprint(d2));
  CHECK(o1.tau == o2.tau);
  SyntheticConfig other = cfg;
  other.seed = 78;
  auto [d3, o3] = generate_synthetic(other);
  CHECK(data::fingerprint(d1) != data::fingerprint(d3));
}

TEST_CASE("config validation rejects bad values") {
  SyntheticConfig cfg;
  cfg.n = 0;
  CHECK_THROWS_AS(cfg.validate(), ConfigError);
  cfg = SyntheticConfig{};
  cfg.sigma_s = 0.0;
  CHECK_THROWS_AS(cfg.validate(), ConfigError);
  cfg = SyntheticConfig{};
  CHECK(SyntheticConfig::from_json(cfg.to_json()).to_json() == cfg.to_json());
}

TEST_CASE("evaluation set is conditioned on the experimental regime") {
  const SyntheticConfig cfg = scenario("t+o", 3000, 1);
  const EvalSet ev = synthetic_eval_set(cfg, 2000, 42);
  CHECK(ev.x.rows == 2000);
  CHECK(ev.x.cols == 10);
  double eval_rho = 0.0;
  for (double r : ev.rho_true) eval_rho += r;
  eval_rho /= 2000.0;
  // unconditional mean of rho under the same gamma
  num::RngStream rng(35, 0);
  double pop_rho = 0.0;
  double x[10];
  for (int rep = 0; rep < 20000; ++rep) {
    for (double& v : x) v = 2.0 * rng.uniform() - 1.0;
    pop_rho += syn::rho(x, cfg.gamma_rho);
  }
  pop_rho /= 20000.0;
  CHECK(eval_rho < pop_rho - 0.03);
  for (std::size_t i = 0; i < ev.x.rows; ++i)
    CHECK(ev.tau[i] == syn::tau_s(ev.x.row(i)));
  const EvalSet again = synthetic_eval_set(cfg, 2000, 42);
  CHECK(again.x.v == ev.x.v);
}

TEST_CASE("oracle csv uses the pinned header and full precision") {
  OracleBundle b;
  b.tau = {1.0, 0.1 + 0.2};
  b.pi_true = {0.5, 0.25};
  b.rho_true = {0.75, 1.0 / 3.0};
  b.e_true = {0.5, 0.5};
  const std::string path = "test_oracle_tmp.csv";
  save_oracle_csv(path, b);
  std::ifstream f(path);
  std::string line;
  std::getline(f, line);
  CHECK(line == "index,tau_true,pi_true,rho_true");
  std::getline(f, line);
  CHECK(line == "0,1,0.5,0.75");
  std::getline(f, line);
  CHECK(line == "1,0.30000000000000004,0.25,0.33333333333333331");
  f.close();
  std::remove(path.c_str());
  CHECK_THROWS_AS(save_oracle_csv("/nonexistent_dir_zz/x.csv", b), IoError);
}

TEST_CASE("stand-in covariates cover the required columns") {
  CovariateTable t = standin_covariates(800, 21);
  CHECK(t.names.size() == 14);
  CHECK(t.values.rows == 800);
  for (const std::string& name : required_covariate_names()) CHECK(t.column(name) < 14);
  CHECK_THROWS_AS(t.column("stroketype"), DataError);
  // raw scale sanity before normalization
  const std::size_t age_col = t.column("age");
  double age_mean = 0.0;
  for (std::size_t i = 0; i < t.values.rows; ++i) age_mean += t.values.at(i, age_col);
  age_mean /= 800.0;
  CHECK(age_mean > 60.0);
  CHECK(age_mean < 85.0);

  normalize_columns(t);
  for (std::size_t j = 0; j < t.values.cols; ++j) {
    double m = 0.0, ss = 0.0;
    for (std::size_t i = 0; i < t.values.rows; ++i) m += t.values.at(i, j);
    m /= 800.0;
    for (std::size_t i = 0; i < t.values.rows; ++i) {
      const double d = t.values.at(i, j) - m;
      ss += d * d;
    }
    CHECK(std::abs(m) < 1e-9);
    CHECK(std::sqrt(ss / 800.0) == doctest::Approx(1.0).epsilon(1e-6));
  }
}

TEST_CASE("covariate csv loading round trip and failure modes") {
  const std::string path = "test_cov_tmp.csv";
  {
    std::ofstream f(path);
    f << "nihss,age\n11,72.5\n8,64\n";
  }
  CovariateTable t = load_covariates(path, false);
  CHECK(t.names == std::vector<std::string>{"nihss", "age"});
  CHECK(t.values.rows == 2);
  CHECK(t.values.at(0, 0) == 11.0);
  CHECK(t.values.at(1, 1) == 64.0);
  {
    std::ofstream f(path);
    f << "nihss,age\n11,72.5\n8,sixty\n";
  }
  CHECK_THROWS_WITH_AS(load_covariates(path, false),
                       doctest::Contains("row 2, column 'age'"), DataError);
  {
    std::ofstream f(path);
    f << "nihss,age\n11\n";
  }
  CHECK_THROWS_AS(load_covariates(path, false), DataError);
  std::remove(path.c_str());
  CHECK_THROWS_AS(load_covariates("missing_file_zz.csv", false), IoError);
}

namespace {

SemiSyntheticConfig standin_config(std::size_t n, uint64_t seed) {
  SemiSyntheticConfig cfg;
  cfg.covariates = standin_covariates(n, 1000 + seed);
  normalize_columns(cfg.covariates);
  cfg.seed = seed;
  return cfg;
}

}  // namespace

TEST_CASE("semi-synthetic generation structure and oracle range") {
  SemiSyntheticConfig cfg = standin_config(900, 2);
  cfg.gamma_pi = 1.0;
  cfg.gamma_rho = 0.0;
  cfg.mc_draws_for_oracle = 400;
  auto [ds, oracle] = generate_semisynthetic(cfg);
  CHECK(ds.units.size() == 900);
  CHECK(ds.d_x == 14);
  CHECK(ds.d_s == 1);
  for (std::size_t i = 0; i < ds.units.size(); ++i) {
    const auto& u = ds.units[i];
    CHECK(u.s[0] > 0.0);
    CHECK(u.s[0] < 1.0);
    if (u.y) {
      CHECK(*u.y > 0.0);
      CHECK(*u.y < 1.0);
    }
    CHECK(oracle.tau[i] >= -1.0);
    CHECK(oracle.tau[i] <= 1.0);
    CHECK(oracle.rho_true[i] >= 0.01);
    CHECK(oracle.rho_true[i] <= 0.99);
  }
  CHECK_FALSE(ds.indices_where_r(0).empty());
  CHECK_FALSE(ds.indices_where_r(1).empty());
}

TEST_CASE("semi-synthetic coin-flip propensity at zero difficulty") {
  SemiSyntheticConfig cfg = standin_config(2500, 3);
  cfg.gamma_pi = 0.0;
  cfg.mc_draws_for_oracle = 50;
  auto [ds, oracle] = generate_semisynthetic(cfg);
  for (double p : oracle.pi_true) CHECK(p == 0.5);
  std::size_t treated = 0, experimental = 0;
  for (const auto& u : ds.units) {
    if (u.r != 0) continue;
    ++experimental;
    treated += static_cast<std::size_t>(*u.a);
  }
  REQUIRE(experimental > 300);
  const double frac = static_cast<double>(treated) / static_cast<double>(experimental);
  CHECK(frac > 0.42);
  CHECK(frac < 0.58);
}

TEST_CASE("zero short-term effect forces a zero oracle effect") {
  SemiSyntheticConfig cfg = standin_config(300, 4);
  cfg.beta = {0.0, 0.0, 0.0, 0.0, 0.0, 0.0};
  cfg.mc_draws_for_oracle = 100;
  auto [ds, oracle] = generate_semisynthetic(cfg);
  for (double t : oracle.tau) CHECK(t == 0.0);
}

TEST_CASE("semi-synthetic determinism and subsampling") {
  SemiSyntheticConfig cfg = standin_config(600, 5);
  cfg.mc_draws_for_oracle = 200;
  auto [d1, o1] = generate_semisynthetic(cfg);
  auto [d2, o2] = generate_semisynthetic(cfg);
  CHECK(data::fingerprint(d1) == data::fingerprint(d2));
  CHECK(o1.tau == o2.tau);

  cfg.subsample_n = 150;
  auto [d3, o3] = generate_semisynthetic(cfg);
  CHECK(d3.units.size() == 150);
  CHECK(o3.tau.size() == 150);

  cfg.subsample_n = 601;
  CHECK_THROWS_AS(cfg.validate(), ConfigError);
}

TEST_CASE("semi-synthetic rejects tables without the formula columns") {
  SemiSyntheticConfig cfg;
  cfg.covariates.names = {"age", "randdelay"};
  cfg.covariates.values = Matrix(5, 2);
  CHECK_THROWS_WITH_AS(generate_semisynthetic(cfg), doctest::Contains("nihss"), DataError);
}

TEST_CASE("semi-synthetic eval set draws table rows by regime weight") {
  SemiSyntheticConfig cfg = standin_config(400, 6);
  cfg.gamma_rho = 1.0;
  cfg.mc_draws_for_oracle = 150;
  const EvalSet ev = semisynthetic_eval_set(cfg, 500, 9);
  CHECK(ev.x.rows == 500);
  CHECK(ev.x.cols == 14);
  for (std::size_t i = 0; i < ev.x.rows; ++i) {
    CHECK(ev.tau[i] >= -1.0);
    CHECK(ev.tau[i] <= 1.0);
  }
  // eval rows must be actual table rows
  std::set<std::string> table_keys;
  for (std::size_t i = 0; i < cfg.covariates.values.rows; ++i) {
    const double* row = cfg.covariates.values.row(i);
    table_keys.insert(std::string(reinterpret_cast<const char*>(row), 14 * sizeof(double)));
  }
  for (std::size_t i = 0; i < 20; ++i) {
    const double* row = ev.x.row(i);
    CHECK(table_keys.count(std::string(reinterpret_cast<const char*>(row), 14 * sizeof(double))) ==
          1);
  }
  const EvalSet again = semisynthetic_eval_set(cfg, 500, 9);
  CHECK(again.x.v == ev.x.v);
  CHECK(again.tau == ev.tau);
}
