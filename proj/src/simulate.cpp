#include "hlte/simulate.hpp"

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <fstream>
#include <limits>
#include <numbers>
#include <numeric>

#include "hlte/errors.hpp"
#include "hlte/numerics.hpp"
#include "hlte/rng.hpp"

namespace hlte::sim {

namespace {

constexpr uint64_t kSynStream = 0x53594e;    // synthetic generation
constexpr uint64_t kSemiStream = 0x53454d;   // semi-synthetic generation
constexpr uint64_t kEvalStream = 0x4556;     // evaluation covariate draws
constexpr uint64_t kStandinStream = 0x5354;  // stand-in covariate table
constexpr double kOracleProbClip = 1e-3;

double clamp_prob(double p) { return std::clamp(p, kOracleProbClip, 1.0 - kOracleProbClip); }

}  // namespace

void SyntheticConfig::validate() const {
  if (n < 1) throw ConfigError("synthetic config: n must be >= 1");
  if (!(sigma_s > 0.0) || !(sigma_y > 0.0))
    throw ConfigError("synthetic config: noise scales must be positive");
  if (!std::isfinite(gamma_pi) || !std::isfinite(gamma_rho))
    throw ConfigError("synthetic config: gamma values must be finite");
}

nlohmann::json SyntheticConfig::to_json() const {
  return {{"n", n},           {"gamma_pi", gamma_pi}, {"gamma_rho", gamma_rho},
          {"sigma_s", sigma_s}, {"sigma_y", sigma_y},   {"seed", seed}};
}

SyntheticConfig SyntheticConfig::from_json(const nlohmann::json& doc) {
  SyntheticConfig cfg;
  cfg.n = doc.at("n").get<std::size_t>();
  cfg.gamma_pi = doc.at("gamma_pi").get<double>();
  cfg.gamma_rho = doc.at("gamma_rho").get<double>();
  cfg.sigma_s = doc.at("sigma_s").get<double>();
  cfg.sigma_y = doc.at("sigma_y").get<double>();
  cfg.seed = doc.at("seed").get<uint64_t>();
  cfg.validate();
  return cfg;
}

std::string scenario_name(Scenario s) {
  switch (s) {
    case Scenario::star: return "star";
    case Scenario::t: return "t";
    case Scenario::o: return "o";
    case Scenario::t_plus_o: return "t+o";
  }
  throw ConfigError("scenario: invalid enum value");
}

Scenario scenario_from_name(const std::string& name) {
  if (name == "star") return Scenario::star;
  if (name == "t") return Scenario::t;
  if (name == "o") return Scenario::o;
  if (name == "t+o") return Scenario::t_plus_o;
  throw ConfigError("scenario: unknown name '" + name + "' (use star, t, o, t+o)");
}

SyntheticConfig scenario(const std::string& name, std::size_t n, uint64_t seed) {
  SyntheticConfig cfg;
  cfg.n = n;
  cfg.seed = seed;
  switch (scenario_from_name(name)) {
    case Scenario::star: cfg.gamma_pi = 0.0; cfg.gamma_rho = 0.0; break;
    case Scenario::t: cfg.gamma_pi = 2.0; cfg.gamma_rho = 0.0; break;
    case Scenario::o: cfg.gamma_pi = 0.0; cfg.gamma_rho = 1.0; break;
    case Scenario::t_plus_o: cfg.gamma_pi = 2.0; cfg.gamma_rho = 1.0; break;
  }
  return cfg;
}

namespace syn {

double rho(const double* x, double gamma_rho) { return num::sigmoid(x[0] + x[1] - gamma_rho); }

double pi(const double* x, double gamma_pi) {
  const double arg = -gamma_pi * (x[0] * x[1] + 1.0 + x[2] + x[3] + x[7] * x[7]);
  return num::trim(num::sigmoid(arg), 0.1);
}

double e(const double* x) { return num::trim(num::sigmoid(x[1] + x[2] + x[3]), 0.1); }

double surrogate_base(const double* x) {
  return std::sin(std::numbers::pi * x[0] * x[1]) + 2.0 * (x[2] - 0.5) * (x[2] - 0.5) + x[3] +
         0.5 * x[4] + x[5];
}

double tau_s(const double* x) { return 1.0 + (x[0] + x[1] + x[2] + x[3]) / 4.0; }

double long_term_base(const double* x) { return std::sin(x[0] * x[1]) + x[6] * x[6] + x[7]; }

double h_true(const double* x, double s) { return long_term_base(x) + s; }

double mu_true(const double* x, int arm) {
  if (arm != 0 && arm != 1) throw DomainError("mu_true: arm must be 0 or 1");
  return long_term_base(x) + surrogate_base(x) + (arm - 0.5) * tau_s(x);
}

// S | A=a, X is normal around a(X) + (a-0.5) tau_S with scale sigma_s, so the
// log likelihood ratio between arms collapses to q = tau_S * (s - a(X)) / sigma_s^2.
namespace {
double arm_log_ratio(const double* x, double s, double sigma_s) {
  return tau_s(x) * (s - surrogate_base(x)) / (sigma_s * sigma_s);
}
}  // namespace

double pi_s_true(const double* x, double s, double gamma_pi, double sigma_s) {
  const double q = arm_log_ratio(x, s, sigma_s);
  return clamp_prob(num::sigmoid(num::logit(pi(x, gamma_pi)) + q));
}

double rho_s_true(const double* x, double s, double gamma_pi, double gamma_rho, double sigma_s) {
  const double q = arm_log_ratio(x, s, sigma_s);
  const double p0 = pi(x, gamma_pi);
  const double p1 = e(x);
  // log of the regime density ratio f(s|R=1)/f(s|R=0); both regimes mix the
  // same two arm densities, so factoring exp(q) keeps the logs bounded
  double shift;
  if (q > 0.0) {
    const double down = std::exp(-q);
    shift = std::log(p1 + (1.0 - p1) * down) - std::log(p0 + (1.0 - p0) * down);
  } else {
    const double up = std::exp(q);
    shift = std::log(p1 * up + 1.0 - p1) - std::log(p0 * up + 1.0 - p0);
  }
  return clamp_prob(num::sigmoid(num::logit(rho(x, gamma_rho)) + shift));
}

}  // namespace syn

SyntheticDraw generate_synthetic_full(const SyntheticConfig& cfg) {
  cfg.validate();
  SyntheticDraw out;
  data::CombinedDataset& ds = out.dataset;
  ds.d_x = 10;
  ds.d_s = 1;
  ds.units.reserve(cfg.n);
  out.oracle.tau.reserve(cfg.n);
  out.oracle.pi_true.reserve(cfg.n);
  out.oracle.rho_true.reserve(cfg.n);
  out.oracle.e_true.reserve(cfg.n);
  out.a_latent.reserve(cfg.n);
  out.y_latent.reserve(cfg.n);

  num::RngStream rng(cfg.seed, kSynStream);
  for (std::size_t i = 0; i < cfg.n; ++i) {
    data::UnitRecord u;
    u.x.resize(10);
    for (double& v : u.x) v = 2.0 * rng.uniform() - 1.0;
    const double* x = u.x.data();
    const double rho = syn::rho(x, cfg.gamma_rho);
    const double pi = syn::pi(x, cfg.gamma_pi);
    const double e = syn::e(x);
    u.r = rng.uniform() < rho ? 1 : 0;
    const double treat_prob = u.r == 0 ? pi : e;
    const int a = rng.uniform() < treat_prob ? 1 : 0;
    const double delta = cfg.sigma_s * rng.normal();
    const double eps = cfg.sigma_y * rng.normal();
    const double s = syn::surrogate_base(x) + (a - 0.5) * syn::tau_s(x) + delta;
    const double y = syn::long_term_base(x) + s + eps;
    u.s = {s};
    if (u.r == 0) u.a = a;
    if (u.r == 1) u.y = y;
    ds.units.push_back(std::move(u));
    out.oracle.tau.push_back(syn::tau_s(x));
    out.oracle.pi_true.push_back(pi);
    out.oracle.rho_true.push_back(rho);
    out.oracle.e_true.push_back(e);
    out.a_latent.push_back(a);
    out.y_latent.push_back(y);
  }
  ds.validate();
  return out;
}

std::pair<data::CombinedDataset, OracleBundle> generate_synthetic(const SyntheticConfig& cfg) {
  SyntheticDraw full = generate_synthetic_full(cfg);
  return {std::move(full.dataset), std::move(full.oracle)};
}

EvalSet synthetic_eval_set(const SyntheticConfig& cfg, std::size_t size, uint64_t seed) {
  cfg.validate();
  if (size < 1) throw ConfigError("eval set: size must be >= 1");
  EvalSet out;
  out.x = Matrix(size, 10);
  out.tau.resize(size);
  out.pi_true.resize(size);
  out.rho_true.resize(size);
  num::RngStream rng(seed, kEvalStream);
  double x[10];
  std::size_t filled = 0, attempts = 0;
  const std::size_t max_attempts = 20000000 + size * 10000;
  while (filled < size) {
    if (++attempts > max_attempts)
      throw DataError("eval set: rejection sampling failed; experimental regime too rare");
    for (double& v : x) v = 2.0 * rng.uniform() - 1.0;
    const double rho = syn::rho(x, cfg.gamma_rho);
    if (rng.uniform() < rho) continue;  // keep draws proportional to 1 - rho
    std::copy(x, x + 10, out.x.row(filled));
    out.tau[filled] = syn::tau_s(x);
    out.pi_true[filled] = syn::pi(x, cfg.gamma_pi);
    out.rho_true[filled] = rho;
    ++filled;
  }
  return out;
}

void save_oracle_csv(const std::string& path, const OracleBundle& bundle) {
  const std::size_t n = bundle.tau.size();
  if (bundle.pi_true.size() != n || bundle.rho_true.size() != n)
    throw DataError("oracle csv: bundle vectors are misaligned");
  std::ofstream f(path);
  if (!f) throw IoError("oracle csv: cannot open '" + path + "' for writing");
  f << "index,tau_true,pi_true,rho_true\n";
  for (std::size_t i = 0; i < n; ++i) {
    f << i << ',' << num::format_g17(bundle.tau[i]) << ',' << num::format_g17(bundle.pi_true[i])
      << ',' << num::format_g17(bundle.rho_true[i]) << '\n';
  }
  if (!f.good()) throw IoError("oracle csv: write to '" + path + "' failed");
}

std::size_t CovariateTable::column(const std::string& name) const {
  for (std::size_t j = 0; j < names.size(); ++j)
    if (names[j] == name) return j;
  throw DataError("covariates: missing required column '" + name + "'");
}

const std::vector<std::string>& required_covariate_names() {
  static const std::vector<std::string> names = {
      "nihss",          "age",           "randdelay",   "gcs_score_rand",
      "glucose",        "R_hypodensity", "R_swelling",  "R_infarct_size",
      "atrialfib_rand", "diabetes_pre",  "indepinadl_rand"};
  return names;
}

void normalize_columns(CovariateTable& table) {
  const std::size_t n = table.values.rows;
  if (n == 0) throw DataError("covariates: cannot normalize an empty table");
  for (std::size_t j = 0; j < table.values.cols; ++j) {
    double mean = 0.0;
    for (std::size_t i = 0; i < n; ++i) mean += table.values.at(i, j);
    mean /= static_cast<double>(n);
    double ss = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      const double d = table.values.at(i, j) - mean;
      ss += d * d;
    }
    double sd = std::sqrt(ss / static_cast<double>(n));
    if (!(sd > 1e-12)) sd = 1.0;
    for (std::size_t i = 0; i < n; ++i)
      table.values.at(i, j) = (table.values.at(i, j) - mean) / sd;
  }
}

namespace {

std::vector<std::string> split_fields(const std::string& line) {
  std::vector<std::string> out;
  std::string cur;
  for (char c : line) {
    if (c == ',') {
      out.push_back(cur);
      cur.clear();
    } else if (c != '\r') {
      cur += c;
    }
  }
  out.push_back(cur);
  return out;
}

double parse_value(const std::string& field, std::size_t row, const std::string& col) {
  const char* begin = field.c_str();
  char* end = nullptr;
  const double v = std::strtod(begin, &end);
  if (end == begin || *end != '\0' || !std::isfinite(v))
    throw DataError("covariates: row " + std::to_string(row) + ", column '" + col +
                    "': cannot parse '" + field + "'");
  return v;
}

}  // namespace

CovariateTable load_covariates(const std::string& path, bool normalize) {
  std::ifstream f(path);
  if (!f) throw IoError("covariates: cannot open '" + path + "'");
  std::string line;
  if (!std::getline(f, line)) throw DataError("covariates: '" + path + "' is empty");
  CovariateTable table;
  table.names = split_fields(line);
  for (const std::string& name : table.names)
    if (name.empty()) throw DataError("covariates: header has an empty column name");
  std::vector<double> rows;
  std::size_t row = 0;
  while (std::getline(f, line)) {
    if (line.empty() || line == "\r") continue;
    ++row;
    const std::vector<std::string> fields = split_fields(line);
    if (fields.size() != table.names.size())
      throw DataError("covariates: row " + std::to_string(row) + " has " +
                      std::to_string(fields.size()) + " fields, header has " +
                      std::to_string(table.names.size()));
    for (std::size_t j = 0; j < fields.size(); ++j)
      rows.push_back(parse_value(fields[j], row, table.names[j]));
  }
  if (row == 0) throw DataError("covariates: '" + path + "' has no data rows");
  table.values = Matrix(row, table.names.size());
  table.values.v = std::move(rows);
  if (normalize) normalize_columns(table);
  return table;
}

CovariateTable standin_covariates(std::size_t n, uint64_t seed) {
  if (n < 1) throw ConfigError("stand-in covariates: n must be >= 1");
  CovariateTable table;
  table.names = {"nihss",           "age",          "randdelay",      "gcs_score_rand",
                 "glucose",         "R_hypodensity", "R_swelling",     "R_infarct_size",
                 "atrialfib_rand",  "diabetes_pre",  "indepinadl_rand", "gender",
                 "weight",          "sbprand"};
  table.values = Matrix(n, table.names.size());
  num::RngStream rng(seed, kStandinStream);
  for (std::size_t i = 0; i < n; ++i) {
    double* row = table.values.row(i);
    const double age = std::clamp(72.0 + 12.0 * rng.normal(), 25.0, 95.0);
    const double nihss =
        std::round(std::clamp(11.0 + 0.1 * (age - 72.0) + 6.0 * rng.normal(), 1.0, 35.0));
    const double randdelay = std::clamp(3.5 + 1.2 * rng.normal(), 0.5, 6.0);
    const double gcs =
        std::round(std::clamp(14.0 - 0.15 * (nihss - 11.0) + 2.0 * rng.normal(), 3.0, 15.0));
    const double glucose = std::clamp(7.0 + 2.0 * rng.normal(), 3.0, 20.0);
    const double hypo = rng.uniform() < num::sigmoid(-1.0 + 0.08 * (nihss - 11.0)) ? 1.0 : 0.0;
    const double swelling = rng.uniform() < 0.15 ? 1.0 : 0.0;
    const double infarct =
        std::round(std::clamp(1.0 + 0.05 * (nihss - 11.0) + rng.normal(), 0.0, 3.0));
    const double afib = rng.uniform() < 0.3 ? 1.0 : 0.0;
    const double diabetes = rng.uniform() < 0.2 ? 1.0 : 0.0;
    const double indep = rng.uniform() < 0.7 ? 1.0 : 0.0;
    const double gender = rng.uniform() < 0.5 ? 1.0 : 0.0;
    const double weight = std::clamp(78.0 + 15.0 * rng.normal(), 40.0, 140.0);
    const double sbp = std::clamp(155.0 + 20.0 * rng.normal(), 90.0, 220.0);
    const double vals[14] = {nihss, age,  randdelay, gcs,      glucose, hypo,   swelling,
                             infarct, afib, diabetes,  indep,    gender,  weight, sbp};
    std::copy(vals, vals + 14, row);
  }
  return table;
}

void SemiSyntheticConfig::validate() const {
  if (covariates.values.rows < 1) throw ConfigError("semisynthetic config: empty covariate table");
  if (covariates.names.size() != covariates.values.cols)
    throw ConfigError("semisynthetic config: header/matrix width mismatch");
  if (!(sigma_s > 0.0) || !(sigma_y > 0.0))
    throw ConfigError("semisynthetic config: noise scales must be positive");
  if (!std::isfinite(gamma_pi) || !std::isfinite(gamma_rho))
    throw ConfigError("semisynthetic config: gamma values must be finite");
  if (mc_draws_for_oracle < 1)
    throw ConfigError("semisynthetic config: mc_draws_for_oracle must be >= 1");
  if (subsample_n > covariates.values.rows)
    throw ConfigError("semisynthetic config: subsample_n exceeds covariate rows");
}

namespace {

// resolved column positions for the covariates the formulas read
struct SemiColumns {
  std::size_t nihss, age, randdelay, gcs, glucose, hypo, swelling, infarct, afib, diabetes, indep;

  explicit SemiColumns(const CovariateTable& t)
      : nihss(t.column("nihss")),
        age(t.column("age")),
        randdelay(t.column("randdelay")),
        gcs(t.column("gcs_score_rand")),
        glucose(t.column("glucose")),
        hypo(t.column("R_hypodensity")),
        swelling(t.column("R_swelling")),
        infarct(t.column("R_infarct_size")),
        afib(t.column("atrialfib_rand")),
        diabetes(t.column("diabetes_pre")),
        indep(t.column("indepinadl_rand")) {}
};

double semi_rho(const double* x, const SemiColumns& c, double gamma_rho) {
  return num::trim(num::sigmoid(1.2 - 0.25 * x[c.nihss] + 0.10 * x[c.age] + gamma_rho), 0.01);
}

double semi_pi(const double* x, const SemiColumns& c, double gamma_pi) {
  return num::trim(num::sigmoid(gamma_pi * (x[c.nihss] * x[c.randdelay] + 1.0)), 0.01);
}

double semi_e(const double* x, const SemiColumns& c) {
  return num::trim(num::sigmoid(-0.3 + 0.03 * x[c.nihss]), 0.01);
}

double semi_a(const double* x, const SemiColumns& c, const std::array<double, 15>& al) {
  return al[0] + al[1] * std::exp(-0.7 * x[c.nihss]) + al[2] * std::exp(-0.4 * x[c.age]) +
         al[3] * std::exp(-0.6 * x[c.randdelay]) + al[4] * x[c.gcs] -
         al[5] * x[c.nihss] * x[c.nihss] - al[6] * x[c.age] * x[c.age] -
         al[7] * x[c.randdelay] * x[c.randdelay] - al[8] * x[c.nihss] * x[c.age] -
         al[9] * x[c.hypo] - al[10] * x[c.swelling] - al[11] * x[c.infarct] - al[12] * x[c.afib] -
         al[13] * x[c.diabetes] + al[14] * x[c.indep] - 0.05 * x[c.glucose];
}

double semi_tau_s(const double* x, const SemiColumns& c, const std::array<double, 6>& be) {
  return be[0] - be[1] * x[c.nihss] - be[2] * x[c.randdelay] - be[3] * x[c.age] +
         be[4] * x[c.gcs] - be[5] * x[c.hypo];
}

double semi_b(const double* x, const SemiColumns& c, double s_value,
              const std::array<double, 15>& ga) {
  const double s = s_value - 0.5;
  return ga[0] + ga[1] * std::exp(0.1 * s) + ga[2] * s - ga[3] * s * s +
         ga[4] * std::exp(-0.6 * x[c.nihss]) + ga[5] * std::exp(-0.3 * x[c.age]) +
         ga[6] * std::exp(-0.4 * x[c.randdelay]) + ga[7] * x[c.gcs] -
         ga[8] * x[c.nihss] * x[c.nihss] - ga[9] * x[c.nihss] * x[c.age] - ga[10] * x[c.hypo] -
         ga[11] * x[c.swelling] - ga[12] * x[c.afib] - ga[13] * x[c.diabetes] +
         ga[14] * x[c.indep];
}

// Monte-Carlo oracle effect: both potential surrogates share the same noise
// panel, which removes the delta-variance from the contrast. The outcome
// noise drops out of the estimand definition entirely.
double semi_oracle_tau(const double* x, const SemiColumns& c, const SemiSyntheticConfig& cfg,
                       const std::vector<double>& delta_panel) {
  const double a = semi_a(x, c, cfg.alpha);
  const double tau_s = semi_tau_s(x, c, cfg.beta);
  double acc = 0.0;
  for (double d : delta_panel) {
    const double s1 = num::sigmoid(a + 0.5 * tau_s + d);
    const double s0 = num::sigmoid(a - 0.5 * tau_s + d);
    acc += num::sigmoid(semi_b(x, c, s1, cfg.gamma_c)) - num::sigmoid(semi_b(x, c, s0, cfg.gamma_c));
  }
  return acc / static_cast<double>(delta_panel.size());
}

std::vector<double> draw_delta_panel(const SemiSyntheticConfig& cfg, num::RngStream rng) {
  std::vector<double> panel(cfg.mc_draws_for_oracle);
  for (double& d : panel) d = cfg.sigma_s * rng.normal();
  return panel;
}

}  // namespace

std::pair<data::CombinedDataset, OracleBundle> generate_semisynthetic(
    const SemiSyntheticConfig& cfg) {
  cfg.validate();
  const SemiColumns cols(cfg.covariates);
  num::RngStream root(cfg.seed, kSemiStream);
  num::RngStream unit_rng = root.child(0);
  const std::vector<double> delta_panel = draw_delta_panel(cfg, root.child(1));

  std::vector<std::size_t> rows(cfg.covariates.values.rows);
  std::iota(rows.begin(), rows.end(), 0);
  if (cfg.subsample_n > 0 && cfg.subsample_n < rows.size()) {
    num::RngStream pick = root.child(2);
    pick.shuffle(rows);
    rows.resize(cfg.subsample_n);
    std::sort(rows.begin(), rows.end());
  }

  data::CombinedDataset ds;
  ds.d_x = cfg.covariates.values.cols;
  ds.d_s = 1;
  ds.units.reserve(rows.size());
  OracleBundle oracle;
  oracle.tau.reserve(rows.size());
  oracle.pi_true.reserve(rows.size());
  oracle.rho_true.reserve(rows.size());
  oracle.e_true.reserve(rows.size());

  for (std::size_t row : rows) {
    const double* x = cfg.covariates.values.row(row);
    data::UnitRecord u;
    u.x.assign(x, x + ds.d_x);
    const double rho = semi_rho(x, cols, cfg.gamma_rho);
    const double pi = semi_pi(x, cols, cfg.gamma_pi);
    const double e = semi_e(x, cols);
    u.r = unit_rng.uniform() < rho ? 1 : 0;
    const double treat_prob = u.r == 0 ? pi : e;
    const int a = unit_rng.uniform() < treat_prob ? 1 : 0;
    const double delta = cfg.sigma_s * unit_rng.normal();
    const double eps = cfg.sigma_y * unit_rng.normal();
    const double a_base = semi_a(x, cols, cfg.alpha);
    const double tau_s = semi_tau_s(x, cols, cfg.beta);
    const double s = num::sigmoid(a_base + (a - 0.5) * tau_s + delta);
    const double y = num::sigmoid(semi_b(x, cols, s, cfg.gamma_c) + eps);
    u.s = {s};
    if (u.r == 0) u.a = a;
    if (u.r == 1) u.y = y;
    ds.units.push_back(std::move(u));
    oracle.tau.push_back(semi_oracle_tau(x, cols, cfg, delta_panel));
    oracle.pi_true.push_back(pi);
    oracle.rho_true.push_back(rho);
    oracle.e_true.push_back(e);
  }
  ds.validate();
  return {std::move(ds), std::move(oracle)};
}

EvalSet semisynthetic_eval_set(const SemiSyntheticConfig& cfg, std::size_t size, uint64_t seed) {
  cfg.validate();
  if (size < 1) throw ConfigError("eval set: size must be >= 1");
  const SemiColumns cols(cfg.covariates);
  num::RngStream root(seed, kEvalStream);
  const std::vector<double> delta_panel = draw_delta_panel(cfg, root.child(1));
  num::RngStream rng = root.child(0);

  const std::size_t n_rows = cfg.covariates.values.rows;
  // one oracle evaluation per distinct table row, then sample rows by 1-rho
  std::vector<double> row_tau(n_rows, std::numeric_limits<double>::quiet_NaN());
  EvalSet out;
  out.x = Matrix(size, cfg.covariates.values.cols);
  out.tau.resize(size);
  out.pi_true.resize(size);
  out.rho_true.resize(size);
  std::size_t filled = 0, attempts = 0;
  const std::size_t max_attempts = 20000000 + size * 10000;
  while (filled < size) {
    if (++attempts > max_attempts)
      throw DataError("eval set: rejection sampling failed; experimental regime too rare");
    const std::size_t row = static_cast<std::size_t>(rng.below(n_rows));
    const double* x = cfg.covariates.values.row(row);
    const double rho = semi_rho(x, cols, cfg.gamma_rho);
    if (rng.uniform() < rho) continue;
    if (std::isnan(row_tau[row])) row_tau[row] = semi_oracle_tau(x, cols, cfg, delta_panel);
    std::copy(x, x + out.x.cols, out.x.row(filled));
    out.tau[filled] = row_tau[row];
    out.pi_true[filled] = semi_pi(x, cols, cfg.gamma_pi);
    out.rho_true[filled] = rho;
    ++filled;
  }
  return out;
}

}  // namespace hlte::sim
