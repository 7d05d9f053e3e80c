#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "hlte/dataset.hpp"
#include "hlte/matrix.hpp"
#include "json.hpp"

namespace hlte::sim {

// Synthetic benchmark over X ~ Unif[-1,1]^10 with a scalar surrogate. The two
// gamma knobs steer overlap: gamma_pi flattens or sharpens the experimental
// propensity, gamma_rho shifts mass toward the observational regime.
struct SyntheticConfig {
  std::size_t n = 3000;
  double gamma_pi = 0.0;
  double gamma_rho = 0.0;
  double sigma_s = 0.2;
  double sigma_y = 0.5;
  uint64_t seed = 0;

  void validate() const;
  nlohmann::json to_json() const;
  static SyntheticConfig from_json(const nlohmann::json& doc);
};

enum class Scenario { star, t, o, t_plus_o };

std::string scenario_name(Scenario s);                 // "star", "t", "o", "t+o"
Scenario scenario_from_name(const std::string& name);  // config error on unknown
// preset (gamma_pi, gamma_rho): star (0,0), t (2,0), o (0,1), t+o (2,1)
SyntheticConfig scenario(const std::string& name, std::size_t n = 3000, uint64_t seed = 0);

struct OracleBundle {
  std::vector<double> tau;       // true long-term CATE per unit
  std::vector<double> pi_true;   // experimental propensity
  std::vector<double> rho_true;  // observational-regime probability
  std::vector<double> e_true;    // implicit observational treatment propensity
};

// Closed-form pieces of the synthetic DGP. x points at 10 covariates. These
// back the oracle nuisances and give tests formula-level access.
namespace syn {
double rho(const double* x, double gamma_rho);
double pi(const double* x, double gamma_pi);  // trimmed at 0.1
double e(const double* x);                    // trimmed at 0.1
double surrogate_base(const double* x);       // a(X)
double tau_s(const double* x);                // also the true long-term effect
double long_term_base(const double* x);       // Y minus S and noise
double h_true(const double* x, double s);
double mu_true(const double* x, int arm);
// surrogate-conditional propensities by Bayes' rule, clamped to [1e-3, 1-1e-3]
double pi_s_true(const double* x, double s, double gamma_pi, double sigma_s);
double rho_s_true(const double* x, double s, double gamma_pi, double gamma_rho, double sigma_s);
}  // namespace syn

std::pair<data::CombinedDataset, OracleBundle> generate_synthetic(const SyntheticConfig& cfg);

// Diagnostic variant that also keeps the latent draws the observable dataset
// hides: treatment for observational units and the long-term outcome for
// experimental units.
struct SyntheticDraw {
  data::CombinedDataset dataset;
  OracleBundle oracle;
  std::vector<int> a_latent;     // every unit
  std::vector<double> y_latent;  // every unit
};
SyntheticDraw generate_synthetic_full(const SyntheticConfig& cfg);

// Evaluation covariates distributed as X | R=0 (rejection on 1-rho), with the
// oracle effect attached.
struct EvalSet {
  Matrix x;
  std::vector<double> tau;
  std::vector<double> pi_true;
  std::vector<double> rho_true;
};
EvalSet synthetic_eval_set(const SyntheticConfig& cfg, std::size_t size, uint64_t seed);

void save_oracle_csv(const std::string& path, const OracleBundle& bundle);

// Covariate table for the semi-synthetic benchmark: named real columns, one
// row per unit. The generator is agnostic to where the table came from.
struct CovariateTable {
  std::vector<std::string> names;
  Matrix values;

  std::size_t column(const std::string& name) const;  // data error when absent
};

CovariateTable load_covariates(const std::string& path, bool normalize);
void normalize_columns(CovariateTable& table);  // z-scores every column in place
// Plausible stand-in trial table (raw scale, not normalized): the 11 columns
// the formulas read plus gender, weight, sbprand.
CovariateTable standin_covariates(std::size_t n, uint64_t seed);
const std::vector<std::string>& required_covariate_names();

// Semi-synthetic benchmark on a real covariate table: bounded surrogate and
// outcome built from logits, no direct long-term effect. Coefficient defaults
// are the published sets; tests may zero them out.
struct SemiSyntheticConfig {
  CovariateTable covariates;
  double gamma_pi = 0.0;
  double gamma_rho = 0.0;
  double sigma_s = 0.2;
  double sigma_y = 0.5;
  uint64_t seed = 0;
  std::size_t mc_draws_for_oracle = 2000;
  std::size_t subsample_n = 0;  // 0 keeps every row

  std::array<double, 15> alpha{0.0,  0.9,  0.5,  0.4,  0.25, 0.18, 0.08, 0.10,
                               0.12, 0.25, 0.20, 0.10, 0.20, 0.12, 0.15};
  std::array<double, 6> beta{0.9, 0.30, 0.25, 0.15, 0.15, 0.10};
  std::array<double, 15> gamma_c{-0.2, 0.01, 0.9,  0.2,  0.6,  0.25, 0.25, 0.15,
                                 0.10, 0.08, 0.15, 0.12, 0.12, 0.08, 0.08};

  void validate() const;
};

std::pair<data::CombinedDataset, OracleBundle> generate_semisynthetic(
    const SemiSyntheticConfig& cfg);
EvalSet semisynthetic_eval_set(const SemiSyntheticConfig& cfg, std::size_t size, uint64_t seed);

}  // namespace hlte::sim
