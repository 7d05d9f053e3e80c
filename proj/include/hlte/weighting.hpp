#pragma once

#include <functional>
#include <string>
#include <vector>

#include "hlte/dataset.hpp"
#include "hlte/nuisance.hpp"

namespace hlte::wgt {

// The overlap-weighting families. "no" is the unweighted identity; "to"
// targets treatment overlap pi(1-pi); "lo" targets long-term outcome overlap
// rho; "dual" multiplies both (reported as "do" in names and files).
enum class WeightKind { no, to, lo, dual, custom };

std::string weight_kind_name(WeightKind k);
WeightKind weight_kind_from_name(const std::string& name);  // config error on unknown

// omega(pi, rho) together with its two analytic partials, which the
// weighting residual consumes directly. Custom weights must supply partials.
struct WeightingFunction {
  WeightKind kind = WeightKind::no;
  std::function<double(double, double)> value;
  std::function<double(double, double)> d_pi;
  std::function<double(double, double)> d_rho;

  static WeightingFunction named(WeightKind k);  // the four built-in kinds
  static WeightingFunction custom(std::function<double(double, double)> value,
                                  std::function<double(double, double)> d_pi,
                                  std::function<double(double, double)> d_rho);
};

// Pseudo-outcome algebra, per unit. All functions are pure.
//
// tau_aipw: the augmented IPW effect score on an experimental unit,
//   mu1 - mu0 + (A - pi)/(pi(1-pi)) * (h - mu_A).
// psi_obs: the observational correction on an r=1 unit,
//   (1-rho_s)/rho_s * (pi_s - pi)/(pi(1-pi)) * (Y - h).
// omega_residual: the signed first-order weighting residual,
//   1(R=0) d_pi(A - pi) + (1 - rho) d_rho (R - rho).
// omega_star: 1(R=0) omega + omega_residual; may be negative per unit.
// t_lt: 1(R=0) omega tau_aipw + 1(R=1) omega psi_obs + (mu1 - mu0) residual.
double tau_aipw(const data::UnitRecord& unit, const nuis::NuisanceRow& nv);
double psi_obs(const data::UnitRecord& unit, const nuis::NuisanceRow& nv);
double omega_residual(const data::UnitRecord& unit, const nuis::NuisanceRow& nv,
                      const WeightingFunction& w);
double omega_star(const data::UnitRecord& unit, const nuis::NuisanceRow& nv,
                  const WeightingFunction& w);
double t_lt(const data::UnitRecord& unit, const nuis::NuisanceRow& nv,
            const WeightingFunction& w);

// Published per-kind closed forms (to/lo/dual only), used as an independent
// cross-check of the general algebra above.
double closed_form_omega_star(const data::UnitRecord& unit, const nuis::NuisanceRow& nv,
                              WeightKind kind);
double closed_form_t_lt(const data::UnitRecord& unit, const nuis::NuisanceRow& nv,
                        WeightKind kind);

// Baseline pseudo-outcomes on experimental units.
double ra_pseudo_outcome(const data::UnitRecord& unit, const nuis::NuisanceRow& nv);
double ipw_pseudo_outcome(const data::UnitRecord& unit, const nuis::NuisanceRow& nv);

// Terms of the treatment-overlap learner: the blended outcome level
// m = pi mu1 + (1-pi) mu0 and the r=1 correction psi_t (zero on r=0).
struct ToTerms {
  double m = 0.0;
  double psi_t = 0.0;
};
ToTerms to_learner_terms(const data::UnitRecord& unit, const nuis::NuisanceRow& nv);

struct PseudoOutcomeRow {
  int unit_index = 0;
  int r = 0;
  double omega_star = 0.0;
  double t_lt = 0.0;
};

// omega* and T for every unit listed in nv, in nv order.
std::vector<PseudoOutcomeRow> compute_pseudo_outcomes(const data::CombinedDataset& data,
                                                      const nuis::NuisanceValues& nv,
                                                      const WeightingFunction& w);

// CSV schema: index,r,omega_star,t_lt with reals at 17 significant digits.
void save_pseudo_outcomes_csv(const std::vector<PseudoOutcomeRow>& rows,
                              const std::string& path);

// The omega-weighted average effect over experimental units:
// numerator = mean over r=0 of omega(pi, rho) * tau, denominator = mean of
// omega(pi, rho), value = ratio. tau is aligned with nv rows.
struct WeightedAte {
  double numerator = 0.0;
  double denominator = 0.0;
  double value = 0.0;
};
WeightedAte weighted_ate(const data::CombinedDataset& data, const nuis::NuisanceValues& nv,
                         const WeightingFunction& w, const std::vector<double>& tau);

}  // namespace hlte::wgt
