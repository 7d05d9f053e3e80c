#pragma once

#include <cstdint>
#include <vector>

#include "hlte/dataset.hpp"
#include "hlte/mlp.hpp"
#include "hlte/rng.hpp"
#include "hlte/simulate.hpp"
#include "json.hpp"

namespace hlte::nuis {

// Training recipes for the two architecture families. The seed fields are
// ignored by fit_nuisances, which draws one seed per network from its own
// stream instead.
struct NuisanceConfig {
  model::TrainConfig propensity = model::propensity_config(0);  // pi, pi_s, rho, rho_s
  model::TrainConfig outcome = model::outcome_config(0);        // h, mu0, mu1

  void validate() const;
  uint64_t hash() const;  // stable digest of both recipes
};

// The six fitted nuisance functions (mu split per arm). rho and rho_s are
// population-wide; pi, pi_s, mu0, mu1 condition on the experimental regime;
// h conditions on the observational regime.
struct NuisanceSet {
  model::PredictorModel rho, rho_s, pi, pi_s, h, mu0, mu1;
  int fold_id = -1;
  uint64_t config_hash = 0;

  nlohmann::json to_json() const;
  static NuisanceSet from_json(const nlohmann::json& doc);
};

// Per-unit nuisance evaluations aligned with unit_index. Every field is
// populated for every listed unit; the support flags say which values are
// genuine conditional estimates rather than model extrapolations:
// experimental_support covers pi, pi_s, mu0, mu1 (objects defined on r=0)
// and observational_support covers h (defined on r=1).
// one unit's slice of NuisanceValues, the working currency of the
// pseudo-outcome algebra
struct NuisanceRow {
  double pi, pi_s, rho, rho_s, h, mu0, mu1;
};

struct NuisanceValues {
  std::vector<int> unit_index;
  std::vector<double> pi, pi_s, rho, rho_s, h, mu0, mu1;
  std::vector<uint8_t> experimental_support;
  std::vector<uint8_t> observational_support;

  std::size_t size() const { return unit_index.size(); }
  NuisanceRow row(std::size_t i) const {
    return NuisanceRow{pi[i], pi_s[i], rho[i], rho_s[i], h[i], mu0[i], mu1[i]};
  }
};

// Stage-1 fitting over a training slice, in a fixed order: rho, rho_s, pi,
// pi_s, h, then mu1 and mu0 regressed on h-predictions (never raw Y). One
// seed per network is drawn from rng up front, in that same order, so a
// caller holding an equal stream can replay the pipeline step by step.
NuisanceSet fit_nuisances(const data::CombinedDataset& data,
                          const std::vector<int>& train_indices,
                          const NuisanceConfig& configs, num::RngStream rng, int fold_id = -1);

NuisanceValues evaluate_nuisances(const NuisanceSet& set, const data::CombinedDataset& data,
                                  const std::vector<int>& indices);

// True nuisance values for synthetically generated data, from the generator's
// closed forms (Bayes' rule supplies the surrogate-conditional propensities).
NuisanceValues oracle_nuisances(const sim::SyntheticConfig& config,
                                const data::CombinedDataset& data);

}  // namespace hlte::nuis
