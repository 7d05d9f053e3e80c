#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "hlte/dataset.hpp"
#include "hlte/mlp.hpp"
#include "hlte/nuisance.hpp"
#include "hlte/rng.hpp"
#include "hlte/weighting.hpp"
#include "json.hpp"

namespace hlte::lrn {

// The nine meta-learner variants. lt_t is the plug-in difference of outcome
// surfaces; lt_ra and lt_ipw regress classical pseudo-outcomes on the
// experimental stratum; the lt_o_* family minimizes the bilinear
// pseudo-outcome objective over both strata with the matching overlap
// weighting (dr = unweighted, to = treatment overlap, lo = regime overlap,
// do = both); w_ra and w_dr are the non-orthogonal weighted ablations.
enum class LearnerKind { lt_t, lt_ra, lt_ipw, lt_o_dr, lt_o_to, lt_o_lo, lt_o_do, w_ra, w_dr };

std::string learner_name(LearnerKind k);  // "lt-t", "lt-ra", ..., "w-dr"
LearnerKind learner_from_name(const std::string& name);  // config error on unknown
const std::vector<LearnerKind>& all_learners();

// Weighting family attached to each orthogonal kind (dr maps to the identity
// weighting). Non-orthogonal and plug-in kinds have no fixed family; asking
// for one is a config error.
wgt::WeightKind weight_kind_of(LearnerKind k);

enum class Aggregation { average_k_models, pooled };
std::string aggregation_name(Aggregation a);            // "average", "pooled"
Aggregation aggregation_from_name(const std::string&);  // config error on unknown

struct SecondStageConfig {
  int k_folds = 5;
  model::TrainConfig train = model::second_stage_config(0);  // seed field ignored; see fit
  Aggregation aggregation = Aggregation::average_k_models;
  // overlap weighting attached to the w_ra / w_dr ablations
  wgt::WeightKind ablation_weight = wgt::WeightKind::dual;

  void validate() const;  // k_folds >= 2, linear train head, named ablation weight
  nlohmann::json to_json() const;
  static SecondStageConfig from_json(const nlohmann::json& doc);
};

struct FitProvenance {
  uint64_t seed = 0;              // seed of the stream handed to fit
  uint64_t config_hash = 0;       // digest of kind + second-stage + nuisance recipes
  uint64_t data_fingerprint = 0;  // digest of the training dataset
  std::vector<std::string> warnings;
};

// A cross-fitted effect estimator. For lt_t the per-fold pair of outcome
// surfaces is kept and differenced at prediction time (aggregation always
// averages those folds); every other kind keeps one second-stage network per
// fold (or a single pooled network) and averages their predictions.
struct FittedHlteModel {
  LearnerKind kind = LearnerKind::lt_t;
  Aggregation aggregation = Aggregation::average_k_models;
  int d_x = 0;
  std::vector<model::PredictorModel> fold_models;
  std::vector<std::pair<model::PredictorModel, model::PredictorModel>> fold_mu;  // (mu1, mu0)
  FitProvenance provenance;

  // mean over fold models; domain error when the width is not d_x
  std::vector<double> predict_tau(const Matrix& x) const;

  nlohmann::json to_json() const;
  static FittedHlteModel from_json(const nlohmann::json& doc);
};

// Mean over rows of omega_star * g^2 - 2 * t_lt * g; the empirical loss the
// orthogonal second stage minimizes. Domain error on length mismatch.
double second_stage_objective(const std::vector<double>& g_values,
                              const std::vector<wgt::PseudoOutcomeRow>& rows);

// Two-stage cross-fitted fit. Stage 1 fits all nuisances per fold on the
// fold's complement; stage 2 consumes out-of-fold pseudo-outcomes. Every
// random choice derives from the stream by (kind, fold), so fitting one kind
// alone or inside a batch yields bit-identical models.
FittedHlteModel fit(LearnerKind kind, const data::CombinedDataset& data,
                    const SecondStageConfig& cfg, const nuis::NuisanceConfig& nuisance_cfg,
                    num::RngStream rng);

// Batch variant: stage-1 nuisances are fit once per fold and shared across
// all requested kinds.
std::vector<FittedHlteModel> fit_many(const std::vector<LearnerKind>& kinds,
                                      const data::CombinedDataset& data,
                                      const SecondStageConfig& cfg,
                                      const nuis::NuisanceConfig& nuisance_cfg,
                                      num::RngStream rng);

void save_model(const FittedHlteModel& model, const std::string& path);
FittedHlteModel load_model(const std::string& path);

// CSV schema: index,tau_hat with reals at 17 significant digits.
void save_predictions_csv(const std::vector<double>& tau_hat, const std::string& path);

}  // namespace hlte::lrn
