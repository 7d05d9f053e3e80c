#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <string>
#include <vector>

#include "doctest.h"
#include "hlte/errors.hpp"
#include "hlte/learners.hpp"
#include "hlte/nuisance.hpp"
#include "hlte/numerics.hpp"
#include "hlte/simulate.hpp"
#include "hlte/weighting.hpp"

using namespace hlte;
using namespace hlte::lrn;

namespace {

std::string temp_path(const std::string& name) {
  return (std::filesystem::temp_directory_path() / name).string();
}

// budget recipes so the orchestration tests stay quick
nuis::NuisanceConfig cheap_nuisances() {
  nuis::NuisanceConfig cfg;
  cfg.propensity.hidden_widths = {8};
  cfg.propensity.epochs = 4;
  cfg.outcome.hidden_widths = {8};
  cfg.outcome.epochs = 4;
  return cfg;
}

SecondStageConfig cheap_stage(int k_folds) {
  SecondStageConfig cfg;
  cfg.k_folds = k_folds;
  cfg.train.hidden_widths = {8};
  cfg.train.epochs = 4;
  return cfg;
}

double pehe(const std::vector<double>& pred, const std::vector<double>& truth) {
  REQUIRE(pred.size() == truth.size());
  double acc = 0.0;
  for (std::size_t i = 0; i < pred.size(); ++i)
    acc += (pred[i] - truth[i]) * (pred[i] - truth[i]);
  return std::sqrt(acc / static_cast<double>(pred.size()));
}

// scalar-surrogate DGP with a constant effect: S carries the whole signal
data::CombinedDataset constant_effect_data(int n, double effect, uint64_t seed) {
  num::RngStream rng(seed, 77);
  data::CombinedDataset ds;
  ds.d_x = 3;
  ds.d_s = 1;
  for (int i = 0; i < n; ++i) {
    data::UnitRecord u;
    u.x = {rng.uniform(-1.0, 1.0), rng.uniform(-1.0, 1.0), rng.uniform(-1.0, 1.0)};
    u.r = rng.uniform() < 0.5 ? 1 : 0;
    const int a = rng.uniform() < 0.5 ? 1 : 0;
    const double s = 0.3 * u.x[0] + (a - 0.5) * effect + rng.normal(0.0, 0.1);
    u.s = {s};
    if (u.r == 0)
      u.a = a;
    else
      u.y = s + rng.normal(0.0, 0.1);
    ds.units.push_back(std::move(u));
  }
  return ds;
}

}  // namespace

TEST_CASE("learner names round trip and map onto weighting families") {
  const std::vector<LearnerKind>& all = all_learners();
  REQUIRE(all.size() == 9);
  const char* names[] = {"lt-t",    "lt-ra",   "lt-ipw", "lt-o-dr", "lt-o-to",
                         "lt-o-lo", "lt-o-do", "w-ra",   "w-dr"};
  for (std::size_t i = 0; i < all.size(); ++i) {
    CHECK(learner_name(all[i]) == names[i]);
    CHECK(learner_from_name(names[i]) == all[i]);
  }
  CHECK_THROWS_AS(learner_from_name("lt-x"), ConfigError);

  CHECK(weight_kind_of(LearnerKind::lt_o_dr) == wgt::WeightKind::no);
  CHECK(weight_kind_of(LearnerKind::lt_o_to) == wgt::WeightKind::to);
  CHECK(weight_kind_of(LearnerKind::lt_o_lo) == wgt::WeightKind::lo);
  CHECK(weight_kind_of(LearnerKind::lt_o_do) == wgt::WeightKind::dual);
  CHECK_THROWS_AS(weight_kind_of(LearnerKind::lt_t), ConfigError);
  CHECK_THROWS_AS(weight_kind_of(LearnerKind::w_dr), ConfigError);

  CHECK(aggregation_name(Aggregation::average_k_models) == "average");
  CHECK(aggregation_name(Aggregation::pooled) == "pooled");
  CHECK(aggregation_from_name("pooled") == Aggregation::pooled);
  CHECK_THROWS_AS(aggregation_from_name("mean"), ConfigError);
}

TEST_CASE("second stage config validates and round trips") {
  SecondStageConfig cfg;
  CHECK(cfg.k_folds == 5);
  CHECK(cfg.train.epochs == 40);
  CHECK(cfg.train.hidden_widths == std::vector<int>{20, 20, 10, 10});
  CHECK(cfg.ablation_weight == wgt::WeightKind::dual);
  CHECK_NOTHROW(cfg.validate());

  SecondStageConfig one = cfg;
  one.k_folds = 1;
  CHECK_THROWS_AS(one.validate(), ConfigError);

  SecondStageConfig sig = cfg;
  sig.train.output_head = model::OutputHead::sigmoid;
  CHECK_THROWS_AS(sig.validate(), ConfigError);

  SecondStageConfig cust = cfg;
  cust.ablation_weight = wgt::WeightKind::custom;
  CHECK_THROWS_AS(cust.validate(), ConfigError);

  SecondStageConfig alt = cfg;
  alt.k_folds = 3;
  alt.aggregation = Aggregation::pooled;
  alt.ablation_weight = wgt::WeightKind::lo;
  const SecondStageConfig back = SecondStageConfig::from_json(alt.to_json());
  CHECK(back.k_folds == 3);
  CHECK(back.aggregation == Aggregation::pooled);
  CHECK(back.ablation_weight == wgt::WeightKind::lo);
  CHECK(back.train.epochs == alt.train.epochs);
}

TEST_CASE("second stage objective matches hand examples") {
  const wgt::PseudoOutcomeRow main{0, 0, 2.0, 4.0};
  CHECK(second_stage_objective({0.0}, {main}) == 0.0);
  CHECK(second_stage_objective({2.0}, {main}) == doctest::Approx(-8.0));
  // vertex of the one-row quadratic sits at t/omega = 2
  CHECK(second_stage_objective({1.8}, {main}) > second_stage_objective({2.0}, {main}));
  CHECK(second_stage_objective({2.2}, {main}) > second_stage_objective({2.0}, {main}));

  const wgt::PseudoOutcomeRow inert{1, 1, 0.0, 0.0};
  CHECK(second_stage_objective({2.0, 5.0}, {main, inert}) == doctest::Approx(-4.0));
  CHECK(second_stage_objective({1.8, 0.0}, {main, inert}) >
        second_stage_objective({2.0, 0.0}, {main, inert}));

  CHECK_THROWS_AS(second_stage_objective({1.0, 2.0}, {main}), DomainError);
  CHECK_THROWS_AS(second_stage_objective({}, {}), DomainError);
}

TEST_CASE("constant-class minimizer recovers the weighted population effect") {
  // restricting the second stage to constants, the bilinear minimizer is
  // sum(T)/sum(omega*); with true nuisances that ratio must sit on the
  // weighted average effect within Monte Carlo noise
  const sim::SyntheticConfig cfg = sim::scenario("t+o", 60000, 4242);
  auto [ds, oracle] = sim::generate_synthetic(cfg);
  const nuis::NuisanceValues nv = nuis::oracle_nuisances(cfg, ds);
  const double n = static_cast<double>(ds.n());

  for (wgt::WeightKind kind :
       {wgt::WeightKind::no, wgt::WeightKind::to, wgt::WeightKind::lo, wgt::WeightKind::dual}) {
    INFO("kind ", wgt::weight_kind_name(kind));
    const wgt::WeightingFunction w = wgt::WeightingFunction::named(kind);
    const std::vector<wgt::PseudoOutcomeRow> rows = wgt::compute_pseudo_outcomes(ds, nv, w);
    double t_sum = 0.0, star_sum = 0.0;
    for (const wgt::PseudoOutcomeRow& r : rows) {
      t_sum += r.t_lt;
      star_sum += r.omega_star;
    }
    REQUIRE(star_sum > 0.0);
    const double ratio = t_sum / star_sum;
    const double target = wgt::weighted_ate(ds, nv, w, oracle.tau).value;

    double var = 0.0;
    const double mean_resid = (t_sum - target * star_sum) / n;
    for (const wgt::PseudoOutcomeRow& r : rows) {
      const double u = r.t_lt - target * r.omega_star - mean_resid;
      var += u * u;
    }
    var /= (n - 1.0);
    const double se = std::sqrt(var / n) / (star_sum / n);
    CHECK(std::abs(ratio - target) <= 3.0 * se);
  }
}

TEST_CASE("fits are deterministic and batch-stable") {
  const sim::SyntheticConfig cfg = sim::scenario("star", 300, 31);
  auto [ds, oracle] = sim::generate_synthetic(cfg);
  const nuis::NuisanceConfig ncfg = cheap_nuisances();
  const SecondStageConfig scfg = cheap_stage(2);
  const sim::EvalSet eval = sim::synthetic_eval_set(cfg, 100, 32);

  const num::RngStream rng(2024, 5);
  const FittedHlteModel solo_a = fit(LearnerKind::lt_o_do, ds, scfg, ncfg, rng);
  const FittedHlteModel solo_b = fit(LearnerKind::lt_o_do, ds, scfg, ncfg, rng);
  CHECK(solo_a.predict_tau(eval.x) == solo_b.predict_tau(eval.x));
  CHECK(solo_a.provenance.config_hash == solo_b.provenance.config_hash);
  CHECK(solo_a.provenance.data_fingerprint == solo_b.provenance.data_fingerprint);
  CHECK(solo_a.provenance.seed == 2024);

  const std::vector<FittedHlteModel> batch =
      fit_many({LearnerKind::lt_ra, LearnerKind::lt_o_do}, ds, scfg, ncfg, rng);
  REQUIRE(batch.size() == 2);
  CHECK(batch[0].kind == LearnerKind::lt_ra);
  CHECK(batch[1].kind == LearnerKind::lt_o_do);
  CHECK(batch[1].predict_tau(eval.x) == solo_a.predict_tau(eval.x));
  CHECK(batch[0].provenance.config_hash != batch[1].provenance.config_hash);

  // distinct seeds move the estimate
  const FittedHlteModel other = fit(LearnerKind::lt_o_do, ds, scfg, ncfg, num::RngStream(2025, 5));
  CHECK(other.predict_tau(eval.x) != solo_a.predict_tau(eval.x));
}

TEST_CASE("every learner kind fits and predicts at desk scale") {
  const sim::SyntheticConfig cfg = sim::scenario("star", 320, 57);
  auto [ds, oracle] = sim::generate_synthetic(cfg);
  const nuis::NuisanceConfig ncfg = cheap_nuisances();
  const SecondStageConfig scfg = cheap_stage(2);
  const sim::EvalSet eval = sim::synthetic_eval_set(cfg, 60, 58);

  const std::vector<FittedHlteModel> models =
      fit_many(all_learners(), ds, scfg, ncfg, num::RngStream(11, 0));
  REQUIRE(models.size() == 9);
  for (const FittedHlteModel& m : models) {
    INFO("kind ", learner_name(m.kind));
    if (m.kind == LearnerKind::lt_t) {
      CHECK(m.fold_mu.size() == 2);
      CHECK(m.fold_models.empty());
    } else {
      CHECK(m.fold_models.size() == 2);
      CHECK(m.fold_mu.empty());
    }
    const std::vector<double> tau = m.predict_tau(eval.x);
    CHECK(tau.size() == 60);
    for (double t : tau) CHECK(std::isfinite(t));
  }

  Matrix narrow(3, 4);
  CHECK_THROWS_AS(models[0].predict_tau(narrow), DomainError);
  CHECK_THROWS_AS(fit_many({}, ds, scfg, ncfg, num::RngStream(11, 0)), ConfigError);
  SecondStageConfig bad = scfg;
  bad.k_folds = 1;
  CHECK_THROWS_AS(fit(LearnerKind::lt_t, ds, bad, ncfg, num::RngStream(11, 0)), ConfigError);
}

TEST_CASE("pooled aggregation trains a single second-stage network") {
  const sim::SyntheticConfig cfg = sim::scenario("star", 300, 99);
  auto [ds, oracle] = sim::generate_synthetic(cfg);
  SecondStageConfig scfg = cheap_stage(2);
  scfg.aggregation = Aggregation::pooled;

  const FittedHlteModel m =
      fit(LearnerKind::lt_o_do, ds, scfg, cheap_nuisances(), num::RngStream(3, 3));
  REQUIRE(m.fold_models.size() == 1);
  const sim::EvalSet eval = sim::synthetic_eval_set(cfg, 40, 100);
  // a one-model average is that model's prediction
  CHECK(m.predict_tau(eval.x) == m.fold_models[0].predict(eval.x));
}

TEST_CASE("averaging identical fold models reproduces any one of them") {
  const sim::SyntheticConfig cfg = sim::scenario("star", 300, 12);
  auto [ds, oracle] = sim::generate_synthetic(cfg);
  SecondStageConfig scfg = cheap_stage(2);
  scfg.aggregation = Aggregation::pooled;
  FittedHlteModel m =
      fit(LearnerKind::lt_o_do, ds, scfg, cheap_nuisances(), num::RngStream(8, 8));
  REQUIRE(m.fold_models.size() == 1);
  FittedHlteModel doubled = m;
  doubled.fold_models.push_back(m.fold_models[0]);

  const sim::EvalSet eval = sim::synthetic_eval_set(cfg, 40, 13);
  const std::vector<double> one = m.predict_tau(eval.x);
  const std::vector<double> two = doubled.predict_tau(eval.x);
  for (std::size_t i = 0; i < one.size(); ++i) CHECK(two[i] == doctest::Approx(one[i]));
}

TEST_CASE("plug-in learner tracks a constant effect") {
  const double effect = 1.5;
  const data::CombinedDataset ds = constant_effect_data(4000, effect, 404);
  nuis::NuisanceConfig ncfg;  // published recipes
  SecondStageConfig scfg;
  scfg.k_folds = 2;

  const FittedHlteModel m = fit(LearnerKind::lt_t, ds, scfg, ncfg, num::RngStream(21, 0));
  num::RngStream probe(22, 0);
  Matrix x(500, 3);
  for (std::size_t i = 0; i < x.rows * x.cols; ++i) x.v[i] = probe.uniform(-1.0, 1.0);
  const std::vector<double> tau = m.predict_tau(x);
  const double mean = std::accumulate(tau.begin(), tau.end(), 0.0) / 500.0;
  CHECK(std::abs(mean - effect) < 0.1);
}

TEST_CASE("unweighted and dual-weighted orthogonal stages agree on the easy scenario") {
  // with true nuisances and full overlap the weighting choice is immaterial;
  // fit only the second stage so the check isolates that claim
  const sim::SyntheticConfig cfg = sim::scenario("star", 6000, 606);
  auto [ds, oracle] = sim::generate_synthetic(cfg);
  const nuis::NuisanceValues nv = nuis::oracle_nuisances(cfg, ds);
  std::vector<int> idx(static_cast<std::size_t>(ds.n()));
  std::iota(idx.begin(), idx.end(), 0);
  const Matrix x = data::x_matrix(ds, idx);
  const sim::EvalSet eval = sim::synthetic_eval_set(cfg, 2000, 607);

  auto stage_two_pehe = [&](wgt::WeightKind kind) {
    const wgt::WeightingFunction w = wgt::WeightingFunction::named(kind);
    const std::vector<wgt::PseudoOutcomeRow> rows = wgt::compute_pseudo_outcomes(ds, nv, w);
    std::vector<double> curv(rows.size()), lin(rows.size());
    for (std::size_t i = 0; i < rows.size(); ++i) {
      curv[i] = rows[i].omega_star;
      lin[i] = rows[i].t_lt;
    }
    const model::PredictorModel g =
        model::PredictorModel::fit_bilinear(x, curv, lin, model::second_stage_config(909));
    return pehe(g.predict(eval.x), eval.tau);
  };

  const double pehe_dr = stage_two_pehe(wgt::WeightKind::no);
  const double pehe_do = stage_two_pehe(wgt::WeightKind::dual);
  CHECK(pehe_do < 1.0);
  CHECK(pehe_dr < 2.0 * pehe_do);
}

TEST_CASE("model bundles round trip through JSON files") {
  const sim::SyntheticConfig cfg = sim::scenario("star", 300, 71);
  auto [ds, oracle] = sim::generate_synthetic(cfg);
  const sim::EvalSet eval = sim::synthetic_eval_set(cfg, 30, 72);

  for (LearnerKind kind : {LearnerKind::lt_t, LearnerKind::lt_o_do}) {
    INFO("kind ", learner_name(kind));
    const FittedHlteModel m =
        fit(kind, ds, cheap_stage(2), cheap_nuisances(), num::RngStream(14, 14));
    const std::string path = temp_path("hlte_model_" + learner_name(kind) + ".json");
    save_model(m, path);
    const FittedHlteModel back = load_model(path);
    CHECK(back.kind == m.kind);
    CHECK(back.d_x == m.d_x);
    CHECK(back.provenance.seed == m.provenance.seed);
    CHECK(back.provenance.config_hash == m.provenance.config_hash);
    CHECK(back.provenance.data_fingerprint == m.provenance.data_fingerprint);
    CHECK(back.predict_tau(eval.x) == m.predict_tau(eval.x));
  }

  CHECK_THROWS_AS(load_model(temp_path("absent_hlte_model.json")), IoError);
  const std::string mangled = temp_path("hlte_model_bad.json");
  std::ofstream(mangled) << "{ not json";
  CHECK_THROWS_AS(load_model(mangled), DataError);

  FittedHlteModel hollow;
  hollow.d_x = 2;
  Matrix probe(1, 2);
  CHECK_THROWS_AS(hollow.predict_tau(probe), DataError);
}

TEST_CASE("prediction table writes the expected schema") {
  const std::string path = temp_path("hlte_predictions.csv");
  save_predictions_csv({1.5, -0.25, 3.0}, path);
  std::ifstream in(path);
  std::string line;
  std::getline(in, line);
  CHECK(line == "index,tau_hat");
  std::getline(in, line);
  CHECK(line == "0," + num::format_g17(1.5));
  std::getline(in, line);
  CHECK(line == "1," + num::format_g17(-0.25));
  std::getline(in, line);
  CHECK(line == "2," + num::format_g17(3.0));
  CHECK_FALSE(std::getline(in, line));
  CHECK_THROWS_AS(save_predictions_csv({1.0}, "/nonexistent_dir_hlte/p.csv"), IoError);
}
