#include "hlte/learners.hpp"

#include <algorithm>
#include <fstream>

#include "hlte/errors.hpp"
#include "hlte/numerics.hpp"

namespace hlte::lrn {

namespace {

// re-raise the in-flight exception with a fold prefix, keeping its type
[[noreturn]] void rethrow_tagged(const std::string& tag) {
  try {
    throw;
  } catch (const TrainingError& e) {
    throw TrainingError(tag + e.what(), e.epoch());
  } catch (const ConfigError& e) {
    throw ConfigError(tag + e.what());
  } catch (const DomainError& e) {
    throw DomainError(tag + e.what());
  } catch (const DataError& e) {
    throw DataError(tag + e.what());
  } catch (const IoError& e) {
    throw IoError(tag + e.what());
  }
}

struct KindInfo {
  LearnerKind kind;
  const char* name;
};

constexpr KindInfo kKinds[] = {
    {LearnerKind::lt_t, "lt-t"},       {LearnerKind::lt_ra, "lt-ra"},
    {LearnerKind::lt_ipw, "lt-ipw"},   {LearnerKind::lt_o_dr, "lt-o-dr"},
    {LearnerKind::lt_o_to, "lt-o-to"}, {LearnerKind::lt_o_lo, "lt-o-lo"},
    {LearnerKind::lt_o_do, "lt-o-do"}, {LearnerKind::w_ra, "w-ra"},
    {LearnerKind::w_dr, "w-dr"},
};

bool is_orthogonal(LearnerKind k) {
  return k == LearnerKind::lt_o_dr || k == LearnerKind::lt_o_to || k == LearnerKind::lt_o_lo ||
         k == LearnerKind::lt_o_do;
}

// the fold's out-of-fold slice plus everything stage 2 reads from stage 1
struct FoldArtifacts {
  std::vector<int> idx;  // test indices, both strata
  nuis::NuisanceValues nv;
  model::PredictorModel mu1, mu0;
};

// one kind's training arrays on one fold
struct StageTwoData {
  Matrix x;
  std::vector<double> primary;            // bilinear: curvature; regression: target
  std::vector<double> secondary;          // bilinear: linear term; weighted regression: weights
  bool bilinear = false;
  bool weighted = false;
};

StageTwoData build_stage_two(LearnerKind kind, const data::CombinedDataset& data,
                             const SecondStageConfig& cfg, const FoldArtifacts& fold) {
  StageTwoData out;
  const nuis::NuisanceValues& nv = fold.nv;
  if (is_orthogonal(kind)) {
    const wgt::WeightingFunction w = wgt::WeightingFunction::named(weight_kind_of(kind));
    out.bilinear = true;
    out.x = data::x_matrix(data, fold.idx);
    out.primary.resize(nv.size());
    out.secondary.resize(nv.size());
    for (std::size_t i = 0; i < nv.size(); ++i) {
      const data::UnitRecord& u = data.units[static_cast<std::size_t>(fold.idx[i])];
      const nuis::NuisanceRow row = nv.row(i);
      out.primary[i] = wgt::omega_star(u, row, w);
      out.secondary[i] = wgt::t_lt(u, row, w);
    }
    return out;
  }
  if (kind == LearnerKind::w_dr) {
    const wgt::WeightingFunction attached = wgt::WeightingFunction::named(cfg.ablation_weight);
    const wgt::WeightingFunction identity = wgt::WeightingFunction::named(wgt::WeightKind::no);
    out.bilinear = true;
    out.x = data::x_matrix(data, fold.idx);
    out.primary.resize(nv.size());
    out.secondary.resize(nv.size());
    for (std::size_t i = 0; i < nv.size(); ++i) {
      const data::UnitRecord& u = data.units[static_cast<std::size_t>(fold.idx[i])];
      const nuis::NuisanceRow row = nv.row(i);
      const double omega = attached.value(row.pi, row.rho);
      out.primary[i] = u.r == 0 ? omega : 0.0;
      out.secondary[i] = omega * wgt::t_lt(u, row, identity);
    }
    return out;
  }

  // experimental-stratum regressions
  std::vector<int> exp_idx;
  std::vector<std::size_t> exp_pos;
  for (std::size_t i = 0; i < nv.size(); ++i)
    if (data.units[static_cast<std::size_t>(fold.idx[i])].r == 0) {
      exp_idx.push_back(fold.idx[i]);
      exp_pos.push_back(i);
    }
  if (exp_idx.empty())
    throw DataError("second stage: no experimental units in the fold slice");
  out.x = data::x_matrix(data, exp_idx);
  out.primary.resize(exp_idx.size());
  if (kind == LearnerKind::w_ra) {
    out.weighted = true;
    out.secondary.resize(exp_idx.size());
  }
  const wgt::WeightingFunction attached = wgt::WeightingFunction::named(cfg.ablation_weight);
  for (std::size_t j = 0; j < exp_idx.size(); ++j) {
    const data::UnitRecord& u = data.units[static_cast<std::size_t>(exp_idx[j])];
    const nuis::NuisanceRow row = nv.row(exp_pos[j]);
    switch (kind) {
      case LearnerKind::lt_ra:
        out.primary[j] = wgt::ra_pseudo_outcome(u, row);
        break;
      case LearnerKind::lt_ipw:
        out.primary[j] = wgt::ipw_pseudo_outcome(u, row);
        break;
      case LearnerKind::w_ra:
        out.primary[j] = wgt::ra_pseudo_outcome(u, row);
        out.secondary[j] = attached.value(row.pi, row.rho);
        break;
      default:
        throw DomainError("second stage: kind has no regression target");
    }
  }
  return out;
}

void append(StageTwoData& into, const StageTwoData& part) {
  if (into.x.rows == 0) {
    into = part;
    return;
  }
  into.x.v.insert(into.x.v.end(), part.x.v.begin(), part.x.v.end());
  into.x.rows += part.x.rows;
  into.primary.insert(into.primary.end(), part.primary.begin(), part.primary.end());
  into.secondary.insert(into.secondary.end(), part.secondary.begin(), part.secondary.end());
}

model::PredictorModel train_stage_two(const StageTwoData& td, model::TrainConfig train,
                                      uint64_t seed, std::vector<std::string>* warnings,
                                      const std::string& where) {
  train.seed = seed;
  if (td.bilinear) {
    double total = 0.0;
    for (double c : td.primary) total += c;
    if (!(total > 0.0) && warnings != nullptr)
      warnings->push_back(where + ": total pseudo-outcome weight is not positive; trained anyway");
    return model::PredictorModel::fit_bilinear(td.x, td.primary, td.secondary, train);
  }
  return model::PredictorModel::fit_regressor(td.x, td.primary,
                                              td.weighted ? &td.secondary : nullptr, train);
}

uint64_t hash_config(LearnerKind kind, const SecondStageConfig& cfg,
                     const nuis::NuisanceConfig& ncfg) {
  const std::string text = learner_name(kind) + '\x1f' + cfg.to_json().dump();
  uint64_t h = num::fnv1a(text.data(), text.size());
  return num::fnv1a_u64(ncfg.hash(), h);
}

}  // namespace

std::string learner_name(LearnerKind k) {
  for (const KindInfo& info : kKinds)
    if (info.kind == k) return info.name;
  throw DomainError("learners: unknown kind value");
}

LearnerKind learner_from_name(const std::string& name) {
  for (const KindInfo& info : kKinds)
    if (name == info.name) return info.kind;
  throw ConfigError("learners: unknown kind '" + name + "'");
}

const std::vector<LearnerKind>& all_learners() {
  static const std::vector<LearnerKind> all = [] {
    std::vector<LearnerKind> v;
    for (const KindInfo& info : kKinds) v.push_back(info.kind);
    return v;
  }();
  return all;
}

wgt::WeightKind weight_kind_of(LearnerKind k) {
  switch (k) {
    case LearnerKind::lt_o_dr: return wgt::WeightKind::no;
    case LearnerKind::lt_o_to: return wgt::WeightKind::to;
    case LearnerKind::lt_o_lo: return wgt::WeightKind::lo;
    case LearnerKind::lt_o_do: return wgt::WeightKind::dual;
    default:
      throw ConfigError("learners: kind '" + learner_name(k) +
                        "' has no fixed weighting family");
  }
}

std::string aggregation_name(Aggregation a) {
  switch (a) {
    case Aggregation::average_k_models: return "average";
    case Aggregation::pooled: return "pooled";
  }
  throw DomainError("learners: unknown aggregation value");
}

Aggregation aggregation_from_name(const std::string& name) {
  if (name == "average") return Aggregation::average_k_models;
  if (name == "pooled") return Aggregation::pooled;
  throw ConfigError("learners: unknown aggregation '" + name + "'");
}

void SecondStageConfig::validate() const {
  if (k_folds < 2) throw ConfigError("second stage: k_folds must be at least 2");
  train.validate();
  if (train.output_head != model::OutputHead::linear)
    throw ConfigError("second stage: the effect network needs a linear head");
  if (ablation_weight == wgt::WeightKind::custom)
    throw ConfigError("second stage: ablation weighting must be a named kind");
}

nlohmann::json SecondStageConfig::to_json() const {
  return nlohmann::json{{"k_folds", k_folds},
                        {"train", train.to_json()},
                        {"aggregation", aggregation_name(aggregation)},
                        {"ablation_weight", wgt::weight_kind_name(ablation_weight)}};
}

SecondStageConfig SecondStageConfig::from_json(const nlohmann::json& doc) {
  SecondStageConfig cfg;
  cfg.k_folds = doc.at("k_folds").get<int>();
  cfg.train = model::TrainConfig::from_json(doc.at("train"));
  cfg.aggregation = aggregation_from_name(doc.at("aggregation").get<std::string>());
  cfg.ablation_weight = wgt::weight_kind_from_name(doc.at("ablation_weight").get<std::string>());
  cfg.validate();
  return cfg;
}

std::vector<double> FittedHlteModel::predict_tau(const Matrix& x) const {
  if (static_cast<int>(x.cols) != d_x)
    throw DomainError("predict_tau: input width " + std::to_string(x.cols) +
                      " does not match the fitted width " + std::to_string(d_x));
  std::vector<double> mean(x.rows, 0.0);
  std::size_t count = 0;
  if (kind == LearnerKind::lt_t) {
    for (const auto& [mu1, mu0] : fold_mu) {
      const std::vector<double> p1 = mu1.predict(x);
      const std::vector<double> p0 = mu0.predict(x);
      for (std::size_t i = 0; i < mean.size(); ++i) mean[i] += p1[i] - p0[i];
      ++count;
    }
  } else {
    for (const model::PredictorModel& g : fold_models) {
      const std::vector<double> p = g.predict(x);
      for (std::size_t i = 0; i < mean.size(); ++i) mean[i] += p[i];
      ++count;
    }
  }
  if (count == 0) throw DataError("predict_tau: model holds no fold estimators");
  for (double& v : mean) v /= static_cast<double>(count);
  return mean;
}

nlohmann::json FittedHlteModel::to_json() const {
  nlohmann::json doc{{"kind", learner_name(kind)},
                     {"aggregation", aggregation_name(aggregation)},
                     {"d_x", d_x},
                     {"provenance",
                      {{"seed", provenance.seed},
                       {"config_hash", provenance.config_hash},
                       {"data_fingerprint", provenance.data_fingerprint},
                       {"warnings", provenance.warnings}}}};
  if (kind == LearnerKind::lt_t) {
    nlohmann::json arr = nlohmann::json::array();
    for (const auto& [mu1, mu0] : fold_mu)
      arr.push_back(nlohmann::json{{"mu1", mu1.to_json()}, {"mu0", mu0.to_json()}});
    doc["fold_mu"] = std::move(arr);
  } else {
    nlohmann::json arr = nlohmann::json::array();
    for (const model::PredictorModel& g : fold_models) arr.push_back(g.to_json());
    doc["fold_models"] = std::move(arr);
  }
  return doc;
}

FittedHlteModel FittedHlteModel::from_json(const nlohmann::json& doc) {
  FittedHlteModel m;
  m.kind = learner_from_name(doc.at("kind").get<std::string>());
  m.aggregation = aggregation_from_name(doc.at("aggregation").get<std::string>());
  m.d_x = doc.at("d_x").get<int>();
  const nlohmann::json& prov = doc.at("provenance");
  m.provenance.seed = prov.at("seed").get<uint64_t>();
  m.provenance.config_hash = prov.at("config_hash").get<uint64_t>();
  m.provenance.data_fingerprint = prov.at("data_fingerprint").get<uint64_t>();
  m.provenance.warnings = prov.at("warnings").get<std::vector<std::string>>();
  if (m.kind == LearnerKind::lt_t) {
    for (const nlohmann::json& pair : doc.at("fold_mu"))
      m.fold_mu.emplace_back(model::PredictorModel::from_json(pair.at("mu1")),
                             model::PredictorModel::from_json(pair.at("mu0")));
    if (m.fold_mu.empty()) throw DataError("model bundle: no fold estimators");
  } else {
    for (const nlohmann::json& g : doc.at("fold_models"))
      m.fold_models.push_back(model::PredictorModel::from_json(g));
    if (m.fold_models.empty()) throw DataError("model bundle: no fold estimators");
  }
  return m;
}

double second_stage_objective(const std::vector<double>& g_values,
                              const std::vector<wgt::PseudoOutcomeRow>& rows) {
  if (g_values.size() != rows.size())
    throw DomainError("second_stage_objective: value and row counts differ");
  if (rows.empty()) throw DomainError("second_stage_objective: empty input");
  double acc = 0.0;
  for (std::size_t i = 0; i < rows.size(); ++i)
    acc += rows[i].omega_star * g_values[i] * g_values[i] - 2.0 * rows[i].t_lt * g_values[i];
  return acc / static_cast<double>(rows.size());
}

FittedHlteModel fit(LearnerKind kind, const data::CombinedDataset& data,
                    const SecondStageConfig& cfg, const nuis::NuisanceConfig& nuisance_cfg,
                    num::RngStream rng) {
  return fit_many({kind}, data, cfg, nuisance_cfg, rng).front();
}

std::vector<FittedHlteModel> fit_many(const std::vector<LearnerKind>& kinds,
                                      const data::CombinedDataset& data,
                                      const SecondStageConfig& cfg,
                                      const nuis::NuisanceConfig& nuisance_cfg,
                                      num::RngStream rng) {
  if (kinds.empty()) throw ConfigError("learners: no kinds requested");
  cfg.validate();
  nuisance_cfg.validate();
  data.validate();

  const int k = cfg.k_folds;
  num::RngStream fold_rng = rng.child(0);
  const data::FoldAssignment folds = data::make_folds(data, k, fold_rng);

  std::vector<FoldArtifacts> stage1(static_cast<std::size_t>(k));
  for (int b = 0; b < k; ++b) {
    const std::string tag = "fold " + std::to_string(b) + ": ";
    try {
      const std::vector<int> train = folds.train_indices(b);
      nuis::NuisanceSet set =
          nuis::fit_nuisances(data, train, nuisance_cfg, rng.child(100 + static_cast<uint64_t>(b)), b);
      FoldArtifacts& art = stage1[static_cast<std::size_t>(b)];
      art.idx = folds.test_indices(b);
      art.nv = nuis::evaluate_nuisances(set, data, art.idx);
      art.mu1 = std::move(set.mu1);
      art.mu0 = std::move(set.mu0);
    } catch (...) {
      rethrow_tagged(tag);
    }
  }

  std::vector<FittedHlteModel> out;
  out.reserve(kinds.size());
  for (LearnerKind kind : kinds) {
    FittedHlteModel m;
    m.kind = kind;
    m.aggregation = cfg.aggregation;
    m.d_x = data.d_x;
    m.provenance.seed = rng.seed();
    m.provenance.config_hash = hash_config(kind, cfg, nuisance_cfg);
    m.provenance.data_fingerprint = data::fingerprint(data);

    if (kind == LearnerKind::lt_t) {
      for (const FoldArtifacts& art : stage1) m.fold_mu.emplace_back(art.mu1, art.mu0);
      out.push_back(std::move(m));
      continue;
    }

    const num::RngStream kind_rng = rng.child(1000 + static_cast<uint64_t>(kind));
    if (cfg.aggregation == Aggregation::average_k_models) {
      for (int b = 0; b < k; ++b) {
        const std::string tag = "fold " + std::to_string(b) + ": ";
        try {
          const StageTwoData td =
              build_stage_two(kind, data, cfg, stage1[static_cast<std::size_t>(b)]);
          num::RngStream seed_rng = kind_rng.child(static_cast<uint64_t>(b));
          m.fold_models.push_back(train_stage_two(td, cfg.train, seed_rng.next_u64(),
                                                  &m.provenance.warnings, "fold " + std::to_string(b)));
        } catch (...) {
          rethrow_tagged(tag);
        }
      }
    } else {
      StageTwoData pooled;
      for (int b = 0; b < k; ++b) {
        const std::string tag = "fold " + std::to_string(b) + ": ";
        try {
          append(pooled, build_stage_two(kind, data, cfg, stage1[static_cast<std::size_t>(b)]));
        } catch (...) {
          rethrow_tagged(tag);
        }
      }
      num::RngStream seed_rng = kind_rng.child(static_cast<uint64_t>(k));
      m.fold_models.push_back(
          train_stage_two(pooled, cfg.train, seed_rng.next_u64(), &m.provenance.warnings, "pooled"));
    }
    out.push_back(std::move(m));
  }
  return out;
}

void save_model(const FittedHlteModel& model, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw IoError("model bundle: cannot open '" + path + "' for writing");
  out << model.to_json().dump(2) << '\n';
  if (!out) throw IoError("model bundle: write to '" + path + "' failed");
}

FittedHlteModel load_model(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("model bundle: cannot open '" + path + "'");
  nlohmann::json doc;
  try {
    in >> doc;
  } catch (const nlohmann::json::exception& e) {
    throw DataError("model bundle: malformed JSON in '" + path + "': " + e.what());
  }
  return FittedHlteModel::from_json(doc);
}

void save_predictions_csv(const std::vector<double>& tau_hat, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw IoError("predictions: cannot open '" + path + "' for writing");
  out << "index,tau_hat\n";
  for (std::size_t i = 0; i < tau_hat.size(); ++i)
    out << i << ',' << num::format_g17(tau_hat[i]) << '\n';
  if (!out) throw IoError("predictions: write to '" + path + "' failed");
}

}  // namespace hlte::lrn
