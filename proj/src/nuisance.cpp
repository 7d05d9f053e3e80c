#include "hlte/nuisance.hpp"

#include <algorithm>
#include <string>

#include "hlte/errors.hpp"
#include "hlte/numerics.hpp"

namespace hlte::nuis {

namespace {

void check_indices(const data::CombinedDataset& data, const std::vector<int>& indices,
                   const char* who) {
  if (indices.empty()) throw DataError(std::string(who) + ": empty index set");
  std::vector<int> sorted = indices;
  std::sort(sorted.begin(), sorted.end());
  if (sorted.front() < 0 || sorted.back() >= data.n())
    throw DataError(std::string(who) + ": index " + std::to_string(sorted.back()) +
                    " out of range");
  if (std::adjacent_find(sorted.begin(), sorted.end()) != sorted.end())
    throw DataError(std::string(who) + ": duplicate unit index");
}

}  // namespace

void NuisanceConfig::validate() const {
  propensity.validate();
  outcome.validate();
  if (propensity.output_head != model::OutputHead::sigmoid)
    throw ConfigError("nuisance config: propensity recipe needs a sigmoid head");
  if (outcome.output_head != model::OutputHead::linear)
    throw ConfigError("nuisance config: outcome recipe needs a linear head");
}

uint64_t NuisanceConfig::hash() const {
  const std::string blob = propensity.to_json().dump() + "|" + outcome.to_json().dump();
  return num::fnv1a(blob.data(), blob.size());
}

nlohmann::json NuisanceSet::to_json() const {
  return {{"rho", rho.to_json()},   {"rho_s", rho_s.to_json()}, {"pi", pi.to_json()},
          {"pi_s", pi_s.to_json()}, {"h", h.to_json()},         {"mu0", mu0.to_json()},
          {"mu1", mu1.to_json()},   {"fold_id", fold_id},       {"config_hash", config_hash}};
}

NuisanceSet NuisanceSet::from_json(const nlohmann::json& doc) {
  NuisanceSet set;
  set.rho = model::PredictorModel::from_json(doc.at("rho"));
  set.rho_s = model::PredictorModel::from_json(doc.at("rho_s"));
  set.pi = model::PredictorModel::from_json(doc.at("pi"));
  set.pi_s = model::PredictorModel::from_json(doc.at("pi_s"));
  set.h = model::PredictorModel::from_json(doc.at("h"));
  set.mu0 = model::PredictorModel::from_json(doc.at("mu0"));
  set.mu1 = model::PredictorModel::from_json(doc.at("mu1"));
  set.fold_id = doc.at("fold_id").get<int>();
  set.config_hash = doc.at("config_hash").get<uint64_t>();
  return set;
}

NuisanceSet fit_nuisances(const data::CombinedDataset& data,
                          const std::vector<int>& train_indices,
                          const NuisanceConfig& configs, num::RngStream rng, int fold_id) {
  configs.validate();
  check_indices(data, train_indices, "fit_nuisances");

  std::vector<int> r0, r1;
  for (int idx : train_indices)
    (data.units[idx].r == 0 ? r0 : r1).push_back(idx);
  std::vector<int> treated, control;
  for (int idx : r0)
    (*data.units[idx].a == 1 ? treated : control).push_back(idx);

  if (r0.empty())
    throw DataError("fit_nuisances: pi unfittable, training slice has no experimental units");
  if (r1.empty())
    throw DataError("fit_nuisances: h unfittable, training slice has no observational units");
  if (treated.empty())
    throw DataError("fit_nuisances: mu1 unfittable, no treated units in the experimental slice");
  if (control.empty())
    throw DataError("fit_nuisances: mu0 unfittable, no control units in the experimental slice");

  // one seed per network, drawn in fit order
  const uint64_t seed_rho = rng.next_u64();
  const uint64_t seed_rho_s = rng.next_u64();
  const uint64_t seed_pi = rng.next_u64();
  const uint64_t seed_pi_s = rng.next_u64();
  const uint64_t seed_h = rng.next_u64();
  const uint64_t seed_mu1 = rng.next_u64();
  const uint64_t seed_mu0 = rng.next_u64();

  NuisanceSet set;
  set.fold_id = fold_id;
  set.config_hash = configs.hash();

  const Matrix x_all = data::x_matrix(data, train_indices);
  const Matrix sx_all = data::sx_matrix(data, train_indices);
  std::vector<double> r_label(train_indices.size());
  for (std::size_t i = 0; i < train_indices.size(); ++i)
    r_label[i] = static_cast<double>(data.units[train_indices[i]].r);

  model::TrainConfig cfg = configs.propensity;
  cfg.seed = seed_rho;
  set.rho = model::PredictorModel::fit_classifier(x_all, r_label, cfg);
  cfg.seed = seed_rho_s;
  set.rho_s = model::PredictorModel::fit_classifier(sx_all, r_label, cfg);

  const Matrix x_r0 = data::x_matrix(data, r0);
  const Matrix sx_r0 = data::sx_matrix(data, r0);
  std::vector<double> a_label(r0.size());
  for (std::size_t i = 0; i < r0.size(); ++i)
    a_label[i] = static_cast<double>(*data.units[r0[i]].a);
  cfg = configs.propensity;
  cfg.seed = seed_pi;
  set.pi = model::PredictorModel::fit_classifier(x_r0, a_label, cfg);
  cfg.seed = seed_pi_s;
  set.pi_s = model::PredictorModel::fit_classifier(sx_r0, a_label, cfg);

  const Matrix sx_r1 = data::sx_matrix(data, r1);
  std::vector<double> y_target(r1.size());
  for (std::size_t i = 0; i < r1.size(); ++i) y_target[i] = *data.units[r1[i]].y;
  model::TrainConfig out_cfg = configs.outcome;
  out_cfg.seed = seed_h;
  set.h = model::PredictorModel::fit_regressor(sx_r1, y_target, nullptr, out_cfg);

  // mu regressions consume the h model's predictions on the experimental
  // slice, per arm
  const std::vector<double> h_on_r0 = set.h.predict(sx_r0);
  Matrix x_treated(treated.size(), data.d_x), x_control(control.size(), data.d_x);
  std::vector<double> t_treated(treated.size()), t_control(control.size());
  std::size_t ti = 0, ci = 0;
  for (std::size_t i = 0; i < r0.size(); ++i) {
    const auto& u = data.units[r0[i]];
    if (*u.a == 1) {
      std::copy(u.x.begin(), u.x.end(), x_treated.row(ti));
      t_treated[ti] = h_on_r0[i];
      ++ti;
    } else {
      std::copy(u.x.begin(), u.x.end(), x_control.row(ci));
      t_control[ci] = h_on_r0[i];
      ++ci;
    }
  }
  out_cfg = configs.outcome;
  out_cfg.seed = seed_mu1;
  set.mu1 = model::PredictorModel::fit_regressor(x_treated, t_treated, nullptr, out_cfg);
  out_cfg = configs.outcome;
  out_cfg.seed = seed_mu0;
  set.mu0 = model::PredictorModel::fit_regressor(x_control, t_control, nullptr, out_cfg);
  return set;
}

NuisanceValues evaluate_nuisances(const NuisanceSet& set, const data::CombinedDataset& data,
                                  const std::vector<int>& indices) {
  check_indices(data, indices, "evaluate_nuisances");
  const Matrix x = data::x_matrix(data, indices);
  const Matrix sx = data::sx_matrix(data, indices);
  NuisanceValues nv;
  nv.unit_index = indices;
  nv.pi = set.pi.predict(x);
  nv.pi_s = set.pi_s.predict(sx);
  nv.rho = set.rho.predict(x);
  nv.rho_s = set.rho_s.predict(sx);
  nv.h = set.h.predict(sx);
  nv.mu0 = set.mu0.predict(x);
  nv.mu1 = set.mu1.predict(x);
  nv.experimental_support.resize(indices.size());
  nv.observational_support.resize(indices.size());
  for (std::size_t i = 0; i < indices.size(); ++i) {
    nv.experimental_support[i] = data.units[indices[i]].r == 0 ? 1 : 0;
    nv.observational_support[i] = data.units[indices[i]].r == 1 ? 1 : 0;
  }
  return nv;
}

NuisanceValues oracle_nuisances(const sim::SyntheticConfig& config,
                                const data::CombinedDataset& data) {
  if (data.d_x != 10 || data.d_s != 1)
    throw DomainError("oracle_nuisances: data shape does not match the synthetic generator");
  config.validate();
  const std::size_t n = data.units.size();
  NuisanceValues nv;
  nv.unit_index.resize(n);
  nv.pi.resize(n);
  nv.pi_s.resize(n);
  nv.rho.resize(n);
  nv.rho_s.resize(n);
  nv.h.resize(n);
  nv.mu0.resize(n);
  nv.mu1.resize(n);
  nv.experimental_support.resize(n);
  nv.observational_support.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    const auto& u = data.units[i];
    const double* x = u.x.data();
    const double s = u.s[0];
    nv.unit_index[i] = static_cast<int>(i);
    nv.pi[i] = sim::syn::pi(x, config.gamma_pi);
    nv.pi_s[i] = sim::syn::pi_s_true(x, s, config.gamma_pi, config.sigma_s);
    nv.rho[i] = sim::syn::rho(x, config.gamma_rho);
    nv.rho_s[i] = sim::syn::rho_s_true(x, s, config.gamma_pi, config.gamma_rho, config.sigma_s);
    nv.h[i] = sim::syn::h_true(x, s);
    nv.mu0[i] = sim::syn::mu_true(x, 0);
    nv.mu1[i] = sim::syn::mu_true(x, 1);
    nv.experimental_support[i] = u.r == 0 ? 1 : 0;
    nv.observational_support[i] = u.r == 1 ? 1 : 0;
  }
  return nv;
}

}  // namespace hlte::nuis
