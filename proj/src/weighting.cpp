#include "hlte/weighting.hpp"

#include <fstream>

#include "hlte/errors.hpp"
#include "hlte/numerics.hpp"

namespace hlte::wgt {

namespace {

void need_experimental(const data::UnitRecord& u, const char* who) {
  if (u.r != 0) throw DomainError(std::string(who) + ": defined only on experimental units");
  if (!u.a) throw DataError(std::string(who) + ": experimental unit without a treatment value");
}

void need_observational(const data::UnitRecord& u, const char* who) {
  if (u.r != 1) throw DomainError(std::string(who) + ": defined only on observational units");
  if (!u.y) throw DataError(std::string(who) + ": observational unit without an outcome value");
}

}  // namespace

std::string weight_kind_name(WeightKind k) {
  switch (k) {
    case WeightKind::no: return "no";
    case WeightKind::to: return "to";
    case WeightKind::lo: return "lo";
    case WeightKind::dual: return "do";
    case WeightKind::custom: return "custom";
  }
  throw DomainError("weighting: unknown kind value");
}

WeightKind weight_kind_from_name(const std::string& name) {
  if (name == "no") return WeightKind::no;
  if (name == "to") return WeightKind::to;
  if (name == "lo") return WeightKind::lo;
  if (name == "do") return WeightKind::dual;
  if (name == "custom") return WeightKind::custom;
  throw ConfigError("weighting: unknown kind '" + name + "'");
}

WeightingFunction WeightingFunction::named(WeightKind k) {
  WeightingFunction w;
  w.kind = k;
  switch (k) {
    case WeightKind::no:
      w.value = [](double, double) { return 1.0; };
      w.d_pi = [](double, double) { return 0.0; };
      w.d_rho = [](double, double) { return 0.0; };
      return w;
    case WeightKind::to:
      w.value = [](double pi, double) { return pi * (1.0 - pi); };
      w.d_pi = [](double pi, double) { return 1.0 - 2.0 * pi; };
      w.d_rho = [](double, double) { return 0.0; };
      return w;
    case WeightKind::lo:
      w.value = [](double, double rho) { return rho; };
      w.d_pi = [](double, double) { return 0.0; };
      w.d_rho = [](double, double) { return 1.0; };
      return w;
    case WeightKind::dual:
      w.value = [](double pi, double rho) { return pi * (1.0 - pi) * rho; };
      w.d_pi = [](double pi, double rho) { return (1.0 - 2.0 * pi) * rho; };
      w.d_rho = [](double pi, double) { return pi * (1.0 - pi); };
      return w;
    case WeightKind::custom:
      throw ConfigError("weighting: custom kind needs explicit value and partials");
  }
  throw DomainError("weighting: unknown kind value");
}

WeightingFunction WeightingFunction::custom(std::function<double(double, double)> value,
                                            std::function<double(double, double)> d_pi,
                                            std::function<double(double, double)> d_rho) {
  if (!value || !d_pi || !d_rho)
    throw ConfigError("weighting: custom kind needs explicit value and partials");
  WeightingFunction w;
  w.kind = WeightKind::custom;
  w.value = std::move(value);
  w.d_pi = std::move(d_pi);
  w.d_rho = std::move(d_rho);
  return w;
}

double tau_aipw(const data::UnitRecord& unit, const nuis::NuisanceRow& nv) {
  need_experimental(unit, "tau_aipw");
  const double a = static_cast<double>(*unit.a);
  const double mu_a = *unit.a == 1 ? nv.mu1 : nv.mu0;
  return nv.mu1 - nv.mu0 + (a - nv.pi) / (nv.pi * (1.0 - nv.pi)) * (nv.h - mu_a);
}

double psi_obs(const data::UnitRecord& unit, const nuis::NuisanceRow& nv) {
  need_observational(unit, "psi_obs");
  return (1.0 - nv.rho_s) / nv.rho_s * (nv.pi_s - nv.pi) / (nv.pi * (1.0 - nv.pi)) *
         (*unit.y - nv.h);
}

double omega_residual(const data::UnitRecord& unit, const nuis::NuisanceRow& nv,
                      const WeightingFunction& w) {
  const double r = static_cast<double>(unit.r);
  double res = (1.0 - nv.rho) * w.d_rho(nv.pi, nv.rho) * (r - nv.rho);
  if (unit.r == 0) {
    if (!unit.a) throw DataError("omega_residual: experimental unit without a treatment value");
    res += w.d_pi(nv.pi, nv.rho) * (static_cast<double>(*unit.a) - nv.pi);
  }
  return res;
}

double omega_star(const data::UnitRecord& unit, const nuis::NuisanceRow& nv,
                  const WeightingFunction& w) {
  const double base = unit.r == 0 ? w.value(nv.pi, nv.rho) : 0.0;
  return base + omega_residual(unit, nv, w);
}

double t_lt(const data::UnitRecord& unit, const nuis::NuisanceRow& nv,
            const WeightingFunction& w) {
  const double omega = w.value(nv.pi, nv.rho);
  const double score = unit.r == 0 ? omega * tau_aipw(unit, nv) : omega * psi_obs(unit, nv);
  return score + (nv.mu1 - nv.mu0) * omega_residual(unit, nv, w);
}

namespace {

double treatment_of(const data::UnitRecord& u, const char* who) {
  if (!u.a) throw DataError(std::string(who) + ": experimental unit without a treatment value");
  return static_cast<double>(*u.a);
}

}  // namespace

double closed_form_omega_star(const data::UnitRecord& unit, const nuis::NuisanceRow& nv,
                              WeightKind kind) {
  const double pi = nv.pi, rho = nv.rho;
  switch (kind) {
    case WeightKind::to: {
      if (unit.r != 0) return 0.0;
      const double a = treatment_of(unit, "closed_form_omega_star");
      return (a - pi) * (a - pi);
    }
    case WeightKind::lo: {
      const double r = static_cast<double>(unit.r);
      return (r - rho) * (r - rho);
    }
    case WeightKind::dual: {
      if (unit.r != 0) return pi * (1.0 - pi) * (1.0 - rho) * (1.0 - rho);
      const double a = treatment_of(unit, "closed_form_omega_star");
      return rho * (rho * pi * (1.0 - pi) + (1.0 - 2.0 * pi) * (a - pi));
    }
    default:
      throw ConfigError("weighting: no published closed form for kind '" +
                        weight_kind_name(kind) + "'");
  }
}

double closed_form_t_lt(const data::UnitRecord& unit, const nuis::NuisanceRow& nv,
                        WeightKind kind) {
  const double pi = nv.pi, rho = nv.rho;
  const double effect = nv.mu1 - nv.mu0;
  switch (kind) {
    case WeightKind::to: {
      if (unit.r == 0) {
        const double a = treatment_of(unit, "closed_form_t_lt");
        const ToTerms terms = to_learner_terms(unit, nv);
        return (a - pi) * (nv.h - terms.m);
      }
      return to_learner_terms(unit, nv).psi_t;
    }
    case WeightKind::lo: {
      const double r = static_cast<double>(unit.r);
      double t = (r - rho) * (r - rho) * effect;
      if (unit.r == 0) {
        const double a = treatment_of(unit, "closed_form_t_lt");
        const double mu_a = *unit.a == 1 ? nv.mu1 : nv.mu0;
        t += rho * (a - pi) / (pi * (1.0 - pi)) * (nv.h - mu_a);
      } else {
        t += rho * psi_obs(unit, nv);
      }
      return t;
    }
    case WeightKind::dual: {
      if (unit.r == 0) {
        const double a = treatment_of(unit, "closed_form_t_lt");
        const double mu_a = *unit.a == 1 ? nv.mu1 : nv.mu0;
        return effect * closed_form_omega_star(unit, nv, kind) +
               rho * (a - pi) * (nv.h - mu_a);
      }
      if (!unit.y) throw DataError("closed_form_t_lt: observational unit without an outcome value");
      const double shrink = (1.0 - rho) * (1.0 - rho);
      return effect * pi * (1.0 - pi) * shrink +
             rho * (1.0 - nv.rho_s) / nv.rho_s * (nv.pi_s - pi) * (*unit.y - nv.h);
    }
    default:
      throw ConfigError("weighting: no published closed form for kind '" +
                        weight_kind_name(kind) + "'");
  }
}

double ra_pseudo_outcome(const data::UnitRecord& unit, const nuis::NuisanceRow& nv) {
  need_experimental(unit, "ra_pseudo_outcome");
  if (*unit.a == 1) return nv.h - nv.mu0;
  return nv.mu1 - nv.h;
}

double ipw_pseudo_outcome(const data::UnitRecord& unit, const nuis::NuisanceRow& nv) {
  need_experimental(unit, "ipw_pseudo_outcome");
  const double a = static_cast<double>(*unit.a);
  return (a / nv.pi - (1.0 - a) / (1.0 - nv.pi)) * nv.h;
}

ToTerms to_learner_terms(const data::UnitRecord& unit, const nuis::NuisanceRow& nv) {
  ToTerms t;
  t.m = nv.pi * nv.mu1 + (1.0 - nv.pi) * nv.mu0;
  if (unit.r == 1) {
    if (!unit.y) throw DataError("to_learner_terms: observational unit without an outcome value");
    t.psi_t = (1.0 - nv.rho_s) / nv.rho_s * (nv.pi_s - nv.pi) * (*unit.y - nv.h);
  }
  return t;
}

std::vector<PseudoOutcomeRow> compute_pseudo_outcomes(const data::CombinedDataset& data,
                                                      const nuis::NuisanceValues& nv,
                                                      const WeightingFunction& w) {
  std::vector<PseudoOutcomeRow> rows(nv.size());
  for (std::size_t i = 0; i < nv.size(); ++i) {
    const int idx = nv.unit_index[i];
    if (idx < 0 || idx >= data.n())
      throw DataError("compute_pseudo_outcomes: nuisance row " + std::to_string(i) +
                      " points outside the dataset");
    const data::UnitRecord& u = data.units[static_cast<std::size_t>(idx)];
    const nuis::NuisanceRow row = nv.row(i);
    rows[i] = PseudoOutcomeRow{idx, u.r, omega_star(u, row, w), t_lt(u, row, w)};
  }
  return rows;
}

void save_pseudo_outcomes_csv(const std::vector<PseudoOutcomeRow>& rows,
                              const std::string& path) {
  std::ofstream out(path);
  if (!out) throw IoError("pseudo outcomes: cannot open '" + path + "' for writing");
  out << "index,r,omega_star,t_lt\n";
  for (const PseudoOutcomeRow& row : rows)
    out << row.unit_index << ',' << row.r << ',' << num::format_g17(row.omega_star) << ','
        << num::format_g17(row.t_lt) << '\n';
  if (!out) throw IoError("pseudo outcomes: write to '" + path + "' failed");
}

WeightedAte weighted_ate(const data::CombinedDataset& data, const nuis::NuisanceValues& nv,
                         const WeightingFunction& w, const std::vector<double>& tau) {
  if (tau.size() != nv.size())
    throw DataError("weighted_ate: tau length does not match the nuisance rows");
  double num = 0.0, den = 0.0;
  std::size_t n_exp = 0;
  for (std::size_t i = 0; i < nv.size(); ++i) {
    const int idx = nv.unit_index[i];
    if (idx < 0 || idx >= data.n())
      throw DataError("weighted_ate: nuisance row " + std::to_string(i) +
                      " points outside the dataset");
    if (data.units[static_cast<std::size_t>(idx)].r != 0) continue;
    const double omega = w.value(nv.pi[i], nv.rho[i]);
    num += omega * tau[i];
    den += omega;
    ++n_exp;
  }
  if (n_exp == 0) throw DataError("weighted_ate: no experimental units");
  WeightedAte ate;
  ate.numerator = num / static_cast<double>(n_exp);
  ate.denominator = den / static_cast<double>(n_exp);
  if (!(ate.denominator > 0.0))
    throw DomainError("weighted_ate: degenerate weights, denominator is not positive");
  ate.value = ate.numerator / ate.denominator;
  return ate;
}

}  // namespace hlte::wgt
