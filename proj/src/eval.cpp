#include "hlte/eval.hpp"

#include <algorithm>
#include <array>
#include <atomic>
#include <cmath>
#include <exception>
#include <fstream>
#include <functional>
#include <mutex>
#include <thread>
#include <utility>

#include "hlte/errors.hpp"
#include "hlte/numerics.hpp"
#include "hlte/weighting.hpp"

namespace hlte::ev {

namespace {

// independent seed families for the deterministic grid drivers
constexpr uint64_t kEvalGridStream = 0xE7A1;
constexpr uint64_t kFitStream = 0xF17;
constexpr uint64_t kDrawStream = 0xD0A7;
constexpr uint64_t kProbeStream = 0x0B5E;
constexpr uint64_t kOverlapStream = 0x0E4A;

uint64_t derive(uint64_t seed, uint64_t stream, uint64_t a, uint64_t b = 0) {
  return num::RngStream(seed, stream).child(a).child(b).next_u64();
}

uint64_t name_stream(uint64_t base, const std::string& name) {
  return num::fnv1a(name.data(), name.size(), base);
}

void run_parallel(int jobs, int n_tasks, const std::function<void(int)>& task) {
  if (jobs <= 0) jobs = static_cast<int>(std::thread::hardware_concurrency());
  if (jobs < 1) jobs = 1;
  jobs = std::min(jobs, n_tasks);
  if (jobs <= 1) {
    for (int t = 0; t < n_tasks; ++t) task(t);
    return;
  }
  std::atomic<int> next{0};
  std::exception_ptr first_error;
  std::mutex error_mu;
  std::vector<std::thread> pool;
  pool.reserve(static_cast<std::size_t>(jobs));
  for (int w = 0; w < jobs; ++w) {
    pool.emplace_back([&]() {
      for (;;) {
        const int t = next.fetch_add(1);
        if (t >= n_tasks) return;
        try {
          task(t);
        } catch (...) {
          std::lock_guard<std::mutex> lk(error_mu);
          if (!first_error) first_error = std::current_exception();
        }
      }
    });
  }
  for (auto& th : pool) th.join();
  if (first_error) std::rethrow_exception(first_error);
}

struct KindFit {
  bool ok = false;
  lrn::FittedHlteModel model;
  std::string error;
};

// Fit every kind in one batch when possible (stage-1 nuisances shared); on
// failure fall back to one fit per kind so errors attach to the kind that
// caused them. Per-kind seed derivation makes both paths produce identical
// models, so the fallback never changes numbers.
std::vector<KindFit> fit_with_isolation(const std::vector<lrn::LearnerKind>& kinds,
                                        const data::CombinedDataset& data,
                                        const lrn::SecondStageConfig& stage,
                                        const nuis::NuisanceConfig& nuisances, uint64_t seed,
                                        uint64_t stream) {
  std::vector<KindFit> out(kinds.size());
  try {
    auto models = lrn::fit_many(kinds, data, stage, nuisances, num::RngStream(seed, stream));
    for (std::size_t i = 0; i < kinds.size(); ++i) {
      out[i].ok = true;
      out[i].model = std::move(models[i]);
    }
    return out;
  } catch (const std::exception&) {
    // isolate below
  }
  for (std::size_t i = 0; i < kinds.size(); ++i) {
    try {
      out[i].model = lrn::fit(kinds[i], data, stage, nuisances, num::RngStream(seed, stream));
      out[i].ok = true;
    } catch (const std::exception& e) {
      out[i].ok = false;
      out[i].error = e.what();
    }
  }
  return out;
}

std::vector<int> all_indices(int n) {
  std::vector<int> idx(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) idx[static_cast<std::size_t>(i)] = i;
  return idx;
}

std::ofstream open_out(const std::string& path) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot open '" + path + "' for writing");
  return out;
}

void finish_out(std::ofstream& out, const std::string& path) {
  out.flush();
  if (!out) throw IoError("write to '" + path + "' failed");
}

double mean_of(const std::vector<double>& v) { return num::summarize(v).mean; }

double std_of(const std::vector<double>& v) {
  const auto s = num::summarize(v);
  return s.n >= 2 ? std::sqrt(s.variance) : 0.0;
}

}  // namespace

double pehe(const std::vector<double>& tau_hat, const std::vector<double>& tau_true) {
  if (tau_hat.size() != tau_true.size())
    throw DomainError("pehe: estimate and truth have different lengths");
  if (tau_hat.empty()) throw DomainError("pehe: empty effect vectors");
  double acc = 0.0;
  for (std::size_t i = 0; i < tau_hat.size(); ++i) {
    const double d = tau_hat[i] - tau_true[i];
    acc += d * d;
  }
  return std::sqrt(acc / static_cast<double>(tau_hat.size()));
}

// ---------------------------------------------------------------- benchmark

void BenchmarkConfig::validate() const {
  if (scenarios.empty()) throw ConfigError("benchmark needs at least one scenario");
  for (const auto& s : scenarios) sim::scenario_from_name(s);  // throws on unknown
  if (learners.empty()) throw ConfigError("benchmark needs at least one learner");
  if (seeds.empty()) throw ConfigError("benchmark needs at least one seed");
  if (n == 0) throw ConfigError("benchmark needs n >= 1");
  if (eval_size == 0) throw ConfigError("benchmark needs a non-empty evaluation set");
  stage.validate();
  nuisances.validate();
}

BenchmarkReport run_benchmark(const BenchmarkConfig& cfg) {
  cfg.validate();

  BenchmarkReport report;
  report.n = cfg.n;
  report.eval_size = cfg.eval_size;
  report.scenarios = cfg.scenarios;
  for (auto k : cfg.learners) report.learners.push_back(lrn::learner_name(k));
  report.seeds = cfg.seeds;

  const std::size_t n_scen = cfg.scenarios.size();
  const std::size_t n_seed = cfg.seeds.size();
  const std::size_t n_learn = cfg.learners.size();
  report.cells.resize(n_scen * n_seed * n_learn);
  for (std::size_t si = 0; si < n_scen; ++si)
    for (std::size_t vi = 0; vi < n_seed; ++vi)
      for (std::size_t li = 0; li < n_learn; ++li) {
        BenchmarkCell& cell = report.cells[(si * n_seed + vi) * n_learn + li];
        cell.scenario = cfg.scenarios[si];
        cell.learner = report.learners[li];
        cell.seed = cfg.seeds[vi];
        cell.failed = true;
        cell.error = "not run";
      }

  auto task = [&](int t) {
    const std::size_t si = static_cast<std::size_t>(t) / n_seed;
    const std::size_t vi = static_cast<std::size_t>(t) % n_seed;
    const std::string& name = cfg.scenarios[si];
    const uint64_t seed = cfg.seeds[vi];
    BenchmarkCell* cells = &report.cells[(si * n_seed + vi) * n_learn];

    sim::EvalSet eval;
    data::CombinedDataset dataset;
    try {
      const sim::SyntheticConfig sc = sim::scenario(name, cfg.n, seed);
      dataset = sim::generate_synthetic(sc).first;
      eval = sim::synthetic_eval_set(sc, cfg.eval_size,
                                     derive(seed, name_stream(kEvalGridStream, name), 0));
    } catch (const std::exception& e) {
      for (std::size_t li = 0; li < n_learn; ++li) cells[li].error = e.what();
      return;
    }

    auto fits = fit_with_isolation(cfg.learners, dataset, cfg.stage, cfg.nuisances, seed,
                                   name_stream(kFitStream, name));
    for (std::size_t li = 0; li < n_learn; ++li) {
      if (!fits[li].ok) {
        cells[li].error = fits[li].error;
        continue;
      }
      try {
        cells[li].pehe = pehe(fits[li].model.predict_tau(eval.x), eval.tau);
        cells[li].failed = false;
        cells[li].error.clear();
      } catch (const std::exception& e) {
        cells[li].error = e.what();
      }
    }
  };
  run_parallel(cfg.jobs, static_cast<int>(n_scen * n_seed), task);

  // per (scenario, learner) aggregation over seeds
  for (std::size_t si = 0; si < n_scen; ++si)
    for (std::size_t li = 0; li < n_learn; ++li) {
      BenchmarkAggregate agg;
      agg.scenario = cfg.scenarios[si];
      agg.learner = report.learners[li];
      std::vector<double> vals;
      for (std::size_t vi = 0; vi < n_seed; ++vi) {
        const BenchmarkCell& cell = report.cells[(si * n_seed + vi) * n_learn + li];
        if (cell.failed)
          ++agg.failed;
        else
          vals.push_back(cell.pehe);
      }
      agg.ok = static_cast<int>(vals.size());
      if (!vals.empty()) {
        agg.pehe_mean = mean_of(vals);
        agg.pehe_std = std_of(vals);
      }
      report.aggregates.push_back(std::move(agg));
    }

  // best orthogonal overlap-weighted learner against the best baseline
  const std::vector<std::string> ours_pool{"lt-o-to", "lt-o-lo", "lt-o-do"};
  const std::vector<std::string> base_pool{"lt-t", "lt-ra", "lt-ipw", "lt-o-dr"};
  for (const auto& scen : cfg.scenarios) {
    auto best_in = [&](const std::vector<std::string>& pool, std::string* who, double* val) {
      bool found = false;
      for (const auto& agg : report.aggregates) {
        if (agg.scenario != scen || agg.ok == 0) continue;
        if (std::find(pool.begin(), pool.end(), agg.learner) == pool.end()) continue;
        if (!found || agg.pehe_mean < *val) {
          *who = agg.learner;
          *val = agg.pehe_mean;
          found = true;
        }
      }
      return found;
    };
    BenchmarkImprovement imp;
    imp.scenario = scen;
    if (!best_in(ours_pool, &imp.best_ours, &imp.best_ours_pehe)) continue;
    if (!best_in(base_pool, &imp.best_baseline, &imp.best_baseline_pehe)) continue;
    if (imp.best_baseline_pehe <= 0.0) continue;
    imp.percent = 100.0 * (imp.best_baseline_pehe - imp.best_ours_pehe) / imp.best_baseline_pehe;
    report.improvements.push_back(std::move(imp));
  }
  return report;
}

nlohmann::json BenchmarkReport::to_json() const {
  nlohmann::json doc;
  doc["kind"] = "benchmark";
  doc["n"] = n;
  doc["eval_size"] = eval_size;
  doc["scenarios"] = scenarios;
  doc["learners"] = learners;
  doc["seeds"] = seeds;
  doc["cells"] = nlohmann::json::array();
  for (const auto& c : cells) {
    nlohmann::json jc{{"scenario", c.scenario}, {"learner", c.learner}, {"seed", c.seed}};
    if (c.failed) {
      jc["status"] = "failed";
      jc["error"] = c.error;
    } else {
      jc["status"] = "ok";
      jc["pehe"] = c.pehe;
    }
    doc["cells"].push_back(std::move(jc));
  }
  doc["aggregates"] = nlohmann::json::array();
  for (const auto& a : aggregates)
    doc["aggregates"].push_back(nlohmann::json{{"scenario", a.scenario},
                                               {"learner", a.learner},
                                               {"pehe_mean", a.pehe_mean},
                                               {"pehe_std", a.pehe_std},
                                               {"ok", a.ok},
                                               {"failed", a.failed}});
  doc["improvements"] = nlohmann::json::array();
  for (const auto& i : improvements)
    doc["improvements"].push_back(nlohmann::json{{"scenario", i.scenario},
                                                 {"best_ours", i.best_ours},
                                                 {"best_ours_pehe", i.best_ours_pehe},
                                                 {"best_baseline", i.best_baseline},
                                                 {"best_baseline_pehe", i.best_baseline_pehe},
                                                 {"percent", i.percent}});
  return doc;
}

BenchmarkReport BenchmarkReport::from_json(const nlohmann::json& doc) {
  if (doc.value("kind", "") != std::string("benchmark"))
    throw DataError("not a benchmark report document");
  BenchmarkReport r;
  r.n = doc.at("n").get<std::size_t>();
  r.eval_size = doc.at("eval_size").get<std::size_t>();
  r.scenarios = doc.at("scenarios").get<std::vector<std::string>>();
  r.learners = doc.at("learners").get<std::vector<std::string>>();
  r.seeds = doc.at("seeds").get<std::vector<uint64_t>>();
  for (const auto& jc : doc.at("cells")) {
    BenchmarkCell c;
    c.scenario = jc.at("scenario").get<std::string>();
    c.learner = jc.at("learner").get<std::string>();
    c.seed = jc.at("seed").get<uint64_t>();
    const std::string status = jc.at("status").get<std::string>();
    if (status == "ok") {
      c.failed = false;
      c.pehe = jc.at("pehe").get<double>();
    } else if (status == "failed") {
      c.failed = true;
      c.error = jc.at("error").get<std::string>();
    } else {
      throw DataError("unknown cell status '" + status + "'");
    }
    r.cells.push_back(std::move(c));
  }
  for (const auto& ja : doc.at("aggregates")) {
    BenchmarkAggregate a;
    a.scenario = ja.at("scenario").get<std::string>();
    a.learner = ja.at("learner").get<std::string>();
    a.pehe_mean = ja.at("pehe_mean").get<double>();
    a.pehe_std = ja.at("pehe_std").get<double>();
    a.ok = ja.at("ok").get<int>();
    a.failed = ja.at("failed").get<int>();
    r.aggregates.push_back(std::move(a));
  }
  for (const auto& ji : doc.at("improvements")) {
    BenchmarkImprovement i;
    i.scenario = ji.at("scenario").get<std::string>();
    i.best_ours = ji.at("best_ours").get<std::string>();
    i.best_ours_pehe = ji.at("best_ours_pehe").get<double>();
    i.best_baseline = ji.at("best_baseline").get<std::string>();
    i.best_baseline_pehe = ji.at("best_baseline_pehe").get<double>();
    i.percent = ji.at("percent").get<double>();
    r.improvements.push_back(std::move(i));
  }
  return r;
}

// ------------------------------------------------- variance versus overlap

std::string overlap_channel_name(OverlapChannel c) {
  switch (c) {
    case OverlapChannel::both: return "both";
    case OverlapChannel::treatment: return "treatment";
    case OverlapChannel::outcome: return "outcome";
  }
  throw ConfigError("unknown overlap channel");
}

OverlapChannel overlap_channel_from_name(const std::string& name) {
  if (name == "both") return OverlapChannel::both;
  if (name == "treatment") return OverlapChannel::treatment;
  if (name == "outcome") return OverlapChannel::outcome;
  throw ConfigError("unknown overlap channel '" + name + "' (both, treatment, outcome)");
}

std::pair<double, double> sweep_gammas(double gamma, OverlapChannel channel) {
  switch (channel) {
    case OverlapChannel::both: return {gamma, gamma / 2.0};
    case OverlapChannel::treatment: return {gamma, 0.0};
    case OverlapChannel::outcome: return {0.0, gamma};
  }
  throw ConfigError("unknown overlap channel");
}

double overlap_level(double gamma_pi, double gamma_rho, uint64_t seed, std::size_t draws) {
  if (draws == 0) throw ConfigError("overlap_level needs draws >= 1");
  num::RngStream rng(seed, kOverlapStream);
  double acc = 0.0;
  double x[10];
  for (std::size_t i = 0; i < draws; ++i) {
    for (double& xj : x) xj = rng.uniform(-1.0, 1.0);
    const double p = sim::syn::pi(x, gamma_pi);
    acc += sim::syn::rho(x, gamma_rho) * p * (1.0 - p);
  }
  return acc / static_cast<double>(draws);
}

void VarianceStudyConfig::validate() const {
  if (gammas.empty()) throw ConfigError("variance study needs at least one gamma");
  if (learners.empty()) throw ConfigError("variance study needs at least one learner");
  if (mc_runs < 2) throw ConfigError("variance study needs mc_runs >= 2");
  if (n == 0 || grid_size == 0) throw ConfigError("variance study needs n and grid_size >= 1");
  stage.validate();
  nuisances.validate();
}

VarianceStudyResult variance_vs_overlap(const VarianceStudyConfig& cfg) {
  cfg.validate();
  const std::size_t n_gamma = cfg.gammas.size();
  const std::size_t n_learn = cfg.learners.size();
  const std::size_t runs = static_cast<std::size_t>(cfg.mc_runs);

  // fixed per-gamma evaluation grids, drawn once and shared across runs
  std::vector<sim::EvalSet> grids(n_gamma);
  std::vector<double> overlaps(n_gamma);
  for (std::size_t gi = 0; gi < n_gamma; ++gi) {
    const auto [gp, gr] = sweep_gammas(cfg.gammas[gi], cfg.channel);
    sim::SyntheticConfig sc;
    sc.n = cfg.n;
    sc.gamma_pi = gp;
    sc.gamma_rho = gr;
    sc.seed = 0;  // the grid uses its own seed below
    grids[gi] = sim::synthetic_eval_set(sc, cfg.grid_size, derive(cfg.seed, kEvalGridStream, gi));
    overlaps[gi] = overlap_level(gp, gr, cfg.seed);
  }

  // predictions[gi][li][run]; empty vector marks a failed cell
  std::vector<std::vector<std::vector<std::vector<double>>>> predictions(n_gamma);
  for (auto& per_learner : predictions)
    per_learner.assign(n_learn, std::vector<std::vector<double>>(runs));

  auto task = [&](int t) {
    const std::size_t gi = static_cast<std::size_t>(t) / runs;
    const std::size_t run = static_cast<std::size_t>(t) % runs;
    const auto [gp, gr] = sweep_gammas(cfg.gammas[gi], cfg.channel);
    sim::SyntheticConfig sc;
    sc.n = cfg.n;
    sc.gamma_pi = gp;
    sc.gamma_rho = gr;
    sc.seed = derive(cfg.seed, kDrawStream, gi, run);
    data::CombinedDataset dataset;
    try {
      dataset = sim::generate_synthetic(sc).first;
    } catch (const std::exception&) {
      return;  // every learner cell for this run stays empty
    }
    auto fits =
        fit_with_isolation(cfg.learners, dataset, cfg.stage, cfg.nuisances, sc.seed, kFitStream);
    for (std::size_t li = 0; li < n_learn; ++li) {
      if (!fits[li].ok) continue;
      try {
        predictions[gi][li][run] = fits[li].model.predict_tau(grids[gi].x);
      } catch (const std::exception&) {
        predictions[gi][li][run].clear();
      }
    }
  };
  run_parallel(cfg.jobs, static_cast<int>(n_gamma * runs), task);

  VarianceStudyResult result;
  result.mc_runs = cfg.mc_runs;
  for (std::size_t gi = 0; gi < n_gamma; ++gi)
    for (std::size_t li = 0; li < n_learn; ++li) {
      VarianceStudyEntry entry;
      entry.gamma = cfg.gammas[gi];
      entry.overlap = overlaps[gi];
      entry.learner = lrn::learner_name(cfg.learners[li]);
      std::vector<const std::vector<double>*> ok;
      for (std::size_t run = 0; run < runs; ++run)
        if (!predictions[gi][li][run].empty()) ok.push_back(&predictions[gi][li][run]);
      entry.ok_runs = static_cast<int>(ok.size());
      entry.failed_runs = static_cast<int>(runs - ok.size());
      if (ok.size() >= 2) {
        double acc = 0.0;
        std::vector<double> at_point(ok.size());
        for (std::size_t p = 0; p < cfg.grid_size; ++p) {
          for (std::size_t r = 0; r < ok.size(); ++r) at_point[r] = (*ok[r])[p];
          acc += num::summarize(at_point).variance;
        }
        entry.v = acc / static_cast<double>(cfg.grid_size);
      }
      result.entries.push_back(std::move(entry));
    }
  return result;
}

nlohmann::json VarianceStudyResult::to_json() const {
  nlohmann::json doc;
  doc["kind"] = "variance_study";
  doc["mc_runs"] = mc_runs;
  doc["entries"] = nlohmann::json::array();
  for (const auto& e : entries)
    doc["entries"].push_back(nlohmann::json{{"gamma", e.gamma},
                                            {"overlap", e.overlap},
                                            {"learner", e.learner},
                                            {"v", e.v},
                                            {"ok_runs", e.ok_runs},
                                            {"failed_runs", e.failed_runs}});
  return doc;
}

// ------------------------------------------- nuisance quality versus size

void SampleSizeStudyConfig::validate() const {
  if (sample_sizes.size() < 2) throw ConfigError("size study needs at least two sample sizes");
  for (std::size_t n : sample_sizes)
    if (n == 0) throw ConfigError("size study sample sizes must be >= 1");
  sim::scenario_from_name(scenario);
  if (seeds.empty()) throw ConfigError("size study needs at least one seed");
  if (learners.empty()) throw ConfigError("size study needs at least one learner");
  if (probe_size == 0 || eval_size == 0)
    throw ConfigError("size study needs probe_size and eval_size >= 1");
  stage.validate();
  nuisances.validate();
}

namespace {
const char* kNuisanceNames[7] = {"pi", "pi_s", "rho", "rho_s", "h", "mu0", "mu1"};

std::array<double, 7> nuisance_mse(const nuis::NuisanceValues& hat,
                                   const nuis::NuisanceValues& truth) {
  const std::size_t n = hat.size();
  std::array<double, 7> acc{};
  auto add = [&](int f, const std::vector<double>& a, const std::vector<double>& b) {
    for (std::size_t i = 0; i < n; ++i) {
      const double d = a[i] - b[i];
      acc[static_cast<std::size_t>(f)] += d * d;
    }
  };
  add(0, hat.pi, truth.pi);
  add(1, hat.pi_s, truth.pi_s);
  add(2, hat.rho, truth.rho);
  add(3, hat.rho_s, truth.rho_s);
  add(4, hat.h, truth.h);
  add(5, hat.mu0, truth.mu0);
  add(6, hat.mu1, truth.mu1);
  for (double& a : acc) a /= static_cast<double>(n);
  return acc;
}
}  // namespace

SampleSizeStudy nuisance_error_vs_n(const SampleSizeStudyConfig& cfg) {
  cfg.validate();
  const std::size_t n_sizes = cfg.sample_sizes.size();
  const std::size_t n_seed = cfg.seeds.size();
  const std::size_t n_learn = cfg.learners.size();

  // one probe sample and one evaluation grid shared by every cell, so the
  // size axis is compared on common draws
  const uint64_t base = cfg.seeds.front();
  const sim::SyntheticConfig probe_cfg = sim::scenario(
      cfg.scenario, cfg.probe_size, derive(base, name_stream(kProbeStream, cfg.scenario), 0));
  const data::CombinedDataset probe = sim::generate_synthetic(probe_cfg).first;
  const nuis::NuisanceValues probe_truth = nuis::oracle_nuisances(probe_cfg, probe);
  const std::vector<int> probe_idx = all_indices(probe.n());
  const sim::EvalSet eval = sim::synthetic_eval_set(
      sim::scenario(cfg.scenario, cfg.eval_size, 0), cfg.eval_size,
      derive(base, name_stream(kEvalGridStream, cfg.scenario), 1));

  struct Cell {
    bool mse_ok = false;
    std::array<double, 7> mse{};
    std::vector<double> pehe;  // per learner, NaN-free; ok flags below
    std::vector<uint8_t> learner_ok;
  };
  std::vector<Cell> cells(n_sizes * n_seed);

  auto task = [&](int t) {
    const std::size_t ni = static_cast<std::size_t>(t) / n_seed;
    const std::size_t vi = static_cast<std::size_t>(t) % n_seed;
    Cell& cell = cells[ni * n_seed + vi];
    cell.pehe.assign(n_learn, 0.0);
    cell.learner_ok.assign(n_learn, 0);

    data::CombinedDataset train;
    try {
      train = sim::generate_synthetic(
                  sim::scenario(cfg.scenario, cfg.sample_sizes[ni], cfg.seeds[vi]))
                  .first;
    } catch (const std::exception&) {
      return;
    }

    // raw (non-cross-fitted) nuisance quality on the common probe
    try {
      const auto set = nuis::fit_nuisances(train, all_indices(train.n()), cfg.nuisances,
                                           num::RngStream(cfg.seeds[vi], 0xF1A0 + ni));
      const auto hat = nuis::evaluate_nuisances(set, probe, probe_idx);
      cell.mse = nuisance_mse(hat, probe_truth);
      cell.mse_ok = true;
    } catch (const std::exception&) {
      cell.mse_ok = false;
    }

    auto fits = fit_with_isolation(cfg.learners, train, cfg.stage, cfg.nuisances, cfg.seeds[vi],
                                   0x51E0 + ni);
    for (std::size_t li = 0; li < n_learn; ++li) {
      if (!fits[li].ok) continue;
      try {
        cell.pehe[li] = pehe(fits[li].model.predict_tau(eval.x), eval.tau);
        cell.learner_ok[li] = 1;
      } catch (const std::exception&) {
      }
    }
  };
  run_parallel(cfg.jobs, static_cast<int>(n_sizes * n_seed), task);

  SampleSizeStudy study;
  for (std::size_t ni = 0; ni < n_sizes; ++ni) {
    for (int f = 0; f < 7; ++f) {
      NuisanceMseEntry entry;
      entry.n = cfg.sample_sizes[ni];
      entry.nuisance = kNuisanceNames[f];
      std::vector<double> vals;
      for (std::size_t vi = 0; vi < n_seed; ++vi) {
        const Cell& cell = cells[ni * n_seed + vi];
        if (cell.mse_ok) vals.push_back(cell.mse[static_cast<std::size_t>(f)]);
      }
      entry.ok = static_cast<int>(vals.size());
      if (!vals.empty()) entry.mse_mean = mean_of(vals);
      study.nuisance_rows.push_back(std::move(entry));
    }
    for (std::size_t li = 0; li < n_learn; ++li) {
      SizePeheEntry entry;
      entry.n = cfg.sample_sizes[ni];
      entry.learner = lrn::learner_name(cfg.learners[li]);
      std::vector<double> vals;
      for (std::size_t vi = 0; vi < n_seed; ++vi) {
        const Cell& cell = cells[ni * n_seed + vi];
        if (!cell.learner_ok.empty() && cell.learner_ok[li])
          vals.push_back(cell.pehe[li]);
        else
          ++entry.failed;
      }
      entry.ok = static_cast<int>(vals.size());
      if (!vals.empty()) {
        entry.pehe_mean = mean_of(vals);
        entry.pehe_std = std_of(vals);
      }
      study.learner_rows.push_back(std::move(entry));
    }
  }
  return study;
}

nlohmann::json SampleSizeStudy::to_json() const {
  nlohmann::json doc;
  doc["kind"] = "sample_size_study";
  doc["nuisance_rows"] = nlohmann::json::array();
  for (const auto& e : nuisance_rows)
    doc["nuisance_rows"].push_back(nlohmann::json{
        {"n", e.n}, {"nuisance", e.nuisance}, {"mse_mean", e.mse_mean}, {"ok", e.ok}});
  doc["learner_rows"] = nlohmann::json::array();
  for (const auto& e : learner_rows)
    doc["learner_rows"].push_back(nlohmann::json{{"n", e.n},
                                                 {"learner", e.learner},
                                                 {"pehe_mean", e.pehe_mean},
                                                 {"pehe_std", e.pehe_std},
                                                 {"ok", e.ok},
                                                 {"failed", e.failed}});
  return doc;
}

// --------------------------------------------- pseudo-outcome variance bound

DrVarianceDiagnostic dr_variance_diagnostic(const data::CombinedDataset& data,
                                            const nuis::NuisanceValues& nv, int bins) {
  if (bins < 1) throw ConfigError("diagnostic needs bins >= 1");
  if (nv.size() == 0) throw DataError("diagnostic needs a non-empty nuisance table");
  if (data.d_x < 2) throw DataError("diagnostic bins on x1 + x2; need d_x >= 2");
  for (int idx : nv.unit_index)
    if (idx < 0 || idx >= data.n())
      throw DataError("nuisance table names unit " + std::to_string(idx) +
                      " outside the dataset");

  const std::size_t n = nv.size();
  std::vector<std::size_t> order(n);
  for (std::size_t i = 0; i < n; ++i) order[i] = i;
  auto key = [&](std::size_t i) {
    const auto& x = data.units[static_cast<std::size_t>(nv.unit_index[i])].x;
    return x[0] + x[1];
  };
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return key(a) < key(b); });

  const std::size_t nb = std::min<std::size_t>(static_cast<std::size_t>(bins), n);
  const auto w_no = wgt::WeightingFunction::named(wgt::WeightKind::no);

  DrVarianceDiagnostic diag;
  std::size_t at = 0;
  for (std::size_t b = 0; b < nb; ++b) {
    std::size_t len = n / nb + (b < n % nb ? 1 : 0);
    DrVarianceBin bin;
    bin.count = static_cast<int>(len);

    std::vector<double> t_dr, res_h0, res_h1, res_y, rho_all;
    double key_acc = 0.0;
    std::vector<std::size_t> members(order.begin() + static_cast<std::ptrdiff_t>(at),
                                     order.begin() + static_cast<std::ptrdiff_t>(at + len));
    at += len;
    for (std::size_t i : members) {
      const auto& unit = data.units[static_cast<std::size_t>(nv.unit_index[i])];
      const nuis::NuisanceRow row = nv.row(i);
      key_acc += key(i);
      rho_all.push_back(row.rho);
      t_dr.push_back(wgt::t_lt(unit, row, w_no));
      if (unit.r == 0) {
        if (!unit.a.has_value()) throw DataError("experimental unit lacks a treatment flag");
        if (*unit.a == 1)
          res_h1.push_back(row.h - row.mu1);
        else
          res_h0.push_back(row.h - row.mu0);
      } else {
        if (!unit.y.has_value()) throw DataError("observational unit lacks an outcome");
        res_y.push_back(*unit.y - row.h);
      }
    }
    bin.key_mean = key_acc / static_cast<double>(len);

    if (len < 10 || res_h0.size() < 2 || res_h1.size() < 2 || res_y.size() < 2) {
      bin.dropped = true;
      ++diag.dropped;
      diag.bins.push_back(std::move(bin));
      continue;
    }

    const double sig_h0 = num::summarize(res_h0).variance;
    const double sig_h1 = num::summarize(res_h1).variance;
    const double sig_y = num::summarize(res_y).variance;

    double sigma_t = 0.0, sigma_o = 0.0;
    std::size_t n_exp = 0, n_obs = 0;
    for (std::size_t i : members) {
      const auto& unit = data.units[static_cast<std::size_t>(nv.unit_index[i])];
      const nuis::NuisanceRow row = nv.row(i);
      const double denom = row.pi * (1.0 - row.pi);
      if (unit.r == 0) {
        const double lever = (static_cast<double>(*unit.a) - row.pi) / denom;
        sigma_t += lever * lever * (*unit.a == 1 ? sig_h1 : sig_h0);
        ++n_exp;
      } else {
        const double lever = (1.0 - row.rho_s) / row.rho_s * (row.pi_s - row.pi) / denom;
        sigma_o += lever * lever * sig_y;
        ++n_obs;
      }
    }
    sigma_t /= static_cast<double>(n_exp);
    sigma_o /= static_cast<double>(n_obs);

    const double rho_mean = mean_of(rho_all);
    bin.bound = (1.0 - rho_mean) * sigma_t + rho_mean * sigma_o;
    bin.var_t_dr = num::summarize(t_dr).variance;
    ++diag.retained;
    diag.bins.push_back(std::move(bin));
  }
  return diag;
}

nlohmann::json DrVarianceDiagnostic::to_json() const {
  nlohmann::json doc;
  doc["kind"] = "dr_variance";
  doc["retained"] = retained;
  doc["dropped"] = dropped;
  doc["bins"] = nlohmann::json::array();
  for (const auto& b : bins)
    doc["bins"].push_back(nlohmann::json{{"key_mean", b.key_mean},
                                         {"count", b.count},
                                         {"dropped", b.dropped},
                                         {"var_t_dr", b.var_t_dr},
                                         {"bound", b.bound}});
  return doc;
}

// ------------------------------------------------------ orthogonality sweep

void OrthogonalityConfig::validate() const {
  switch (kind) {
    case lrn::LearnerKind::lt_o_dr:
    case lrn::LearnerKind::lt_o_to:
    case lrn::LearnerKind::lt_o_lo:
    case lrn::LearnerKind::lt_o_do:
    case lrn::LearnerKind::w_ra:
    case lrn::LearnerKind::w_dr: break;
    default:
      throw ConfigError("orthogonality sweep supports lt-o-* and the weighted ablations, not '" +
                        lrn::learner_name(kind) + "'");
  }
  if (radii.size() < 2) throw ConfigError("orthogonality sweep needs at least two radii");
  for (double r : radii)
    if (!(r > 0.0)) throw ConfigError("orthogonality radii must be positive");
  sim::scenario_from_name(scenario);
  if (n == 0 || fit_subsample == 0)
    throw ConfigError("orthogonality sweep needs n and fit_subsample >= 1");
  if (replicates < 1) throw ConfigError("orthogonality sweep needs replicates >= 1");
  g_train.validate();
  if (g_train.output_head != model::OutputHead::linear)
    throw ConfigError("the fixed effect network needs a linear head");
  if (ablation_weight == wgt::WeightKind::custom)
    throw ConfigError("orthogonality sweep needs a named ablation weight");
}

namespace {

// smooth bounded direction, one instance per nuisance coordinate
struct Direction {
  int mode = 0;  // 0: constant, 1: first covariate, 2: sin of a random form
  std::vector<double> w;
  double b = 0.0;

  double at(const double* x, int d) const {
    switch (mode) {
      case 0: return 1.0;
      case 1: return x[0];
      default: {
        double z = b;
        for (int j = 0; j < d; ++j) z += w[static_cast<std::size_t>(j)] * x[j];
        return std::sin(z);
      }
    }
  }
};

// Direction amplitude: large enough that the quadratic response clears the
// Monte-Carlo noise floor of the gradient difference at n ~ 1e5, small
// enough that every shifted probability stays interior.
constexpr double kDirectionScale = 1.2;
constexpr double kProbClamp = 1e-3;

double shift_prob(double p, double amount) {
  const double z = num::logit(num::trim(p, kProbClamp)) + amount;
  return num::trim(num::sigmoid(z), kProbClamp);
}

}  // namespace

OrthogonalityResult orthogonality_scaling(const OrthogonalityConfig& cfg) {
  cfg.validate();

  const sim::SyntheticConfig sc =
      sim::scenario(cfg.scenario, cfg.n, derive(cfg.seed, kDrawStream, 0));
  const auto drawn = sim::generate_synthetic(sc);
  const data::CombinedDataset& dataset = drawn.first;
  const sim::OracleBundle& oracle = drawn.second;
  const nuis::NuisanceValues nv0 = nuis::oracle_nuisances(sc, dataset);
  const int n = dataset.n();
  const int d = dataset.d_x;
  const std::vector<int> all_idx = all_indices(n);
  const Matrix x_all = data::x_matrix(dataset, all_idx);

  // The probe evaluates the loss gradient with the effect function held at
  // the generator's own tau, the population minimizer shared by every kind
  // in the sweep. A network fit to tau supplies the tangent features the
  // gradient is projected on; its fit error never enters the gradient
  // values themselves, only the (fixed) projection directions.
  num::RngStream rng(cfg.seed, kFitStream);
  std::vector<int> shuffled = all_idx;
  for (std::size_t i = shuffled.size(); i > 1; --i) {
    const std::size_t j = rng.below(i);
    std::swap(shuffled[i - 1], shuffled[j]);
  }
  const std::size_t m = std::min<std::size_t>(cfg.fit_subsample, shuffled.size());
  Matrix x_sub(m, static_cast<std::size_t>(d));
  std::vector<double> tau_sub(m);
  for (std::size_t i = 0; i < m; ++i) {
    const auto& unit = dataset.units[static_cast<std::size_t>(shuffled[i])];
    for (int j = 0; j < d; ++j) x_sub.at(i, static_cast<std::size_t>(j)) = unit.x[static_cast<std::size_t>(j)];
    tau_sub[i] = oracle.tau[static_cast<std::size_t>(shuffled[i])];
  }
  model::TrainConfig g_cfg = cfg.g_train;
  g_cfg.seed = rng.child(1).next_u64();
  const model::PredictorModel g = model::PredictorModel::fit_regressor(x_sub, tau_sub, nullptr, g_cfg);

  const bool is_w_ra = cfg.kind == lrn::LearnerKind::w_ra;
  const bool is_w_dr = cfg.kind == lrn::LearnerKind::w_dr;
  const auto w_fun = wgt::WeightingFunction::named(
      is_w_ra || is_w_dr ? cfg.ablation_weight : lrn::weight_kind_of(cfg.kind));
  const auto w_no = wgt::WeightingFunction::named(wgt::WeightKind::no);

  const std::vector<int> exp_idx = dataset.indices_where_r(0);
  Matrix x_exp = data::x_matrix(dataset, exp_idx);
  const std::vector<int> exp_rows = all_indices(static_cast<int>(exp_idx.size()));

  // Loss gradient under nuisances shifted by r along the replicate's
  // directions, taken at the oracle effect. A bilinear loss with zero
  // curvature and linear term t - c*tau has gradient mean((c*tau - t) *
  // feature), exactly the objective's gradient with predictions replaced by
  // the oracle values.
  auto gradient_at = [&](const nuis::NuisanceValues& nv) {
    std::vector<double> grad;
    if (is_w_ra) {
      const std::vector<double> zeros(exp_idx.size(), 0.0);
      std::vector<double> lin(exp_idx.size());
      double weight_sum = 0.0;
      for (std::size_t i = 0; i < exp_idx.size(); ++i) {
        const std::size_t ui = static_cast<std::size_t>(exp_idx[i]);
        const auto& unit = dataset.units[ui];
        const auto row = nv.row(ui);
        const double w = w_fun.value(row.pi, row.rho);
        lin[i] = w * (wgt::ra_pseudo_outcome(unit, row) - oracle.tau[ui]);
        weight_sum += w;
      }
      g.loss_and_gradient(model::LossKind::bilinear, x_exp, exp_rows, lin, &zeros, &grad);
      if (weight_sum <= 0.0) throw DomainError("ablation weights sum to zero");
      const double rescale = static_cast<double>(exp_idx.size()) / weight_sum;
      for (double& v : grad) v *= rescale;
      return grad;
    }
    const std::vector<double> zeros(static_cast<std::size_t>(n), 0.0);
    std::vector<double> lin(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i) {
      const std::size_t ui = static_cast<std::size_t>(i);
      const auto& unit = dataset.units[ui];
      const auto row = nv.row(ui);
      double c = 0.0, t = 0.0;
      if (is_w_dr) {
        const double w = w_fun.value(row.pi, row.rho);
        c = unit.r == 0 ? w : 0.0;
        t = w * wgt::t_lt(unit, row, w_no);
      } else {
        c = wgt::omega_star(unit, row, w_fun);
        t = wgt::t_lt(unit, row, w_fun);
      }
      lin[ui] = t - c * oracle.tau[ui];
    }
    g.loss_and_gradient(model::LossKind::bilinear, x_all, all_idx, lin, &zeros, &grad);
    return grad;
  };

  const std::vector<double> grad0 = gradient_at(nv0);

  OrthogonalityResult result;
  result.radii = cfg.radii;
  for (int rep = 0; rep < cfg.replicates; ++rep) {
    std::array<Direction, 7> dirs;
    if (rep == 1) {
      for (auto& dir : dirs) dir.mode = 1;
    } else if (rep >= 2) {
      num::RngStream drng = num::RngStream(cfg.seed, kOverlapStream).child(static_cast<uint64_t>(rep));
      for (auto& dir : dirs) {
        dir.mode = 2;
        dir.w.resize(static_cast<std::size_t>(d));
        for (double& wj : dir.w) wj = drng.normal(0.0, 0.5);
        dir.b = drng.uniform(-3.141592653589793, 3.141592653589793);
      }
    }

    std::vector<double> movement;
    for (double r : cfg.radii) {
      nuis::NuisanceValues nv = nv0;
      for (int i = 0; i < n; ++i) {
        const double* x = dataset.units[static_cast<std::size_t>(i)].x.data();
        const std::size_t ui = static_cast<std::size_t>(i);
        const double step = r * kDirectionScale;
        nv.pi[ui] = shift_prob(nv.pi[ui], step * dirs[0].at(x, d));
        nv.pi_s[ui] = shift_prob(nv.pi_s[ui], step * dirs[1].at(x, d));
        nv.rho[ui] = shift_prob(nv.rho[ui], step * dirs[2].at(x, d));
        nv.rho_s[ui] = shift_prob(nv.rho_s[ui], step * dirs[3].at(x, d));
        nv.h[ui] += step * dirs[4].at(x, d);
        nv.mu0[ui] += step * dirs[5].at(x, d);
        nv.mu1[ui] += step * dirs[6].at(x, d);
      }
      const std::vector<double> grad_r = gradient_at(nv);
      double acc = 0.0;
      for (std::size_t p = 0; p < grad_r.size(); ++p) {
        const double dg = grad_r[p] - grad0[p];
        acc += dg * dg;
      }
      movement.push_back(std::sqrt(acc));
    }

    double sx = 0.0, sy = 0.0, sxx = 0.0, sxy = 0.0;
    const double np = static_cast<double>(cfg.radii.size());
    for (std::size_t i = 0; i < cfg.radii.size(); ++i) {
      if (!(movement[i] > 0.0))
        throw DomainError("gradient movement vanished at radius " + num::format_g17(cfg.radii[i]));
      const double lx = std::log(cfg.radii[i]);
      const double ly = std::log(movement[i]);
      sx += lx;
      sy += ly;
      sxx += lx * lx;
      sxy += lx * ly;
    }
    result.slopes.push_back((np * sxy - sx * sy) / (np * sxx - sx * sx));
    result.movement.push_back(std::move(movement));
  }

  std::vector<double> sorted = result.slopes;
  std::sort(sorted.begin(), sorted.end());
  const std::size_t mid = sorted.size() / 2;
  result.slope = sorted.size() % 2 == 1 ? sorted[mid] : 0.5 * (sorted[mid - 1] + sorted[mid]);
  return result;
}

nlohmann::json OrthogonalityResult::to_json() const {
  nlohmann::json doc;
  doc["kind"] = "orthogonality";
  doc["radii"] = radii;
  doc["movement"] = movement;
  doc["slopes"] = slopes;
  doc["slope"] = slope;
  return doc;
}

// ------------------------------------------------------------------ reports

void write_benchmark_csv(const BenchmarkReport& report, const std::string& path) {
  auto out = open_out(path);
  out << "scenario,learner,seed,pehe\n";
  for (const auto& c : report.cells) {
    out << c.scenario << ',' << c.learner << ',' << c.seed << ',';
    if (c.failed)
      out << "failed";
    else
      out << num::format_g17(c.pehe);
    out << '\n';
  }
  finish_out(out, path);
}

void write_benchmark_json(const BenchmarkReport& report, const std::string& path) {
  auto out = open_out(path);
  out << report.to_json().dump(2) << '\n';
  finish_out(out, path);
}

BenchmarkReport read_benchmark_json(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open '" + path + "'");
  nlohmann::json doc;
  try {
    in >> doc;
  } catch (const nlohmann::json::exception& e) {
    throw DataError("malformed report JSON in '" + path + "': " + e.what());
  }
  return BenchmarkReport::from_json(doc);
}

void emit_report(const BenchmarkReport& report, const std::string& format,
                 const std::string& path) {
  if (format == "json")
    write_benchmark_json(report, path);
  else if (format == "csv")
    write_benchmark_csv(report, path);
  else
    throw ConfigError("unknown report format '" + format + "' (json, csv)");
}

void write_variance_csv(const VarianceStudyResult& result, const std::string& path) {
  auto out = open_out(path);
  out << "gamma,overlap,learner,V\n";
  for (const auto& e : result.entries) {
    if (e.ok_runs < 2) continue;  // no variance to report
    out << num::format_g17(e.gamma) << ',' << num::format_g17(e.overlap) << ',' << e.learner
        << ',' << num::format_g17(e.v) << '\n';
  }
  finish_out(out, path);
}

void write_size_pehe_csv(const SampleSizeStudy& study, const std::string& path) {
  auto out = open_out(path);
  out << "n,learner,pehe_mean,pehe_std\n";
  for (const auto& e : study.learner_rows) {
    if (e.ok == 0) continue;
    out << e.n << ',' << e.learner << ',' << num::format_g17(e.pehe_mean) << ','
        << num::format_g17(e.pehe_std) << '\n';
  }
  finish_out(out, path);
}

void write_size_mse_csv(const SampleSizeStudy& study, const std::string& path) {
  auto out = open_out(path);
  out << "n,nuisance,mse_mean\n";
  for (const auto& e : study.nuisance_rows) {
    if (e.ok == 0) continue;
    out << e.n << ',' << e.nuisance << ',' << num::format_g17(e.mse_mean) << '\n';
  }
  finish_out(out, path);
}

}  // namespace hlte::ev
