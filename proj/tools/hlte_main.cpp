// hlte: command-line surface over the library. Subcommands cover data
// generation, model fitting, prediction, benchmark grids, diagnostics, and
// report conversion. Every run writes a manifest holding the fully resolved
// configuration; feeding that manifest back through --config replays the run.

#include <algorithm>
#include <chrono>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <numeric>
#include <sstream>
#include <string>
#include <tuple>
#include <vector>

#include "CLI11.hpp"
#include "hlte/dataset.hpp"
#include "hlte/errors.hpp"
#include "hlte/eval.hpp"
#include "hlte/learners.hpp"
#include "hlte/mlp.hpp"
#include "hlte/nuisance.hpp"
#include "hlte/numerics.hpp"
#include "hlte/simulate.hpp"
#include "hlte/weighting.hpp"
#include "json.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace hlte;

namespace {

constexpr const char* kVersion = "0.1.0";

class WallTimer {
 public:
  double seconds() const {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - start_).count();
  }

 private:
  std::chrono::steady_clock::time_point start_ = std::chrono::steady_clock::now();
};

// Ties a config key to a variable and (optionally) to the CLI option that can
// set it, so a --config document fills in whatever the command line left
// untouched and the manifest can embed the fully resolved value set.
class ConfigBinder {
 public:
  template <typename T>
  void bind(const std::string& key, CLI::Option* opt, T* slot) {
    keys_.push_back(key);
    apply_.push_back([key, opt, slot](const json& doc) {
      if (!doc.contains(key)) return;
      if (opt != nullptr && opt->count() > 0) return;
      try {
        *slot = doc.at(key).get<T>();
      } catch (const json::exception& e) {
        throw ConfigError("config: key '" + key + "': " + e.what());
      }
    });
    emit_.push_back([key, slot](json& doc) { doc[key] = *slot; });
  }

  // training recipes have no dedicated flags; they ride along in JSON only
  void bind_train(const std::string& key, model::TrainConfig* slot) {
    keys_.push_back(key);
    apply_.push_back([key, slot](const json& doc) {
      if (!doc.contains(key)) return;
      *slot = model::TrainConfig::from_json(doc.at(key));
    });
    emit_.push_back([key, slot](json& doc) { doc[key] = slot->to_json(); });
  }

  void apply(const json& doc) const {
    for (const auto& item : doc.items()) {
      if (std::find(keys_.begin(), keys_.end(), item.key()) == keys_.end())
        throw ConfigError("config: unknown key '" + item.key() + "'");
    }
    for (const auto& f : apply_) f(doc);
  }

  json resolved() const {
    json doc = json::object();
    for (const auto& f : emit_) f(doc);
    return doc;
  }

 private:
  std::vector<std::string> keys_;
  std::vector<std::function<void(const json&)>> apply_;
  std::vector<std::function<void(json&)>> emit_;
};

// Accepts either a bare config object or a manifest from an earlier run; a
// manifest is unwrapped after checking it names the command being replayed.
json load_config_doc(const std::string& path, const std::string& command) {
  std::ifstream f(path);
  if (!f) throw IoError("config: cannot open '" + path + "'");
  json doc;
  try {
    doc = json::parse(f);
  } catch (const json::exception& e) {
    throw ConfigError("config: '" + path + "' is not valid JSON: " + std::string(e.what()));
  }
  if (!doc.is_object()) throw ConfigError("config: '" + path + "' must hold a JSON object");
  if (doc.contains("command") && doc.contains("config")) {
    const std::string cmd = doc.at("command").get<std::string>();
    if (cmd != command)
      throw ConfigError("config: manifest '" + path + "' was written by '" + cmd + "', not '" +
                        command + "'");
    doc = doc.at("config");
    if (!doc.is_object()) throw ConfigError("config: manifest 'config' must be an object");
  }
  return doc;
}

fs::path ensure_out_dir(const std::string& out) {
  if (out.empty()) throw ConfigError("--out must name a directory");
  fs::path dir(out);
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw IoError("cannot create output directory '" + out + "': " + ec.message());
  return dir;
}

void write_json_file(const fs::path& path, const json& doc) {
  std::ofstream f(path);
  if (!f) throw IoError("cannot open '" + path.string() + "' for writing");
  f << doc.dump(2) << "\n";
  if (!f.good()) throw IoError("write to '" + path.string() + "' failed");
}

// The manifest lists its artifacts by name relative to the output directory;
// the manifest itself is not an artifact (its duration field varies run to
// run, the artifacts must not).
void write_manifest(const fs::path& dir, const std::string& command, const json& config,
                    uint64_t seed, std::vector<std::string> artifacts, double duration_seconds) {
  std::sort(artifacts.begin(), artifacts.end());
  json doc;
  doc["command"] = command;
  doc["config"] = config;
  doc["seed"] = seed;
  doc["artifacts"] = artifacts;
  doc["version"] = kVersion;
  doc["duration_seconds"] = duration_seconds;
  write_json_file(dir / "manifest.json", doc);
}

std::vector<int> all_indices(int n) {
  std::vector<int> idx(static_cast<std::size_t>(n));
  std::iota(idx.begin(), idx.end(), 0);
  return idx;
}

// expands "all" and drops duplicates while keeping first-seen order
std::vector<lrn::LearnerKind> parse_learners(const std::vector<std::string>& names) {
  std::vector<lrn::LearnerKind> kinds;
  auto push = [&](lrn::LearnerKind k) {
    if (std::find(kinds.begin(), kinds.end(), k) == kinds.end()) kinds.push_back(k);
  };
  for (const auto& name : names) {
    if (name == "all") {
      for (lrn::LearnerKind k : lrn::all_learners()) push(k);
    } else {
      push(lrn::learner_from_name(name));
    }
  }
  if (kinds.empty()) throw ConfigError("no learners requested");
  return kinds;
}

std::vector<std::string> learner_names(const std::vector<lrn::LearnerKind>& kinds) {
  std::vector<std::string> names;
  names.reserve(kinds.size());
  for (lrn::LearnerKind k : kinds) names.push_back(lrn::learner_name(k));
  return names;
}

std::vector<uint64_t> seed_range(int count) {
  if (count < 1) throw ConfigError("--seeds must be a positive count");
  std::vector<uint64_t> seeds(static_cast<std::size_t>(count));
  std::iota(seeds.begin(), seeds.end(), 0);
  return seeds;
}

// ------------------------------------------------------------------ simulate

struct SimulateCmd {
  std::string scenario;
  double gamma_pi = 0.0;
  double gamma_rho = 0.0;
  std::size_t n = 3000;
  uint64_t seed = 0;
  double sigma_s = 0.2;
  double sigma_y = 0.5;
  std::string covariates;  // empty = synthetic; "standin" or a CSV path otherwise
  std::size_t subsample = 0;
  std::size_t mc_draws = 2000;
  std::string out;
  std::string config_path;

  CLI::App* cmd = nullptr;
  CLI::Option* opt_gpi = nullptr;
  CLI::Option* opt_grho = nullptr;
  ConfigBinder binder;

  void attach(CLI::App& app) {
    cmd = app.add_subcommand("simulate", "Generate a benchmark dataset with its oracle");
    auto* o_sc = cmd->add_option("--scenario", scenario, "Synthetic preset: star, t, o, t+o");
    opt_gpi = cmd->add_option("--gamma-pi", gamma_pi, "Treatment-overlap knob");
    opt_grho = cmd->add_option("--gamma-rho", gamma_rho, "Outcome-overlap knob");
    auto* o_n = cmd->add_option("--n", n, "Units to draw");
    auto* o_seed = cmd->add_option("--seed", seed, "Generator seed");
    auto* o_ss = cmd->add_option("--sigma-s", sigma_s, "Surrogate noise scale");
    auto* o_sy = cmd->add_option("--sigma-y", sigma_y, "Outcome noise scale");
    auto* o_cov = cmd->add_option(
        "--covariates", covariates,
        "Covariate table for the semi-synthetic generator: a CSV path or 'standin'");
    auto* o_sub = cmd->add_option("--subsample", subsample,
                                  "Keep this many covariate rows (0 keeps all; semi-synthetic)");
    auto* o_mc = cmd->add_option("--mc-draws", mc_draws,
                                 "Monte-Carlo draws behind the semi-synthetic oracle");
    auto* o_out = cmd->add_option("--out", out, "Output directory")->required();
    cmd->add_option("--config", config_path, "JSON config or manifest to replay");

    binder.bind("scenario", o_sc, &scenario);
    binder.bind("gamma_pi", opt_gpi, &gamma_pi);
    binder.bind("gamma_rho", opt_grho, &gamma_rho);
    binder.bind("n", o_n, &n);
    binder.bind("seed", o_seed, &seed);
    binder.bind("sigma_s", o_ss, &sigma_s);
    binder.bind("sigma_y", o_sy, &sigma_y);
    binder.bind("covariates", o_cov, &covariates);
    binder.bind("subsample", o_sub, &subsample);
    binder.bind("mc_draws", o_mc, &mc_draws);
    binder.bind("out", o_out, &out);
  }

  int run() {
    if (!config_path.empty()) binder.apply(load_config_doc(config_path, "simulate"));
    const bool semi = !covariates.empty();
    if (!scenario.empty()) {
      if (semi) throw ConfigError("simulate: --scenario drives the synthetic generator only");
      if (opt_gpi->count() > 0 || opt_grho->count() > 0)
        throw ConfigError("simulate: pass either --scenario or the gamma knobs, not both");
      const sim::SyntheticConfig preset = sim::scenario(scenario, n, seed);
      gamma_pi = preset.gamma_pi;
      gamma_rho = preset.gamma_rho;
    }
    const fs::path dir = ensure_out_dir(out);
    WallTimer timer;
    data::CombinedDataset dataset;
    sim::OracleBundle oracle;
    if (semi) {
      sim::SemiSyntheticConfig cfg;
      if (covariates == "standin") {
        cfg.covariates = sim::standin_covariates(n, seed);
      } else {
        cfg.covariates = sim::load_covariates(covariates, false);
      }
      sim::normalize_columns(cfg.covariates);
      cfg.gamma_pi = gamma_pi;
      cfg.gamma_rho = gamma_rho;
      cfg.sigma_s = sigma_s;
      cfg.sigma_y = sigma_y;
      cfg.seed = seed;
      cfg.mc_draws_for_oracle = mc_draws;
      cfg.subsample_n = subsample;
      std::tie(dataset, oracle) = sim::generate_semisynthetic(cfg);
    } else {
      sim::SyntheticConfig cfg;
      cfg.n = n;
      cfg.gamma_pi = gamma_pi;
      cfg.gamma_rho = gamma_rho;
      cfg.sigma_s = sigma_s;
      cfg.sigma_y = sigma_y;
      cfg.seed = seed;
      std::tie(dataset, oracle) = sim::generate_synthetic(cfg);
    }
    data::save_csv(dataset, (dir / "data.csv").string());
    sim::save_oracle_csv((dir / "oracle.csv").string(), oracle);
    write_manifest(dir, "simulate", binder.resolved(), seed, {"data.csv", "oracle.csv"},
                   timer.seconds());
    std::cout << "simulate: wrote " << dataset.n() << " units to " << (dir / "data.csv").string()
              << "\n";
    return 0;
  }
};

// ----------------------------------------------------------------------- fit

struct FitCmd {
  std::string data_path;
  std::vector<std::string> learners{"lt-o-do"};
  int folds = 5;
  std::string aggregation = "average";
  std::string ablation_weight = "do";
  uint64_t seed = 0;
  std::string out;
  std::string config_path;
  model::TrainConfig stage_train = model::second_stage_config(0);
  model::TrainConfig nuisance_propensity = model::propensity_config(0);
  model::TrainConfig nuisance_outcome = model::outcome_config(0);

  CLI::App* cmd = nullptr;
  ConfigBinder binder;

  void attach(CLI::App& app) {
    cmd = app.add_subcommand("fit", "Fit effect models on a combined dataset");
    auto* o_data = cmd->add_option("--data", data_path, "Combined dataset CSV")->required();
    auto* o_learn =
        cmd->add_option("--learner", learners, "Learner kinds (or 'all')")->delimiter(',');
    auto* o_folds = cmd->add_option("--folds", folds, "Cross-fitting folds (>= 2)");
    auto* o_agg = cmd->add_option("--aggregation", aggregation, "average or pooled");
    auto* o_abl =
        cmd->add_option("--ablation-weight", ablation_weight, "Weighting for w-ra / w-dr");
    auto* o_seed = cmd->add_option("--seed", seed, "Fit seed");
    auto* o_out = cmd->add_option("--out", out, "Output directory")->required();
    cmd->add_option("--config", config_path, "JSON config or manifest to replay");

    binder.bind("data", o_data, &data_path);
    binder.bind("learners", o_learn, &learners);
    binder.bind("folds", o_folds, &folds);
    binder.bind("aggregation", o_agg, &aggregation);
    binder.bind("ablation_weight", o_abl, &ablation_weight);
    binder.bind("seed", o_seed, &seed);
    binder.bind("out", o_out, &out);
    binder.bind_train("stage_train", &stage_train);
    binder.bind_train("nuisance_propensity", &nuisance_propensity);
    binder.bind_train("nuisance_outcome", &nuisance_outcome);
  }

  int run() {
    if (!config_path.empty()) binder.apply(load_config_doc(config_path, "fit"));
    const std::vector<lrn::LearnerKind> kinds = parse_learners(learners);
    learners = learner_names(kinds);  // manifest records the expanded list

    lrn::SecondStageConfig stage;
    stage.k_folds = folds;
    stage.train = stage_train;
    stage.aggregation = lrn::aggregation_from_name(aggregation);
    stage.ablation_weight = wgt::weight_kind_from_name(ablation_weight);
    stage.validate();
    nuis::NuisanceConfig ncfg;
    ncfg.propensity = nuisance_propensity;
    ncfg.outcome = nuisance_outcome;
    ncfg.validate();

    const data::CombinedDataset dataset = data::load_csv(data_path);
    const fs::path dir = ensure_out_dir(out);
    WallTimer timer;
    const std::vector<lrn::FittedHlteModel> models =
        lrn::fit_many(kinds, dataset, stage, ncfg, num::RngStream(seed, 0));
    const Matrix x = data::x_matrix(dataset, all_indices(dataset.n()));
    std::vector<std::string> artifacts;
    for (const auto& model : models) {
      const std::string kname = lrn::learner_name(model.kind);
      const std::string mfile = "model-" + kname + ".json";
      const std::string pfile = "predictions-" + kname + ".csv";
      lrn::save_model(model, (dir / mfile).string());
      lrn::save_predictions_csv(model.predict_tau(x), (dir / pfile).string());
      artifacts.push_back(mfile);
      artifacts.push_back(pfile);
      std::cout << "fit: " << kname << " -> " << mfile << "\n";
    }
    write_manifest(dir, "fit", binder.resolved(), seed, artifacts, timer.seconds());
    return 0;
  }
};

// ------------------------------------------------------------------- predict

struct PredictCmd {
  std::string model_path;
  std::string data_path;
  std::string out;
  std::string config_path;

  CLI::App* cmd = nullptr;
  ConfigBinder binder;

  void attach(CLI::App& app) {
    cmd = app.add_subcommand("predict", "Apply a saved model to a dataset");
    auto* o_model = cmd->add_option("--model", model_path, "Model JSON from fit")->required();
    auto* o_data = cmd->add_option("--data", data_path, "Combined dataset CSV")->required();
    auto* o_out = cmd->add_option("--out", out, "Output directory")->required();
    cmd->add_option("--config", config_path, "JSON config or manifest to replay");

    binder.bind("model", o_model, &model_path);
    binder.bind("data", o_data, &data_path);
    binder.bind("out", o_out, &out);
  }

  int run() {
    if (!config_path.empty()) binder.apply(load_config_doc(config_path, "predict"));
    const lrn::FittedHlteModel model = lrn::load_model(model_path);
    const data::CombinedDataset dataset = data::load_csv(data_path);
    const fs::path dir = ensure_out_dir(out);
    WallTimer timer;
    const Matrix x = data::x_matrix(dataset, all_indices(dataset.n()));
    lrn::save_predictions_csv(model.predict_tau(x), (dir / "predictions.csv").string());
    write_manifest(dir, "predict", binder.resolved(), model.provenance.seed, {"predictions.csv"},
                   timer.seconds());
    std::cout << "predict: " << lrn::learner_name(model.kind) << " on " << dataset.n()
              << " units -> predictions.csv\n";
    return 0;
  }
};

// ----------------------------------------------------------------- benchmark

struct BenchmarkCmd {
  std::string study = "grid";
  std::vector<std::string> scenarios{"star", "t", "o", "t+o"};
  std::vector<std::string> learners;  // default depends on the study
  int seeds_count = 5;
  std::size_t n = 3000;
  std::size_t eval_size = 2000;
  int folds = 5;
  std::string aggregation = "average";
  std::string ablation_weight = "do";
  int jobs = 1;
  uint64_t seed = 0;
  std::vector<double> gammas{0.0, 1.0, 2.0, 3.0};
  std::string channel = "both";
  int runs = 10;
  std::size_t grid_size = 500;
  std::vector<std::size_t> sizes{250, 500, 1000, 2000, 4000};
  std::string scenario = "t+o";
  std::size_t probe_size = 4000;
  std::string out;
  std::string config_path;
  model::TrainConfig stage_train = model::second_stage_config(0);
  model::TrainConfig nuisance_propensity = model::propensity_config(0);
  model::TrainConfig nuisance_outcome = model::outcome_config(0);

  CLI::App* cmd = nullptr;
  CLI::Option* opt_learners = nullptr;
  ConfigBinder binder;

  void attach(CLI::App& app) {
    cmd = app.add_subcommand("benchmark", "Run a benchmark grid or a study sweep");
    auto* o_study = cmd->add_option("--study", study, "grid, variance, or nuisance");
    auto* o_sc =
        cmd->add_option("--scenarios", scenarios, "Synthetic presets (grid)")->delimiter(',');
    opt_learners = cmd->add_option("--learners", learners, "Learner kinds (or 'all')")
                       ->delimiter(',');
    auto* o_seeds = cmd->add_option("--seeds", seeds_count, "Number of seeds, used as 0..N-1");
    auto* o_n = cmd->add_option("--n", n, "Training units per draw");
    auto* o_eval = cmd->add_option("--eval-size", eval_size, "Evaluation grid size");
    auto* o_folds = cmd->add_option("--folds", folds, "Cross-fitting folds");
    auto* o_agg = cmd->add_option("--aggregation", aggregation, "average or pooled");
    auto* o_abl =
        cmd->add_option("--ablation-weight", ablation_weight, "Weighting for w-ra / w-dr");
    auto* o_jobs =
        cmd->add_option("--jobs", jobs, "Worker threads (<= 0 uses all cores)")
            ->envname("HLTE_JOBS");
    auto* o_seed = cmd->add_option("--seed", seed, "Base seed (variance study)");
    auto* o_g = cmd->add_option("--gammas", gammas, "Overlap sweep values (variance)")
                    ->delimiter(',');
    auto* o_ch = cmd->add_option("--channel", channel, "both, treatment, or outcome (variance)");
    auto* o_runs = cmd->add_option("--runs", runs, "Monte-Carlo runs per gamma (variance)");
    auto* o_gs = cmd->add_option("--grid-size", grid_size, "Fixed evaluation grid (variance)");
    auto* o_sizes =
        cmd->add_option("--sizes", sizes, "Training sizes (nuisance)")->delimiter(',');
    auto* o_one = cmd->add_option("--scenario", scenario, "Preset for the nuisance study");
    auto* o_probe = cmd->add_option("--probe-size", probe_size, "Fresh-draw probe (nuisance)");
    auto* o_out = cmd->add_option("--out", out, "Output directory")->required();
    cmd->add_option("--config", config_path, "JSON config or manifest to replay");

    binder.bind("study", o_study, &study);
    binder.bind("scenarios", o_sc, &scenarios);
    binder.bind("learners", opt_learners, &learners);
    binder.bind("seeds", o_seeds, &seeds_count);
    binder.bind("n", o_n, &n);
    binder.bind("eval_size", o_eval, &eval_size);
    binder.bind("folds", o_folds, &folds);
    binder.bind("aggregation", o_agg, &aggregation);
    binder.bind("ablation_weight", o_abl, &ablation_weight);
    binder.bind("jobs", o_jobs, &jobs);
    binder.bind("seed", o_seed, &seed);
    binder.bind("gammas", o_g, &gammas);
    binder.bind("channel", o_ch, &channel);
    binder.bind("runs", o_runs, &runs);
    binder.bind("grid_size", o_gs, &grid_size);
    binder.bind("sizes", o_sizes, &sizes);
    binder.bind("scenario", o_one, &scenario);
    binder.bind("probe_size", o_probe, &probe_size);
    binder.bind("out", o_out, &out);
    binder.bind_train("stage_train", &stage_train);
    binder.bind_train("nuisance_propensity", &nuisance_propensity);
    binder.bind_train("nuisance_outcome", &nuisance_outcome);
  }

  lrn::SecondStageConfig make_stage() const {
    lrn::SecondStageConfig stage;
    stage.k_folds = folds;
    stage.train = stage_train;
    stage.aggregation = lrn::aggregation_from_name(aggregation);
    stage.ablation_weight = wgt::weight_kind_from_name(ablation_weight);
    stage.validate();
    return stage;
  }

  nuis::NuisanceConfig make_nuisances() const {
    nuis::NuisanceConfig ncfg;
    ncfg.propensity = nuisance_propensity;
    ncfg.outcome = nuisance_outcome;
    ncfg.validate();
    return ncfg;
  }

  int run() {
    if (!config_path.empty()) binder.apply(load_config_doc(config_path, "benchmark"));
    if (study != "grid" && study != "variance" && study != "nuisance")
      throw ConfigError("benchmark: unknown study '" + study + "' (use grid, variance, nuisance)");
    if (learners.empty()) {
      // per-study defaults: grids compare everything, the sweeps track the
      // variance pair and the ablation trio
      if (study == "grid") learners = {"all"};
      if (study == "variance") learners = {"lt-o-dr", "lt-o-do"};
      if (study == "nuisance") learners = {"lt-o-do", "w-dr", "w-ra"};
    }
    const std::vector<lrn::LearnerKind> kinds = parse_learners(learners);
    learners = learner_names(kinds);
    const fs::path dir = ensure_out_dir(out);
    WallTimer timer;

    if (study == "grid") {
      ev::BenchmarkConfig cfg;
      cfg.scenarios = scenarios;
      cfg.learners = kinds;
      cfg.seeds = seed_range(seeds_count);
      cfg.n = n;
      cfg.eval_size = eval_size;
      cfg.stage = make_stage();
      cfg.nuisances = make_nuisances();
      cfg.jobs = jobs;
      cfg.validate();
      const ev::BenchmarkReport report = ev::run_benchmark(cfg);
      ev::write_benchmark_json(report, (dir / "report.json").string());
      ev::write_benchmark_csv(report, (dir / "report.csv").string());
      write_manifest(dir, "benchmark", binder.resolved(), seed, {"report.json", "report.csv"},
                     timer.seconds());
      int ok = 0;
      for (const auto& cell : report.cells) ok += cell.failed ? 0 : 1;
      for (const auto& imp : report.improvements) {
        std::cout << "benchmark " << imp.scenario << ": " << imp.best_ours << " "
                  << imp.best_ours_pehe << " vs " << imp.best_baseline << " "
                  << imp.best_baseline_pehe << " (" << imp.percent << "% gain)\n";
      }
      std::cout << "benchmark: " << ok << "/" << report.cells.size() << " cells succeeded\n";
      if (ok == 0) throw TrainingError("benchmark: every grid cell failed");
      return 0;
    }

    if (study == "variance") {
      ev::VarianceStudyConfig cfg;
      cfg.gammas = gammas;
      cfg.channel = ev::overlap_channel_from_name(channel);
      cfg.learners = kinds;
      cfg.mc_runs = runs;
      cfg.n = n;
      cfg.grid_size = grid_size;
      cfg.seed = seed;
      cfg.stage = make_stage();
      cfg.nuisances = make_nuisances();
      cfg.jobs = jobs;
      cfg.validate();
      const ev::VarianceStudyResult result = ev::variance_vs_overlap(cfg);
      write_json_file(dir / "variance.json", result.to_json());
      ev::write_variance_csv(result, (dir / "variance.csv").string());
      write_manifest(dir, "benchmark", binder.resolved(), seed, {"variance.json", "variance.csv"},
                     timer.seconds());
      int ok = 0;
      for (const auto& entry : result.entries) ok += entry.ok_runs;
      std::cout << "benchmark variance: " << result.entries.size() << " (gamma, learner) entries\n";
      if (ok == 0) throw TrainingError("benchmark: every variance run failed");
      return 0;
    }

    ev::SampleSizeStudyConfig cfg;
    cfg.sample_sizes = sizes;
    cfg.scenario = scenario;
    cfg.seeds = seed_range(seeds_count);
    cfg.probe_size = probe_size;
    cfg.eval_size = eval_size;
    cfg.learners = kinds;
    cfg.stage = make_stage();
    cfg.nuisances = make_nuisances();
    cfg.jobs = jobs;
    cfg.validate();
    const ev::SampleSizeStudy result = ev::nuisance_error_vs_n(cfg);
    write_json_file(dir / "nuisance.json", result.to_json());
    ev::write_size_pehe_csv(result, (dir / "size_pehe.csv").string());
    ev::write_size_mse_csv(result, (dir / "size_mse.csv").string());
    write_manifest(dir, "benchmark", binder.resolved(), seed,
                   {"nuisance.json", "size_pehe.csv", "size_mse.csv"}, timer.seconds());
    int ok = 0;
    for (const auto& row : result.learner_rows) ok += row.ok;
    std::cout << "benchmark nuisance: " << result.learner_rows.size() << " learner rows over "
              << sizes.size() << " sizes\n";
    if (ok == 0) throw TrainingError("benchmark: every nuisance-study fit failed");
    return 0;
  }
};

// ------------------------------------------------------------------ diagnose

struct OrthogonalityCmd {
  std::string kind = "lt-o-do";
  std::vector<double> radii{0.02, 0.04, 0.08, 0.16};
  std::string scenario = "t+o";
  std::size_t n = 100000;
  std::size_t subsample = 20000;
  int replicates = 3;
  uint64_t seed = 0;
  std::string ablation_weight = "do";
  std::string out;
  std::string config_path;
  model::TrainConfig g_train = model::second_stage_config(0);

  CLI::App* cmd = nullptr;
  ConfigBinder binder;

  void attach(CLI::App& diagnose) {
    cmd = diagnose.add_subcommand("orthogonality",
                                  "Loss-gradient movement under nuisance perturbations");
    auto* o_kind = cmd->add_option("--kind", kind, "lt-o-* kind or w-ra / w-dr");
    auto* o_r = cmd->add_option("--r", radii, "Perturbation radii")->delimiter(',');
    auto* o_sc = cmd->add_option("--scenario", scenario, "Synthetic preset");
    auto* o_n = cmd->add_option("--n", n, "Units per draw");
    auto* o_sub = cmd->add_option("--subsample", subsample, "Units behind the fixed effect fit");
    auto* o_rep = cmd->add_option("--replicates", replicates, "Independent direction draws");
    auto* o_seed = cmd->add_option("--seed", seed, "Probe seed");
    auto* o_abl =
        cmd->add_option("--ablation-weight", ablation_weight, "Weighting for w-ra / w-dr");
    auto* o_out = cmd->add_option("--out", out, "Output directory")->required();
    cmd->add_option("--config", config_path, "JSON config or manifest to replay");

    binder.bind("kind", o_kind, &kind);
    binder.bind("radii", o_r, &radii);
    binder.bind("scenario", o_sc, &scenario);
    binder.bind("n", o_n, &n);
    binder.bind("subsample", o_sub, &subsample);
    binder.bind("replicates", o_rep, &replicates);
    binder.bind("seed", o_seed, &seed);
    binder.bind("ablation_weight", o_abl, &ablation_weight);
    binder.bind("out", o_out, &out);
    binder.bind_train("g_train", &g_train);
  }

  int run() {
    if (!config_path.empty()) binder.apply(load_config_doc(config_path, "diagnose orthogonality"));
    ev::OrthogonalityConfig cfg;
    cfg.kind = lrn::learner_from_name(kind);
    cfg.radii = radii;
    cfg.scenario = scenario;
    cfg.n = n;
    cfg.fit_subsample = subsample;
    cfg.replicates = replicates;
    cfg.seed = seed;
    cfg.g_train = g_train;
    cfg.ablation_weight = wgt::weight_kind_from_name(ablation_weight);
    cfg.validate();
    const fs::path dir = ensure_out_dir(out);
    WallTimer timer;
    const ev::OrthogonalityResult result = ev::orthogonality_scaling(cfg);
    write_json_file(dir / "orthogonality.json", result.to_json());
    {
      std::ofstream f(dir / "orthogonality.csv");
      if (!f) throw IoError("cannot open orthogonality.csv for writing");
      f << "replicate,radius,movement\n";
      for (std::size_t rep = 0; rep < result.movement.size(); ++rep)
        for (std::size_t j = 0; j < result.radii.size(); ++j)
          f << rep << ',' << num::format_g17(result.radii[j]) << ','
            << num::format_g17(result.movement[rep][j]) << '\n';
      if (!f.good()) throw IoError("write to orthogonality.csv failed");
    }
    write_manifest(dir, "diagnose orthogonality", binder.resolved(), seed,
                   {"orthogonality.json", "orthogonality.csv"}, timer.seconds());
    std::cout << "orthogonality " << kind << ": slope " << result.slope << " (replicates:";
    for (double s : result.slopes) std::cout << " " << s;
    std::cout << ")\n";
    return 0;
  }
};

struct DrVarianceCmd {
  double gamma_pi = 0.0;
  double gamma_rho = 0.0;
  std::size_t n = 100000;
  int bins = 20;
  uint64_t seed = 0;
  std::string data_path;
  std::string oracle_path;
  std::string out;
  std::string config_path;
  model::TrainConfig nuisance_propensity = model::propensity_config(0);
  model::TrainConfig nuisance_outcome = model::outcome_config(0);

  CLI::App* cmd = nullptr;
  CLI::Option* opt_gpi = nullptr;
  CLI::Option* opt_grho = nullptr;
  CLI::Option* opt_n = nullptr;
  ConfigBinder binder;

  void attach(CLI::App& diagnose) {
    cmd = diagnose.add_subcommand(
        "drvariance", "Pseudo-outcome variance against its conditional lower bound");
    opt_gpi = cmd->add_option("--gamma-pi", gamma_pi, "Treatment-overlap knob (synthetic)");
    opt_grho = cmd->add_option("--gamma-rho", gamma_rho, "Outcome-overlap knob (synthetic)");
    opt_n = cmd->add_option("--n", n, "Units to draw (synthetic)");
    auto* o_bins = cmd->add_option("--bins", bins, "Equal-frequency bins on x1 + x2");
    auto* o_seed = cmd->add_option("--seed", seed, "Draw / fit seed");
    auto* o_data = cmd->add_option("--data", data_path, "Existing dataset CSV");
    auto* o_oracle =
        cmd->add_option("--oracle", oracle_path, "Oracle CSV with the true pi and rho");
    auto* o_out = cmd->add_option("--out", out, "Output directory")->required();
    cmd->add_option("--config", config_path, "JSON config or manifest to replay");

    binder.bind("gamma_pi", opt_gpi, &gamma_pi);
    binder.bind("gamma_rho", opt_grho, &gamma_rho);
    binder.bind("n", opt_n, &n);
    binder.bind("bins", o_bins, &bins);
    binder.bind("seed", o_seed, &seed);
    binder.bind("data", o_data, &data_path);
    binder.bind("oracle", o_oracle, &oracle_path);
    binder.bind("out", o_out, &out);
    binder.bind_train("nuisance_propensity", &nuisance_propensity);
    binder.bind_train("nuisance_outcome", &nuisance_outcome);
  }

  // oracle CSV as written by simulate: index,tau_true,pi_true,rho_true
  static void load_oracle_csv(const std::string& path, std::vector<double>& pi,
                              std::vector<double>& rho) {
    std::ifstream f(path);
    if (!f) throw IoError("oracle csv: cannot open '" + path + "'");
    std::string line;
    if (!std::getline(f, line)) throw DataError("oracle csv: '" + path + "' is empty");
    if (line == "index,tau_true,pi_true,rho_true\r") line.pop_back();
    if (line != "index,tau_true,pi_true,rho_true")
      throw DataError("oracle csv: unexpected header '" + line + "'");
    while (std::getline(f, line)) {
      if (!line.empty() && line.back() == '\r') line.pop_back();
      if (line.empty()) continue;
      std::stringstream row(line);
      std::string cell;
      std::vector<std::string> cells;
      while (std::getline(row, cell, ',')) cells.push_back(cell);
      if (cells.size() != 4)
        throw DataError("oracle csv: expected 4 columns, found " + std::to_string(cells.size()));
      pi.push_back(std::stod(cells[2]));
      rho.push_back(std::stod(cells[3]));
    }
  }

  int run() {
    if (!config_path.empty()) binder.apply(load_config_doc(config_path, "diagnose drvariance"));
    const fs::path dir = ensure_out_dir(out);
    WallTimer timer;
    data::CombinedDataset dataset;
    nuis::NuisanceValues nv;
    if (!data_path.empty()) {
      if (oracle_path.empty())
        throw ConfigError(
            "diagnose drvariance: --data needs --oracle with the true pi and rho columns");
      if (opt_gpi->count() > 0 || opt_grho->count() > 0 || opt_n->count() > 0)
        throw ConfigError("diagnose drvariance: the gamma/n knobs drive the synthetic path only");
      dataset = data::load_csv(data_path);
      std::vector<double> pi_true, rho_true;
      load_oracle_csv(oracle_path, pi_true, rho_true);
      if (static_cast<int>(pi_true.size()) != dataset.n())
        throw DataError("oracle csv: " + std::to_string(pi_true.size()) + " rows for " +
                        std::to_string(dataset.n()) + " units");
      // outcome-side surfaces are fitted on the full data; the bound itself is
      // taken at the supplied design probabilities
      nuis::NuisanceConfig ncfg;
      ncfg.propensity = nuisance_propensity;
      ncfg.outcome = nuisance_outcome;
      ncfg.validate();
      const std::vector<int> idx = all_indices(dataset.n());
      const nuis::NuisanceSet set =
          nuis::fit_nuisances(dataset, idx, ncfg, num::RngStream(seed, 0));
      nv = nuis::evaluate_nuisances(set, dataset, idx);
      for (std::size_t i = 0; i < nv.size(); ++i) {
        const std::size_t ui = static_cast<std::size_t>(nv.unit_index[i]);
        nv.pi[i] = pi_true[ui];
        nv.rho[i] = rho_true[ui];
      }
    } else {
      sim::SyntheticConfig cfg;
      cfg.n = n;
      cfg.gamma_pi = gamma_pi;
      cfg.gamma_rho = gamma_rho;
      cfg.seed = seed;
      sim::OracleBundle oracle;
      std::tie(dataset, oracle) = sim::generate_synthetic(cfg);
      nv = nuis::oracle_nuisances(cfg, dataset);
    }
    const ev::DrVarianceDiagnostic diag = ev::dr_variance_diagnostic(dataset, nv, bins);
    write_json_file(dir / "drvariance.json", diag.to_json());
    {
      std::ofstream f(dir / "drvariance.csv");
      if (!f) throw IoError("cannot open drvariance.csv for writing");
      f << "key_mean,count,dropped,var_t_dr,bound\n";
      for (const auto& bin : diag.bins)
        f << num::format_g17(bin.key_mean) << ',' << bin.count << ',' << (bin.dropped ? 1 : 0)
          << ',' << num::format_g17(bin.var_t_dr) << ',' << num::format_g17(bin.bound) << '\n';
      if (!f.good()) throw IoError("write to drvariance.csv failed");
    }
    write_manifest(dir, "diagnose drvariance", binder.resolved(), seed,
                   {"drvariance.json", "drvariance.csv"}, timer.seconds());
    double min_ratio = std::numeric_limits<double>::infinity();
    for (const auto& bin : diag.bins)
      if (!bin.dropped && bin.bound > 0.0) min_ratio = std::min(min_ratio, bin.var_t_dr / bin.bound);
    std::cout << "drvariance: " << diag.retained << " bins retained, " << diag.dropped
              << " dropped, min variance/bound ratio " << min_ratio << "\n";
    return 0;
  }
};

// -------------------------------------------------------------------- report

struct ReportCmd {
  std::string in_path;
  std::string format = "csv";
  std::string out;
  std::string config_path;

  CLI::App* cmd = nullptr;
  ConfigBinder binder;

  void attach(CLI::App& app) {
    cmd = app.add_subcommand("report", "Re-emit a benchmark report as CSV or JSON");
    auto* o_in = cmd->add_option("--in", in_path, "Benchmark report JSON")->required();
    auto* o_fmt = cmd->add_option("--format", format, "csv or json");
    auto* o_out = cmd->add_option("--out", out, "Output directory")->required();
    cmd->add_option("--config", config_path, "JSON config or manifest to replay");

    binder.bind("in", o_in, &in_path);
    binder.bind("format", o_fmt, &format);
    binder.bind("out", o_out, &out);
  }

  int run() {
    if (!config_path.empty()) binder.apply(load_config_doc(config_path, "report"));
    if (format != "csv" && format != "json")
      throw ConfigError("report: unknown format '" + format + "' (use csv or json)");
    const ev::BenchmarkReport report = ev::read_benchmark_json(in_path);
    const fs::path dir = ensure_out_dir(out);
    WallTimer timer;
    const std::string fname = "report." + format;
    ev::emit_report(report, format, (dir / fname).string());
    write_manifest(dir, "report", binder.resolved(), 0, {fname}, timer.seconds());
    std::cout << "report: wrote " << fname << " (" << report.cells.size() << " cells)\n";
    return 0;
  }
};

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Long-term heterogeneous treatment effect learners"};
  app.set_version_flag("--version", std::string("hlte ") + kVersion);
  app.require_subcommand(1);

  SimulateCmd simulate;
  FitCmd fit;
  PredictCmd predict;
  BenchmarkCmd benchmark;
  ReportCmd report;
  simulate.attach(app);
  fit.attach(app);
  predict.attach(app);
  CLI::App* diagnose = app.add_subcommand("diagnose", "Estimator diagnostics");
  diagnose->require_subcommand(1);
  OrthogonalityCmd orthogonality;
  DrVarianceCmd drvariance;
  orthogonality.attach(*diagnose);
  drvariance.attach(*diagnose);
  benchmark.attach(app);
  report.attach(app);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  try {
    if (simulate.cmd->parsed()) return simulate.run();
    if (fit.cmd->parsed()) return fit.run();
    if (predict.cmd->parsed()) return predict.run();
    if (benchmark.cmd->parsed()) return benchmark.run();
    if (orthogonality.cmd->parsed()) return orthogonality.run();
    if (drvariance.cmd->parsed()) return drvariance.run();
    if (report.cmd->parsed()) return report.run();
    std::cerr << "usage error: no subcommand\n";
    return 2;
  } catch (const ConfigError& e) {
    std::cerr << "usage error: " << e.what() << "\n";
    return 2;
  } catch (const TrainingError& e) {
    std::cerr << "training error: " << e.what() << "\n";
    return 4;
  } catch (const DataError& e) {
    std::cerr << "data error: " << e.what() << "\n";
    return 3;
  } catch (const DomainError& e) {
    std::cerr << "data error: " << e.what() << "\n";
    return 3;
  } catch (const IoError& e) {
    std::cerr << "io error: " << e.what() << "\n";
    return 3;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
}
