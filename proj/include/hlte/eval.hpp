#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "hlte/dataset.hpp"
#include "hlte/learners.hpp"
#include "hlte/nuisance.hpp"
#include "hlte/simulate.hpp"
#include "json.hpp"

namespace hlte::ev {

// root mean squared error between estimated and true effects
double pehe(const std::vector<double>& tau_hat, const std::vector<double>& tau_true);

// ---------------------------------------------------------------- benchmark

struct BenchmarkConfig {
  std::vector<std::string> scenarios;  // synthetic preset names
  std::vector<lrn::LearnerKind> learners;
  std::vector<uint64_t> seeds;  // one training draw per (scenario, seed)
  std::size_t n = 3000;
  std::size_t eval_size = 2000;
  lrn::SecondStageConfig stage;
  nuis::NuisanceConfig nuisances;
  int jobs = 1;  // worker threads over (scenario, seed) cells; <=0 uses all cores

  void validate() const;  // non-empty lists, known scenario names
};

struct BenchmarkCell {
  std::string scenario;
  std::string learner;
  uint64_t seed = 0;
  bool failed = false;
  double pehe = 0.0;   // valid when !failed
  std::string error;   // failure context when failed
};

struct BenchmarkAggregate {
  std::string scenario;
  std::string learner;
  double pehe_mean = 0.0;  // over successful seeds
  double pehe_std = 0.0;
  int ok = 0;
  int failed = 0;
};

// Percentage gain of the best orthogonal overlap-weighted learner over the
// best of the baseline pool {lt-t, lt-ra, lt-ipw, lt-o-dr}, per scenario.
struct BenchmarkImprovement {
  std::string scenario;
  std::string best_ours;
  double best_ours_pehe = 0.0;
  std::string best_baseline;
  double best_baseline_pehe = 0.0;
  double percent = 0.0;  // 100 * (baseline - ours) / baseline
};

struct BenchmarkReport {
  std::size_t n = 0;
  std::size_t eval_size = 0;
  std::vector<std::string> scenarios;
  std::vector<std::string> learners;
  std::vector<uint64_t> seeds;
  std::vector<BenchmarkCell> cells;  // scenario-major, then seed, then learner
  std::vector<BenchmarkAggregate> aggregates;
  std::vector<BenchmarkImprovement> improvements;

  nlohmann::json to_json() const;
  static BenchmarkReport from_json(const nlohmann::json& doc);
};

BenchmarkReport run_benchmark(const BenchmarkConfig& cfg);

// ------------------------------------------------- variance versus overlap

enum class OverlapChannel { both, treatment, outcome };
std::string overlap_channel_name(OverlapChannel c);
OverlapChannel overlap_channel_from_name(const std::string& name);

// (gamma_pi, gamma_rho) for a sweep value under a channel: both -> (g, g/2),
// treatment -> (g, 0), outcome -> (0, g)
std::pair<double, double> sweep_gammas(double gamma, OverlapChannel channel);

// population mean of rho(x) * pi(x) * (1 - pi(x)) over fresh covariate draws
double overlap_level(double gamma_pi, double gamma_rho, uint64_t seed,
                     std::size_t draws = 100000);

struct VarianceStudyConfig {
  std::vector<double> gammas;  // sweep values, mapped through the channel
  OverlapChannel channel = OverlapChannel::both;
  std::vector<lrn::LearnerKind> learners;
  int mc_runs = 10;
  std::size_t n = 3000;
  std::size_t grid_size = 500;  // fixed evaluation grid per gamma
  uint64_t seed = 0;
  lrn::SecondStageConfig stage;
  nuis::NuisanceConfig nuisances;
  int jobs = 1;

  void validate() const;  // non-empty gammas/learners, mc_runs >= 2
};

struct VarianceStudyEntry {
  double gamma = 0.0;
  double overlap = 0.0;
  std::string learner;
  double v = 0.0;  // mean over grid points of across-run variance
  int ok_runs = 0;
  int failed_runs = 0;
};

struct VarianceStudyResult {
  std::vector<VarianceStudyEntry> entries;  // gamma-major, learner order within
  int mc_runs = 0;

  nlohmann::json to_json() const;
};

VarianceStudyResult variance_vs_overlap(const VarianceStudyConfig& cfg);

// ------------------------------------------- nuisance quality versus size

struct SampleSizeStudyConfig {
  std::vector<std::size_t> sample_sizes{250, 500, 1000, 2000, 4000};
  std::string scenario = "t+o";
  std::vector<uint64_t> seeds;
  std::size_t probe_size = 4000;  // fresh sample for nuisance MSE
  std::size_t eval_size = 2000;
  std::vector<lrn::LearnerKind> learners{lrn::LearnerKind::lt_o_do, lrn::LearnerKind::w_dr,
                                         lrn::LearnerKind::w_ra};
  lrn::SecondStageConfig stage;
  nuis::NuisanceConfig nuisances;
  int jobs = 1;

  void validate() const;  // >= 2 sizes, non-empty seeds/learners
};

struct NuisanceMseEntry {
  std::size_t n = 0;
  std::string nuisance;  // "pi", "pi_s", "rho", "rho_s", "h", "mu0", "mu1"
  double mse_mean = 0.0;
  int ok = 0;
};

struct SizePeheEntry {
  std::size_t n = 0;
  std::string learner;
  double pehe_mean = 0.0;
  double pehe_std = 0.0;
  int ok = 0;
  int failed = 0;
};

struct SampleSizeStudy {
  std::vector<NuisanceMseEntry> nuisance_rows;  // size-major, nuisance order
  std::vector<SizePeheEntry> learner_rows;      // size-major, learner order

  nlohmann::json to_json() const;
};

SampleSizeStudy nuisance_error_vs_n(const SampleSizeStudyConfig& cfg);

// --------------------------------------------- pseudo-outcome variance bound

// Within equal-frequency bins on x1 + x2: the empirical variance of the
// doubly robust pseudo-outcome next to its conditional lower bound, with the
// residual variances estimated by within-bin plug-in. Bins with fewer than 10
// units, a treatment arm below 2, or an observational slice below 2 are
// dropped with a flag.
struct DrVarianceBin {
  double key_mean = 0.0;  // bin average of x1 + x2
  int count = 0;
  bool dropped = false;
  double var_t_dr = 0.0;
  double bound = 0.0;
};

struct DrVarianceDiagnostic {
  std::vector<DrVarianceBin> bins;
  int retained = 0;
  int dropped = 0;

  nlohmann::json to_json() const;
};

DrVarianceDiagnostic dr_variance_diagnostic(const data::CombinedDataset& data,
                                            const nuis::NuisanceValues& nv, int bins);

// ------------------------------------------------------ orthogonality sweep

// Fix the effect network at a tight fit of the oracle effect, shift every
// nuisance along smooth random directions scaled by r, and measure how far
// the empirical loss gradient at that fixed network moves. Orthogonal losses
// move quadratically in r; the weighted non-orthogonal ablations move
// linearly.
struct OrthogonalityConfig {
  lrn::LearnerKind kind = lrn::LearnerKind::lt_o_do;  // lt-o-* / w-ra / w-dr
  std::vector<double> radii{0.02, 0.04, 0.08, 0.16};
  std::string scenario = "t+o";
  std::size_t n = 100000;
  std::size_t fit_subsample = 20000;
  int replicates = 3;
  uint64_t seed = 0;
  model::TrainConfig g_train = model::second_stage_config(0);
  wgt::WeightKind ablation_weight = wgt::WeightKind::dual;  // for w-ra / w-dr

  void validate() const;  // >= 2 radii, positive, supported kind
};

struct OrthogonalityResult {
  std::vector<double> radii;
  std::vector<std::vector<double>> movement;  // per replicate, per radius
  std::vector<double> slopes;                 // log-log LS fit per replicate
  double slope = 0.0;                         // median of the replicate slopes

  nlohmann::json to_json() const;
};

OrthogonalityResult orthogonality_scaling(const OrthogonalityConfig& cfg);

// ------------------------------------------------------------------ reports

// CSV schema: scenario,learner,seed,pehe ("failed" in place of a number)
void write_benchmark_csv(const BenchmarkReport& report, const std::string& path);
void write_benchmark_json(const BenchmarkReport& report, const std::string& path);
BenchmarkReport read_benchmark_json(const std::string& path);
// format is "json" or "csv"
void emit_report(const BenchmarkReport& report, const std::string& format,
                 const std::string& path);

// plot-ready CSVs
void write_variance_csv(const VarianceStudyResult& result, const std::string& path);  // gamma,overlap,learner,V
void write_size_pehe_csv(const SampleSizeStudy& study, const std::string& path);  // n,learner,pehe_mean,pehe_std
void write_size_mse_csv(const SampleSizeStudy& study, const std::string& path);  // n,nuisance,mse_mean

}  // namespace hlte::ev
