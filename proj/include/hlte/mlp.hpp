#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "hlte/matrix.hpp"
#include "json.hpp"

namespace hlte::model {

enum class OutputHead { linear, sigmoid };

struct TrainConfig {
  std::vector<int> hidden_widths{20, 10};
  int epochs = 20;
  int batch_size = 64;
  double learning_rate = 1e-3;
  uint64_t seed = 0;
  OutputHead output_head = OutputHead::linear;

  void validate() const;  // counts >= 1, learning_rate > 0
  nlohmann::json to_json() const;
  static TrainConfig from_json(const nlohmann::json& doc);
};

// experiment-protocol presets
TrainConfig propensity_config(uint64_t seed);    // (20,10), sigmoid head, 20 epochs
TrainConfig outcome_config(uint64_t seed);       // (20,20,10,10), linear head, 20 epochs
TrainConfig second_stage_config(uint64_t seed);  // (20,20,10,10), linear head, 40 epochs

// Loss families shared by training and the finite-difference gradient tests.
// squared and cross_entropy use the weighted MEAN within each batch (divide by
// the batch weight total); bilinear is the plain mean of curv*g^2 - 2*lin*g,
// whose per-sample curvature may be negative.
enum class LossKind { squared, cross_entropy, bilinear };

struct Layer {
  int in = 0, out = 0;
  std::vector<double> w;  // row-major, out x in
  std::vector<double> b;  // out
};

// Feed-forward ReLU network with a 1-unit head, trained by mini-batch Adam
// on the batch-mean loss. Inputs are z-scored with statistics frozen at fit
// time and stored in the model; squared-loss regression additionally z-scores
// its targets internally and de-standardizes predictions, so the affine head
// carries the target location/scale and the epoch budget goes to structure.
// Sigmoid-head predictions are clamped to [1e-3, 1-1e-3] so that downstream
// propensity ratios stay finite.
class PredictorModel {
 public:
  PredictorModel() = default;

  static PredictorModel fit_regressor(const Matrix& inputs, const std::vector<double>& targets,
                                      const std::vector<double>* weights, const TrainConfig& cfg);
  static PredictorModel fit_classifier(const Matrix& inputs, const std::vector<double>& labels,
                                       const TrainConfig& cfg);
  // minimizes mean_i(curv_i * g_i^2 - 2 * lin_i * g_i)
  static PredictorModel fit_bilinear(const Matrix& inputs, const std::vector<double>& curv,
                                     const std::vector<double>& lin, const TrainConfig& cfg);

  std::vector<double> predict(const Matrix& inputs) const;
  double predict_one(const double* x, std::size_t d) const;

  int input_dim() const { return input_dim_; }
  OutputHead head() const { return head_; }
  const std::vector<double>& epoch_loss() const { return epoch_loss_; }

  // Loss and parameter gradient at the current weights over the given rows of
  // a raw (unstandardized) input matrix. aux carries sample weights for
  // squared/cross_entropy (may be null = unweighted) and the curvature vector
  // for bilinear (required). Used by training internally and by the
  // finite-difference tests. Returns the batch loss; fills grad if non-null.
  double loss_and_gradient(LossKind kind, const Matrix& inputs, const std::vector<int>& rows,
                           const std::vector<double>& target, const std::vector<double>* aux,
                           std::vector<double>* grad) const;

  std::vector<double> flat_params() const;
  void set_flat_params(const std::vector<double>& p);

  nlohmann::json to_json() const;
  static PredictorModel from_json(const nlohmann::json& doc);

  // untrained models for tests: zero weights, or the seeded fan-based init
  static PredictorModel make_zero(int input_dim, const std::vector<int>& hidden, OutputHead head);
  static PredictorModel make_random(int input_dim, const std::vector<int>& hidden, OutputHead head,
                                    uint64_t seed);

 private:
  static PredictorModel fit_impl(const Matrix& inputs, const std::vector<double>& target,
                                 const std::vector<double>* aux, LossKind kind,
                                 const TrainConfig& cfg);

  int input_dim_ = 0;
  OutputHead head_ = OutputHead::linear;
  std::vector<Layer> layers_;
  std::vector<double> feat_mean_, feat_sd_;
  double target_mean_ = 0.0, target_sd_ = 1.0;  // linear-head de-standardization
  std::vector<double> epoch_loss_;  // mean batch loss per epoch, not serialized
};

}  // namespace hlte::model
