#include "hlte/mlp.hpp"

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <numeric>

#include "hlte/errors.hpp"
#include "hlte/numerics.hpp"
#include "hlte/rng.hpp"

namespace hlte::model {

namespace {

constexpr double kProbClip = 1e-3;
constexpr uint64_t kMlpStream = 0x6d6c70;  // distinct stream id for model init/shuffle

// Adam moment/stability constants; the learning rate comes from TrainConfig
constexpr double kAdamBeta1 = 0.9;
constexpr double kAdamBeta2 = 0.999;
constexpr double kAdamEps = 1e-8;

std::string head_name(OutputHead h) { return h == OutputHead::sigmoid ? "sigmoid" : "linear"; }

OutputHead head_from_name(const std::string& s) {
  if (s == "sigmoid") return OutputHead::sigmoid;
  if (s == "linear") return OutputHead::linear;
  throw DataError("model: unknown output head '" + s + "'");
}

// stable binary cross entropy from the pre-sigmoid logit
double bce_from_logit(double z, double y) {
  if (z >= 0.0) return (1.0 - y) * z + std::log1p(std::exp(-z));
  return -y * z + std::log1p(std::exp(z));
}

}  // namespace

void TrainConfig::validate() const {
  for (int w : hidden_widths)
    if (w < 1) throw ConfigError("train config: hidden layer widths must be >= 1");
  if (epochs < 1) throw ConfigError("train config: epochs must be >= 1");
  if (batch_size < 1) throw ConfigError("train config: batch_size must be >= 1");
  if (!(learning_rate > 0.0) || !std::isfinite(learning_rate))
    throw ConfigError("train config: learning_rate must be positive and finite");
}

nlohmann::json TrainConfig::to_json() const {
  return {{"hidden_widths", hidden_widths}, {"epochs", epochs},
          {"batch_size", batch_size},       {"learning_rate", learning_rate},
          {"seed", seed},                   {"output_head", head_name(output_head)}};
}

TrainConfig TrainConfig::from_json(const nlohmann::json& doc) {
  TrainConfig cfg;
  cfg.hidden_widths = doc.at("hidden_widths").get<std::vector<int>>();
  cfg.epochs = doc.at("epochs").get<int>();
  cfg.batch_size = doc.at("batch_size").get<int>();
  cfg.learning_rate = doc.at("learning_rate").get<double>();
  cfg.seed = doc.at("seed").get<uint64_t>();
  cfg.output_head = head_from_name(doc.at("output_head").get<std::string>());
  cfg.validate();
  return cfg;
}

TrainConfig propensity_config(uint64_t seed) {
  TrainConfig cfg;
  cfg.hidden_widths = {20, 10};
  cfg.epochs = 20;
  cfg.output_head = OutputHead::sigmoid;
  cfg.seed = seed;
  return cfg;
}

TrainConfig outcome_config(uint64_t seed) {
  TrainConfig cfg;
  cfg.hidden_widths = {20, 20, 10, 10};
  cfg.epochs = 20;
  cfg.output_head = OutputHead::linear;
  cfg.seed = seed;
  return cfg;
}

TrainConfig second_stage_config(uint64_t seed) {
  TrainConfig cfg = outcome_config(seed);
  cfg.epochs = 40;
  return cfg;
}

PredictorModel PredictorModel::make_zero(int input_dim, const std::vector<int>& hidden,
                                         OutputHead head) {
  if (input_dim < 1) throw ConfigError("model: input_dim must be >= 1");
  PredictorModel m;
  m.input_dim_ = input_dim;
  m.head_ = head;
  int in = input_dim;
  for (int wdt : hidden) {
    Layer l;
    l.in = in;
    l.out = wdt;
    l.w.assign(static_cast<std::size_t>(wdt) * in, 0.0);
    l.b.assign(wdt, 0.0);
    m.layers_.push_back(std::move(l));
    in = wdt;
  }
  Layer out;
  out.in = in;
  out.out = 1;
  out.w.assign(in, 0.0);
  out.b.assign(1, 0.0);
  m.layers_.push_back(std::move(out));
  m.feat_mean_.assign(input_dim, 0.0);
  m.feat_sd_.assign(input_dim, 1.0);
  return m;
}

PredictorModel PredictorModel::make_random(int input_dim, const std::vector<int>& hidden,
                                           OutputHead head, uint64_t seed) {
  PredictorModel m = make_zero(input_dim, hidden, head);
  num::RngStream init = num::RngStream(seed, kMlpStream).child(0);
  for (Layer& l : m.layers_) {
    const double bound = std::sqrt(6.0 / (l.in + l.out));
    for (double& w : l.w) w = (2.0 * init.uniform() - 1.0) * bound;
    // biases stay zero
  }
  return m;
}

std::vector<double> PredictorModel::flat_params() const {
  std::vector<double> p;
  for (const Layer& l : layers_) {
    p.insert(p.end(), l.w.begin(), l.w.end());
    p.insert(p.end(), l.b.begin(), l.b.end());
  }
  return p;
}

void PredictorModel::set_flat_params(const std::vector<double>& p) {
  std::size_t need = 0;
  for (const Layer& l : layers_) need += l.w.size() + l.b.size();
  if (p.size() != need)
    throw DataError("model: parameter vector has size " + std::to_string(p.size()) +
                    ", model needs " + std::to_string(need));
  std::size_t at = 0;
  for (Layer& l : layers_) {
    std::copy(p.begin() + at, p.begin() + at + l.w.size(), l.w.begin());
    at += l.w.size();
    std::copy(p.begin() + at, p.begin() + at + l.b.size(), l.b.begin());
    at += l.b.size();
  }
}

double PredictorModel::predict_one(const double* x, std::size_t d) const {
  if (static_cast<int>(d) != input_dim_)
    throw DataError("model: expected " + std::to_string(input_dim_) + " features, got " +
                    std::to_string(d));
  std::vector<double> cur(input_dim_), nxt;
  for (int j = 0; j < input_dim_; ++j) cur[j] = (x[j] - feat_mean_[j]) / feat_sd_[j];
  for (std::size_t li = 0; li < layers_.size(); ++li) {
    const Layer& l = layers_[li];
    nxt.assign(l.out, 0.0);
    for (int o = 0; o < l.out; ++o) {
      double z = l.b[o];
      const double* wrow = l.w.data() + static_cast<std::size_t>(o) * l.in;
      for (int i = 0; i < l.in; ++i) z += wrow[i] * cur[i];
      nxt[o] = (li + 1 < layers_.size()) ? std::max(0.0, z) : z;
    }
    cur.swap(nxt);
  }
  double out = cur[0];
  if (head_ == OutputHead::sigmoid)
    out = std::clamp(num::sigmoid(out), kProbClip, 1.0 - kProbClip);
  else
    out = target_mean_ + target_sd_ * out;
  return out;
}

std::vector<double> PredictorModel::predict(const Matrix& inputs) const {
  if (static_cast<int>(inputs.cols) != input_dim_)
    throw DataError("model: expected " + std::to_string(input_dim_) + " features, got " +
                    std::to_string(inputs.cols));
  std::vector<double> out(inputs.rows);
  for (std::size_t i = 0; i < inputs.rows; ++i) out[i] = predict_one(inputs.row(i), inputs.cols);
  return out;
}

double PredictorModel::loss_and_gradient(LossKind kind, const Matrix& inputs,
                                         const std::vector<int>& rows,
                                         const std::vector<double>& target,
                                         const std::vector<double>* aux,
                                         std::vector<double>* grad) const {
  if (static_cast<int>(inputs.cols) != input_dim_)
    throw DataError("model: expected " + std::to_string(input_dim_) + " features, got " +
                    std::to_string(inputs.cols));
  if (target.size() != inputs.rows) throw DataError("model: target length != input rows");
  if (kind == LossKind::bilinear && aux == nullptr)
    throw DataError("model: bilinear loss needs the curvature vector");
  if (aux != nullptr && aux->size() != inputs.rows)
    throw DataError("model: aux length != input rows");
  if (rows.empty()) throw DataError("model: empty batch");
  if (kind == LossKind::cross_entropy && head_ != OutputHead::sigmoid)
    throw DataError("model: cross_entropy requires a sigmoid head");

  // normalizer: total sample weight for the weighted-mean losses, batch size
  // for bilinear. Zero total weight means the batch contributes nothing.
  double norm;
  if (kind == LossKind::bilinear) {
    norm = static_cast<double>(rows.size());
  } else {
    norm = 0.0;
    if (aux == nullptr) {
      norm = static_cast<double>(rows.size());
    } else {
      for (int r : rows) norm += (*aux)[r];
    }
    if (!(norm > 0.0)) {
      if (grad != nullptr) {
        std::size_t np = 0;
        for (const Layer& l : layers_) np += l.w.size() + l.b.size();
        grad->assign(np, 0.0);
      }
      return 0.0;
    }
  }

  const std::size_t nlayer = layers_.size();
  std::vector<std::vector<double>> act(nlayer + 1);  // act[0] = standardized input
  std::vector<std::vector<double>> preact(nlayer);
  act[0].resize(input_dim_);
  for (std::size_t li = 0; li < nlayer; ++li) {
    act[li + 1].resize(layers_[li].out);
    preact[li].resize(layers_[li].out);
  }
  std::vector<std::vector<double>> delta(nlayer);
  for (std::size_t li = 0; li < nlayer; ++li) delta[li].resize(layers_[li].out);

  std::size_t np = 0;
  for (const Layer& l : layers_) np += l.w.size() + l.b.size();
  if (grad != nullptr) grad->assign(np, 0.0);

  double loss = 0.0;
  for (int r : rows) {
    const double* x = inputs.row(static_cast<std::size_t>(r));
    for (int j = 0; j < input_dim_; ++j) act[0][j] = (x[j] - feat_mean_[j]) / feat_sd_[j];
    for (std::size_t li = 0; li < nlayer; ++li) {
      const Layer& l = layers_[li];
      for (int o = 0; o < l.out; ++o) {
        double z = l.b[o];
        const double* wrow = l.w.data() + static_cast<std::size_t>(o) * l.in;
        for (int i = 0; i < l.in; ++i) z += wrow[i] * act[li][i];
        preact[li][o] = z;
        act[li + 1][o] = (li + 1 < nlayer) ? std::max(0.0, z) : z;
      }
    }
    const double z_out = preact[nlayer - 1][0];
    const double t = target[static_cast<std::size_t>(r)];

    // per-sample loss and dL/dz at the pre-head output, then scale by the
    // sample's share of the batch normalizer
    double scale, dz;
    switch (kind) {
      case LossKind::squared: {
        const double w = aux ? (*aux)[static_cast<std::size_t>(r)] : 1.0;
        scale = w / norm;
        const double g = target_mean_ + target_sd_ * z_out;
        loss += scale * (g - t) * (g - t);
        dz = scale * 2.0 * (g - t) * target_sd_;
        break;
      }
      case LossKind::cross_entropy: {
        const double w = aux ? (*aux)[static_cast<std::size_t>(r)] : 1.0;
        scale = w / norm;
        loss += scale * bce_from_logit(z_out, t);
        dz = scale * (num::sigmoid(z_out) - t);
        break;
      }
      case LossKind::bilinear: {
        scale = 1.0 / norm;
        const double c = (*aux)[static_cast<std::size_t>(r)];
        const double g = target_mean_ + target_sd_ * z_out;
        loss += scale * (c * g * g - 2.0 * t * g);
        dz = scale * 2.0 * (c * g - t) * target_sd_;
        break;
      }
    }
    if (grad == nullptr) continue;

    delta[nlayer - 1][0] = dz;
    for (std::size_t li = nlayer - 1; li-- > 0;) {
      const Layer& above = layers_[li + 1];
      for (int i = 0; i < above.in; ++i) {
        double d = 0.0;
        for (int o = 0; o < above.out; ++o)
          d += above.w[static_cast<std::size_t>(o) * above.in + i] * delta[li + 1][o];
        delta[li][i] = (preact[li][i] > 0.0) ? d : 0.0;
      }
    }
    std::size_t at = 0;
    for (std::size_t li = 0; li < nlayer; ++li) {
      const Layer& l = layers_[li];
      double* gw = grad->data() + at;
      for (int o = 0; o < l.out; ++o) {
        const double d = delta[li][o];
        if (d != 0.0) {
          double* grow = gw + static_cast<std::size_t>(o) * l.in;
          const double* a = act[li].data();
          for (int i = 0; i < l.in; ++i) grow[i] += d * a[i];
        }
      }
      at += l.w.size();
      double* gb = grad->data() + at;
      for (int o = 0; o < l.out; ++o) gb[o] += delta[li][o];
      at += l.b.size();
    }
  }
  return loss;
}

PredictorModel PredictorModel::fit_impl(const Matrix& inputs, const std::vector<double>& target,
                                        const std::vector<double>* aux, LossKind kind,
                                        const TrainConfig& cfg) {
  cfg.validate();
  if (inputs.rows == 0) throw DataError("model: cannot fit on an empty dataset");
  if (target.size() != inputs.rows) throw DataError("model: target length != input rows");
  if (aux != nullptr && aux->size() != inputs.rows)
    throw DataError("model: aux length != input rows");
  for (std::size_t i = 0; i < inputs.v.size(); ++i)
    if (!std::isfinite(inputs.v[i])) throw DataError("model: non-finite feature value");
  for (double t : target)
    if (!std::isfinite(t)) throw DataError("model: non-finite target value");
  if (aux != nullptr)
    for (double a : *aux)
      if (!std::isfinite(a)) throw DataError("model: non-finite weight or curvature value");

  PredictorModel m = make_random(static_cast<int>(inputs.cols), cfg.hidden_widths,
                                 cfg.output_head, cfg.seed);
  // z-scoring statistics frozen from the training inputs
  const std::size_t n = inputs.rows;
  for (std::size_t j = 0; j < inputs.cols; ++j) {
    double mean = 0.0;
    for (std::size_t i = 0; i < n; ++i) mean += inputs.v[i * inputs.cols + j];
    mean /= static_cast<double>(n);
    double ss = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      const double d = inputs.v[i * inputs.cols + j] - mean;
      ss += d * d;
    }
    double sd = std::sqrt(ss / static_cast<double>(n));
    if (!(sd > 1e-12)) sd = 1.0;
    m.feat_mean_[j] = mean;
    m.feat_sd_[j] = sd;
  }
  if (kind == LossKind::squared) {
    // regression targets are standardized the same way; the de-standardizing
    // head then carries the target location/scale from step zero
    double mean = 0.0;
    for (double t : target) mean += t;
    mean /= static_cast<double>(n);
    double ss = 0.0;
    for (double t : target) ss += (t - mean) * (t - mean);
    double sd = std::sqrt(ss / static_cast<double>(n));
    if (!(sd > 1e-12)) sd = 1.0;
    m.target_mean_ = mean;
    m.target_sd_ = sd;
  }

  num::RngStream shuffle_rng = num::RngStream(cfg.seed, kMlpStream).child(1);
  std::vector<int> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::vector<double> params = m.flat_params();
  std::vector<double> grad;
  std::vector<double> adam_m(params.size(), 0.0), adam_v(params.size(), 0.0);
  long step = 0;
  std::vector<int> batch;
  batch.reserve(static_cast<std::size_t>(cfg.batch_size));

  m.epoch_loss_.clear();
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    shuffle_rng.shuffle(order);
    double loss_sum = 0.0;
    int batches = 0;
    for (std::size_t start = 0; start < n; start += static_cast<std::size_t>(cfg.batch_size)) {
      const std::size_t stop = std::min(n, start + static_cast<std::size_t>(cfg.batch_size));
      batch.assign(order.begin() + static_cast<std::ptrdiff_t>(start),
                   order.begin() + static_cast<std::ptrdiff_t>(stop));

      // a batch with zero total weight carries no information: no step at all
      bool dead = false;
      if (kind != LossKind::bilinear && aux != nullptr) {
        double tot = 0.0;
        for (int r : batch) tot += (*aux)[static_cast<std::size_t>(r)];
        dead = !(tot > 0.0);
      }
      if (dead) {
        ++batches;
        continue;
      }

      const double loss = m.loss_and_gradient(kind, inputs, batch, target, aux, &grad);
      if (!std::isfinite(loss))
        throw TrainingError("model: loss diverged at epoch " + std::to_string(epoch), epoch);
      ++step;
      const double bc1 = 1.0 - std::pow(kAdamBeta1, static_cast<double>(step));
      const double bc2 = 1.0 - std::pow(kAdamBeta2, static_cast<double>(step));
      for (std::size_t p = 0; p < params.size(); ++p) {
        adam_m[p] = kAdamBeta1 * adam_m[p] + (1.0 - kAdamBeta1) * grad[p];
        adam_v[p] = kAdamBeta2 * adam_v[p] + (1.0 - kAdamBeta2) * grad[p] * grad[p];
        params[p] -=
            cfg.learning_rate * (adam_m[p] / bc1) / (std::sqrt(adam_v[p] / bc2) + kAdamEps);
      }
      m.set_flat_params(params);
      loss_sum += loss;
      ++batches;
    }
    m.epoch_loss_.push_back(batches > 0 ? loss_sum / batches : 0.0);
  }
  return m;
}

PredictorModel PredictorModel::fit_regressor(const Matrix& inputs,
                                             const std::vector<double>& targets,
                                             const std::vector<double>* weights,
                                             const TrainConfig& cfg) {
  if (cfg.output_head != OutputHead::linear)
    throw ConfigError("model: regression needs a linear output head");
  if (weights != nullptr)
    for (double w : *weights)
      if (w < 0.0) throw DataError("model: regression weights must be non-negative");
  return fit_impl(inputs, targets, weights, LossKind::squared, cfg);
}

PredictorModel PredictorModel::fit_classifier(const Matrix& inputs,
                                              const std::vector<double>& labels,
                                              const TrainConfig& cfg) {
  if (cfg.output_head != OutputHead::sigmoid)
    throw ConfigError("model: classification needs a sigmoid output head");
  for (double y : labels)
    if (y != 0.0 && y != 1.0) throw DataError("model: labels must be 0 or 1");
  return fit_impl(inputs, labels, nullptr, LossKind::cross_entropy, cfg);
}

PredictorModel PredictorModel::fit_bilinear(const Matrix& inputs, const std::vector<double>& curv,
                                            const std::vector<double>& lin,
                                            const TrainConfig& cfg) {
  if (cfg.output_head != OutputHead::linear)
    throw ConfigError("model: the bilinear objective needs a linear output head");
  return fit_impl(inputs, lin, &curv, LossKind::bilinear, cfg);
}

nlohmann::json PredictorModel::to_json() const {
  nlohmann::json layers = nlohmann::json::array();
  for (const Layer& l : layers_)
    layers.push_back({{"in", l.in}, {"out", l.out}, {"w", l.w}, {"b", l.b}});
  return {{"head", head_name(head_)},
          {"input_dim", input_dim_},
          {"feat_mean", feat_mean_},
          {"feat_sd", feat_sd_},
          {"target_mean", target_mean_},
          {"target_sd", target_sd_},
          {"layers", layers}};
}

PredictorModel PredictorModel::from_json(const nlohmann::json& doc) {
  PredictorModel m;
  m.head_ = head_from_name(doc.at("head").get<std::string>());
  m.input_dim_ = doc.at("input_dim").get<int>();
  m.feat_mean_ = doc.at("feat_mean").get<std::vector<double>>();
  m.feat_sd_ = doc.at("feat_sd").get<std::vector<double>>();
  m.target_mean_ = doc.at("target_mean").get<double>();
  m.target_sd_ = doc.at("target_sd").get<double>();
  if (m.input_dim_ < 1 || m.feat_mean_.size() != static_cast<std::size_t>(m.input_dim_) ||
      m.feat_sd_.size() != static_cast<std::size_t>(m.input_dim_))
    throw DataError("model: standardizer size does not match input_dim");
  if (!std::isfinite(m.target_mean_) || !(m.target_sd_ > 0.0))
    throw DataError("model: invalid target standardizer in serialized model");
  int expect_in = m.input_dim_;
  for (const nlohmann::json& jl : doc.at("layers")) {
    Layer l;
    l.in = jl.at("in").get<int>();
    l.out = jl.at("out").get<int>();
    l.w = jl.at("w").get<std::vector<double>>();
    l.b = jl.at("b").get<std::vector<double>>();
    if (l.in != expect_in || l.out < 1 ||
        l.w.size() != static_cast<std::size_t>(l.in) * static_cast<std::size_t>(l.out) ||
        l.b.size() != static_cast<std::size_t>(l.out))
      throw DataError("model: inconsistent layer shapes in serialized model");
    expect_in = l.out;
    m.layers_.push_back(std::move(l));
  }
  if (m.layers_.empty() || m.layers_.back().out != 1)
    throw DataError("model: serialized model must end in a single output unit");
  return m;
}

}  // namespace hlte::model
