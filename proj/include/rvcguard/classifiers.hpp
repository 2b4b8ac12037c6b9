#pragma once

// Window classifiers: logistic regression, a one-hidden-layer MLP with a
// two-way softmax head, and k-nearest neighbours. All consume standardised
// 26-value feature vectors and report p = P(FAKE | window).

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <functional>
#include <limits>
#include <numeric>
#include <span>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include "json.hpp"
#include "rvcguard/dataset.hpp"
#include "rvcguard/errors.hpp"
#include "rvcguard/features.hpp"
#include "rvcguard/random.hpp"

namespace rvcguard {

inline constexpr int kModelFormatVersion = 1;

enum class ModelKind { kLogReg, kMlp, kKnn };

inline std::string_view model_kind_name(ModelKind k) {
  switch (k) {
    case ModelKind::kLogReg: return "logreg";
    case ModelKind::kMlp: return "mlp";
    case ModelKind::kKnn: return "knn";
  }
  return "logreg";
}

inline ModelKind parse_model_kind(std::string_view name) {
  if (name == "logreg") return ModelKind::kLogReg;
  if (name == "mlp") return ModelKind::kMlp;
  if (name == "knn") return ModelKind::kKnn;
  throw ConfigError("unknown model kind '" + std::string(name) + "' (expected logreg, mlp or knn)");
}

struct TrainConfig {
  double learning_rate = 0.01;
  int epochs_max = 500;
  int batch_size = 32;
  double l2_lambda = 1e-4;
  double momentum = 0.9;
  int patience = 20;
  std::uint64_t seed = 42;
  int hidden_units = 32;
  int k_neighbors = 5;

  void validate() const {
    if (!(learning_rate > 0.0)) throw ConfigError("learning_rate must be positive");
    if (epochs_max < 1) throw ConfigError("epochs_max must be at least 1");
    if (batch_size < 1) throw ConfigError("batch_size must be at least 1");
    if (!(l2_lambda >= 0.0)) throw ConfigError("l2_lambda must be nonnegative");
    if (!(momentum >= 0.0 && momentum < 1.0)) throw ConfigError("momentum must be in [0, 1)");
    if (patience < 1 || patience >= epochs_max) throw ConfigError("patience must be in [1, epochs_max)");
    if (hidden_units < 1) throw ConfigError("hidden_units must be at least 1");
    if (k_neighbors < 1) throw ConfigError("k_neighbors must be at least 1");
  }

  bool operator==(const TrainConfig&) const = default;
};

inline nlohmann::json to_json(const TrainConfig& c) {
  return {{"learning_rate", c.learning_rate}, {"epochs_max", c.epochs_max},
          {"batch_size", c.batch_size},       {"l2_lambda", c.l2_lambda},
          {"momentum", c.momentum},           {"patience", c.patience},
          {"seed", c.seed},                   {"hidden_units", c.hidden_units},
          {"k_neighbors", c.k_neighbors}};
}

// Missing keys keep their defaults.
inline TrainConfig train_config_from_json(const nlohmann::json& j, TrainConfig c = {}) {
  c.learning_rate = j.value("learning_rate", c.learning_rate);
  c.epochs_max = j.value("epochs_max", c.epochs_max);
  c.batch_size = j.value("batch_size", c.batch_size);
  c.l2_lambda = j.value("l2_lambda", c.l2_lambda);
  c.momentum = j.value("momentum", c.momentum);
  c.patience = j.value("patience", c.patience);
  c.seed = j.value("seed", c.seed);
  c.hidden_units = j.value("hidden_units", c.hidden_units);
  c.k_neighbors = j.value("k_neighbors", c.k_neighbors);
  return c;
}

struct LogRegParams {
  std::vector<double> weights = std::vector<double>(kFeatureCount, 0.0);
  double bias = 0.0;
  bool operator==(const LogRegParams&) const = default;
};

// hidden = relu(w1 x + b1); logits = w2 hidden + b2; index 0 = REAL, 1 = FAKE.
struct MlpParams {
  Matrix w1;               // hidden x 26
  std::vector<double> b1;  // hidden
  Matrix w2;               // 2 x hidden
  std::array<double, 2> b2{};
  std::size_t hidden() const { return b1.size(); }
  bool operator==(const MlpParams&) const = default;
};

struct KnnParams {
  std::vector<FeatureVector> points;
  std::vector<Label> labels;
  int k = 5;
  bool operator==(const KnnParams&) const = default;
};

struct TrainHistory {
  std::vector<double> train_loss;  // mean mini-batch objective per epoch
  std::vector<double> val_loss;    // monitored loss per epoch
  int best_epoch = -1;             // restored epoch, 0-based
  bool operator==(const TrainHistory&) const = default;
};

struct ClassifierModel {
  ModelKind kind = ModelKind::kLogReg;
  std::variant<LogRegParams, MlpParams, KnnParams> params;
  Scaler scaler;
  TrainConfig config;
  std::string feature_checksum = rvcguard::feature_checksum();
  TrainHistory history;
};

namespace detail {

inline double sigmoid(double z) {
  if (z >= 0.0) return 1.0 / (1.0 + std::exp(-z));
  const double e = std::exp(z);
  return e / (1.0 + e);
}

// log(1 + exp(z)) without overflow.
inline double softplus(double z) { return std::max(z, 0.0) + std::log1p(std::exp(-std::abs(z))); }

inline void check_dims(std::span<const double> x) {
  if (x.size() != kFeatureCount)
    throw ShapeError("expected " + std::to_string(kFeatureCount) + " features, got " + std::to_string(x.size()));
}

inline double label_value(Label l) { return l == Label::kFake ? 1.0 : 0.0; }

}  // namespace detail

// ---------------------------------------------------------------------------
// Logistic regression
//
// Flat layout: [w_0 .. w_25, b].

inline constexpr std::size_t kLogRegParamCount = kFeatureCount + 1;

inline std::vector<double> flatten(const LogRegParams& p) {
  std::vector<double> theta(p.weights);
  theta.push_back(p.bias);
  return theta;
}

inline LogRegParams unflatten_logreg(std::span<const double> theta) {
  LogRegParams p;
  std::copy(theta.begin(), theta.begin() + kFeatureCount, p.weights.begin());
  p.bias = theta[kFeatureCount];
  return p;
}

// Mean binary cross-entropy plus (l2/2)|w|^2 (bias unpenalised). Writes the
// gradient when grad is non-empty.
inline double logreg_objective(std::span<const double> theta, std::span<const LabeledExample* const> batch,
                               double l2, std::span<double> grad = {}) {
  const bool want_grad = !grad.empty();
  if (want_grad) std::fill(grad.begin(), grad.end(), 0.0);
  double loss = 0.0;
  for (const auto* ex : batch) {
    double z = theta[kFeatureCount];
    for (std::size_t i = 0; i < kFeatureCount; ++i) z += theta[i] * ex->features[i];
    const double y = detail::label_value(ex->label);
    loss += detail::softplus(z) - y * z;
    if (want_grad) {
      const double dz = detail::sigmoid(z) - y;
      for (std::size_t i = 0; i < kFeatureCount; ++i) grad[i] += dz * ex->features[i];
      grad[kFeatureCount] += dz;
    }
  }
  const double n = static_cast<double>(batch.size());
  loss /= n;
  double wsq = 0.0;
  for (std::size_t i = 0; i < kFeatureCount; ++i) wsq += theta[i] * theta[i];
  loss += 0.5 * l2 * wsq;
  if (want_grad) {
    for (auto& g : grad) g /= n;
    for (std::size_t i = 0; i < kFeatureCount; ++i) grad[i] += l2 * theta[i];
  }
  return loss;
}

inline double logreg_probability(const LogRegParams& p, std::span<const double> x) {
  double z = p.bias;
  for (std::size_t i = 0; i < kFeatureCount; ++i) z += p.weights[i] * x[i];
  return detail::sigmoid(z);
}

// ---------------------------------------------------------------------------
// MLP
//
// Flat layout: [w1 (hidden x 26, row-major), b1, w2 (2 x hidden), b2].

inline std::size_t mlp_param_count(std::size_t hidden) { return hidden * kFeatureCount + hidden + 2 * hidden + 2; }

inline std::vector<double> flatten(const MlpParams& p) {
  std::vector<double> theta;
  theta.reserve(mlp_param_count(p.hidden()));
  theta.insert(theta.end(), p.w1.data().begin(), p.w1.data().end());
  theta.insert(theta.end(), p.b1.begin(), p.b1.end());
  theta.insert(theta.end(), p.w2.data().begin(), p.w2.data().end());
  theta.insert(theta.end(), p.b2.begin(), p.b2.end());
  return theta;
}

inline MlpParams unflatten_mlp(std::span<const double> theta, std::size_t hidden) {
  if (theta.size() != mlp_param_count(hidden)) throw ShapeError("MLP parameter count mismatch");
  MlpParams p;
  p.w1 = Matrix(hidden, kFeatureCount);
  p.b1.resize(hidden);
  p.w2 = Matrix(2, hidden);
  std::size_t o = 0;
  for (std::size_t h = 0; h < hidden; ++h)
    for (std::size_t i = 0; i < kFeatureCount; ++i) p.w1(h, i) = theta[o++];
  for (std::size_t h = 0; h < hidden; ++h) p.b1[h] = theta[o++];
  for (std::size_t c = 0; c < 2; ++c)
    for (std::size_t h = 0; h < hidden; ++h) p.w2(c, h) = theta[o++];
  p.b2 = {theta[o], theta[o + 1]};
  return p;
}

// He-style initialisation: weights ~ N(0, 2/fan_in), zero biases.
inline MlpParams init_mlp(std::size_t hidden, std::uint64_t seed) {
  Rng rng(seed);
  MlpParams p;
  p.w1 = Matrix(hidden, kFeatureCount);
  p.b1.assign(hidden, 0.0);
  p.w2 = Matrix(2, hidden);
  const double s1 = std::sqrt(2.0 / kFeatureCount);
  const double s2 = std::sqrt(2.0 / static_cast<double>(hidden));
  for (std::size_t h = 0; h < hidden; ++h)
    for (std::size_t i = 0; i < kFeatureCount; ++i) p.w1(h, i) = rng.normal(0.0, s1);
  for (std::size_t c = 0; c < 2; ++c)
    for (std::size_t h = 0; h < hidden; ++h) p.w2(c, h) = rng.normal(0.0, s2);
  return p;
}

// Logits for one input, writing the hidden activations into `hidden`.
inline std::array<double, 2> mlp_logits(std::span<const double> theta, std::size_t n_hidden,
                                        std::span<const double> x, std::span<double> hidden) {
  const double* w1 = theta.data();
  const double* b1 = w1 + n_hidden * kFeatureCount;
  const double* w2 = b1 + n_hidden;
  const double* b2 = w2 + 2 * n_hidden;
  for (std::size_t h = 0; h < n_hidden; ++h) {
    double a = b1[h];
    const double* row = w1 + h * kFeatureCount;
    for (std::size_t i = 0; i < kFeatureCount; ++i) a += row[i] * x[i];
    hidden[h] = a > 0.0 ? a : 0.0;
  }
  std::array<double, 2> logits{b2[0], b2[1]};
  for (std::size_t c = 0; c < 2; ++c)
    for (std::size_t h = 0; h < n_hidden; ++h) logits[c] += w2[c * n_hidden + h] * hidden[h];
  return logits;
}

inline std::array<double, 2> softmax2(const std::array<double, 2>& logits) {
  const double m = std::max(logits[0], logits[1]);
  const double e0 = std::exp(logits[0] - m);
  const double e1 = std::exp(logits[1] - m);
  const double s = e0 + e1;
  return {e0 / s, e1 / s};
}

// Mean softmax cross-entropy plus (l2/2)(|w1|^2 + |w2|^2).
inline double mlp_objective(std::span<const double> theta, std::size_t n_hidden,
                            std::span<const LabeledExample* const> batch, double l2,
                            std::span<double> grad = {}) {
  const bool want_grad = !grad.empty();
  if (want_grad) std::fill(grad.begin(), grad.end(), 0.0);
  const std::size_t w1_n = n_hidden * kFeatureCount;
  const std::size_t b1_o = w1_n;
  const std::size_t w2_o = b1_o + n_hidden;
  const std::size_t b2_o = w2_o + 2 * n_hidden;
  std::vector<double> hidden(n_hidden), dhidden(n_hidden);

  double loss = 0.0;
  for (const auto* ex : batch) {
    const auto logits = mlp_logits(theta, n_hidden, ex->features, hidden);
    const std::size_t y = static_cast<std::size_t>(ex->label);
    const double m = std::max(logits[0], logits[1]);
    const double lse = m + std::log(std::exp(logits[0] - m) + std::exp(logits[1] - m));
    loss += lse - logits[y];
    if (!want_grad) continue;

    const auto prob = softmax2(logits);
    std::array<double, 2> dlogit{prob[0], prob[1]};
    dlogit[y] -= 1.0;
    for (std::size_t c = 0; c < 2; ++c) {
      grad[b2_o + c] += dlogit[c];
      for (std::size_t h = 0; h < n_hidden; ++h) grad[w2_o + c * n_hidden + h] += dlogit[c] * hidden[h];
    }
    for (std::size_t h = 0; h < n_hidden; ++h) {
      const double back = dlogit[0] * theta[w2_o + h] + dlogit[1] * theta[w2_o + n_hidden + h];
      dhidden[h] = hidden[h] > 0.0 ? back : 0.0;
    }
    for (std::size_t h = 0; h < n_hidden; ++h) {
      if (dhidden[h] == 0.0) continue;
      grad[b1_o + h] += dhidden[h];
      double* row = grad.data() + h * kFeatureCount;
      for (std::size_t i = 0; i < kFeatureCount; ++i) row[i] += dhidden[h] * ex->features[i];
    }
  }
  const double n = static_cast<double>(batch.size());
  loss /= n;

  double wsq = 0.0;
  for (std::size_t i = 0; i < w1_n; ++i) wsq += theta[i] * theta[i];
  for (std::size_t i = w2_o; i < b2_o; ++i) wsq += theta[i] * theta[i];
  loss += 0.5 * l2 * wsq;
  if (want_grad) {
    for (auto& g : grad) g /= n;
    for (std::size_t i = 0; i < w1_n; ++i) grad[i] += l2 * theta[i];
    for (std::size_t i = w2_o; i < b2_o; ++i) grad[i] += l2 * theta[i];
  }
  return loss;
}

inline std::array<double, 2> mlp_probabilities(const MlpParams& p, std::span<const double> x) {
  std::vector<double> hidden(p.hidden());
  return softmax2(mlp_logits(flatten(p), p.hidden(), x, hidden));
}

// ---------------------------------------------------------------------------
// Shared optimiser: seeded mini-batch gradient descent with momentum and
// early stopping on the validation loss (training loss when there is no
// validation data). The best-scoring parameters are restored at the end.

namespace detail {

using Objective = std::function<double(std::span<const double>, std::span<const LabeledExample* const>,
                                       std::span<double>)>;

inline std::vector<const LabeledExample*> pointers(std::span<const LabeledExample> xs) {
  std::vector<const LabeledExample*> out;
  out.reserve(xs.size());
  for (const auto& x : xs) out.push_back(&x);
  return out;
}

inline std::vector<double> descend(std::vector<double> theta, std::span<const LabeledExample> train,
                                   std::span<const LabeledExample> val, const TrainConfig& cfg,
                                   const Objective& objective, const Objective& monitor_loss,
                                   TrainHistory& history) {
  Rng rng(cfg.seed ^ 0x9e3779b97f4a7c15ull);
  auto order = pointers(train);
  const auto monitored = val.empty() ? pointers(train) : pointers(val);

  std::vector<double> velocity(theta.size(), 0.0), grad(theta.size());
  std::vector<double> best = theta;
  double best_loss = std::numeric_limits<double>::infinity();
  int stale = 0;
  const auto batch = static_cast<std::size_t>(cfg.batch_size);

  for (int epoch = 0; epoch < cfg.epochs_max; ++epoch) {
    rng.shuffle(std::span<const LabeledExample*>(order));
    double epoch_loss = 0.0;
    std::size_t n_batches = 0;
    for (std::size_t start = 0; start < order.size(); start += batch) {
      const std::size_t len = std::min(batch, order.size() - start);
      const std::span<const LabeledExample* const> b(order.data() + start, len);
      const double loss = objective(theta, b, grad);
      if (!std::isfinite(loss))
        throw TrainingDiverged("training loss became non-finite at epoch " + std::to_string(epoch), epoch);
      epoch_loss += loss;
      ++n_batches;
      for (std::size_t i = 0; i < theta.size(); ++i) {
        velocity[i] = cfg.momentum * velocity[i] - cfg.learning_rate * grad[i];
        theta[i] += velocity[i];
      }
    }
    const double val_loss = monitor_loss(theta, monitored, {});
    if (!std::isfinite(val_loss))
      throw TrainingDiverged("validation loss became non-finite at epoch " + std::to_string(epoch), epoch);
    history.train_loss.push_back(epoch_loss / static_cast<double>(n_batches));
    history.val_loss.push_back(val_loss);
    if (val_loss < best_loss) {
      best_loss = val_loss;
      best = theta;
      history.best_epoch = epoch;
      stale = 0;
    } else if (++stale >= cfg.patience) {
      break;
    }
  }
  return best;
}

inline void require_nonempty(std::span<const LabeledExample> train) {
  if (train.empty()) throw EmptyDataset("training set is empty");
}

}  // namespace detail

// Weights start at zero. Expects standardised features.
inline ClassifierModel train_logreg(std::span<const LabeledExample> train, std::span<const LabeledExample> val,
                                    const TrainConfig& config) {
  config.validate();
  detail::require_nonempty(train);
  const bool has_real = std::any_of(train.begin(), train.end(), [](auto& e) { return e.label == Label::kReal; });
  const bool has_fake = std::any_of(train.begin(), train.end(), [](auto& e) { return e.label == Label::kFake; });
  if (!has_real || !has_fake) throw DegenerateLabels("logistic regression needs both classes in the training set");

  ClassifierModel model;
  model.kind = ModelKind::kLogReg;
  model.config = config;
  const double l2 = config.l2_lambda;
  auto objective = [l2](std::span<const double> t, std::span<const LabeledExample* const> b, std::span<double> g) {
    return logreg_objective(t, b, l2, g);
  };
  auto monitor = [](std::span<const double> t, std::span<const LabeledExample* const> b, std::span<double>) {
    return logreg_objective(t, b, 0.0);
  };
  const auto theta = detail::descend(std::vector<double>(kLogRegParamCount, 0.0), train, val, config, objective,
                                     monitor, model.history);
  model.params = unflatten_logreg(theta);
  return model;
}

inline ClassifierModel train_mlp(std::span<const LabeledExample> train, std::span<const LabeledExample> val,
                                 const TrainConfig& config) {
  config.validate();
  detail::require_nonempty(train);
  ClassifierModel model;
  model.kind = ModelKind::kMlp;
  model.config = config;
  const auto hidden = static_cast<std::size_t>(config.hidden_units);
  const double l2 = config.l2_lambda;
  auto objective = [hidden, l2](std::span<const double> t, std::span<const LabeledExample* const> b,
                                std::span<double> g) { return mlp_objective(t, hidden, b, l2, g); };
  auto monitor = [hidden](std::span<const double> t, std::span<const LabeledExample* const> b, std::span<double>) {
    return mlp_objective(t, hidden, b, 0.0);
  };
  const auto theta =
      detail::descend(flatten(init_mlp(hidden, config.seed)), train, val, config, objective, monitor, model.history);
  model.params = unflatten_mlp(theta, hidden);
  return model;
}

// Stores the (already standardised) training examples.
inline ClassifierModel train_knn(std::span<const LabeledExample> train, const TrainConfig& config) {
  if (config.k_neighbors < 1) throw ConfigError("k_neighbors must be at least 1");
  detail::require_nonempty(train);
  ClassifierModel model;
  model.kind = ModelKind::kKnn;
  model.config = config;
  KnnParams p;
  p.k = config.k_neighbors;
  for (const auto& ex : train) {
    p.points.push_back(ex.features);
    p.labels.push_back(ex.label);
  }
  model.params = std::move(p);
  return model;
}

inline ClassifierModel train_model(ModelKind kind, std::span<const LabeledExample> train,
                                   std::span<const LabeledExample> val, const TrainConfig& config) {
  switch (kind) {
    case ModelKind::kLogReg: return train_logreg(train, val, config);
    case ModelKind::kMlp: return train_mlp(train, val, config);
    case ModelKind::kKnn: return train_knn(train, config);
  }
  throw ConfigError("unknown model kind");
}

// ---------------------------------------------------------------------------
// Prediction

namespace detail {

struct KnnVote {
  std::size_t fake = 0;
  std::size_t used = 0;
  Label nearest = Label::kReal;
};

// Nearest by squared Euclidean distance; equal distances resolve to the lower
// training index.
inline KnnVote knn_vote(const KnnParams& p, std::span<const double> x) {
  std::vector<std::pair<double, std::size_t>> d(p.points.size());
  for (std::size_t i = 0; i < p.points.size(); ++i) {
    double s = 0.0;
    for (std::size_t f = 0; f < kFeatureCount; ++f) {
      const double diff = p.points[i][f] - x[f];
      s += diff * diff;
    }
    d[i] = {s, i};
  }
  const std::size_t k = std::min<std::size_t>(static_cast<std::size_t>(p.k), d.size());
  std::partial_sort(d.begin(), d.begin() + static_cast<std::ptrdiff_t>(k), d.end());
  KnnVote v;
  v.used = k;
  v.nearest = p.labels[d[0].second];
  for (std::size_t i = 0; i < k; ++i)
    if (p.labels[d[i].second] == Label::kFake) ++v.fake;
  return v;
}

}  // namespace detail

// (P(REAL), P(FAKE)) for an already standardised vector.
inline std::array<double, 2> predict_pair(const ClassifierModel& model, std::span<const double> x) {
  detail::check_dims(x);
  return std::visit(
      [&](const auto& p) -> std::array<double, 2> {
        using P = std::decay_t<decltype(p)>;
        if constexpr (std::is_same_v<P, LogRegParams>) {
          const double q = logreg_probability(p, x);
          return {1.0 - q, q};
        } else if constexpr (std::is_same_v<P, MlpParams>) {
          return mlp_probabilities(p, x);
        } else {
          const auto v = detail::knn_vote(p, x);
          const double q = static_cast<double>(v.fake) / static_cast<double>(v.used);
          return {1.0 - q, q};
        }
      },
      model.params);
}

// P(FAKE | window) for an already standardised vector.
inline double predict_proba(const ClassifierModel& model, std::span<const double> x) {
  return predict_pair(model, x)[1];
}

// Scales a raw feature vector with the model's scaler first.
inline double score_features(const ClassifierModel& model, const FeatureVector& raw) {
  return predict_proba(model, model.scaler.apply(raw));
}

// FAKE iff score >= threshold.
inline Label decide(double p_fake, double threshold = 0.5) { return p_fake >= threshold ? Label::kFake : Label::kReal; }

// Index 0 = REAL, 1 = FAKE; the larger component wins, ties go to FAKE.
// Works on probabilities or raw logits alike.
inline Label decide_pair(const std::array<double, 2>& pair) {
  return pair[1] >= pair[0] ? Label::kFake : Label::kReal;
}

// Hard decision. For knn an exact vote tie resolves to the single nearest
// neighbour's label instead of the threshold.
inline Label predict_label(const ClassifierModel& model, std::span<const double> x, double threshold = 0.5) {
  if (const auto* knn = std::get_if<KnnParams>(&model.params)) {
    detail::check_dims(x);
    const auto v = detail::knn_vote(*knn, x);
    if (2 * v.fake == v.used) return v.nearest;
    return decide(static_cast<double>(v.fake) / static_cast<double>(v.used), threshold);
  }
  return decide(predict_proba(model, x), threshold);
}

// ---------------------------------------------------------------------------
// Persistence

inline nlohmann::json to_json(const ClassifierModel& m) {
  nlohmann::json params = std::visit(
      [](const auto& p) -> nlohmann::json {
        using P = std::decay_t<decltype(p)>;
        if constexpr (std::is_same_v<P, LogRegParams>) {
          return {{"weights", p.weights}, {"bias", p.bias}};
        } else if constexpr (std::is_same_v<P, MlpParams>) {
          return {{"hidden_units", p.hidden()},
                  {"w1", std::vector<double>(p.w1.data().begin(), p.w1.data().end())},
                  {"b1", p.b1},
                  {"w2", std::vector<double>(p.w2.data().begin(), p.w2.data().end())},
                  {"b2", p.b2}};
        } else {
          std::vector<int> labels;
          for (auto l : p.labels) labels.push_back(static_cast<int>(l));
          return {{"k", p.k}, {"points", p.points}, {"labels", labels}};
        }
      },
      m.params);
  return {{"format_version", kModelFormatVersion},
          {"kind", model_kind_name(m.kind)},
          {"feature_checksum", m.feature_checksum},
          {"scaler", to_json(m.scaler)},
          {"config", to_json(m.config)},
          {"params", std::move(params)},
          {"history",
           {{"train_loss", m.history.train_loss},
            {"val_loss", m.history.val_loss},
            {"best_epoch", m.history.best_epoch}}}};
}

inline ClassifierModel model_from_json(const nlohmann::json& j) {
  try {
    const int version = j.at("format_version").get<int>();
    if (version != kModelFormatVersion)
      throw VersionError("model format_version " + std::to_string(version) + " is not supported (expected " +
                         std::to_string(kModelFormatVersion) + ")");
    ClassifierModel m;
    m.feature_checksum = j.at("feature_checksum").get<std::string>();
    if (m.feature_checksum != feature_checksum())
      throw IncompatibleModel("model was trained on a different feature layout (checksum " + m.feature_checksum +
                              ")");
    m.kind = parse_model_kind(j.at("kind").get<std::string>());
    m.scaler = scaler_from_json(j.at("scaler"));
    m.config = train_config_from_json(j.at("config"));
    const auto& p = j.at("params");
    switch (m.kind) {
      case ModelKind::kLogReg: {
        LogRegParams lp;
        lp.weights = p.at("weights").get<std::vector<double>>();
        lp.bias = p.at("bias").get<double>();
        if (lp.weights.size() != kFeatureCount) throw ShapeError("logreg weight count mismatch");
        m.params = std::move(lp);
        break;
      }
      case ModelKind::kMlp: {
        const auto hidden = p.at("hidden_units").get<std::size_t>();
        std::vector<double> theta = p.at("w1").get<std::vector<double>>();
        const auto b1 = p.at("b1").get<std::vector<double>>();
        const auto w2 = p.at("w2").get<std::vector<double>>();
        const auto b2 = p.at("b2").get<std::vector<double>>();
        theta.insert(theta.end(), b1.begin(), b1.end());
        theta.insert(theta.end(), w2.begin(), w2.end());
        theta.insert(theta.end(), b2.begin(), b2.end());
        m.params = unflatten_mlp(theta, hidden);
        break;
      }
      case ModelKind::kKnn: {
        KnnParams kp;
        kp.k = p.at("k").get<int>();
        kp.points = p.at("points").get<std::vector<FeatureVector>>();
        for (int l : p.at("labels").get<std::vector<int>>()) {
          if (l != 0 && l != 1) throw ShapeError("knn label must be 0 or 1");
          kp.labels.push_back(static_cast<Label>(l));
        }
        if (kp.k < 1 || kp.points.empty() || kp.points.size() != kp.labels.size())
          throw ShapeError("knn parameters are inconsistent");
        m.params = std::move(kp);
        break;
      }
    }
    if (j.contains("history")) {
      const auto& h = j.at("history");
      m.history.train_loss = h.at("train_loss").get<std::vector<double>>();
      m.history.val_loss = h.at("val_loss").get<std::vector<double>>();
      m.history.best_epoch = h.at("best_epoch").get<int>();
    }
    return m;
  } catch (const nlohmann::json::exception& e) {
    throw DecodeError(std::string("malformed model file: ") + e.what());
  } catch (const ShapeError& e) {
    throw DecodeError(std::string("malformed model file: ") + e.what());
  }
}

// Written to a sibling temporary file, then renamed into place.
inline void save_model(const ClassifierModel& model, const std::filesystem::path& path) {
  auto tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp);
    if (!out) throw Error("cannot write model file " + tmp.string());
    out << to_json(model).dump() << '\n';
    if (!out) throw Error("failed writing model file " + tmp.string());
  }
  std::filesystem::rename(tmp, path);
}

inline ClassifierModel load_model(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open model file " + path.string());
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw DecodeError(path.string() + ": " + e.what());
  }
  return model_from_json(j);
}

}  // namespace rvcguard
