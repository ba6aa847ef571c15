#pragma once

// Logistic classification head over encoded note pairs, trained on mean
// binary cross-entropy with Adam. Weights start at zero; the seed only drives
// example ordering.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <optional>
#include <span>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "labelaudit/corpus.hpp"
#include "labelaudit/encoder.hpp"
#include "labelaudit/error.hpp"
#include "labelaudit/metrics.hpp"
#include "labelaudit/random.hpp"

namespace labelaudit {

struct TrainConfig {
  int epochs = 30;
  double learning_rate = 1e-3;
  double adam_beta1 = 0.9;
  double adam_beta2 = 0.999;
  double adam_eps = 1e-8;
  int batch_size = 32;
  std::uint64_t seed = 0;
  bool curriculum_ordered = false;

  void validate() const {
    if (epochs < 1) throw UsageError("train.epochs must be >= 1");
    if (!(learning_rate >= 0)) throw UsageError("train.learning_rate must be non-negative");
    if (!(adam_beta1 > 0 && adam_beta1 < 1) || !(adam_beta2 > 0 && adam_beta2 < 1))
      throw UsageError("train.adam_beta1/adam_beta2 must lie in (0, 1)");
    if (!(adam_eps > 0)) throw UsageError("train.adam_eps must be positive");
    if (batch_size < 1) throw UsageError("train.batch_size must be >= 1");
  }
};

inline json to_json(const TrainConfig& c) {
  return {{"epochs", c.epochs},
          {"learning_rate", c.learning_rate},
          {"adam_beta1", c.adam_beta1},
          {"adam_beta2", c.adam_beta2},
          {"adam_eps", c.adam_eps},
          {"batch_size", c.batch_size},
          {"seed", c.seed},
          {"curriculum_ordered", c.curriculum_ordered}};
}

inline TrainConfig train_config_from_json(const json& j) {
  TrainConfig c;
  c.epochs = j.value("epochs", c.epochs);
  c.learning_rate = j.value("learning_rate", c.learning_rate);
  c.adam_beta1 = j.value("adam_beta1", c.adam_beta1);
  c.adam_beta2 = j.value("adam_beta2", c.adam_beta2);
  c.adam_eps = j.value("adam_eps", c.adam_eps);
  c.batch_size = j.value("batch_size", c.batch_size);
  c.seed = j.value("seed", c.seed);
  c.curriculum_ordered = j.value("curriculum_ordered", c.curriculum_ordered);
  c.validate();
  return c;
}

inline double sigmoid(double z) {
  if (z >= 0) return 1.0 / (1.0 + std::exp(-z));
  const double e = std::exp(z);
  return e / (1.0 + e);
}

/// -log sigmoid(z) for y=1, -log(1-sigmoid(z)) for y=0, without overflow.
inline double bce_from_logit(double z, int y) {
  const double softplus = std::max(z, 0.0) + std::log1p(std::exp(-std::fabs(z)));
  return softplus - (y == 1 ? z : 0.0);
}

struct LogisticModel {
  std::vector<double> weights;
  double bias = 0.0;

  double logit(const SparseVector& x) const {
    double z = bias;
    for (std::size_t k = 0; k < x.index.size(); ++k) z += weights[x.index[k]] * x.value[k];
    return z;
  }
  double probability(const SparseVector& x) const { return sigmoid(logit(x)); }
  friend bool operator==(const LogisticModel&, const LogisticModel&) = default;
};

/// Predicted label: 1 iff probability > 0.5.
inline int decide(double probability) { return probability > 0.5 ? 1 : 0; }

inline double bce_loss(const LogisticModel& model, const FeatureStore& features,
                       std::span<const Example> examples) {
  if (examples.empty()) return 0.0;
  double total = 0;
  for (const auto& e : examples) total += bce_from_logit(model.logit(features[e.row]), e.label);
  return total / static_cast<double>(examples.size());
}

struct LogisticGradient {
  std::vector<double> weights;
  double bias = 0.0;
};

/// Dense analytic gradient of the mean BCE: mean((p - y) x).
inline LogisticGradient bce_gradient(const LogisticModel& model, const FeatureStore& features,
                                     std::span<const Example> examples) {
  LogisticGradient g;
  g.weights.assign(model.weights.size(), 0.0);
  if (examples.empty()) return g;
  const double inv = 1.0 / static_cast<double>(examples.size());
  for (const auto& e : examples) {
    const auto& x = features[e.row];
    const double r = (model.probability(x) - e.label) * inv;
    for (std::size_t k = 0; k < x.index.size(); ++k) g.weights[x.index[k]] += r * x.value[k];
    g.bias += r;
  }
  return g;
}

/// Examples in visiting order; segment_ends are cumulative end offsets of the
/// same-origin segments (the last equals examples.size()).
struct TrainingSet {
  ExampleList examples;
  std::vector<std::size_t> segment_ends;

  static TrainingSet single(ExampleList examples) {
    TrainingSet t;
    t.segment_ends.push_back(examples.size());
    t.examples = std::move(examples);
    return t;
  }

  static TrainingSet concat(std::initializer_list<std::reference_wrapper<const ExampleList>> parts) {
    TrainingSet t;
    for (const ExampleList& p : parts) {
      t.examples.insert(t.examples.end(), p.begin(), p.end());
      t.segment_ends.push_back(t.examples.size());
    }
    return t;
  }

  /// Prefix of the first n examples, keeping segment structure.
  TrainingSet prefix(std::size_t n) const {
    TrainingSet t;
    n = std::min(n, examples.size());
    t.examples.assign(examples.begin(), examples.begin() + static_cast<std::ptrdiff_t>(n));
    for (auto end : segment_ends) {
      t.segment_ends.push_back(std::min(end, n));
      if (end >= n) break;
    }
    if (t.segment_ends.empty()) t.segment_ends.push_back(n);
    return t;
  }
};

/// Visiting order for one epoch. Curriculum mode shuffles within each segment
/// and keeps segment order. Otherwise the multiset is canonicalized by row
/// before a full shuffle, so permuted inputs give the same order.
inline ExampleList epoch_order(const TrainingSet& set, bool curriculum, Rng& rng) {
  ExampleList order = set.examples;
  if (curriculum) {
    std::size_t begin = 0;
    for (auto end : set.segment_ends) {
      shuffle(std::span<Example>(order.data() + begin, end - begin), rng);
      begin = end;
    }
    if (begin < order.size())
      shuffle(std::span<Example>(order.data() + begin, order.size() - begin), rng);
  } else {
    std::sort(order.begin(), order.end(), [](const Example& a, const Example& b) {
      return a.row != b.row ? a.row < b.row : a.label < b.label;
    });
    shuffle(order, rng);
  }
  return order;
}

/// Mini-batch Adam on the logistic head. Coordinates that never carried a
/// feature keep zero gradient, zero moments and zero weight, so the update
/// loop only visits coordinates seen so far; this equals dense Adam exactly.
class AdamTrainer {
 public:
  AdamTrainer(std::size_t dimension, TrainConfig config)
      : config_(config), grad_(dimension, 0.0), m_(dimension, 0.0), v_(dimension, 0.0),
        seen_(dimension, 0) {
    model_.weights.assign(dimension, 0.0);
  }

  void absorb(const FeatureStore& features, std::span<const Example> examples) {
    std::vector<std::uint32_t> added;
    for (const auto& e : examples)
      for (auto i : features[e.row].index)
        if (!seen_[i]) {
          seen_[i] = 1;
          added.push_back(i);
        }
    if (added.empty()) return;
    std::sort(added.begin(), added.end());
    std::vector<std::uint32_t> merged;
    merged.reserve(active_.size() + added.size());
    std::merge(active_.begin(), active_.end(), added.begin(), added.end(),
               std::back_inserter(merged));
    active_ = std::move(merged);
  }

  /// One Adam step on the batch mean loss; returns that loss.
  double step(const FeatureStore& features, std::span<const Example> batch) {
    const double inv = 1.0 / static_cast<double>(batch.size());
    double loss = 0, gbias = 0;
    for (const auto& e : batch) {
      const auto& x = features[e.row];
      const double z = model_.logit(x);
      loss += bce_from_logit(z, e.label);
      const double r = (sigmoid(z) - e.label) * inv;
      for (std::size_t k = 0; k < x.index.size(); ++k) grad_[x.index[k]] += r * x.value[k];
      gbias += r;
    }
    ++t_;
    const double b1 = config_.adam_beta1, b2 = config_.adam_beta2;
    const double c1 = 1.0 - std::pow(b1, static_cast<double>(t_));
    const double c2 = 1.0 - std::pow(b2, static_cast<double>(t_));
    const double lr = config_.learning_rate, eps = config_.adam_eps;
    for (auto i : active_) {
      const double g = grad_[i];
      grad_[i] = 0.0;
      m_[i] = b1 * m_[i] + (1 - b1) * g;
      v_[i] = b2 * v_[i] + (1 - b2) * g * g;
      model_.weights[i] -= lr * (m_[i] / c1) / (std::sqrt(v_[i] / c2) + eps);
    }
    mb_ = b1 * mb_ + (1 - b1) * gbias;
    vb_ = b2 * vb_ + (1 - b2) * gbias * gbias;
    model_.bias -= lr * (mb_ / c1) / (std::sqrt(vb_ / c2) + eps);
    return loss * inv;
  }

  /// One pass over `order` in batches; returns the mean batch loss.
  double run_epoch(const FeatureStore& features, const ExampleList& order, int epoch) {
    const auto bs = static_cast<std::size_t>(config_.batch_size);
    double sum = 0;
    std::size_t batches = 0;
    for (std::size_t b = 0; b < order.size(); b += bs) {
      const std::size_t n = std::min(bs, order.size() - b);
      const double loss = step(features, std::span<const Example>(order.data() + b, n));
      if (!std::isfinite(loss) || !std::isfinite(model_.bias)) {
        std::ostringstream msg;
        msg << "non-finite loss at epoch " << epoch << ", batch " << batches << " (loss=" << loss
            << ", bias=" << model_.bias << ", lr=" << config_.learning_rate << ")";
        throw TrainingError(msg.str());
      }
      sum += loss;
      ++batches;
    }
    return batches ? sum / static_cast<double>(batches) : 0.0;
  }

  const LogisticModel& model() const { return model_; }
  const TrainConfig& config() const { return config_; }
  std::size_t active_size() const { return active_.size(); }

 private:
  TrainConfig config_;
  LogisticModel model_;
  std::vector<double> grad_, m_, v_;
  std::vector<char> seen_;
  std::vector<std::uint32_t> active_;
  double mb_ = 0, vb_ = 0;
  std::uint64_t t_ = 0;
};

struct ModelCheckpoint {
  LogisticModel model;
  EncoderConfig encoder;
  TrainConfig train;
  int selected_epoch = 0;
  /// Absent when trained without a validation set (final epoch kept).
  std::optional<double> validation_f1;
  std::vector<double> epoch_train_loss;  // full training-set loss after each epoch
  std::vector<double> epoch_validation_f1;
};

inline ConfusionCounts evaluate(const LogisticModel& model, const FeatureStore& features,
                                std::span<const Example> examples) {
  ConfusionCounts c;
  for (const auto& e : examples) {
    const int p = decide(model.probability(features[e.row]));
    if (p && e.label)
      ++c.tp;
    else if (p)
      ++c.fp;
    else if (e.label)
      ++c.fn;
    else
      ++c.tn;
  }
  return c;
}

inline double evaluate_f1(const LogisticModel& model, const FeatureStore& features,
                          std::span<const Example> examples) {
  return f1_positive(evaluate(model, features, examples)).f1;
}

inline void require_two_classes(std::span<const Example> examples, const char* what) {
  bool pos = false, neg = false;
  for (const auto& e : examples) (e.label ? pos : neg) = true;
  if (examples.empty()) throw TrainingError(std::string(what) + " is empty");
  if (!pos || !neg)
    throw TrainingError(std::string(what) + " contains a single class (" +
                        (pos ? "all positive" : "all negative") + ")");
}

/// Trains for config.epochs epochs and keeps the epoch with the highest
/// validation F1 (earliest on ties), or the final epoch when `validation` is
/// empty.
inline ModelCheckpoint train(const FeatureStore& features, const TrainingSet& set,
                             std::span<const Example> validation, const EncoderConfig& encoder,
                             const TrainConfig& config) {
  config.validate();
  require_two_classes(set.examples, "training set");
  AdamTrainer trainer(features.dimension(), config);
  trainer.absorb(features, set.examples);
  Rng rng(derive_seed(config.seed, 0x7a11u));

  ModelCheckpoint best;
  best.encoder = encoder;
  best.train = config;
  double best_f1 = -1;
  for (int epoch = 1; epoch <= config.epochs; ++epoch) {
    const auto order = epoch_order(set, config.curriculum_ordered, rng);
    trainer.run_epoch(features, order, epoch);
    const double full_loss = bce_loss(trainer.model(), features, set.examples);
    if (!std::isfinite(full_loss))
      throw TrainingError("non-finite training loss after epoch " + std::to_string(epoch));
    best.epoch_train_loss.push_back(full_loss);
    if (!validation.empty()) {
      const double f1 = evaluate_f1(trainer.model(), features, validation);
      best.epoch_validation_f1.push_back(f1);
      if (f1 > best_f1) {
        best_f1 = f1;
        best.model = trainer.model();
        best.selected_epoch = epoch;
        best.validation_f1 = f1;
      }
    }
  }
  if (validation.empty()) {
    best.model = trainer.model();
    best.selected_epoch = config.epochs;
  }
  return best;
}

struct Prediction {
  std::string incident_id;
  double probability = 0;
  int label = 0;
};

inline std::vector<Prediction> predict(const LogisticModel& model, const Corpus& corpus,
                                       const FeatureStore& features,
                                       std::span<const std::size_t> rows) {
  std::vector<Prediction> out;
  out.reserve(rows.size());
  for (auto r : rows) {
    const double p = model.probability(features[r]);
    out.push_back({corpus[r].incident_id, p, decide(p)});
  }
  return out;
}

/// Encodes the named incidents with the checkpoint's encoder and scores them.
inline std::vector<Prediction> predict(const ModelCheckpoint& checkpoint, const Corpus& corpus,
                                       const std::vector<std::string>& ids) {
  for (double w : checkpoint.model.weights)
    if (!std::isfinite(w)) throw TrainingError("checkpoint holds non-finite weights");
  std::vector<std::size_t> rows;
  rows.reserve(ids.size());
  for (const auto& id : ids) rows.push_back(corpus.row_of(id));
  FeatureStore features(corpus, checkpoint.encoder, rows);
  return predict(checkpoint.model, corpus, features, rows);
}

// ---------------------------------------------------------------------------
// Checkpoint files: JSON with sparse weights as [index, value] pairs.

inline constexpr int kCheckpointVersion = 1;

inline json to_json(const ModelCheckpoint& c) {
  json weights = json::array();
  for (std::size_t i = 0; i < c.model.weights.size(); ++i)
    if (c.model.weights[i] != 0.0) weights.push_back({i, c.model.weights[i]});
  json j;
  j["format"] = "labelaudit-checkpoint";
  j["version"] = kCheckpointVersion;
  j["encoder"] = to_json(c.encoder);
  j["train"] = to_json(c.train);
  j["selected_epoch"] = c.selected_epoch;
  j["validation_f1"] = c.validation_f1 ? json(*c.validation_f1) : json(nullptr);
  j["dimension"] = c.model.weights.size();
  j["bias"] = c.model.bias;
  j["weights"] = std::move(weights);
  j["epoch_train_loss"] = c.epoch_train_loss;
  j["epoch_validation_f1"] = c.epoch_validation_f1;
  return j;
}

inline ModelCheckpoint checkpoint_from_json(const json& j) {
  if (j.value("format", "") != "labelaudit-checkpoint")
    throw DataError("not a labelaudit checkpoint");
  if (j.at("version").get<int>() != kCheckpointVersion)
    throw DataError("unsupported checkpoint version " + j.at("version").dump());
  ModelCheckpoint c;
  c.encoder = encoder_config_from_json(j.at("encoder"));
  c.train = train_config_from_json(j.at("train"));
  c.selected_epoch = j.at("selected_epoch").get<int>();
  if (!j.at("validation_f1").is_null()) c.validation_f1 = j.at("validation_f1").get<double>();
  c.model.weights.assign(j.at("dimension").get<std::size_t>(), 0.0);
  c.model.bias = j.at("bias").get<double>();
  for (const auto& w : j.at("weights")) {
    const auto i = w.at(0).get<std::size_t>();
    if (i >= c.model.weights.size()) throw DataError("checkpoint weight index out of range");
    c.model.weights[i] = w.at(1).get<double>();
  }
  c.epoch_train_loss = j.value("epoch_train_loss", std::vector<double>{});
  c.epoch_validation_f1 = j.value("epoch_validation_f1", std::vector<double>{});
  return c;
}

inline void save_checkpoint(const ModelCheckpoint& c, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write checkpoint " + path.string());
  out << to_json(c).dump() << '\n';
}

inline ModelCheckpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open checkpoint " + path.string());
  return checkpoint_from_json(json::parse(in));
}

}  // namespace labelaudit
