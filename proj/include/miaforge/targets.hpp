#pragma once

// Target classifiers (multinomial logistic regression and a one-hidden-layer
// MLP) trained with minibatch SGD. Private training reuses the exact same
// loop with two extra steps per minibatch: per-sample gradient clipping to an
// L2 bound and gaussian noise added to the gradient sum before averaging.
// With noise_multiplier 0 and an infinite clip bound the private path is
// bit-identical to plain training.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "data.hpp"
#include "rng.hpp"

namespace miaforge {

enum class Architecture { Logistic, Mlp };

inline const char* to_string(Architecture a) {
  return a == Architecture::Logistic ? "logistic" : "mlp";
}

inline Architecture architecture_from_string(const std::string& s) {
  if (s == "logistic") return Architecture::Logistic;
  if (s == "mlp") return Architecture::Mlp;
  throw std::invalid_argument("unknown architecture: " + s);
}

struct TargetModel {
  Architecture arch = Architecture::Logistic;
  int classes = 0;
  int input_dim = 0;
  int hidden = 0;  // 0 for logistic
  std::vector<double> params;

  // Parameter layout:
  //   logistic: W[classes*input_dim] row-major, b[classes]
  //   mlp:      W1[hidden*input_dim], b1[hidden], W2[classes*hidden], b2[classes]
  std::size_t param_count() const {
    if (arch == Architecture::Logistic)
      return static_cast<std::size_t>(classes) * input_dim + classes;
    return static_cast<std::size_t>(hidden) * input_dim + hidden +
           static_cast<std::size_t>(classes) * hidden + classes;
  }

  // Half-open index ranges of the weight matrices (biases excluded); weight
  // decay applies only inside these ranges.
  std::vector<std::pair<std::size_t, std::size_t>> weight_ranges() const {
    if (arch == Architecture::Logistic)
      return {{0, static_cast<std::size_t>(classes) * input_dim}};
    const std::size_t w1 = static_cast<std::size_t>(hidden) * input_dim;
    const std::size_t w2_begin = w1 + hidden;
    return {{0, w1}, {w2_begin, w2_begin + static_cast<std::size_t>(classes) * hidden}};
  }

  std::vector<double> logits(const std::vector<double>& x) const {
    if (static_cast<int>(x.size()) != input_dim)
      throw std::invalid_argument("feature vector has wrong dimension");
    std::vector<double> out(classes);
    if (arch == Architecture::Logistic) {
      const double* w = params.data();
      const double* b = params.data() + static_cast<std::size_t>(classes) * input_dim;
      for (int k = 0; k < classes; ++k) {
        double s = b[k];
        const double* row = w + static_cast<std::size_t>(k) * input_dim;
        for (int j = 0; j < input_dim; ++j) s += row[j] * x[j];
        out[k] = s;
      }
      return out;
    }
    const double* w1 = params.data();
    const double* b1 = w1 + static_cast<std::size_t>(hidden) * input_dim;
    const double* w2 = b1 + hidden;
    const double* b2 = w2 + static_cast<std::size_t>(classes) * hidden;
    std::vector<double> h(hidden);
    for (int i = 0; i < hidden; ++i) {
      double s = b1[i];
      const double* row = w1 + static_cast<std::size_t>(i) * input_dim;
      for (int j = 0; j < input_dim; ++j) s += row[j] * x[j];
      h[i] = s > 0.0 ? s : 0.0;
    }
    for (int k = 0; k < classes; ++k) {
      double s = b2[k];
      const double* row = w2 + static_cast<std::size_t>(k) * hidden;
      for (int i = 0; i < hidden; ++i) s += row[i] * h[i];
      out[k] = s;
    }
    return out;
  }

  std::vector<double> predict(const std::vector<double>& x) const {
    auto z = logits(x);
    const double m = *std::max_element(z.begin(), z.end());
    double sum = 0.0;
    for (auto& v : z) {
      v = std::exp(v - m);
      sum += v;
    }
    for (auto& v : z) v /= sum;
    return z;
  }
};

inline TargetModel init_model(Architecture arch, int classes, int input_dim,
                              int hidden, std::uint64_t seed) {
  if (classes < 2) throw std::invalid_argument("model needs at least 2 classes");
  if (input_dim < 1) throw std::invalid_argument("model needs at least 1 input feature");
  TargetModel m;
  m.arch = arch;
  m.classes = classes;
  m.input_dim = input_dim;
  m.hidden = arch == Architecture::Mlp ? hidden : 0;
  if (arch == Architecture::Mlp && hidden < 1)
    throw std::invalid_argument("mlp needs a positive hidden width");
  m.params.assign(m.param_count(), 0.0);
  if (arch == Architecture::Mlp) {
    Rng rng(seed);
    const std::size_t w1 = static_cast<std::size_t>(hidden) * input_dim;
    const double s1 = std::sqrt(2.0 / input_dim);
    for (std::size_t i = 0; i < w1; ++i) m.params[i] = s1 * rng.gaussian();
    const std::size_t w2_begin = w1 + hidden;
    const std::size_t w2_end = w2_begin + static_cast<std::size_t>(classes) * hidden;
    const double s2 = std::sqrt(2.0 / hidden);
    for (std::size_t i = w2_begin; i < w2_end; ++i) m.params[i] = s2 * rng.gaussian();
  }
  return m;
}

struct TrainConfig {
  int epochs = 100;
  double learning_rate = 0.003;
  double weight_decay = 1e-4;
  int batch_divisor = 15;
  double test_fraction = 0.3;  // recorded in provenance; splits are owned by the scenario
  Architecture architecture = Architecture::Logistic;
  int hidden_width = 32;
  std::uint64_t seed = 0;

  void validate() const {
    auto fail = [](const std::string& m) { throw std::invalid_argument("train: " + m); };
    if (epochs < 1) fail("epochs must be at least 1");
    if (learning_rate <= 0.0) fail("learning_rate must be positive");
    if (weight_decay < 0.0) fail("weight_decay must be non-negative");
    if (batch_divisor < 1) fail("batch_divisor must be at least 1");
    if (test_fraction < 0.0 || test_fraction >= 1.0) fail("test_fraction must be in [0, 1)");
    if (architecture == Architecture::Mlp && hidden_width < 1)
      fail("hidden_width must be at least 1");
  }
};

struct PrivacyConfig {
  double epsilon = std::numeric_limits<double>::infinity();
  double delta = 1e-5;
  double clip_norm = 2.0;
  double noise_multiplier = 0.0;

  bool enabled() const { return noise_multiplier > 0.0 || std::isfinite(clip_norm); }
  void validate() const {
    auto fail = [](const std::string& m) { throw std::invalid_argument("privacy: " + m); };
    if (epsilon <= 0.0) fail("epsilon must be positive");
    if (delta <= 0.0 || delta >= 1.0) fail("delta must be in (0, 1)");
    if (clip_norm <= 0.0) fail("clip_norm must be positive");
    if (noise_multiplier < 0.0) fail("noise_multiplier must be non-negative");
  }
};

class TrainingError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct TrainResult {
  TargetModel model;
  std::vector<double> epoch_objective;  // mean cross entropy plus L2 penalty
  long long steps = 0;
};

inline constexpr double kLossFloor = 1e-12;

inline double cross_entropy_loss(const std::vector<double>& probs, int label) {
  if (label < 0 || label >= static_cast<int>(probs.size()))
    throw std::invalid_argument("cross_entropy_loss: label out of range");
  return -std::log(std::max(probs[label], kLossFloor));
}

inline double clipped_scale(double norm, double clip) {
  if (!std::isfinite(clip) || norm <= clip) return 1.0;
  return clip / norm;
}

namespace detail {

// Gradient of the cross-entropy loss of one record, flat layout matching
// TargetModel::params.
inline void per_sample_gradient(const TargetModel& m, const Record& rec,
                                std::vector<double>& grad) {
  grad.assign(m.params.size(), 0.0);
  const auto& x = rec.features;
  if (m.arch == Architecture::Logistic) {
    const auto p = m.predict(x);
    const std::size_t wsize = static_cast<std::size_t>(m.classes) * m.input_dim;
    for (int k = 0; k < m.classes; ++k) {
      const double d = p[k] - (k == rec.task_label ? 1.0 : 0.0);
      double* row = grad.data() + static_cast<std::size_t>(k) * m.input_dim;
      for (int j = 0; j < m.input_dim; ++j) row[j] = d * x[j];
      grad[wsize + k] = d;
    }
    return;
  }
  const int H = m.hidden;
  const double* w1 = m.params.data();
  const double* b1 = w1 + static_cast<std::size_t>(H) * m.input_dim;
  const double* w2 = b1 + H;
  std::vector<double> pre(H), h(H);
  for (int i = 0; i < H; ++i) {
    double s = b1[i];
    const double* row = w1 + static_cast<std::size_t>(i) * m.input_dim;
    for (int j = 0; j < m.input_dim; ++j) s += row[j] * x[j];
    pre[i] = s;
    h[i] = s > 0.0 ? s : 0.0;
  }
  std::vector<double> z(m.classes);
  const double* b2 = w2 + static_cast<std::size_t>(m.classes) * H;
  for (int k = 0; k < m.classes; ++k) {
    double s = b2[k];
    const double* row = w2 + static_cast<std::size_t>(k) * H;
    for (int i = 0; i < H; ++i) s += row[i] * h[i];
    z[k] = s;
  }
  const double zm = *std::max_element(z.begin(), z.end());
  double sum = 0.0;
  for (auto& v : z) {
    v = std::exp(v - zm);
    sum += v;
  }
  for (auto& v : z) v /= sum;

  const std::size_t w1n = static_cast<std::size_t>(H) * m.input_dim;
  const std::size_t w2_begin = w1n + H;
  std::vector<double> dh(H, 0.0);
  for (int k = 0; k < m.classes; ++k) {
    const double d = z[k] - (k == rec.task_label ? 1.0 : 0.0);
    double* row = grad.data() + w2_begin + static_cast<std::size_t>(k) * H;
    for (int i = 0; i < H; ++i) {
      row[i] = d * h[i];
      dh[i] += d * w2[static_cast<std::size_t>(k) * H + i];
    }
    grad[w2_begin + static_cast<std::size_t>(m.classes) * H + k] = d;
  }
  for (int i = 0; i < H; ++i) {
    if (pre[i] <= 0.0) continue;
    double* row = grad.data() + static_cast<std::size_t>(i) * m.input_dim;
    for (int j = 0; j < m.input_dim; ++j) row[j] = dh[i] * x[j];
    grad[w1n + i] = dh[i];
  }
}

inline void validate_dataset_for_training(const Dataset& ds) {
  if (ds.records.empty()) throw std::invalid_argument("training set is empty");
  if (ds.classes < 2) throw std::invalid_argument("training set needs at least 2 classes");
  const int dim = ds.feature_dim();
  for (const auto& r : ds.records) {
    if (static_cast<int>(r.features.size()) != dim)
      throw std::invalid_argument("record '" + r.id + "' has inconsistent feature dimension");
    if (r.task_label < 0 || r.task_label >= ds.classes)
      throw std::invalid_argument("record '" + r.id + "' has task_label out of range");
  }
}

inline TrainResult train_impl(const Dataset& ds, const TrainConfig& cfg, double clip,
                              double sigma, const TargetModel* warm_start) {
  cfg.validate();
  validate_dataset_for_training(ds);

  TrainResult res;
  if (warm_start) {
    if (warm_start->classes != ds.classes || warm_start->input_dim != ds.feature_dim())
      throw std::invalid_argument("warm-start model does not match the dataset shape");
    res.model = *warm_start;
  } else {
    res.model = init_model(cfg.architecture, ds.classes, ds.feature_dim(),
                           cfg.hidden_width, derive_seed(cfg.seed, {0}));
  }

  const std::size_t n = ds.size();
  const std::size_t batch = (n + cfg.batch_divisor - 1) / cfg.batch_divisor;
  Rng shuffle_rng(derive_seed(cfg.seed, {1}));
  Rng noise_rng(derive_seed(cfg.seed, {2}));

  auto& params = res.model.params;
  std::vector<unsigned char> is_weight(params.size(), 0);
  for (const auto& [lo, hi] : res.model.weight_ranges())
    for (std::size_t i = lo; i < hi; ++i) is_weight[i] = 1;

  std::vector<double> grad_sum(params.size()), grad(params.size());
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    const auto perm = shuffle_rng.permutation(n);
    for (std::size_t start = 0; start < n; start += batch) {
      const std::size_t end = std::min(n, start + batch);
      std::fill(grad_sum.begin(), grad_sum.end(), 0.0);
      for (std::size_t i = start; i < end; ++i) {
        per_sample_gradient(res.model, ds.records[perm[i]], grad);
        double sq = 0.0;
        for (double g : grad) sq += g * g;
        const double scale = clipped_scale(std::sqrt(sq), clip);
        for (std::size_t j = 0; j < grad.size(); ++j) grad_sum[j] += scale * grad[j];
      }
      if (sigma > 0.0)
        for (auto& g : grad_sum) g += sigma * clip * noise_rng.gaussian();
      const double inv = 1.0 / static_cast<double>(end - start);
      for (std::size_t j = 0; j < params.size(); ++j) {
        double g = grad_sum[j] * inv;
        if (is_weight[j]) g += cfg.weight_decay * params[j];
        params[j] -= cfg.learning_rate * g;
      }
      ++res.steps;
    }
    double ce = 0.0;
    for (const auto& r : ds.records) ce += cross_entropy_loss(res.model.predict(r.features), r.task_label);
    ce /= static_cast<double>(n);
    double l2 = 0.0;
    for (std::size_t j = 0; j < params.size(); ++j)
      if (is_weight[j]) l2 += params[j] * params[j];
    const double obj = ce + 0.5 * cfg.weight_decay * l2;
    if (!std::isfinite(obj))
      throw TrainingError("training diverged at epoch " + std::to_string(epoch + 1));
    res.epoch_objective.push_back(obj);
  }
  return res;
}

}  // namespace detail

inline TrainResult train_plain(const Dataset& ds, const TrainConfig& cfg,
                               const TargetModel* warm_start = nullptr) {
  return detail::train_impl(ds, cfg, std::numeric_limits<double>::infinity(), 0.0,
                            warm_start);
}

inline TrainResult train_dp_sgd(const Dataset& ds, const TrainConfig& cfg,
                                const PrivacyConfig& priv,
                                const TargetModel* warm_start = nullptr) {
  priv.validate();
  return detail::train_impl(ds, cfg, priv.clip_norm, priv.noise_multiplier, warm_start);
}

// Number of SGD steps a full training run performs; what the accountant charges.
inline long long planned_steps(std::size_t n, const TrainConfig& cfg) {
  const std::size_t batch = (n + cfg.batch_divisor - 1) / cfg.batch_divisor;
  const std::size_t per_epoch = (n + batch - 1) / batch;
  return static_cast<long long>(per_epoch) * cfg.epochs;
}

inline PredictionMatrix predict_proba(const TargetModel& m, const Dataset& ds) {
  PredictionMatrix pm;
  pm.record_ids.reserve(ds.size());
  pm.probs.reserve(ds.size());
  for (const auto& r : ds.records) {
    pm.record_ids.push_back(r.id);
    pm.probs.push_back(m.predict(r.features));
  }
  return pm;
}

inline double dataset_accuracy(const TargetModel& m, const Dataset& ds) {
  if (ds.records.empty()) return 0.0;
  std::size_t hits = 0;
  for (const auto& r : ds.records) {
    const auto p = m.predict(r.features);
    const int pred = static_cast<int>(std::max_element(p.begin(), p.end()) - p.begin());
    if (pred == r.task_label) ++hits;
  }
  return static_cast<double>(hits) / static_cast<double>(ds.size());
}

inline nlohmann::json model_to_json(const TargetModel& m) {
  nlohmann::json j;
  j["architecture"] = to_string(m.arch);
  j["classes"] = m.classes;
  j["input_dim"] = m.input_dim;
  j["hidden"] = m.hidden;
  j["params"] = m.params;
  return j;
}

inline TargetModel model_from_json(const nlohmann::json& j) {
  TargetModel m;
  m.arch = architecture_from_string(j.at("architecture").get<std::string>());
  m.classes = j.at("classes").get<int>();
  m.input_dim = j.at("input_dim").get<int>();
  m.hidden = j.at("hidden").get<int>();
  m.params = j.at("params").get<std::vector<double>>();
  if (m.params.size() != m.param_count())
    throw std::runtime_error("model file has wrong parameter count");
  return m;
}

inline void save_model(const TargetModel& m, const std::string& path) {
  write_file_atomic(path, model_to_json(m).dump(2) + "\n");
}

inline TargetModel load_model(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open file: " + path);
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw std::runtime_error(path + ": invalid JSON: " + e.what());
  }
  return model_from_json(j);
}

}  // namespace miaforge
