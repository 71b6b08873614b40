#pragma once

// Seven from-scratch binary classifiers behind one train/score facade. They
// consume attack inputs (target-model class probabilities concatenated with
// the one-hot task label) and emit membership probabilities in [0, 1].
//
// Hyperparameters are fixed: LR full-batch logistic GD (500 iters, lr 0.1,
// L2 1e-3); DT CART depth 5 / min leaf 2; RF 100 bootstrap trees, sqrt(f)
// features per split, depth 6; GB 100 depth-3 trees, shrinkage 0.1; KNN k=5
// with training-order tie break; linear SVM hinge subgradient (500 epochs,
// lr 0.01, L2 1e-3) plus one-dimensional logistic calibration; NN one hidden
// layer of 16 ReLU units, logistic output, 300 epochs at lr 0.05.

#include <array>
#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <variant>
#include <vector>

#include <json.hpp>

#include "rng.hpp"
#include "trees.hpp"

namespace miaforge {

enum class EstimatorKind { NN, RF, DT, GB, KNN, SVM, LR };

// Fixed ordering; also the layout of the meta-feature vector.
inline constexpr std::array<EstimatorKind, 7> kEstimatorKinds = {
    EstimatorKind::NN, EstimatorKind::RF, EstimatorKind::DT, EstimatorKind::GB,
    EstimatorKind::KNN, EstimatorKind::SVM, EstimatorKind::LR};

inline const char* to_string(EstimatorKind k) {
  switch (k) {
    case EstimatorKind::NN: return "nn";
    case EstimatorKind::RF: return "rf";
    case EstimatorKind::DT: return "dt";
    case EstimatorKind::GB: return "gb";
    case EstimatorKind::KNN: return "knn";
    case EstimatorKind::SVM: return "svm";
    case EstimatorKind::LR: return "lr";
  }
  throw std::logic_error("unreachable estimator kind");
}

inline EstimatorKind estimator_kind_from_string(const std::string& s) {
  for (EstimatorKind k : kEstimatorKinds)
    if (s == to_string(k)) return k;
  throw std::invalid_argument("unknown estimator kind: " + s);
}

// Attack input: target probabilities followed by the one-hot true label.
inline std::vector<double> make_attack_input(const std::vector<double>& probs,
                                             int task_label, int classes) {
  if (static_cast<int>(probs.size()) != classes)
    throw std::invalid_argument("attack input: probability vector has wrong length");
  if (task_label < 0 || task_label >= classes)
    throw std::invalid_argument("attack input: task label out of range");
  std::vector<double> x(probs);
  x.resize(2 * static_cast<std::size_t>(classes), 0.0);
  x[classes + task_label] = 1.0;
  return x;
}

namespace est {

struct LinearModel {
  std::vector<double> w;
  double b = 0.0;

  double decision(const std::vector<double>& x) const {
    double s = b;
    for (std::size_t i = 0; i < w.size(); ++i) s += w[i] * x[i];
    return s;
  }
};

inline LinearModel fit_logistic(const Matrix& X, const std::vector<int>& y, int iters,
                                double lr, double l2) {
  const std::size_t n = X.size(), d = X[0].size();
  LinearModel m;
  m.w.assign(d, 0.0);
  std::vector<double> gw(d);
  for (int it = 0; it < iters; ++it) {
    std::fill(gw.begin(), gw.end(), 0.0);
    double gb = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      const double r = sigmoid(m.decision(X[i])) - y[i];
      for (std::size_t j = 0; j < d; ++j) gw[j] += r * X[i][j];
      gb += r;
    }
    const double inv = 1.0 / static_cast<double>(n);
    for (std::size_t j = 0; j < d; ++j) m.w[j] -= lr * (gw[j] * inv + l2 * m.w[j]);
    m.b -= lr * gb * inv;
  }
  return m;
}

// Hinge-loss subgradient descent on labels {-1, +1}, then a one-dimensional
// logistic calibration (Newton, deterministic) mapping decision values to
// probabilities.
struct SvmModel {
  LinearModel lin;
  double cal_a = 1.0;
  double cal_b = 0.0;

  double score(const std::vector<double>& x) const {
    return sigmoid(cal_a * lin.decision(x) + cal_b);
  }
};

inline SvmModel fit_svm(const Matrix& X, const std::vector<int>& y, int epochs,
                        double lr, double l2) {
  const std::size_t n = X.size(), d = X[0].size();
  SvmModel m;
  m.lin.w.assign(d, 0.0);
  std::vector<double> gw(d);
  for (int it = 0; it < epochs; ++it) {
    std::fill(gw.begin(), gw.end(), 0.0);
    double gb = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      const double yi = y[i] ? 1.0 : -1.0;
      if (yi * m.lin.decision(X[i]) < 1.0) {
        for (std::size_t j = 0; j < d; ++j) gw[j] -= yi * X[i][j];
        gb -= yi;
      }
    }
    const double inv = 1.0 / static_cast<double>(n);
    for (std::size_t j = 0; j < d; ++j)
      m.lin.w[j] -= lr * (gw[j] * inv + l2 * m.lin.w[j]);
    m.lin.b -= lr * gb * inv;
  }

  // Newton iterations for the two calibration parameters.
  std::vector<double> s(n);
  for (std::size_t i = 0; i < n; ++i) s[i] = m.lin.decision(X[i]);
  double pos = 0.0;
  for (int v : y) pos += v;
  const double rate = std::clamp(pos / static_cast<double>(n), 1e-6, 1.0 - 1e-6);
  double a = 1.0, b = std::log(rate / (1.0 - rate));
  for (int it = 0; it < 60; ++it) {
    double ga = 0.0, gb2 = 0.0, haa = 1e-9, hab = 0.0, hbb = 1e-9;
    for (std::size_t i = 0; i < n; ++i) {
      const double p = sigmoid(a * s[i] + b);
      const double r = p - y[i];
      const double w = std::max(p * (1.0 - p), 1e-12);
      ga += r * s[i];
      gb2 += r;
      haa += w * s[i] * s[i];
      hab += w * s[i];
      hbb += w;
    }
    const double det = haa * hbb - hab * hab;
    if (std::abs(det) < 1e-18) break;
    const double da = (hbb * ga - hab * gb2) / det;
    const double db = (haa * gb2 - hab * ga) / det;
    a -= da;
    b -= db;
    if (std::abs(da) + std::abs(db) < 1e-12) break;
  }
  m.cal_a = a;
  m.cal_b = b;
  return m;
}

struct KnnModel {
  Matrix X;
  std::vector<int> y;
  int k = 5;

  double score(const std::vector<double>& q) const {
    const std::size_t n = X.size();
    std::vector<std::pair<double, std::size_t>> dist(n);
    for (std::size_t i = 0; i < n; ++i) {
      double d2 = 0.0;
      for (std::size_t j = 0; j < q.size(); ++j) {
        const double d = X[i][j] - q[j];
        d2 += d * d;
      }
      dist[i] = {d2, i};
    }
    // pair comparison breaks distance ties by training-set order
    std::sort(dist.begin(), dist.end());
    double hits = 0.0;
    for (int i = 0; i < k; ++i) hits += y[dist[i].second];
    return hits / k;
  }
};

struct RfModel {
  std::vector<Tree> trees;

  double score(const std::vector<double>& x) const {
    double s = 0.0;
    for (const auto& t : trees) s += t.predict(x);
    return s / static_cast<double>(trees.size());
  }
};

// Bootstrap sample of tree t: n draws from an rng seeded by derive(seed, {t});
// the same rng then drives the per-node feature sampling, so a forest tree is
// exactly reproducible from (seed, t).
inline std::vector<int> rf_bootstrap(Rng& rng, std::size_t n) {
  std::vector<int> idx(n);
  for (auto& i : idx) i = static_cast<int>(rng.uniform_index(n));
  return idx;
}

inline RfModel fit_rf(const Matrix& X, const std::vector<int>& y, std::uint64_t seed,
                      int n_trees, int max_depth) {
  RfModel m;
  const int f = static_cast<int>(X[0].size());
  const int mtry = std::max(1, static_cast<int>(std::sqrt(static_cast<double>(f))));
  const TreeConfig cfg{max_depth, 1, mtry};
  m.trees.reserve(n_trees);
  for (int t = 0; t < n_trees; ++t) {
    Rng rng(derive_seed(seed, {static_cast<std::uint64_t>(t)}));
    auto idx = rf_bootstrap(rng, X.size());
    m.trees.push_back(Tree::fit_classification(X, y, std::move(idx), cfg, &rng));
  }
  return m;
}

struct NnModel {
  int hidden = 16;
  Matrix w1;               // hidden x input
  std::vector<double> b1;  // hidden
  std::vector<double> w2;  // hidden
  double b2 = 0.0;

  double score(const std::vector<double>& x) const {
    double z = b2;
    for (int i = 0; i < hidden; ++i) {
      double h = b1[i];
      for (std::size_t j = 0; j < x.size(); ++j) h += w1[i][j] * x[j];
      if (h > 0.0) z += w2[i] * h;
    }
    return sigmoid(z);
  }
};

inline NnModel fit_nn(const Matrix& X, const std::vector<int>& y, std::uint64_t seed,
                      int hidden, int epochs, double lr) {
  const std::size_t n = X.size(), d = X[0].size();
  NnModel m;
  m.hidden = hidden;
  Rng rng(seed);
  m.w1.assign(hidden, std::vector<double>(d));
  const double s1 = std::sqrt(2.0 / static_cast<double>(d));
  for (auto& row : m.w1)
    for (auto& v : row) v = s1 * rng.gaussian();
  m.b1.assign(hidden, 0.0);
  m.w2.assign(hidden, 0.0);
  const double s2 = std::sqrt(2.0 / hidden);
  for (auto& v : m.w2) v = s2 * rng.gaussian();

  Matrix gw1(hidden, std::vector<double>(d));
  std::vector<double> gb1(hidden), gw2(hidden), h(hidden), pre(hidden);
  for (int it = 0; it < epochs; ++it) {
    for (auto& row : gw1) std::fill(row.begin(), row.end(), 0.0);
    std::fill(gb1.begin(), gb1.end(), 0.0);
    std::fill(gw2.begin(), gw2.end(), 0.0);
    double gb2 = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      double z = m.b2;
      for (int u = 0; u < hidden; ++u) {
        double a = m.b1[u];
        for (std::size_t j = 0; j < d; ++j) a += m.w1[u][j] * X[i][j];
        pre[u] = a;
        h[u] = a > 0.0 ? a : 0.0;
        z += m.w2[u] * h[u];
      }
      const double r = sigmoid(z) - y[i];
      gb2 += r;
      for (int u = 0; u < hidden; ++u) {
        gw2[u] += r * h[u];
        if (pre[u] > 0.0) {
          const double dh = r * m.w2[u];
          gb1[u] += dh;
          for (std::size_t j = 0; j < d; ++j) gw1[u][j] += dh * X[i][j];
        }
      }
    }
    const double step = lr / static_cast<double>(n);
    for (int u = 0; u < hidden; ++u) {
      for (std::size_t j = 0; j < d; ++j) m.w1[u][j] -= step * gw1[u][j];
      m.b1[u] -= step * gb1[u];
      m.w2[u] -= step * gw2[u];
    }
    m.b2 -= step * gb2;
  }
  return m;
}

}  // namespace est

class FittedEstimator {
 public:
  static FittedEstimator fit(EstimatorKind kind, const Matrix& X,
                             const std::vector<int>& y, std::uint64_t seed) {
    if (X.empty() || X.size() != y.size())
      throw std::invalid_argument("estimator fit: bad input sizes");
    bool has0 = false, has1 = false;
    for (int v : y) {
      if (v == 0) has0 = true;
      else if (v == 1) has1 = true;
      else throw std::invalid_argument("estimator fit: labels must be 0 or 1");
    }
    if (!has0 || !has1)
      throw std::invalid_argument("estimator fit: both classes must be present");
    for (const auto& row : X)
      if (row.size() != X[0].size())
        throw std::invalid_argument("estimator fit: ragged input matrix");

    FittedEstimator e;
    e.kind_ = kind;
    e.seed_ = seed;
    e.input_dim_ = static_cast<int>(X[0].size());
    switch (kind) {
      case EstimatorKind::LR:
        e.state_ = est::fit_logistic(X, y, 500, 0.1, 1e-3);
        break;
      case EstimatorKind::DT:
        e.state_ = Tree::fit_classification(X, y, {}, {5, 2, 0});
        break;
      case EstimatorKind::RF:
        e.state_ = est::fit_rf(X, y, seed, 100, 6);
        break;
      case EstimatorKind::GB:
        e.state_ = GradientBoostedModel::fit(X, y, {100, 3, 0.1, 1});
        break;
      case EstimatorKind::KNN: {
        est::KnnModel m;
        m.X = X;
        m.y = y;
        m.k = std::min<int>(5, static_cast<int>(X.size()));
        e.state_ = std::move(m);
        break;
      }
      case EstimatorKind::SVM:
        e.state_ = est::fit_svm(X, y, 500, 0.01, 1e-3);
        break;
      case EstimatorKind::NN:
        e.state_ = est::fit_nn(X, y, seed, 16, 300, 0.05);
        break;
    }
    return e;
  }

  double score(const std::vector<double>& x) const {
    if (static_cast<int>(x.size()) != input_dim_)
      throw std::invalid_argument("estimator score: input has wrong length");
    double s = 0.0;
    switch (kind_) {
      case EstimatorKind::LR:
        s = sigmoid(std::get<est::LinearModel>(state_).decision(x));
        break;
      case EstimatorKind::DT:
        s = std::get<Tree>(state_).predict(x);
        break;
      case EstimatorKind::RF:
        s = std::get<est::RfModel>(state_).score(x);
        break;
      case EstimatorKind::GB:
        s = std::get<GradientBoostedModel>(state_).predict_proba(x);
        break;
      case EstimatorKind::KNN:
        s = std::get<est::KnnModel>(state_).score(x);
        break;
      case EstimatorKind::SVM:
        s = std::get<est::SvmModel>(state_).score(x);
        break;
      case EstimatorKind::NN:
        s = std::get<est::NnModel>(state_).score(x);
        break;
    }
    if (std::isnan(s)) throw std::runtime_error("estimator score: NaN produced");
    return std::clamp(s, 0.0, 1.0);
  }

  EstimatorKind kind() const { return kind_; }
  std::uint64_t seed() const { return seed_; }
  int input_dim() const { return input_dim_; }

  nlohmann::json to_json() const;
  static FittedEstimator from_json(const nlohmann::json& j);

 private:
  EstimatorKind kind_ = EstimatorKind::LR;
  std::uint64_t seed_ = 0;
  int input_dim_ = 0;
  std::variant<est::LinearModel, Tree, est::RfModel, GradientBoostedModel,
               est::KnnModel, est::SvmModel, est::NnModel>
      state_;
};

inline nlohmann::json FittedEstimator::to_json() const {
  nlohmann::json j;
  j["kind"] = to_string(kind_);
  j["seed"] = seed_;
  j["input_dim"] = input_dim_;
  switch (kind_) {
    case EstimatorKind::LR: {
      const auto& m = std::get<est::LinearModel>(state_);
      j["w"] = m.w;
      j["b"] = m.b;
      break;
    }
    case EstimatorKind::DT:
      j["tree"] = std::get<Tree>(state_).to_json();
      break;
    case EstimatorKind::RF: {
      nlohmann::json arr = nlohmann::json::array();
      for (const auto& t : std::get<est::RfModel>(state_).trees) arr.push_back(t.to_json());
      j["trees"] = std::move(arr);
      break;
    }
    case EstimatorKind::GB:
      j["model"] = std::get<GradientBoostedModel>(state_).to_json();
      break;
    case EstimatorKind::KNN: {
      const auto& m = std::get<est::KnnModel>(state_);
      j["x"] = m.X;
      j["y"] = m.y;
      j["k"] = m.k;
      break;
    }
    case EstimatorKind::SVM: {
      const auto& m = std::get<est::SvmModel>(state_);
      j["w"] = m.lin.w;
      j["b"] = m.lin.b;
      j["cal_a"] = m.cal_a;
      j["cal_b"] = m.cal_b;
      break;
    }
    case EstimatorKind::NN: {
      const auto& m = std::get<est::NnModel>(state_);
      j["hidden"] = m.hidden;
      j["w1"] = m.w1;
      j["b1"] = m.b1;
      j["w2"] = m.w2;
      j["b2"] = m.b2;
      break;
    }
  }
  return j;
}

inline FittedEstimator FittedEstimator::from_json(const nlohmann::json& j) {
  FittedEstimator e;
  e.kind_ = estimator_kind_from_string(j.at("kind").get<std::string>());
  e.seed_ = j.at("seed").get<std::uint64_t>();
  e.input_dim_ = j.at("input_dim").get<int>();
  switch (e.kind_) {
    case EstimatorKind::LR: {
      est::LinearModel m;
      m.w = j.at("w").get<std::vector<double>>();
      m.b = j.at("b").get<double>();
      e.state_ = std::move(m);
      break;
    }
    case EstimatorKind::DT:
      e.state_ = Tree::from_json(j.at("tree"));
      break;
    case EstimatorKind::RF: {
      est::RfModel m;
      for (const auto& jt : j.at("trees")) m.trees.push_back(Tree::from_json(jt));
      e.state_ = std::move(m);
      break;
    }
    case EstimatorKind::GB:
      e.state_ = GradientBoostedModel::from_json(j.at("model"));
      break;
    case EstimatorKind::KNN: {
      est::KnnModel m;
      m.X = j.at("x").get<Matrix>();
      m.y = j.at("y").get<std::vector<int>>();
      m.k = j.at("k").get<int>();
      e.state_ = std::move(m);
      break;
    }
    case EstimatorKind::SVM: {
      est::SvmModel m;
      m.lin.w = j.at("w").get<std::vector<double>>();
      m.lin.b = j.at("b").get<double>();
      m.cal_a = j.at("cal_a").get<double>();
      m.cal_b = j.at("cal_b").get<double>();
      e.state_ = std::move(m);
      break;
    }
    case EstimatorKind::NN: {
      est::NnModel m;
      m.hidden = j.at("hidden").get<int>();
      m.w1 = j.at("w1").get<Matrix>();
      m.b1 = j.at("b1").get<std::vector<double>>();
      m.w2 = j.at("w2").get<std::vector<double>>();
      m.b2 = j.at("b2").get<double>();
      e.state_ = std::move(m);
      break;
    }
  }
  return e;
}

// Fixed hyperparameters of the seven kinds, as wired in FittedEstimator::fit;
// exported into provenance logs.
inline nlohmann::json estimator_hyperparameters() {
  return {
      {"nn", {{"hidden", 16}, {"epochs", 300}, {"lr", 0.05}}},
      {"rf", {{"trees", 100}, {"max_depth", 6}, {"min_leaf", 1}, {"mtry", "sqrt"}}},
      {"dt", {{"max_depth", 5}, {"min_leaf", 2}}},
      {"gb", {{"rounds", 100}, {"max_depth", 3}, {"shrinkage", 0.1}, {"min_leaf", 1}}},
      {"knn", {{"k", 5}}},
      {"svm", {{"epochs", 500}, {"lr", 0.01}, {"l2", 1e-3}}},
      {"lr", {{"iters", 500}, {"lr", 0.1}, {"l2", 1e-3}}},
  };
}

}  // namespace miaforge
