#pragma once

// Decision-tree machinery shared by the base estimators and the stacked
// meta-classifier: binary CART trees on Gini impurity, regression trees with
// optional hessian weights (Newton leaf values), and a logistic-loss gradient
// boosting ensemble that supports continued fitting on new data.
//
// All split searches are deterministic: candidate features are scanned in
// ascending index order, thresholds in ascending value order, and a candidate
// replaces the incumbent only on strictly larger gain, so ties resolve to the
// lowest feature index and lowest threshold.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <vector>

#include <json.hpp>

#include "data.hpp"
#include "rng.hpp"

namespace miaforge {

struct TreeConfig {
  int max_depth = 5;
  int min_leaf = 2;
  int features_per_split = 0;  // 0 means all features
};

struct TreeNode {
  int feature = -1;  // -1 marks a leaf
  double threshold = 0.0;
  int left = -1;
  int right = -1;
  double value = 0.0;

  bool is_leaf() const { return feature < 0; }
};

class Tree {
 public:
  double predict(const std::vector<double>& x) const {
    int i = 0;
    while (!nodes_[i].is_leaf())
      i = x[nodes_[i].feature] <= nodes_[i].threshold ? nodes_[i].left : nodes_[i].right;
    return nodes_[i].value;
  }

  const std::vector<TreeNode>& nodes() const { return nodes_; }
  bool empty() const { return nodes_.empty(); }

  nlohmann::json to_json() const {
    nlohmann::json arr = nlohmann::json::array();
    for (const auto& n : nodes_)
      arr.push_back({{"f", n.feature},
                     {"t", n.threshold},
                     {"l", n.left},
                     {"r", n.right},
                     {"v", n.value}});
    return arr;
  }

  static Tree from_json(const nlohmann::json& arr) {
    Tree t;
    for (const auto& jn : arr) {
      TreeNode n;
      n.feature = jn.at("f").get<int>();
      n.threshold = jn.at("t").get<double>();
      n.left = jn.at("l").get<int>();
      n.right = jn.at("r").get<int>();
      n.value = jn.at("v").get<double>();
      t.nodes_.push_back(n);
    }
    if (t.nodes_.empty()) throw std::runtime_error("tree deserialization: no nodes");
    return t;
  }

  // Gini-impurity classification tree on binary labels; leaves hold the
  // positive-class fraction.
  static Tree fit_classification(const Matrix& X, const std::vector<int>& y,
                                 std::vector<int> idx, const TreeConfig& cfg,
                                 Rng* feature_rng = nullptr);

  // Squared-error regression tree; with hessian weights the leaves hold the
  // Newton step sum(grad)/sum(hess), without them the plain mean.
  static Tree fit_regression(const Matrix& X, const std::vector<double>& grad,
                             const std::vector<double>* hess, std::vector<int> idx,
                             const TreeConfig& cfg, Rng* feature_rng = nullptr);

 private:
  struct Builder;
  std::vector<TreeNode> nodes_;
};

// Largest Newton leaf magnitude a regression tree may emit; one boosting
// round can then shift a logit by at most shrinkage * kMaxLeafStep.
inline constexpr double kMaxLeafStep = 15.0;

namespace detail {

constexpr double kMinSplitGain = 1e-12;

struct SplitResult {
  int feature = -1;
  double threshold = 0.0;
  double gain = 0.0;
};

// grad/hess formulation covers both criteria: for classification pass
// grad=y, hess=1 (gain reduces to the Gini criterion up to a constant
// factor); for regression pass the targets and optional weights. The score of
// a set is G^2/H, and the split gain is the score increase of the partition.
// min_gain below 0 admits zero-gain splits (classification trees keep
// partitioning impure nodes, the reference CART behavior); 0 demands a strict
// improvement (regression trees inside boosting).
template <class GetG, class GetH>
SplitResult best_split(const Matrix& X, const std::vector<int>& idx, GetG get_g,
                       GetH get_h, int min_leaf, double min_gain,
                       const std::vector<int>& features) {
  const int n = static_cast<int>(idx.size());
  double g_total = 0.0, h_total = 0.0;
  for (int i : idx) {
    g_total += get_g(i);
    h_total += get_h(i);
  }
  const double parent_score = g_total * g_total / h_total;

  SplitResult best;
  best.gain = min_gain;
  std::vector<int> order;
  for (int f : features) {
    order = idx;
    std::sort(order.begin(), order.end(), [&](int a, int b) {
      if (X[a][f] != X[b][f]) return X[a][f] < X[b][f];
      return a < b;
    });
    double g_left = 0.0, h_left = 0.0;
    for (int i = 0; i + 1 < n; ++i) {
      g_left += get_g(order[i]);
      h_left += get_h(order[i]);
      if (X[order[i]][f] == X[order[i + 1]][f]) continue;
      const int n_left = i + 1, n_right = n - n_left;
      if (n_left < min_leaf || n_right < min_leaf) continue;
      const double g_right = g_total - g_left, h_right = h_total - h_left;
      if (h_left <= 0.0 || h_right <= 0.0) continue;
      const double gain =
          g_left * g_left / h_left + g_right * g_right / h_right - parent_score;
      if (gain > best.gain + kMinSplitGain) {
        best.feature = f;
        best.threshold = 0.5 * (X[order[i]][f] + X[order[i + 1]][f]);
        best.gain = gain;
      }
    }
  }
  return best;
}

}  // namespace detail

struct Tree::Builder {
  const Matrix& X;
  const std::vector<double>& grad;
  const std::vector<double>* hess;
  const TreeConfig& cfg;
  Rng* rng;
  double min_gain;
  std::vector<TreeNode> nodes;

  double get_g(int i) const { return grad[i]; }
  double get_h(int i) const { return hess ? (*hess)[i] : 1.0; }

  std::vector<int> candidate_features() const {
    const int dim = static_cast<int>(X[0].size());
    if (cfg.features_per_split <= 0 || cfg.features_per_split >= dim || !rng) {
      std::vector<int> all(dim);
      for (int i = 0; i < dim; ++i) all[i] = i;
      return all;
    }
    const auto sampled = rng->sample_indices(dim, cfg.features_per_split);
    return std::vector<int>(sampled.begin(), sampled.end());
  }

  int build(std::vector<int> idx, int depth) {
    double g = 0.0, h = 0.0;
    for (int i : idx) {
      g += get_g(i);
      h += get_h(i);
    }
    const int node_id = static_cast<int>(nodes.size());
    nodes.emplace_back();
    // Newton step g/h is capped: on sigmoid-saturated regions the hessian
    // floor meets O(1) gradients and the raw ratio explodes to ~1e12, which
    // would turn boosting continuation into a step function. Classification
    // leaves (mean label in [0,1]) are unaffected.
    nodes[node_id].value = std::clamp(h > 0.0 ? g / h : 0.0, -kMaxLeafStep, kMaxLeafStep);

    if (depth >= cfg.max_depth || static_cast<int>(idx.size()) < 2 * cfg.min_leaf)
      return node_id;
    bool constant_target = true;
    for (int i : idx)
      if (grad[i] != grad[idx[0]]) {
        constant_target = false;
        break;
      }
    if (constant_target) return node_id;
    const auto split = detail::best_split(
        X, idx, [&](int i) { return get_g(i); }, [&](int i) { return get_h(i); },
        cfg.min_leaf, min_gain, candidate_features());
    if (split.feature < 0) return node_id;

    std::vector<int> left_idx, right_idx;
    for (int i : idx)
      (X[i][split.feature] <= split.threshold ? left_idx : right_idx).push_back(i);
    idx.clear();
    idx.shrink_to_fit();
    nodes[node_id].feature = split.feature;
    nodes[node_id].threshold = split.threshold;
    const int l = build(std::move(left_idx), depth + 1);
    nodes[node_id].left = l;
    const int r = build(std::move(right_idx), depth + 1);
    nodes[node_id].right = r;
    return node_id;
  }
};

inline Tree Tree::fit_classification(const Matrix& X, const std::vector<int>& y,
                                     std::vector<int> idx, const TreeConfig& cfg,
                                     Rng* feature_rng) {
  if (X.empty()) throw std::invalid_argument("tree: empty training matrix");
  if (X.size() != y.size()) throw std::invalid_argument("tree: X/y size mismatch");
  if (idx.empty()) {
    idx.resize(X.size());
    for (std::size_t i = 0; i < X.size(); ++i) idx[i] = static_cast<int>(i);
  }
  std::vector<double> grad(y.size());
  for (std::size_t i = 0; i < y.size(); ++i) {
    if (y[i] != 0 && y[i] != 1)
      throw std::invalid_argument("tree: classification labels must be 0 or 1");
    grad[i] = static_cast<double>(y[i]);
  }
  Builder b{X, grad, nullptr, cfg, feature_rng, -1.0, {}};
  b.build(std::move(idx), 0);
  Tree t;
  t.nodes_ = std::move(b.nodes);
  return t;
}

inline Tree Tree::fit_regression(const Matrix& X, const std::vector<double>& grad,
                                 const std::vector<double>* hess, std::vector<int> idx,
                                 const TreeConfig& cfg, Rng* feature_rng) {
  if (X.empty()) throw std::invalid_argument("tree: empty training matrix");
  if (X.size() != grad.size()) throw std::invalid_argument("tree: X/target size mismatch");
  if (hess && hess->size() != grad.size())
    throw std::invalid_argument("tree: gradient/hessian size mismatch");
  if (idx.empty()) {
    idx.resize(X.size());
    for (std::size_t i = 0; i < X.size(); ++i) idx[i] = static_cast<int>(i);
  }
  Builder b{X, grad, hess, cfg, feature_rng, 0.0, {}};
  b.build(std::move(idx), 0);
  Tree t;
  t.nodes_ = std::move(b.nodes);
  return t;
}

// ---------------------------------------------------------------------------
// Gradient boosting
// ---------------------------------------------------------------------------

struct BoostConfig {
  int rounds = 100;
  int max_depth = 3;
  double shrinkage = 0.1;
  int min_leaf = 1;

  void validate() const {
    if (rounds < 0) throw std::invalid_argument("boosting: rounds must be non-negative");
    if (max_depth < 1) throw std::invalid_argument("boosting: max_depth must be at least 1");
    if (shrinkage <= 0.0 || shrinkage > 1.0)
      throw std::invalid_argument("boosting: shrinkage must be in (0, 1]");
    if (min_leaf < 1) throw std::invalid_argument("boosting: min_leaf must be at least 1");
  }
};

inline double sigmoid(double z) { return 1.0 / (1.0 + std::exp(-z)); }

class GradientBoostedModel {
 public:
  double margin(const std::vector<double>& x) const {
    double m = base_margin_;
    for (std::size_t t = 0; t < trees_.size(); ++t)
      m += shrinkage_[t] * trees_[t].predict(x);
    return m;
  }

  double predict_proba(const std::vector<double>& x) const { return sigmoid(margin(x)); }

  int rounds() const { return static_cast<int>(trees_.size()); }
  double base_margin() const { return base_margin_; }

  // Fits logistic-loss boosting: the base margin is the log odds of the
  // positive rate, each round fits a depth-limited regression tree to the
  // gradient residuals y - p with Newton leaf values r / (p (1 - p)).
  static GradientBoostedModel fit(const Matrix& X, const std::vector<int>& y,
                                  const BoostConfig& cfg) {
    cfg.validate();
    if (X.empty()) throw std::invalid_argument("boosting: empty training matrix");
    if (X.size() != y.size()) throw std::invalid_argument("boosting: X/y size mismatch");
    GradientBoostedModel m;
    double pos = 0.0;
    for (int v : y) {
      if (v != 0 && v != 1)
        throw std::invalid_argument("boosting: labels must be 0 or 1");
      pos += v;
    }
    double rate = pos / static_cast<double>(y.size());
    rate = std::clamp(rate, 1e-6, 1.0 - 1e-6);
    m.base_margin_ = std::log(rate / (1.0 - rate));
    m.continue_on(X, y, cfg.rounds, cfg.shrinkage, cfg.max_depth, cfg.min_leaf);
    return m;
  }

  // Resumes boosting from the current ensemble on a (possibly different)
  // dataset. Existing trees are untouched; new rounds may use their own
  // shrinkage and depth.
  void continue_on(const Matrix& X, const std::vector<int>& y, int rounds,
                   double shrinkage, int max_depth = 3, int min_leaf = 1) {
    if (X.size() != y.size()) throw std::invalid_argument("boosting: X/y size mismatch");
    if (rounds == 0) return;
    BoostConfig check{rounds, max_depth, shrinkage, min_leaf};
    check.validate();
    const std::size_t n = X.size();
    std::vector<double> margins(n);
    for (std::size_t i = 0; i < n; ++i) margins[i] = margin(X[i]);

    TreeConfig tree_cfg{max_depth, min_leaf, 0};
    std::vector<double> grad(n), hess(n);
    for (int round = 0; round < rounds; ++round) {
      for (std::size_t i = 0; i < n; ++i) {
        const double p = sigmoid(margins[i]);
        grad[i] = static_cast<double>(y[i]) - p;
        hess[i] = std::max(p * (1.0 - p), 1e-12);
      }
      Tree tree = Tree::fit_regression(X, grad, &hess, {}, tree_cfg);
      for (std::size_t i = 0; i < n; ++i) margins[i] += shrinkage * tree.predict(X[i]);
      trees_.push_back(std::move(tree));
      shrinkage_.push_back(shrinkage);
    }
  }

  nlohmann::json to_json() const {
    nlohmann::json j;
    j["base_margin"] = base_margin_;
    j["shrinkage"] = shrinkage_;
    nlohmann::json arr = nlohmann::json::array();
    for (const auto& t : trees_) arr.push_back(t.to_json());
    j["trees"] = std::move(arr);
    return j;
  }

  static GradientBoostedModel from_json(const nlohmann::json& j) {
    GradientBoostedModel m;
    m.base_margin_ = j.at("base_margin").get<double>();
    m.shrinkage_ = j.at("shrinkage").get<std::vector<double>>();
    for (const auto& jt : j.at("trees")) m.trees_.push_back(Tree::from_json(jt));
    if (m.trees_.size() != m.shrinkage_.size())
      throw std::runtime_error("boosting deserialization: tree/shrinkage count mismatch");
    return m;
  }

 private:
  double base_margin_ = 0.0;
  std::vector<Tree> trees_;
  std::vector<double> shrinkage_;
};

inline double logistic_loss(const GradientBoostedModel& m, const Matrix& X,
                            const std::vector<int>& y) {
  double total = 0.0;
  for (std::size_t i = 0; i < X.size(); ++i) {
    const double p = std::clamp(m.predict_proba(X[i]), 1e-12, 1.0 - 1e-12);
    total += y[i] ? -std::log(p) : -std::log(1.0 - p);
  }
  return total / static_cast<double>(X.size());
}

}  // namespace miaforge
