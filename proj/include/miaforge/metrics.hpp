#pragma once

// Evaluation machinery: challenge-assignment accuracy, deterministic
// (stratified) k-fold plans, out-of-fold scoring, step-function ROC with
// TPR-at-FPR-budget, and the pooled two-proportion z-test.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <map>
#include <optional>
#include <sstream>
#include <stdexcept>
#include <string>
#include <unordered_map>
#include <vector>

#include "csv.hpp"
#include "data.hpp"
#include "rng.hpp"

namespace miaforge {

inline double normal_cdf(double z) { return 0.5 * std::erfc(-z / std::sqrt(2.0)); }

// ---------------------------------------------------------------------------
// Challenge-assignment accuracy
// ---------------------------------------------------------------------------

// A decision assigns a record to a client index or (nullopt) to non-member.
using Assignment = std::pair<std::string, std::optional<int>>;

inline double challenge_accuracy(const std::vector<Assignment>& decisions,
                                 const std::vector<LabeledMembership>& truth) {
  if (decisions.size() != truth.size())
    throw std::invalid_argument("challenge_accuracy: expected exactly one decision per record");
  std::unordered_map<std::string, std::optional<int>> by_id;
  for (const auto& [id, a] : decisions) {
    if (!by_id.emplace(id, a).second)
      throw std::invalid_argument("challenge_accuracy: duplicate decision for '" + id + "'");
  }
  std::size_t hits = 0;
  for (const auto& t : truth) {
    const auto it = by_id.find(t.record_id);
    if (it == by_id.end())
      throw std::invalid_argument("challenge_accuracy: no decision for '" + t.record_id + "'");
    if (it->second == t.member_of) ++hits;
  }
  return static_cast<double>(hits) / static_cast<double>(truth.size());
}

// ---------------------------------------------------------------------------
// Fold plans and out-of-fold scoring
// ---------------------------------------------------------------------------

struct FoldPlan {
  int k = 5;
  bool stratified = true;
  std::uint64_t seed = 0;
  std::vector<int> fold_of;

  // Stratified plans shuffle each class separately and deal records to folds
  // round-robin, keeping per-fold class counts within 1 of proportional.
  static FoldPlan make(const std::vector<int>& labels, int k, bool stratified,
                       std::uint64_t seed) {
    if (k < 2) throw std::invalid_argument("fold plan: k must be at least 2");
    if (static_cast<std::size_t>(k) > labels.size())
      throw std::invalid_argument("fold plan: k exceeds the number of records");
    FoldPlan plan;
    plan.k = k;
    plan.stratified = stratified;
    plan.seed = seed;
    plan.fold_of.assign(labels.size(), -1);
    Rng rng(seed);
    if (!stratified) {
      auto perm = rng.permutation(labels.size());
      for (std::size_t i = 0; i < perm.size(); ++i)
        plan.fold_of[perm[i]] = static_cast<int>(i % k);
      return plan;
    }
    std::map<int, std::vector<std::size_t>> by_class;
    for (std::size_t i = 0; i < labels.size(); ++i) by_class[labels[i]].push_back(i);
    for (auto& [label, idx] : by_class) {
      rng.shuffle(idx);
      for (std::size_t i = 0; i < idx.size(); ++i)
        plan.fold_of[idx[i]] = static_cast<int>(i % k);
    }
    return plan;
  }
};

// fit(train_X, train_y) must return a callable double(const std::vector<double>&).
// Every record is scored exactly once, by the model of the fold that excludes it.
template <class FitFn>
std::vector<double> oof_scores(const Matrix& X, const std::vector<int>& y,
                               const FoldPlan& plan, FitFn fit) {
  if (X.size() != y.size() || X.size() != plan.fold_of.size())
    throw std::invalid_argument("oof_scores: input sizes disagree");
  std::vector<double> scores(X.size(), 0.0);
  for (int f = 0; f < plan.k; ++f) {
    Matrix train_X;
    std::vector<int> train_y;
    std::vector<std::size_t> holdout;
    for (std::size_t i = 0; i < X.size(); ++i) {
      if (plan.fold_of[i] == f) {
        holdout.push_back(i);
      } else {
        train_X.push_back(X[i]);
        train_y.push_back(y[i]);
      }
    }
    if (holdout.empty()) continue;
    bool has0 = false, has1 = false;
    for (int v : train_y) (v ? has1 : has0) = true;
    if (!has0 || !has1)
      throw std::runtime_error("oof_scores: fold " + std::to_string(f) +
                               " training split has a single class; use a smaller k");
    auto model = fit(train_X, train_y);
    for (std::size_t i : holdout) scores[i] = model(X[i]);
  }
  return scores;
}

// ---------------------------------------------------------------------------
// ROC / TPR at FPR
// ---------------------------------------------------------------------------

struct RocPoint {
  double threshold = 0.0;
  double fpr = 0.0;
  double tpr = 0.0;
};

namespace detail {

inline void check_two_classes(const std::vector<double>& scores,
                              const std::vector<int>& labels) {
  if (scores.size() != labels.size())
    throw std::invalid_argument("roc: scores/labels size mismatch");
  bool has0 = false, has1 = false;
  for (int v : labels) (v ? has1 : has0) = true;
  if (!has0 || !has1) throw std::invalid_argument("roc: need at least one record per class");
}

}  // namespace detail

// One point per distinct score value, descending; a record counts as predicted
// positive when score >= threshold, so tied scores enter all-or-none.
inline std::vector<RocPoint> roc_points(const std::vector<double>& scores,
                                        const std::vector<int>& labels) {
  detail::check_two_classes(scores, labels);
  std::vector<double> thresholds(scores);
  std::sort(thresholds.begin(), thresholds.end(), std::greater<>());
  thresholds.erase(std::unique(thresholds.begin(), thresholds.end()), thresholds.end());
  double pos = 0.0, neg = 0.0;
  for (int v : labels) (v ? pos : neg) += 1.0;
  std::vector<RocPoint> points;
  points.reserve(thresholds.size());
  for (double t : thresholds) {
    double tp = 0.0, fp = 0.0;
    for (std::size_t i = 0; i < scores.size(); ++i)
      if (scores[i] >= t) (labels[i] ? tp : fp) += 1.0;
    points.push_back({t, fp / neg, tp / pos});
  }
  return points;
}

inline double tpr_at_fpr(const std::vector<double>& scores,
                         const std::vector<int>& labels, double fpr_budget) {
  if (fpr_budget < 0.0 || fpr_budget > 1.0)
    throw std::invalid_argument("tpr_at_fpr: budget must be in [0, 1]");
  double best = 0.0;
  for (const auto& p : roc_points(scores, labels))
    if (p.fpr <= fpr_budget) best = std::max(best, p.tpr);
  return best;
}

inline double roc_auc(const std::vector<double>& scores, const std::vector<int>& labels) {
  detail::check_two_classes(scores, labels);
  double pairs = 0.0, wins = 0.0;
  for (std::size_t i = 0; i < scores.size(); ++i) {
    if (labels[i] != 1) continue;
    for (std::size_t j = 0; j < scores.size(); ++j) {
      if (labels[j] != 0) continue;
      pairs += 1.0;
      if (scores[i] > scores[j]) wins += 1.0;
      else if (scores[i] == scores[j]) wins += 0.5;
    }
  }
  return wins / pairs;
}

inline std::string roc_to_csv(const std::vector<RocPoint>& points) {
  std::ostringstream out;
  out << "threshold,fpr,tpr\n";
  for (const auto& p : points)
    out << fmt_double(p.threshold) << ',' << fmt_double(p.fpr) << ','
        << fmt_double(p.tpr) << "\n";
  return out.str();
}

// ---------------------------------------------------------------------------
// Two-proportion z-test (pooled variance)
// ---------------------------------------------------------------------------

struct ZTestResult {
  double z = 0.0;
  double p_value = 1.0;
};

inline ZTestResult two_proportion_z(double p1, double p2, long long n1, long long n2) {
  if (n1 <= 0 || n2 <= 0)
    throw std::invalid_argument("z-test: sample sizes must be positive");
  for (double p : {p1, p2})
    if (p < 0.0 || p > 1.0) throw std::invalid_argument("z-test: proportions must be in [0, 1]");
  const double x1 = p1 * static_cast<double>(n1);
  const double x2 = p2 * static_cast<double>(n2);
  // Proportions should correspond to integer counts; 0.51 absorbs published
  // percentages that were rounded to two decimals.
  if (std::abs(x1 - std::round(x1)) > 0.51 || std::abs(x2 - std::round(x2)) > 0.51)
    throw std::invalid_argument("z-test: proportions do not correspond to integral counts");
  const double pooled = (x1 + x2) / static_cast<double>(n1 + n2);
  if (pooled <= 0.0 || pooled >= 1.0)
    throw std::invalid_argument("z-test: pooled proportion degenerate (all successes or all failures)");
  const double se = std::sqrt(pooled * (1.0 - pooled) *
                              (1.0 / static_cast<double>(n1) + 1.0 / static_cast<double>(n2)));
  ZTestResult r;
  r.z = (p1 - p2) / se;
  r.p_value = 2.0 * (1.0 - normal_cdf(std::abs(r.z)));
  return r;
}

}  // namespace miaforge
