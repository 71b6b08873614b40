#pragma once

// Stacked membership attack: per-record meta features (seven estimator scores
// plus the target's cross-entropy loss), a gradient-boosted meta-classifier
// trained on the colluding client's leaked labels, per-client adaptation via
// boosting continuation on guaranteed non-members, and the two-condition
// decision rule (per-client percentile threshold + cross-client ratio).

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <optional>
#include <stdexcept>
#include <string>
#include <unordered_map>
#include <vector>

#include <json.hpp>

#include "csv.hpp"
#include "data.hpp"
#include "estimators.hpp"
#include "rng.hpp"
#include "targets.hpp"
#include "trees.hpp"

namespace miaforge {

inline constexpr std::size_t kMetaFeatureCount = 8;

struct MetaFeatureVector {
  double p_nn = 0.0;
  double p_rf = 0.0;
  double p_dt = 0.0;
  double p_gb = 0.0;
  double p_knn = 0.0;
  double p_svm = 0.0;
  double p_lr = 0.0;
  double l_ce = 0.0;

  std::vector<double> flat() const {
    return {p_nn, p_rf, p_dt, p_gb, p_knn, p_svm, p_lr, l_ce};
  }

  void validate() const {
    for (double p : {p_nn, p_rf, p_dt, p_gb, p_knn, p_svm, p_lr})
      if (!(p >= 0.0 && p <= 1.0))
        throw std::invalid_argument("meta features: estimator scores must lie in [0, 1]");
    if (!(l_ce >= 0.0) || !std::isfinite(l_ce))
      throw std::invalid_argument("meta features: loss must be finite and non-negative");
  }
};

// The seven estimators in their fixed meta-feature order, each fitted with a
// seed derived from `seed` by its position.
inline std::vector<FittedEstimator> fit_estimator_bank(const Matrix& X,
                                                       const std::vector<int>& y,
                                                       std::uint64_t seed) {
  std::vector<FittedEstimator> bank;
  bank.reserve(kEstimatorKinds.size());
  for (std::size_t k = 0; k < kEstimatorKinds.size(); ++k)
    bank.push_back(FittedEstimator::fit(kEstimatorKinds[k], X, y,
                                        derive_seed(seed, {static_cast<std::uint64_t>(k)})));
  return bank;
}

inline MetaFeatureVector extract_meta_features(const std::vector<double>& target_probs,
                                               int task_label, int classes,
                                               const std::vector<FittedEstimator>& bank) {
  if (bank.size() != kEstimatorKinds.size())
    throw std::invalid_argument("meta features: estimator bank must hold all 7 kinds");
  for (std::size_t k = 0; k < bank.size(); ++k)
    if (bank[k].kind() != kEstimatorKinds[k])
      throw std::invalid_argument("meta features: estimator bank out of order");
  const auto x = make_attack_input(target_probs, task_label, classes);
  MetaFeatureVector f;
  f.p_nn = bank[0].score(x);
  f.p_rf = bank[1].score(x);
  f.p_dt = bank[2].score(x);
  f.p_gb = bank[3].score(x);
  f.p_knn = bank[4].score(x);
  f.p_svm = bank[5].score(x);
  f.p_lr = bank[6].score(x);
  f.l_ce = cross_entropy_loss(target_probs, task_label);
  f.validate();
  return f;
}

struct MetaDataset {
  Matrix X;                       // rows of length kMetaFeatureCount
  std::vector<int> y;             // 1 = known member of the colluding client
  std::vector<std::string> ids;   // record ids, same order as X
};

// Labels the colluding client's view: its relevant pool and every challenge
// record get their leaked membership bit (member of colluding = 1), its
// external pool is non-member by construction. Each record appears once.
inline MetaDataset build_meta_dataset(
    const ScenarioBundle& bundle,
    const std::unordered_map<std::string, MetaFeatureVector>& features) {
  const int colluding = bundle.colluding_client;
  if (colluding < 0 || colluding >= static_cast<int>(bundle.relevant_pools.size()) ||
      colluding >= static_cast<int>(bundle.external_pools.size()))
    throw std::invalid_argument("meta dataset: colluding client out of range");

  MetaDataset md;
  auto push = [&](const Record& r, int label) {
    const auto it = features.find(r.id);
    if (it == features.end())
      throw std::invalid_argument("meta dataset: missing meta features for record '" + r.id + "'");
    it->second.validate();
    md.X.push_back(it->second.flat());
    md.y.push_back(label);
    md.ids.push_back(r.id);
  };
  auto leaked_label = [&](const Record& r) {
    if (!bundle.has_truth(r.id))
      throw std::invalid_argument("meta dataset: missing ground truth for record '" + r.id +
                                  "'; the colluding client's labels are required");
    return bundle.member_of(r.id) == std::optional<int>(colluding) ? 1 : 0;
  };

  for (const auto& r : bundle.relevant_pools[colluding].records) push(r, leaked_label(r));
  for (const auto& r : bundle.external_pools[colluding].records) push(r, 0);
  for (const auto& r : bundle.challenge.records) push(r, leaked_label(r));

  if (std::count(md.y.begin(), md.y.end(), 1) == 0)
    throw std::invalid_argument(
        "meta dataset: colluding client has no known members; meta-training impossible");
  return md;
}

struct AdaptConfig {
  int rounds = 20;
  double shrinkage = 0.05;
  int max_depth = 3;
  int min_leaf = 1;

  void validate() const {
    if (rounds < 0) throw std::invalid_argument("adaptation: rounds must be >= 0");
    if (!(shrinkage > 0.0 && shrinkage <= 1.0))
      throw std::invalid_argument("adaptation: shrinkage must lie in (0, 1]");
    if (max_depth < 1 || min_leaf < 1)
      throw std::invalid_argument("adaptation: tree shape parameters must be >= 1");
  }
};

class MetaModel {
 public:
  static MetaModel fit(const Matrix& X, const std::vector<int>& y,
                       const BoostConfig& hyper = {}) {
    if (X.empty() || X.size() != y.size())
      throw std::invalid_argument("meta fit: bad input sizes");
    for (const auto& row : X)
      if (row.size() != kMetaFeatureCount)
        throw std::invalid_argument("meta fit: rows must hold exactly 8 meta features");
    bool has0 = false, has1 = false;
    for (int v : y) (v ? has1 : has0) = true;
    if (!has0 || !has1)
      throw std::invalid_argument("meta fit: both membership classes must be present");
    MetaModel m;
    m.gbm_ = GradientBoostedModel::fit(X, y, hyper);
    return m;
  }

  // Continues boosting on the all-non-member external set of one client.
  // Returns a new model; this base model is never modified.
  MetaModel adapted(const Matrix& external_X, const AdaptConfig& cfg = {}) const {
    cfg.validate();
    if (external_X.empty())
      throw std::invalid_argument("meta adaptation: no external records for this client");
    for (const auto& row : external_X)
      if (row.size() != kMetaFeatureCount)
        throw std::invalid_argument("meta adaptation: rows must hold exactly 8 meta features");
    MetaModel out = *this;
    const std::vector<int> zeros(external_X.size(), 0);
    out.gbm_.continue_on(external_X, zeros, cfg.rounds, cfg.shrinkage, cfg.max_depth,
                         cfg.min_leaf);
    return out;
  }

  double score(const MetaFeatureVector& f) const { return score_flat(f.flat()); }

  double score_flat(const std::vector<double>& x) const {
    if (x.size() != kMetaFeatureCount)
      throw std::invalid_argument("meta score: input must hold exactly 8 meta features");
    return gbm_.predict_proba(x);
  }

  const GradientBoostedModel& ensemble() const { return gbm_; }

  nlohmann::json to_json() const { return gbm_.to_json(); }
  static MetaModel from_json(const nlohmann::json& j) {
    MetaModel m;
    m.gbm_ = GradientBoostedModel::from_json(j);
    return m;
  }

 private:
  GradientBoostedModel gbm_;
};

// Linear-interpolation percentile at fractional rank p/100 * (n-1).
inline double percentile_linear(std::vector<double> values, double p) {
  if (values.empty()) throw std::invalid_argument("percentile: empty value list");
  if (!(p >= 0.0 && p <= 100.0))
    throw std::invalid_argument("percentile: p must lie in [0, 100]");
  std::sort(values.begin(), values.end());
  const double rank = p / 100.0 * static_cast<double>(values.size() - 1);
  const auto lo = static_cast<std::size_t>(rank);
  if (lo + 1 >= values.size()) return values.back();
  const double frac = rank - static_cast<double>(lo);
  return values[lo] + frac * (values[lo + 1] - values[lo]);
}

struct DecisionRuleConfig {
  double percentile = 55.0;
  double lambda = 1.5;

  void validate() const {
    if (!(percentile > 0.0 && percentile < 100.0))
      throw std::invalid_argument("decision rule: percentile must lie in (0, 100)");
    if (!(lambda >= 1.0)) throw std::invalid_argument("decision rule: lambda must be >= 1");
  }
};

struct AttackDecision {
  std::string record_id;
  std::vector<double> client_scores;  // over target clients, ascending client order
  std::optional<int> assignment;      // client index, absent = non-member
  bool column_ok = false;
  bool row_ok = false;
  bool leaked = false;  // assigned directly from the colluding client's labels
};

namespace detail {

inline void check_score_matrix(const std::vector<std::string>& record_ids,
                               const Matrix& scores, std::size_t slots) {
  if (slots < 2)
    throw std::invalid_argument("decision rule: need at least 2 target clients");
  if (scores.size() != record_ids.size())
    throw std::invalid_argument("decision rule: one score row per challenge record required");
  for (const auto& row : scores) {
    if (row.size() != slots)
      throw std::invalid_argument("decision rule: every record must be scored under every client");
    for (double s : row)
      if (!std::isfinite(s))
        throw std::invalid_argument("decision rule: scores must be finite");
  }
}

}  // namespace detail

// Per-client thresholds: the configured percentile of each client's scores
// across all challenge records.
inline std::vector<double> column_thresholds(const Matrix& scores, double percentile) {
  if (scores.empty()) throw std::invalid_argument("decision rule: no challenge scores");
  const std::size_t slots = scores[0].size();
  std::vector<double> thr(slots);
  for (std::size_t c = 0; c < slots; ++c) {
    std::vector<double> column;
    column.reserve(scores.size());
    for (const auto& row : scores) {
      if (row.size() != slots)
        throw std::invalid_argument("decision rule: ragged score matrix");
      column.push_back(row[c]);
    }
    thr[c] = percentile_linear(std::move(column), percentile);
  }
  return thr;
}

// Two-condition rule with caller-supplied thresholds. A record is assigned to
// its argmax client c* (ties to the lowest index) iff the score strictly
// exceeds both that client's threshold and lambda times the cross-client mean.
// client_indices must be strictly increasing so the tie-break is by client.
inline std::vector<AttackDecision> decide_with_thresholds(
    const std::vector<std::string>& record_ids, const Matrix& scores,
    const std::vector<int>& client_indices, const DecisionRuleConfig& rule,
    const std::vector<double>& thresholds) {
  rule.validate();
  detail::check_score_matrix(record_ids, scores, client_indices.size());
  if (thresholds.size() != client_indices.size())
    throw std::invalid_argument("decision rule: one threshold per target client required");
  for (std::size_t c = 1; c < client_indices.size(); ++c)
    if (client_indices[c] <= client_indices[c - 1])
      throw std::invalid_argument("decision rule: client indices must be strictly increasing");

  std::vector<AttackDecision> out;
  out.reserve(record_ids.size());
  for (std::size_t r = 0; r < record_ids.size(); ++r) {
    const auto& row = scores[r];
    std::size_t best = 0;
    double sum = 0.0;
    for (std::size_t c = 0; c < row.size(); ++c) {
      sum += row[c];
      if (row[c] > row[best]) best = c;
    }
    AttackDecision d;
    d.record_id = record_ids[r];
    d.client_scores = row;
    d.column_ok = row[best] > thresholds[best];
    d.row_ok = row[best] > rule.lambda * (sum / static_cast<double>(row.size()));
    if (d.column_ok && d.row_ok) d.assignment = client_indices[best];
    out.push_back(std::move(d));
  }
  return out;
}

inline std::vector<AttackDecision> decide(const std::vector<std::string>& record_ids,
                                          const Matrix& scores,
                                          const std::vector<int>& client_indices,
                                          const DecisionRuleConfig& rule) {
  detail::check_score_matrix(record_ids, scores, client_indices.size());
  return decide_with_thresholds(record_ids, scores, client_indices, rule,
                                column_thresholds(scores, rule.percentile));
}

inline std::string decisions_to_csv(const std::vector<AttackDecision>& decisions,
                                    const std::vector<int>& client_indices) {
  std::string out = "record_id";
  for (int c : client_indices) out += ",p_c" + std::to_string(c + 1);
  out += ",assignment,column_ok,row_ok\n";
  for (const auto& d : decisions) {
    out += d.record_id;
    if (d.leaked) {
      // Leaked records bypass scoring; their score cells stay empty.
      out.append(client_indices.size(), ',');
    } else {
      if (d.client_scores.size() != client_indices.size())
        throw std::invalid_argument("decisions csv: score count does not match client count");
      for (double s : d.client_scores) out += "," + fmt_double(s);
    }
    out += ",";
    if (d.assignment) out += std::to_string(*d.assignment);
    out += d.column_ok ? ",1" : ",0";
    out += d.row_ok ? ",1\n" : ",0\n";
  }
  return out;
}

inline void save_decisions(const std::string& path,
                           const std::vector<AttackDecision>& decisions,
                           const std::vector<int>& client_indices) {
  write_file_atomic(path, decisions_to_csv(decisions, client_indices));
}

// Black-box view of one client model: record in, class probabilities out.
using PredictionOracle = std::function<std::vector<double>(const Record&)>;

struct AttackConfig {
  DecisionRuleConfig rule;
  BoostConfig meta;   // defaults: 100 trees, depth 3, shrinkage 0.1
  AdaptConfig adapt;  // defaults: 20 rounds, shrinkage 0.05
  std::uint64_t seed = 0;

  void validate() const {
    rule.validate();
    meta.validate();
    adapt.validate();
  }
};

struct AttackResult {
  std::vector<AttackDecision> decisions;  // challenge order, leaked rows included
  std::vector<int> target_clients;        // ascending, colluding client excluded
  std::vector<double> thresholds;         // per target client
  MetaDataset meta_dataset;               // the colluding client's labeled set
  MetaModel meta;                         // base meta-classifier (pre-adaptation)
  nlohmann::json provenance;
};

namespace detail {

template <typename F>
auto attack_stage(const std::string& stage, F&& f) {
  try {
    return f();
  } catch (const std::exception& e) {
    throw std::runtime_error("attack stage '" + stage + "': " + e.what());
  }
}

}  // namespace detail

// Full pipeline: per-client estimator banks on relevant(=member)/external
// (=non-member) pools, meta-classifier on the colluding client's labels,
// per-client adaptation, two-condition decisions. Challenge records that the
// leaked labels mark as the colluding client's own members are assigned
// directly and never scored.
inline AttackResult run_attack(const ScenarioBundle& bundle,
                               const std::vector<PredictionOracle>& targets,
                               const AttackConfig& cfg) {
  cfg.validate();
  const int clients = bundle.config.clients;
  const int classes = bundle.config.classes;
  const int colluding = bundle.colluding_client;
  if (static_cast<int>(targets.size()) != clients)
    throw std::invalid_argument("attack: need one prediction oracle per client");
  if (colluding < 0 || colluding >= clients)
    throw std::invalid_argument("attack: colluding client out of range");
  for (const auto& t : targets)
    if (!t) throw std::invalid_argument("attack: prediction oracle is empty");

  auto probs_for = [&](int c, const Record& r) {
    auto p = targets[c](r);
    if (static_cast<int>(p.size()) != classes)
      throw std::runtime_error("client " + std::to_string(c + 1) +
                               " returned a prediction of wrong width for record '" + r.id + "'");
    return p;
  };

  // Stage 1: per-client estimator banks.
  std::vector<std::vector<FittedEstimator>> banks(clients);
  detail::attack_stage("estimators", [&] {
    for (int c = 0; c < clients; ++c) {
      Matrix ax;
      std::vector<int> ay;
      for (const auto& r : bundle.relevant_pools[c].records) {
        ax.push_back(make_attack_input(probs_for(c, r), r.task_label, classes));
        ay.push_back(1);
      }
      for (const auto& r : bundle.external_pools[c].records) {
        ax.push_back(make_attack_input(probs_for(c, r), r.task_label, classes));
        ay.push_back(0);
      }
      banks[c] = fit_estimator_bank(ax, ay, derive_seed(cfg.seed, {static_cast<std::uint64_t>(c)}));
    }
    return 0;
  });

  auto features_for = [&](int c, const Record& r) {
    return extract_meta_features(probs_for(c, r), r.task_label, classes, banks[c]);
  };

  // Stage 2: meta dataset from the colluding client's own pipeline.
  AttackResult res;
  res.meta_dataset = detail::attack_stage("meta dataset", [&] {
    std::unordered_map<std::string, MetaFeatureVector> feats;
    for (const auto& r : bundle.relevant_pools[colluding].records)
      feats.emplace(r.id, features_for(colluding, r));
    for (const auto& r : bundle.external_pools[colluding].records)
      feats.emplace(r.id, features_for(colluding, r));
    for (const auto& r : bundle.challenge.records) feats.emplace(r.id, features_for(colluding, r));
    return build_meta_dataset(bundle, feats);
  });

  // Stage 3: base meta-classifier.
  res.meta = detail::attack_stage("meta fit", [&] {
    return MetaModel::fit(res.meta_dataset.X, res.meta_dataset.y, cfg.meta);
  });

  // Stage 4: per-client adaptation on guaranteed non-members.
  for (int c = 0; c < clients; ++c)
    if (c != colluding) res.target_clients.push_back(c);
  std::vector<MetaModel> adapted;
  detail::attack_stage("adaptation", [&] {
    for (int c : res.target_clients) {
      Matrix ext;
      for (const auto& r : bundle.external_pools[c].records)
        ext.push_back(features_for(c, r).flat());
      adapted.push_back(res.meta.adapted(ext, cfg.adapt));
    }
    return 0;
  });

  // Stage 5: challenge scoring and decisions.
  detail::attack_stage("decision", [&] {
    std::vector<std::string> ids;
    Matrix scores;
    std::vector<bool> is_leaked;
    for (const auto& r : bundle.challenge.records) {
      if (!bundle.has_truth(r.id))
        throw std::invalid_argument("missing ground truth for challenge record '" + r.id + "'");
      const bool leaked = bundle.member_of(r.id) == std::optional<int>(colluding);
      is_leaked.push_back(leaked);
      if (leaked) continue;
      ids.push_back(r.id);
      std::vector<double> row;
      for (std::size_t slot = 0; slot < res.target_clients.size(); ++slot)
        row.push_back(adapted[slot].score(features_for(res.target_clients[slot], r)));
      scores.push_back(std::move(row));
    }
    std::vector<AttackDecision> decided;
    if (!ids.empty()) {
      res.thresholds = column_thresholds(scores, cfg.rule.percentile);
      decided = decide_with_thresholds(ids, scores, res.target_clients, cfg.rule, res.thresholds);
    }
    std::size_t next = 0;
    for (std::size_t i = 0; i < bundle.challenge.records.size(); ++i) {
      if (is_leaked[i]) {
        AttackDecision d;
        d.record_id = bundle.challenge.records[i].id;
        d.assignment = colluding;
        d.column_ok = d.row_ok = d.leaked = true;
        res.decisions.push_back(std::move(d));
      } else {
        res.decisions.push_back(std::move(decided[next++]));
      }
    }
    return 0;
  });

  // Provenance: everything needed to audit or replay the run.
  nlohmann::json prov;
  prov["seed"] = cfg.seed;
  prov["colluding_client"] = colluding;
  prov["rule"] = {{"percentile", cfg.rule.percentile}, {"lambda", cfg.rule.lambda}};
  prov["meta"] = {{"rounds", cfg.meta.rounds},
                  {"max_depth", cfg.meta.max_depth},
                  {"shrinkage", cfg.meta.shrinkage},
                  {"min_leaf", cfg.meta.min_leaf}};
  prov["adaptation"] = {{"rounds", cfg.adapt.rounds},
                        {"shrinkage", cfg.adapt.shrinkage},
                        {"max_depth", cfg.adapt.max_depth},
                        {"min_leaf", cfg.adapt.min_leaf}};
  prov["estimators"] = estimator_hyperparameters();
  nlohmann::json seeds = nlohmann::json::object();
  for (int c = 0; c < clients; ++c) {
    nlohmann::json per_kind = nlohmann::json::object();
    for (const auto& e : banks[c]) per_kind[to_string(e.kind())] = e.seed();
    seeds["client_" + std::to_string(c + 1)] = std::move(per_kind);
  }
  prov["estimator_seeds"] = std::move(seeds);
  nlohmann::json thr = nlohmann::json::object();
  for (std::size_t slot = 0; slot < res.target_clients.size(); ++slot)
    thr["client_" + std::to_string(res.target_clients[slot] + 1)] =
        slot < res.thresholds.size() ? res.thresholds[slot] : 0.0;
  prov["thresholds"] = std::move(thr);
  res.provenance = std::move(prov);
  return res;
}

}  // namespace miaforge
