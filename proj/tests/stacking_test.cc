#include "miaforge/stacking.hpp"

#include <gtest/gtest.h>

#include "miaforge/metrics.hpp"

#include <cmath>
#include <set>

namespace mf = miaforge;

namespace {

// Small but structurally complete scenario: 4 clients, colluding last, the
// colluding client knows 4 members among its 8 relevant records.
mf::ScenarioConfig small_config() {
  mf::ScenarioConfig cfg;
  cfg.clients = 4;
  cfg.classes = 3;
  cfg.feature_dim = 12;
  cfg.train_sizes = {12, 12, 12, 12};
  cfg.relevant_sizes = {10, 12, 9, 8};
  cfg.external_sizes = {8, 9, 7, 6};
  cfg.relevant_member_fractions = {0.3, 0.25, 1.0 / 3.0, 0.5};
  cfg.challenge_size = 12;
  cfg.challenge_members = {3, 3, 2, 0};
  cfg.colluding_client = -1;
  cfg.class_separation = 3.0;
  cfg.seed = 11;
  return cfg;
}

// Oracle standing in for an overfit target: near-certain on the client's own
// training members, uniform on everything else.
std::vector<mf::PredictionOracle> fake_oracles(const mf::ScenarioBundle& b) {
  std::vector<mf::PredictionOracle> oracles;
  for (int c = 0; c < b.config.clients; ++c) {
    std::set<std::string> train_ids;
    for (const auto& r : b.train_sets[c].records) train_ids.insert(r.id);
    // Members loaned to the challenge pool keep their training features but
    // new ids, so membership is detected through ground truth as well.
    const int classes = b.config.classes;
    auto member = [&, train_ids, c](const mf::Record& r) {
      if (train_ids.count(r.id)) return true;
      return b.has_truth(r.id) && b.member_of(r.id) == std::optional<int>(c);
    };
    oracles.push_back([&, member, classes](const mf::Record& r) {
      std::vector<double> p(classes, 0.0);
      if (member(r)) {
        for (int k = 0; k < classes; ++k) p[k] = 0.03 / (classes - 1);
        p[r.task_label] = 0.97;
      } else {
        for (int k = 0; k < classes; ++k) p[k] = 1.0 / classes;
      }
      return p;
    });
  }
  return oracles;
}

TEST(MetaFeatures, FieldOrderMatchesEstimatorBankAndLoss) {
  mf::Rng rng(3);
  mf::Matrix X;
  std::vector<int> y;
  for (int i = 0; i < 24; ++i) {
    std::vector<double> x(8);  // attack inputs for K=4 are 2K wide
    for (auto& v : x) v = rng.uniform();
    X.push_back(x);
    y.push_back(i % 2);
  }
  const auto bank = mf::fit_estimator_bank(X, y, 99);
  ASSERT_EQ(bank.size(), 7u);

  const std::vector<double> probs = {0.6, 0.2, 0.15, 0.05};
  const int label = 1;
  const auto f = mf::extract_meta_features(probs, label, 4, bank);
  const auto flat = f.flat();
  ASSERT_EQ(flat.size(), mf::kMetaFeatureCount);
  const auto input = mf::make_attack_input(probs, label, 4);
  for (std::size_t k = 0; k < bank.size(); ++k)
    EXPECT_DOUBLE_EQ(flat[k], bank[k].score(input)) << mf::to_string(bank[k].kind());
  EXPECT_DOUBLE_EQ(flat[7], mf::cross_entropy_loss(probs, label));
}

TEST(MetaFeatures, UniformTargetGivesLogKLoss) {
  mf::Rng rng(4);
  mf::Matrix X;
  std::vector<int> y;
  for (int i = 0; i < 16; ++i) {
    std::vector<double> x(8);
    for (auto& v : x) v = rng.uniform();
    X.push_back(x);
    y.push_back(i % 2);
  }
  const auto bank = mf::fit_estimator_bank(X, y, 2);
  const auto f = mf::extract_meta_features({0.25, 0.25, 0.25, 0.25}, 2, 4, bank);
  EXPECT_NEAR(f.l_ce, 1.3862943611198906, 1e-12);
}

TEST(MetaFeatures, RejectsIncompleteOrReorderedBank) {
  mf::Rng rng(5);
  mf::Matrix X;
  std::vector<int> y;
  for (int i = 0; i < 12; ++i) {
    X.push_back({rng.uniform(), rng.uniform()});
    y.push_back(i % 2);
  }
  auto bank = mf::fit_estimator_bank(X, y, 3);
  auto short_bank = bank;
  short_bank.pop_back();
  EXPECT_THROW(mf::extract_meta_features({0.5, 0.5}, 0, 1, short_bank), std::invalid_argument);
  std::swap(bank[0], bank[1]);
  EXPECT_THROW(mf::extract_meta_features({0.5, 0.5}, 0, 1, bank), std::invalid_argument);
}

TEST(MetaDataset, DefaultScenarioYieldsThirteenRelevantPositives) {
  const auto bundle = mf::generate_scenario(mf::ScenarioConfig{});
  std::unordered_map<std::string, mf::MetaFeatureVector> feats;
  auto add = [&](const mf::Record& r) {
    mf::MetaFeatureVector f;
    f.l_ce = 0.5;
    feats.emplace(r.id, f);
  };
  const int colluding = bundle.colluding_client;
  for (const auto& r : bundle.relevant_pools[colluding].records) add(r);
  for (const auto& r : bundle.external_pools[colluding].records) add(r);
  for (const auto& r : bundle.challenge.records) add(r);

  const auto md = mf::build_meta_dataset(bundle, feats);
  ASSERT_EQ(md.X.size(), 23u + 20u + 73u);
  ASSERT_EQ(md.y.size(), md.X.size());
  ASSERT_EQ(md.ids.size(), md.X.size());

  int positives = 0;
  for (std::size_t i = 0; i < md.y.size(); ++i) {
    if (!md.y[i]) continue;
    ++positives;
    // Default scenario: the colluding client has no challenge members, so all
    // positives come from its relevant pool.
    EXPECT_EQ(md.ids[i].rfind("rel4_", 0), 0u) << md.ids[i];
  }
  EXPECT_EQ(positives, 13);

  std::set<std::string> unique(md.ids.begin(), md.ids.end());
  EXPECT_EQ(unique.size(), md.ids.size());
}

TEST(MetaDataset, ErrorsOnMissingInputs) {
  auto cfg = small_config();
  auto bundle = mf::generate_scenario(cfg);
  std::unordered_map<std::string, mf::MetaFeatureVector> feats;
  // No features at all -> first colluding record is reported.
  EXPECT_THROW(mf::build_meta_dataset(bundle, feats), std::invalid_argument);

  mf::MetaFeatureVector f;
  const int colluding = bundle.colluding_client;
  for (const auto& r : bundle.relevant_pools[colluding].records) feats.emplace(r.id, f);
  for (const auto& r : bundle.external_pools[colluding].records) feats.emplace(r.id, f);
  for (const auto& r : bundle.challenge.records) feats.emplace(r.id, f);

  // Ground truth stripped -> the colluding client's labels are unavailable.
  auto no_truth = bundle;
  no_truth.ground_truth.clear();
  no_truth.rebuild_truth_index();
  try {
    mf::build_meta_dataset(no_truth, feats);
    FAIL() << "expected missing-truth error";
  } catch (const std::invalid_argument& e) {
    EXPECT_NE(std::string(e.what()).find("ground truth"), std::string::npos);
  }

  // A colluding client with zero known members cannot train the meta model.
  auto cfg0 = cfg;
  cfg0.relevant_member_fractions[3] = 0.0;
  auto empty_bundle = mf::generate_scenario(cfg0);
  std::unordered_map<std::string, mf::MetaFeatureVector> feats0;
  for (const auto& r : empty_bundle.relevant_pools[colluding].records) feats0.emplace(r.id, f);
  for (const auto& r : empty_bundle.external_pools[colluding].records) feats0.emplace(r.id, f);
  for (const auto& r : empty_bundle.challenge.records) feats0.emplace(r.id, f);
  try {
    mf::build_meta_dataset(empty_bundle, feats0);
    FAIL() << "expected zero-member error";
  } catch (const std::invalid_argument& e) {
    EXPECT_NE(std::string(e.what()).find("no known members"), std::string::npos);
  }
}

// Meta features whose loss column alone separates the classes.
mf::MetaDataset separable_meta_set(int n, mf::Rng& rng) {
  mf::MetaDataset md;
  for (int i = 0; i < n; ++i) {
    const int label = i % 2;
    mf::MetaFeatureVector f;
    f.p_nn = rng.uniform();
    f.p_rf = rng.uniform();
    f.p_dt = rng.uniform();
    f.p_gb = rng.uniform();
    f.p_knn = rng.uniform();
    f.p_svm = rng.uniform();
    f.p_lr = rng.uniform();
    f.l_ce = label ? 0.1 + 0.3 * rng.uniform() : 1.0 + 0.5 * rng.uniform();
    md.X.push_back(f.flat());
    md.y.push_back(label);
    md.ids.push_back("m" + std::to_string(i));
  }
  return md;
}

TEST(MetaModel, FitsSeparableSetAndIsDeterministic) {
  mf::Rng rng(21);
  const auto md = separable_meta_set(60, rng);
  const auto model = mf::MetaModel::fit(md.X, md.y);
  int correct = 0;
  for (std::size_t i = 0; i < md.X.size(); ++i)
    correct += (model.score_flat(md.X[i]) >= 0.5 ? 1 : 0) == md.y[i];
  EXPECT_GE(correct, 57);  // >= 0.95 training accuracy

  const auto again = mf::MetaModel::fit(md.X, md.y);
  EXPECT_EQ(model.to_json(), again.to_json());
}

TEST(MetaModel, ZeroRoundsIsBaseRateAndSingleClassRejected) {
  mf::Rng rng(22);
  const auto md = separable_meta_set(40, rng);
  mf::BoostConfig none;
  none.rounds = 0;
  const auto constant = mf::MetaModel::fit(md.X, md.y, none);
  // 20 of 40 positive -> logit 0 -> probability one half everywhere.
  for (const auto& x : md.X) EXPECT_DOUBLE_EQ(constant.score_flat(x), 0.5);

  const std::vector<int> ones(md.y.size(), 1);
  EXPECT_THROW(mf::MetaModel::fit(md.X, ones), std::invalid_argument);
  EXPECT_THROW(mf::MetaModel::fit({}, {}), std::invalid_argument);
}

TEST(MetaModel, AdaptationLowersExternalScoresAndPreservesBase) {
  mf::Rng rng(23);
  const auto md = separable_meta_set(60, rng);
  const auto base = mf::MetaModel::fit(md.X, md.y);
  const auto base_snapshot = base.to_json();

  // External pools for two clients: all non-members, but with losses on both
  // sides of the learned boundary so the correction trees have real splits.
  auto mixed_externals = [&rng](int n) {
    mf::Matrix ext;
    for (int i = 0; i < n; ++i) {
      mf::MetaFeatureVector f;
      f.l_ce = i % 2 ? 0.1 + 0.3 * rng.uniform() : 1.0 + 0.5 * rng.uniform();
      ext.push_back(f.flat());
    }
    return ext;
  };
  const mf::Matrix ext_a = mixed_externals(16);
  const mf::Matrix ext_b = mixed_externals(16);

  auto mean_score = [](const mf::MetaModel& m, const mf::Matrix& X) {
    double s = 0.0;
    for (const auto& x : X) s += m.score_flat(x);
    return s / static_cast<double>(X.size());
  };

  const double before_a = mean_score(base, ext_a);
  const auto adapted_a = base.adapted(ext_a);
  const auto adapted_b = base.adapted(ext_b);
  EXPECT_LE(mean_score(adapted_a, ext_a), before_a);

  // Base model is untouched, bit for bit, and both variants extend it.
  EXPECT_EQ(base.to_json(), base_snapshot);
  EXPECT_EQ(base.ensemble().rounds(), 100);
  EXPECT_EQ(adapted_a.ensemble().rounds(), 120);
  EXPECT_EQ(adapted_b.ensemble().rounds(), 120);
  EXPECT_NE(adapted_a.to_json(), adapted_b.to_json());

  mf::AdaptConfig noop;
  noop.rounds = 0;
  const auto same = base.adapted(ext_a, noop);
  EXPECT_EQ(same.to_json(), base_snapshot);

  EXPECT_THROW(base.adapted({}), std::invalid_argument);
}

TEST(Percentile, PinnedExampleAndOracle) {
  std::vector<double> decimals;
  for (int i = 1; i <= 10; ++i) decimals.push_back(i / 10.0);
  EXPECT_NEAR(mf::percentile_linear(decimals, 55.0), 0.595, 1e-12);
  EXPECT_DOUBLE_EQ(mf::percentile_linear({3.0}, 55.0), 3.0);
  EXPECT_DOUBLE_EQ(mf::percentile_linear(decimals, 0.0), 0.1);
  EXPECT_DOUBLE_EQ(mf::percentile_linear(decimals, 100.0), 1.0);
  EXPECT_THROW(mf::percentile_linear({}, 55.0), std::invalid_argument);
  EXPECT_THROW(mf::percentile_linear({1.0}, -1.0), std::invalid_argument);
  EXPECT_THROW(mf::percentile_linear({1.0}, 100.5), std::invalid_argument);

  // Brute-force oracle: sort, split the fractional rank by hand.
  mf::Rng rng(31);
  for (int trial = 0; trial < 50; ++trial) {
    const int n = 1 + static_cast<int>(rng.uniform_index(100));
    std::vector<double> v;
    for (int i = 0; i < n; ++i) v.push_back(rng.gaussian());
    const double p = 100.0 * rng.uniform();

    std::vector<double> sorted = v;
    std::sort(sorted.begin(), sorted.end());
    const double rank = p * (n - 1) / 100.0;
    const int lo = static_cast<int>(std::floor(rank));
    const int hi = std::min(lo + 1, n - 1);
    const double expected = sorted[lo] * (1.0 - (rank - lo)) + sorted[hi] * (rank - lo);
    EXPECT_NEAR(mf::percentile_linear(v, p), expected, 1e-12);
  }
}

TEST(Decide, HandEvaluatedExamples) {
  const std::vector<int> clients = {0, 1, 2};
  mf::DecisionRuleConfig rule;

  auto one = mf::decide_with_thresholds({"x"}, {{0.9, 0.1, 0.1}}, clients, rule, {0.2, 0.2, 0.2});
  ASSERT_EQ(one.size(), 1u);
  EXPECT_EQ(one[0].assignment, 0);
  EXPECT_TRUE(one[0].column_ok);
  EXPECT_TRUE(one[0].row_ok);
  EXPECT_FALSE(one[0].leaked);

  // Flat score row: the cross-client ratio condition can never hold.
  auto flat = mf::decide_with_thresholds({"x"}, {{0.4, 0.4, 0.4}}, clients, rule, {0.2, 0.2, 0.2});
  EXPECT_EQ(flat[0].assignment, std::nullopt);
  EXPECT_TRUE(flat[0].column_ok);
  EXPECT_FALSE(flat[0].row_ok);

  // Argmax tie resolves to the lowest client index.
  auto tie = mf::decide_with_thresholds({"x"}, {{0.9, 0.9, 0.0}}, clients, rule, {0.2, 0.2, 0.2});
  EXPECT_EQ(tie[0].assignment, 0);

  // Strict inequality: equal to the threshold fails the column condition.
  auto edge = mf::decide_with_thresholds({"x"}, {{0.9, 0.0, 0.0}}, clients, rule, {0.9, 0.9, 0.9});
  EXPECT_EQ(edge[0].assignment, std::nullopt);
  EXPECT_FALSE(edge[0].column_ok);
  EXPECT_TRUE(edge[0].row_ok);
}

TEST(Decide, RejectsDegenerateShapes) {
  mf::DecisionRuleConfig rule;
  EXPECT_THROW(mf::decide({"x"}, {{0.5}}, {0}, rule), std::invalid_argument);
  EXPECT_THROW(mf::decide({"x"}, {{0.5, 0.2}, {0.1, 0.1}}, {0, 1}, rule), std::invalid_argument);
  EXPECT_THROW(mf::decide({"x"}, {{0.5, std::nan("")}}, {0, 1}, rule), std::invalid_argument);
  EXPECT_THROW(mf::decide_with_thresholds({"x"}, {{0.5, 0.2}}, {1, 0}, rule, {0.1, 0.1}),
               std::invalid_argument);
  mf::DecisionRuleConfig bad;
  bad.lambda = 0.5;
  EXPECT_THROW(mf::decide({"x"}, {{0.5, 0.2}}, {0, 1}, bad), std::invalid_argument);
}

TEST(Decide, MatchesBruteForceOracleOnRandomMatrices) {
  mf::Rng rng(47);
  for (int trial = 0; trial < 200; ++trial) {
    const int slots = 2 + static_cast<int>(rng.uniform_index(4));
    const int n = 3 + static_cast<int>(rng.uniform_index(30));
    mf::Matrix scores(n, std::vector<double>(slots));
    std::vector<std::string> ids;
    for (int r = 0; r < n; ++r) {
      ids.push_back("r" + std::to_string(r));
      for (int c = 0; c < slots; ++c) scores[r][c] = rng.uniform();
    }
    std::vector<int> clients(slots);
    for (int c = 0; c < slots; ++c) clients[c] = c;
    mf::DecisionRuleConfig rule;
    rule.percentile = 5.0 + 90.0 * rng.uniform();
    rule.lambda = 1.0 + rng.uniform();

    const auto got = mf::decide(ids, scores, clients, rule);

    // Independent evaluator, written directly from the rule statement.
    for (int r = 0; r < n; ++r) {
      int best = 0;
      for (int c = 1; c < slots; ++c)
        if (scores[r][c] > scores[r][best]) best = c;
      std::vector<double> column;
      for (int i = 0; i < n; ++i) column.push_back(scores[i][best]);
      std::sort(column.begin(), column.end());
      const double rank = rule.percentile * (n - 1) / 100.0;
      const int lo = static_cast<int>(rank);
      const int hi = std::min(lo + 1, n - 1);
      const double thr = column[lo] + (rank - lo) * (column[hi] - column[lo]);
      double mean = 0.0;
      for (int c = 0; c < slots; ++c) mean += scores[r][c];
      mean /= slots;
      const bool col_ok = scores[r][best] > thr;
      const bool row_ok = scores[r][best] > rule.lambda * mean;

      EXPECT_EQ(got[r].column_ok, col_ok) << "trial " << trial << " record " << r;
      EXPECT_EQ(got[r].row_ok, row_ok) << "trial " << trial << " record " << r;
      if (col_ok && row_ok)
        EXPECT_EQ(got[r].assignment, best) << "trial " << trial << " record " << r;
      else
        EXPECT_EQ(got[r].assignment, std::nullopt) << "trial " << trial << " record " << r;
    }
  }
}

TEST(Decide, RaisingLambdaNeverAddsAssignments) {
  mf::Rng rng(53);
  for (int trial = 0; trial < 20; ++trial) {
    const int n = 20;
    mf::Matrix scores(n, std::vector<double>(3));
    std::vector<std::string> ids;
    for (int r = 0; r < n; ++r) {
      ids.push_back("r" + std::to_string(r));
      for (auto& s : scores[r]) s = rng.uniform();
    }
    std::set<std::string> prev_assigned;
    bool first = true;
    for (double lambda : {1.0, 1.2, 1.5, 2.0, 2.9}) {
      mf::DecisionRuleConfig rule;
      rule.lambda = lambda;
      std::set<std::string> assigned;
      for (const auto& d : mf::decide(ids, scores, {0, 1, 2}, rule))
        if (d.assignment) assigned.insert(d.record_id);
      if (!first)
        for (const auto& id : assigned) EXPECT_TRUE(prev_assigned.count(id)) << id;
      prev_assigned = std::move(assigned);
      first = false;
    }
  }
}

TEST(Decide, ScaleInvarianceUnderCommonFactor) {
  mf::Rng rng(59);
  const int n = 25;
  mf::Matrix scores(n, std::vector<double>(3));
  std::vector<std::string> ids;
  for (int r = 0; r < n; ++r) {
    ids.push_back("r" + std::to_string(r));
    for (auto& s : scores[r]) s = rng.uniform();
  }
  mf::DecisionRuleConfig rule;
  const auto thr = mf::column_thresholds(scores, rule.percentile);
  const auto base = mf::decide_with_thresholds(ids, scores, {0, 1, 2}, rule, thr);

  // Power-of-two factor keeps the arithmetic exact.
  const double k = 4.0;
  auto scaled = scores;
  for (auto& row : scaled)
    for (auto& s : row) s *= k;
  auto thr_scaled = thr;
  for (auto& t : thr_scaled) t *= k;
  const auto after = mf::decide_with_thresholds(ids, scaled, {0, 1, 2}, rule, thr_scaled);
  for (int r = 0; r < n; ++r) {
    EXPECT_EQ(base[r].assignment, after[r].assignment);
    EXPECT_EQ(base[r].column_ok, after[r].column_ok);
    EXPECT_EQ(base[r].row_ok, after[r].row_ok);
  }
}

TEST(RunAttack, EndToEndOnOverfitOracles) {
  const auto cfg = small_config();
  const auto bundle = mf::generate_scenario(cfg);
  const auto oracles = fake_oracles(bundle);

  mf::AttackConfig attack;
  attack.seed = 5;
  const auto res = mf::run_attack(bundle, oracles, attack);

  ASSERT_EQ(res.decisions.size(), bundle.challenge.records.size());
  ASSERT_EQ(res.target_clients, (std::vector<int>{0, 1, 2}));
  ASSERT_EQ(res.thresholds.size(), 3u);

  // Structural invariant: an assignment implies both conditions and argmax.
  for (const auto& d : res.decisions) {
    EXPECT_FALSE(d.leaked);  // colluding client has no challenge members here
    if (!d.assignment) continue;
    EXPECT_TRUE(d.column_ok);
    EXPECT_TRUE(d.row_ok);
    std::size_t best = 0;
    for (std::size_t c = 1; c < d.client_scores.size(); ++c)
      if (d.client_scores[c] > d.client_scores[best]) best = c;
    EXPECT_EQ(*d.assignment, res.target_clients[best]);
  }

  // With near-perfectly separable oracles the attack should be well above the
  // 1/(clients) random floor of 0.25.
  std::vector<mf::Assignment> assignments;
  std::vector<mf::LabeledMembership> truth;
  for (const auto& d : res.decisions) {
    assignments.emplace_back(d.record_id, d.assignment);
    truth.push_back({d.record_id, bundle.member_of(d.record_id)});
  }
  EXPECT_GE(mf::challenge_accuracy(assignments, truth), 0.75);

  // Provenance carries seeds, rule, thresholds, estimator hyperparameters.
  EXPECT_EQ(res.provenance.at("seed").get<std::uint64_t>(), 5u);
  EXPECT_EQ(res.provenance.at("colluding_client").get<int>(), 3);
  EXPECT_DOUBLE_EQ(res.provenance.at("rule").at("percentile").get<double>(), 55.0);
  EXPECT_EQ(res.provenance.at("thresholds").size(), 3u);
  for (int c = 1; c <= 3; ++c) {
    const auto t = res.provenance.at("thresholds").at("client_" + std::to_string(c));
    EXPECT_TRUE(std::isfinite(t.get<double>()));
  }
  EXPECT_EQ(res.provenance.at("estimator_seeds").size(), 4u);
  EXPECT_EQ(res.provenance.at("estimator_seeds").at("client_1").size(), 7u);
  EXPECT_TRUE(res.provenance.contains("estimators"));

  // Determinism: the whole pipeline replays byte-identically.
  const auto replay = mf::run_attack(bundle, oracles, attack);
  EXPECT_EQ(mf::decisions_to_csv(res.decisions, res.target_clients),
            mf::decisions_to_csv(replay.decisions, replay.target_clients));
  EXPECT_EQ(res.provenance, replay.provenance);
}

TEST(RunAttack, LeakedChallengeRecordsBypassTheRule) {
  auto cfg = small_config();
  cfg.challenge_members = {2, 2, 2, 3};
  cfg.relevant_member_fractions[3] = 0.25;  // leaves room for 3 challenge loans
  const auto bundle = mf::generate_scenario(cfg);
  const auto oracles = fake_oracles(bundle);

  mf::AttackConfig attack;
  attack.seed = 6;
  const auto res = mf::run_attack(bundle, oracles, attack);

  int leaked = 0;
  for (const auto& d : res.decisions) {
    if (!d.leaked) continue;
    ++leaked;
    EXPECT_EQ(d.assignment, bundle.colluding_client);
    EXPECT_TRUE(d.client_scores.empty());
    EXPECT_EQ(bundle.member_of(d.record_id), bundle.colluding_client);
  }
  EXPECT_EQ(leaked, 3);

  const auto csv = mf::decisions_to_csv(res.decisions, res.target_clients);
  EXPECT_NE(csv.find("record_id,p_c1,p_c2,p_c3,assignment,column_ok,row_ok\n"), std::string::npos);
  // Leaked rows keep empty score cells and land on the colluding client.
  EXPECT_NE(csv.find(",,,,3,1,1\n"), std::string::npos);
}

TEST(RunAttack, StageErrorsCarryTheStageTag) {
  const auto cfg = small_config();
  const auto bundle = mf::generate_scenario(cfg);
  auto oracles = fake_oracles(bundle);
  oracles[1] = [](const mf::Record&) { return std::vector<double>{1.0}; };

  mf::AttackConfig attack;
  try {
    mf::run_attack(bundle, oracles, attack);
    FAIL() << "expected stage-tagged error";
  } catch (const std::runtime_error& e) {
    const std::string msg = e.what();
    EXPECT_NE(msg.find("attack stage 'estimators'"), std::string::npos) << msg;
    EXPECT_NE(msg.find("client 2"), std::string::npos) << msg;
  }

  EXPECT_THROW(mf::run_attack(bundle, {}, attack), std::invalid_argument);
}

}  // namespace
