#include "miaforge/metrics.hpp"

#include <gtest/gtest.h>

#include <set>

namespace mf = miaforge;

namespace {

TEST(ChallengeAccuracy, ExactMatchFraction) {
  std::vector<mf::LabeledMembership> truth = {
      {"a", 0}, {"b", 1}, {"c", std::nullopt}, {"d", 2}};
  std::vector<mf::Assignment> all_right = {
      {"a", 0}, {"b", 1}, {"c", std::nullopt}, {"d", 2}};
  EXPECT_DOUBLE_EQ(mf::challenge_accuracy(all_right, truth), 1.0);

  std::vector<mf::Assignment> one_wrong = {
      {"a", 0}, {"b", 1}, {"c", 3}, {"d", 2}};
  EXPECT_DOUBLE_EQ(mf::challenge_accuracy(one_wrong, truth), 0.75);
}

TEST(ChallengeAccuracy, RejectsMismatchedIds) {
  std::vector<mf::LabeledMembership> truth = {{"a", 0}, {"b", 1}};
  std::vector<mf::Assignment> missing = {{"a", 0}, {"zzz", 1}};
  EXPECT_THROW(mf::challenge_accuracy(missing, truth), std::invalid_argument);
  std::vector<mf::Assignment> short_list = {{"a", 0}};
  EXPECT_THROW(mf::challenge_accuracy(short_list, truth), std::invalid_argument);
  std::vector<mf::Assignment> dup = {{"a", 0}, {"a", 1}};
  EXPECT_THROW(mf::challenge_accuracy(dup, truth), std::invalid_argument);
}

TEST(FoldPlan, StratifiedKeepsPerFoldClassCountsTight) {
  // 13 positives among 116 records over 5 folds: positives per fold must be
  // 2 or 3, negatives 20 or 21.
  std::vector<int> labels(116, 0);
  for (int i = 0; i < 13; ++i) labels[i * 8] = 1;
  const auto plan = mf::FoldPlan::make(labels, 5, true, 42);
  ASSERT_EQ(plan.fold_of.size(), labels.size());
  std::vector<int> pos(5, 0), neg(5, 0);
  for (std::size_t i = 0; i < labels.size(); ++i) {
    ASSERT_GE(plan.fold_of[i], 0);
    ASSERT_LT(plan.fold_of[i], 5);
    (labels[i] ? pos : neg)[plan.fold_of[i]]++;
  }
  for (int f = 0; f < 5; ++f) {
    EXPECT_GE(pos[f], 2) << "fold " << f;
    EXPECT_LE(pos[f], 3) << "fold " << f;
    EXPECT_GE(neg[f], 20) << "fold " << f;
    EXPECT_LE(neg[f], 21) << "fold " << f;
  }
}

TEST(FoldPlan, DeterministicAndSeedSensitive) {
  std::vector<int> labels(40);
  for (std::size_t i = 0; i < labels.size(); ++i) labels[i] = i % 2;
  const auto a = mf::FoldPlan::make(labels, 5, true, 7);
  const auto b = mf::FoldPlan::make(labels, 5, true, 7);
  const auto c = mf::FoldPlan::make(labels, 5, true, 8);
  EXPECT_EQ(a.fold_of, b.fold_of);
  EXPECT_NE(a.fold_of, c.fold_of);
}

TEST(FoldPlan, RejectsBadK) {
  std::vector<int> labels = {0, 1, 0, 1};
  EXPECT_THROW(mf::FoldPlan::make(labels, 1, true, 0), std::invalid_argument);
  EXPECT_THROW(mf::FoldPlan::make(labels, 5, true, 0), std::invalid_argument);
}

TEST(OofScores, NoModelEverScoresItsOwnTrainingRecord) {
  mf::Matrix X;
  std::vector<int> y;
  for (int i = 0; i < 30; ++i) {
    X.push_back({static_cast<double>(i)});
    y.push_back(i % 2);
  }
  const auto plan = mf::FoldPlan::make(y, 5, true, 3);
  // The "model" memorizes its training rows and flags membership; out-of-fold
  // evaluation must therefore never see a 1.
  auto fit = [](const mf::Matrix& tx, const std::vector<int>&) {
    std::set<std::vector<double>> seen(tx.begin(), tx.end());
    return [seen](const std::vector<double>& x) {
      return seen.count(x) ? 1.0 : 0.0;
    };
  };
  for (double s : mf::oof_scores(X, y, plan, fit)) EXPECT_EQ(s, 0.0);
}

TEST(OofScores, ConstantPipelineGivesIdenticalScores) {
  mf::Matrix X(12, {0.0});
  std::vector<int> y;
  for (int i = 0; i < 12; ++i) y.push_back(i % 2);
  const auto plan = mf::FoldPlan::make(y, 4, true, 1);
  auto fit = [](const mf::Matrix&, const std::vector<int>&) {
    return [](const std::vector<double>&) { return 0.375; };
  };
  for (double s : mf::oof_scores(X, y, plan, fit)) EXPECT_DOUBLE_EQ(s, 0.375);
}

TEST(OofScores, LeaveOneOutOnSixRecords) {
  mf::Matrix X;
  std::vector<int> y = {0, 1, 0, 1, 0, 1};
  for (int i = 0; i < 6; ++i) X.push_back({static_cast<double>(i)});
  // Leave-one-out needs plain round-robin dealing, not stratified.
  const auto plan = mf::FoldPlan::make(y, 6, false, 5);
  auto fit = [](const mf::Matrix& tx, const std::vector<int>&) {
    const std::size_t n = tx.size();
    return [n](const std::vector<double>&) { return static_cast<double>(n); };
  };
  for (double s : mf::oof_scores(X, y, plan, fit)) EXPECT_DOUBLE_EQ(s, 5.0);
}

TEST(OofScores, SingleClassSplitSuggestsSmallerK) {
  mf::Matrix X;
  std::vector<int> y = {1, 0, 0, 0, 0, 0};
  for (int i = 0; i < 6; ++i) X.push_back({static_cast<double>(i)});
  const auto plan = mf::FoldPlan::make(y, 2, true, 0);
  auto fit = [](const mf::Matrix&, const std::vector<int>&) {
    return [](const std::vector<double>&) { return 0.0; };
  };
  try {
    mf::oof_scores(X, y, plan, fit);
    FAIL() << "expected single-class error";
  } catch (const std::runtime_error& e) {
    EXPECT_NE(std::string(e.what()).find("smaller k"), std::string::npos) << e.what();
  }
}

TEST(TprAtFpr, HandEnumeratedExample) {
  const std::vector<double> scores = {0.9, 0.8, 0.85, 0.2, 0.1};
  const std::vector<int> labels = {1, 1, 0, 0, 0};
  // Threshold 0.8 admits one false positive of three (FPR 1/3 <= 0.34) while
  // catching both members.
  EXPECT_DOUBLE_EQ(mf::tpr_at_fpr(scores, labels, 0.34), 1.0);
  EXPECT_DOUBLE_EQ(mf::tpr_at_fpr(scores, labels, 0.0), 0.5);
}

TEST(TprAtFpr, PerfectSeparationAtZeroBudget) {
  const std::vector<double> scores = {0.9, 0.8, 0.3, 0.2};
  const std::vector<int> labels = {1, 1, 0, 0};
  EXPECT_DOUBLE_EQ(mf::tpr_at_fpr(scores, labels, 0.0), 1.0);
}

TEST(TprAtFpr, FprGranularityFollowsNegativeCount) {
  // With 103 negatives every achievable FPR is a multiple of 1/103.
  mf::Rng rng(9);
  std::vector<double> scores;
  std::vector<int> labels;
  for (int i = 0; i < 13; ++i) {
    scores.push_back(rng.uniform());
    labels.push_back(1);
  }
  for (int i = 0; i < 103; ++i) {
    scores.push_back(rng.uniform());
    labels.push_back(0);
  }
  for (const auto& p : mf::roc_points(scores, labels)) {
    const double steps = p.fpr * 103.0;
    EXPECT_NEAR(steps, std::round(steps), 1e-9);
  }
}

TEST(TprAtFpr, MonotoneInBudgetAndMatchesBruteForce) {
  mf::Rng rng(17);
  for (int trial = 0; trial < 30; ++trial) {
    const int n = 10 + static_cast<int>(rng.uniform_index(41));
    std::vector<double> scores;
    std::vector<int> labels;
    for (int i = 0; i < n; ++i) {
      // Coarse grid forces plenty of score ties.
      scores.push_back(std::floor(rng.uniform() * 8.0) / 8.0);
      labels.push_back(i < 2 ? i : static_cast<int>(rng.uniform_index(2)));
    }
    double pos = 0.0, neg = 0.0;
    for (int v : labels) (v ? pos : neg) += 1.0;

    double prev = -1.0;
    for (double budget : {0.0, 0.05, 0.1, 0.25, 0.5, 0.75, 1.0}) {
      // Independent brute force: evaluate every distinct threshold directly.
      double expected = 0.0;
      std::set<double> distinct(scores.begin(), scores.end());
      for (double t : distinct) {
        double tp = 0.0, fp = 0.0;
        for (std::size_t i = 0; i < scores.size(); ++i)
          if (scores[i] >= t) (labels[i] ? tp : fp) += 1.0;
        if (fp / neg <= budget) expected = std::max(expected, tp / pos);
      }
      const double got = mf::tpr_at_fpr(scores, labels, budget);
      EXPECT_DOUBLE_EQ(got, expected) << "trial " << trial << " budget " << budget;
      EXPECT_GE(got, prev);
      prev = got;
    }
  }
}

TEST(RocAuc, KnownCases) {
  EXPECT_DOUBLE_EQ(mf::roc_auc({0.9, 0.8, 0.2, 0.1}, {1, 1, 0, 0}), 1.0);
  EXPECT_DOUBLE_EQ(mf::roc_auc({0.5, 0.5, 0.5, 0.5}, {1, 1, 0, 0}), 0.5);
  EXPECT_DOUBLE_EQ(mf::roc_auc({0.1, 0.9}, {1, 0}), 0.0);
}

TEST(NormalCdf, MatchesTableOracle) {
  // Reference values computed independently with 25-digit arithmetic.
  const std::vector<std::pair<double, double>> table = {
      {-4.0, 0.00003167124183311992}, {-3.0, 0.001349898031630095},
      {-2.5, 0.006209665325776135},   {-2.0, 0.02275013194817921},
      {-1.5, 0.06680720126885807},    {-1.0, 0.1586552539314571},
      {-0.5, 0.3085375387259869},     {-0.25, 0.4012936743170763},
      {0.0, 0.5},                     {0.25, 0.5987063256829237},
      {0.5, 0.6914624612740131},      {0.675, 0.7501621175282230},
      {1.0, 0.8413447460685429},      {1.5, 0.9331927987311419},
      {1.96, 0.9750021048517796},     {2.0, 0.9772498680518208},
      {2.5, 0.9937903346742239},      {3.0, 0.9986501019683699},
      {3.5, 0.9997673709209645},      {4.0, 0.9999683287581669}};
  ASSERT_EQ(table.size(), 20u);
  for (const auto& [z, phi] : table) EXPECT_NEAR(mf::normal_cdf(z), phi, 1e-7) << z;
}

TEST(ZTest, ReproducesHeadlineComparison) {
  const auto r = mf::two_proportion_z(0.5342, 0.3014, 73, 73);
  EXPECT_NEAR(r.z, 2.84, 0.02);
  EXPECT_NEAR(r.z, 2.851734500805512, 1e-12);
  EXPECT_LT(r.p_value, 0.01);
  EXPECT_NEAR(r.p_value, 0.004348140114545521, 1e-12);
}

TEST(ZTest, PooledFormulaOnSecondComparison) {
  const auto r = mf::two_proportion_z(0.3836, 0.2877, 73, 73);
  EXPECT_NEAR(r.z, 1.226939770187946, 1e-12);
}

TEST(ZTest, SymmetryAndDegeneracy) {
  EXPECT_DOUBLE_EQ(mf::two_proportion_z(0.25, 0.25, 40, 40).z, 0.0);
  const auto a = mf::two_proportion_z(0.5, 0.25, 40, 80);
  const auto b = mf::two_proportion_z(0.25, 0.5, 80, 40);
  EXPECT_DOUBLE_EQ(a.z, -b.z);
  EXPECT_DOUBLE_EQ(a.p_value, b.p_value);
  EXPECT_THROW(mf::two_proportion_z(0.0, 0.0, 10, 10), std::invalid_argument);
  EXPECT_THROW(mf::two_proportion_z(1.0, 1.0, 10, 10), std::invalid_argument);
  EXPECT_THROW(mf::two_proportion_z(0.5, 0.5, 0, 10), std::invalid_argument);
}

TEST(RocCsv, ExportsHeaderAndPoints) {
  const auto csv = mf::roc_to_csv(mf::roc_points({0.9, 0.1}, {1, 0}));
  EXPECT_EQ(csv, "threshold,fpr,tpr\n0.90000000000000002,0,1\n0.10000000000000001,1,1\n");
}

}  // namespace
