#include "miaforge/targets.hpp"

#include <gtest/gtest.h>

#include <filesystem>

namespace mf = miaforge;

namespace {

mf::Dataset small_dataset(int n, int classes, int dim, std::uint64_t seed) {
  mf::Rng rng(seed);
  mf::Dataset ds;
  ds.classes = classes;
  for (int i = 0; i < n; ++i) {
    mf::Record r;
    r.id = "r" + std::to_string(i);
    r.task_label = i % classes;
    r.features.resize(dim);
    for (auto& f : r.features) f = rng.gaussian() + 2.0 * r.task_label;
    ds.records.push_back(std::move(r));
  }
  return ds;
}

mf::Dataset scenario_train_set() {
  mf::ScenarioConfig cfg;
  cfg.seed = 11;
  return mf::generate_scenario(cfg).train_sets[0];
}

double numeric_gradient(mf::TargetModel m, const mf::Record& rec, std::size_t j) {
  const double h = 1e-5;
  const double orig = m.params[j];
  m.params[j] = orig + h;
  const double up = mf::cross_entropy_loss(m.predict(rec.features), rec.task_label);
  m.params[j] = orig - h;
  const double down = mf::cross_entropy_loss(m.predict(rec.features), rec.task_label);
  return (up - down) / (2.0 * h);
}

void check_gradient(mf::Architecture arch) {
  const auto ds = small_dataset(3, 3, 5, 99);
  auto model = mf::init_model(arch, 3, 5, 8, 1234);
  if (arch == mf::Architecture::Logistic) {
    // Move away from the all-zero point where softmax gradients are too tame.
    mf::Rng rng(5);
    for (auto& p : model.params) p = 0.3 * rng.gaussian();
  }
  std::vector<double> grad;
  for (const auto& rec : ds.records) {
    mf::detail::per_sample_gradient(model, rec, grad);
    ASSERT_EQ(grad.size(), model.params.size());
    for (std::size_t j = 0; j < grad.size(); ++j) {
      const double num = numeric_gradient(model, rec, j);
      const double denom = std::max({std::abs(num), std::abs(grad[j]), 1.0});
      EXPECT_NEAR(grad[j], num, 1e-4 * denom) << "param " << j;
    }
  }
}

TEST(Gradients, LogisticMatchesFiniteDifferences) {
  check_gradient(mf::Architecture::Logistic);
}

TEST(Gradients, MlpMatchesFiniteDifferences) {
  check_gradient(mf::Architecture::Mlp);
}

TEST(Clipping, ScaledGradientNeverExceedsBound) {
  mf::Rng rng(3);
  for (int trial = 0; trial < 200; ++trial) {
    std::vector<double> g(10);
    double sq = 0.0;
    for (auto& v : g) {
      v = 10.0 * rng.gaussian();
      sq += v * v;
    }
    const double norm = std::sqrt(sq);
    const double clip = 2.0;
    const double scale = mf::clipped_scale(norm, clip);
    EXPECT_LE(norm * scale, clip + 1e-9);
    if (norm <= clip) EXPECT_EQ(scale, 1.0);
  }
  EXPECT_EQ(mf::clipped_scale(123.0, std::numeric_limits<double>::infinity()), 1.0);
  EXPECT_EQ(mf::clipped_scale(0.0, 2.0), 1.0);
}

TEST(Training, PrivatePathWithNoNoiseAndInfiniteClipMatchesPlainBitExactly) {
  const auto ds = scenario_train_set();
  mf::TrainConfig cfg;
  cfg.epochs = 12;
  cfg.seed = 21;
  const auto plain = mf::train_plain(ds, cfg);
  mf::PrivacyConfig priv;
  priv.noise_multiplier = 0.0;
  priv.clip_norm = std::numeric_limits<double>::infinity();
  const auto dp = mf::train_dp_sgd(ds, cfg, priv);
  ASSERT_EQ(plain.model.params.size(), dp.model.params.size());
  for (std::size_t i = 0; i < plain.model.params.size(); ++i)
    EXPECT_EQ(plain.model.params[i], dp.model.params[i]) << "param " << i;
  EXPECT_EQ(plain.epoch_objective, dp.epoch_objective);
  EXPECT_EQ(plain.steps, dp.steps);
}

TEST(Training, LearnsSeparableScenarioData) {
  const auto ds = scenario_train_set();
  mf::TrainConfig cfg;
  cfg.seed = 4;
  const auto res = mf::train_plain(ds, cfg);
  EXPECT_EQ(res.epoch_objective.size(), 100u);
  EXPECT_LT(res.epoch_objective.back(), res.epoch_objective.front());
  EXPECT_GE(mf::dataset_accuracy(res.model, ds), 0.95);
}

TEST(Training, StepCountMatchesBatchPlan) {
  const auto ds = scenario_train_set();
  ASSERT_EQ(ds.size(), 40u);
  mf::TrainConfig cfg;
  cfg.epochs = 3;
  // ceil(40/15) = 3 records per batch, ceil(40/3) = 14 steps per epoch.
  EXPECT_EQ(mf::planned_steps(ds.size(), cfg), 3 * 14);
  const auto res = mf::train_plain(ds, cfg);
  EXPECT_EQ(res.steps, 3 * 14);
}

TEST(Training, HeavyNoiseDegradesAccuracy) {
  const auto ds = scenario_train_set();
  mf::TrainConfig cfg;
  cfg.seed = 4;
  const auto plain = mf::train_plain(ds, cfg);
  mf::PrivacyConfig priv;
  priv.noise_multiplier = 20.0;
  priv.clip_norm = 2.0;
  const auto noisy = mf::train_dp_sgd(ds, cfg, priv);
  EXPECT_GT(mf::dataset_accuracy(plain.model, ds) -
                mf::dataset_accuracy(noisy.model, ds),
            0.2);
}

TEST(Training, ClippingAloneChangesTrajectory) {
  const auto ds = scenario_train_set();
  mf::TrainConfig cfg;
  cfg.epochs = 5;
  cfg.seed = 8;
  const auto plain = mf::train_plain(ds, cfg);
  mf::PrivacyConfig priv;
  priv.noise_multiplier = 0.0;
  priv.clip_norm = 0.05;
  const auto clipped = mf::train_dp_sgd(ds, cfg, priv);
  bool any_diff = false;
  for (std::size_t i = 0; i < plain.model.params.size(); ++i)
    if (plain.model.params[i] != clipped.model.params[i]) any_diff = true;
  EXPECT_TRUE(any_diff);
}

TEST(Training, DivergenceNamesTheEpoch) {
  const auto ds = small_dataset(12, 3, 4, 2);
  mf::TrainConfig cfg;
  cfg.architecture = mf::Architecture::Mlp;
  cfg.hidden_width = 8;
  cfg.learning_rate = 1e9;
  cfg.epochs = 5;
  try {
    mf::train_plain(ds, cfg);
    FAIL() << "expected divergence";
  } catch (const mf::TrainingError& e) {
    EXPECT_NE(std::string(e.what()).find("epoch"), std::string::npos) << e.what();
  }
}

TEST(Training, WarmStartResumesFromGivenParameters) {
  const auto ds = scenario_train_set();
  mf::TrainConfig cfg;
  cfg.epochs = 40;
  cfg.seed = 17;
  const auto first = mf::train_plain(ds, cfg);
  mf::TrainConfig more = cfg;
  more.epochs = 1;
  const auto resumed = mf::train_plain(ds, more, &first.model);
  // One extra epoch from a converged point stays close to the converged
  // objective instead of restarting from scratch.
  EXPECT_LT(resumed.epoch_objective.front(), first.epoch_objective.front());
  EXPECT_NEAR(resumed.epoch_objective.front(), first.epoch_objective.back(), 0.1);
}

TEST(Training, SameSeedIsDeterministicDifferentSeedIsNot) {
  const auto ds = scenario_train_set();
  mf::TrainConfig cfg;
  cfg.epochs = 6;
  cfg.seed = 30;
  const auto a = mf::train_plain(ds, cfg);
  const auto b = mf::train_plain(ds, cfg);
  EXPECT_EQ(a.model.params, b.model.params);
  cfg.seed = 31;
  const auto c = mf::train_plain(ds, cfg);
  EXPECT_NE(a.model.params, c.model.params);
}

TEST(Loss, FloorsProbabilitiesAtTinyConstant) {
  EXPECT_DOUBLE_EQ(mf::cross_entropy_loss({0.0, 1.0}, 0), -std::log(1e-12));
  EXPECT_DOUBLE_EQ(mf::cross_entropy_loss({0.25, 0.75}, 1), -std::log(0.75));
  EXPECT_THROW(mf::cross_entropy_loss({0.5, 0.5}, 2), std::invalid_argument);
}

TEST(Model, PredictionsAreProbabilityRows) {
  const auto ds = small_dataset(6, 4, 7, 44);
  mf::TrainConfig cfg;
  cfg.epochs = 2;
  cfg.architecture = mf::Architecture::Mlp;
  cfg.hidden_width = 16;
  const auto res = mf::train_plain(ds, cfg);
  const auto pm = mf::predict_proba(res.model, ds);
  ASSERT_EQ(pm.size(), ds.size());
  for (const auto& row : pm.probs) {
    double sum = 0.0;
    for (double p : row) {
      EXPECT_GE(p, 0.0);
      sum += p;
    }
    EXPECT_NEAR(sum, 1.0, 1e-12);
  }
}

TEST(Model, JsonRoundTripIsBitExact) {
  const auto ds = small_dataset(10, 3, 5, 77);
  mf::TrainConfig cfg;
  cfg.epochs = 3;
  cfg.architecture = mf::Architecture::Mlp;
  cfg.hidden_width = 4;
  const auto res = mf::train_plain(ds, cfg);
  const auto path =
      (std::filesystem::path(::testing::TempDir()) / "model_roundtrip.json").string();
  mf::save_model(res.model, path);
  const auto loaded = mf::load_model(path);
  EXPECT_EQ(loaded.arch, res.model.arch);
  EXPECT_EQ(loaded.params, res.model.params);
  for (const auto& r : ds.records)
    EXPECT_EQ(loaded.predict(r.features), res.model.predict(r.features));
}

TEST(Model, RejectsInvalidConfigs) {
  const auto ds = scenario_train_set();
  mf::TrainConfig cfg;
  cfg.epochs = 0;
  EXPECT_THROW(mf::train_plain(ds, cfg), std::invalid_argument);
  cfg = mf::TrainConfig{};
  mf::PrivacyConfig priv;
  priv.clip_norm = -1.0;
  EXPECT_THROW(mf::train_dp_sgd(ds, cfg, priv), std::invalid_argument);
  priv = mf::PrivacyConfig{};
  priv.delta = 1.5;
  EXPECT_THROW(mf::train_dp_sgd(ds, cfg, priv), std::invalid_argument);
}

}  // namespace
