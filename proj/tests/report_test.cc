#include "miaforge/report.hpp"

#include <gtest/gtest.h>

#include <filesystem>

namespace mf = miaforge;
using nlohmann::json;

namespace {

std::string temp_path(const std::string& name) {
  return (std::filesystem::path(::testing::TempDir()) / name).string();
}

json valid_report() {
  json r;
  r["version"] = mf::kReportVersion;
  r["master_seed"] = 3;
  r["scenario"] = {{"clients", 4},
                   {"classes", 4},
                   {"challenge_size", 73},
                   {"random_floor", 19.0 / 73.0}};
  json tier;
  tier["name"] = "lowdp";
  tier["privacy"] = {{"epsilon", 200.0}, {"delta", 1e-5},   {"sigma", 2.3728},
                     {"clip_norm", 2.0}, {"steps_per_client", 1400}};
  tier["attacks"] = json::array();
  tier["attacks"].push_back({{"name", "stacking"},
                             {"challenge_accuracy", 0.5342},
                             {"decisions_file", "lowdp/decisions_stacking.csv"},
                             {"tpr_at_fpr", {{"0.01", 0.1538}, {"0.03", 0.2307}}},
                             {"auc", 0.71}});
  tier["attacks"].push_back({{"name", "external_profile"},
                             {"challenge_accuracy", 0.3014},
                             {"decisions_file", "lowdp/decisions_external_profile.csv"}});
  tier["z_tests"] = json::array();
  tier["z_tests"].push_back({{"baseline", "external_profile"}, {"z", 2.8518}, {"p_value", 0.004}});
  tier["fl"] = json::array();
  tier["fl"].push_back({{"local_epochs", 1},
                        {"rounds", 50},
                        {"final_accuracy", 0.9},
                        {"curve_file", "lowdp/fl_curve_e1.csv"}});
  tier["provenance"] = {{"seed", 11}};
  r["tiers"] = json::array({tier});
  return r;
}

std::string validate_error(const json& r) {
  try {
    mf::validate_report(r);
  } catch (const std::runtime_error& e) {
    return e.what();
  }
  return "";
}

}  // namespace

TEST(ReportSchema, ValidReportPasses) {
  EXPECT_NO_THROW(mf::validate_report(valid_report()));
}

TEST(ReportSchema, MissingFieldsAreNamedByPath) {
  auto r = valid_report();
  r.erase("version");
  EXPECT_EQ(validate_error(r), "report schema: missing field 'version'");

  r = valid_report();
  r["scenario"].erase("random_floor");
  EXPECT_EQ(validate_error(r), "report schema: missing field 'scenario.random_floor'");

  r = valid_report();
  r["tiers"][0]["privacy"].erase("sigma");
  EXPECT_EQ(validate_error(r), "report schema: missing field 'tiers[0].privacy.sigma'");

  r = valid_report();
  r["tiers"][0]["attacks"][1].erase("decisions_file");
  EXPECT_EQ(validate_error(r), "report schema: missing field 'tiers[0].attacks[1].decisions_file'");

  r = valid_report();
  r["tiers"][0]["z_tests"][0].erase("p_value");
  EXPECT_EQ(validate_error(r), "report schema: missing field 'tiers[0].z_tests[0].p_value'");

  r = valid_report();
  r["tiers"][0]["fl"][0].erase("curve_file");
  EXPECT_EQ(validate_error(r), "report schema: missing field 'tiers[0].fl[0].curve_file'");

  r = valid_report();
  r["tiers"][0].erase("provenance");
  EXPECT_EQ(validate_error(r), "report schema: missing field 'tiers[0].provenance'");
}

TEST(ReportSchema, RocBlockIsOptionalButCompleteWhenPresent) {
  auto r = valid_report();
  // The external-profile row has no ROC block at all; that is fine.
  EXPECT_NO_THROW(mf::validate_report(r));

  r["tiers"][0]["attacks"][0]["tpr_at_fpr"].erase("0.03");
  EXPECT_EQ(validate_error(r),
            "report schema: missing field 'tiers[0].attacks[0].tpr_at_fpr.0.03'");

  r = valid_report();
  r["tiers"][0]["attacks"][0].erase("auc");
  EXPECT_EQ(validate_error(r), "report schema: missing field 'tiers[0].attacks[0].auc'");
}

TEST(ReportSchema, RangeAndShapeViolationsAreRejected) {
  auto r = valid_report();
  r["scenario"]["random_floor"] = 1.2;
  EXPECT_NE(validate_error(r).find("must lie in [0,1]"), std::string::npos);

  r = valid_report();
  r["tiers"] = json::array();
  EXPECT_NE(validate_error(r).find("'tiers' must be a non-empty array"), std::string::npos);

  r = valid_report();
  r["tiers"][0]["attacks"] = json::array();
  EXPECT_NE(validate_error(r).find("attacks' must be a non-empty array"), std::string::npos);

  r = valid_report();
  r["tiers"][0]["privacy"]["delta"] = "tiny";
  EXPECT_NE(validate_error(r).find("must be a number"), std::string::npos);
}

TEST(ReportSchema, NullEpsilonAndNullZAreAllowed) {
  auto r = valid_report();
  r["tiers"][0]["privacy"]["epsilon"] = nullptr;
  r["tiers"][0]["z_tests"][0]["z"] = nullptr;
  r["tiers"][0]["z_tests"][0]["p_value"] = nullptr;
  EXPECT_NO_THROW(mf::validate_report(r));
}

TEST(ReportRender, KeyInsertionOrderDoesNotChangeBytes) {
  auto a = valid_report();
  // Build the same document inserting top-level keys in reverse order.
  json b;
  b["tiers"] = a["tiers"];
  b["scenario"] = a["scenario"];
  b["master_seed"] = a["master_seed"];
  b["version"] = a["version"];
  EXPECT_EQ(mf::render_report(a), mf::render_report(b));
  EXPECT_EQ(mf::render_report(a).back(), '\n');
}

TEST(ReportRender, EmitLoadRoundTripsExactly) {
  const auto path = temp_path("report_roundtrip.json");
  const auto r = valid_report();
  mf::emit_report(r, path);
  const auto loaded = mf::load_report(path);
  EXPECT_EQ(loaded, r);
  mf::emit_report(loaded, path + ".2");
  EXPECT_EQ(mf::read_lines(path), mf::read_lines(path + ".2"));
}

TEST(ReportRender, EmitRefusesInvalidDocument) {
  auto r = valid_report();
  r.erase("scenario");
  const auto path = temp_path("report_invalid.json");
  EXPECT_THROW(mf::emit_report(r, path), std::runtime_error);
  EXPECT_FALSE(std::filesystem::exists(path));
}

TEST(ReportRender, LoadRejectsMalformedJsonWithPath) {
  const auto path = temp_path("report_bad.json");
  mf::write_file_atomic(path, "{not json\n");
  try {
    mf::load_report(path);
    FAIL() << "expected parse failure";
  } catch (const std::runtime_error& e) {
    EXPECT_NE(std::string(e.what()).find(path), std::string::npos);
    EXPECT_NE(std::string(e.what()).find("invalid JSON"), std::string::npos);
  }
}

TEST(ReportSummary, DigestNamesTiersAttacksAndDegenerateZ) {
  auto r = valid_report();
  r["tiers"][0]["z_tests"].push_back(
      {{"baseline", "lira"}, {"z", nullptr}, {"p_value", nullptr}});
  const auto text = mf::summarize_report(r);
  EXPECT_NE(text.find("tier lowdp (epsilon 200, sigma 2.3728)"), std::string::npos);
  EXPECT_NE(text.find("stacking: accuracy 0.5342, TPR@1% 0.1538, TPR@3% 0.2307"),
            std::string::npos);
  EXPECT_NE(text.find("external_profile: accuracy 0.3014\n"), std::string::npos);
  EXPECT_NE(text.find("stacking vs external_profile: z 2.8518, p 0.004"), std::string::npos);
  EXPECT_NE(text.find("stacking vs lira: z undefined (degenerate pooled proportion)"),
            std::string::npos);
  EXPECT_NE(text.find("fl E=1: final accuracy 0.9 after 50 rounds"), std::string::npos);

  r["tiers"][0]["privacy"]["epsilon"] = nullptr;
  EXPECT_NE(mf::summarize_report(r).find("tier lowdp (no DP)"), std::string::npos);
}
