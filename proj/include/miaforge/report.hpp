#pragma once

// Audit report: a single JSON document holding, per privacy tier, the
// challenge accuracies of the stacking attack and the three baselines, the
// out-of-fold ROC summary (TPR at fixed FPR budgets, AUC), two-proportion
// z-tests against each baseline, the DP accounting summary, FL curve file
// references and the full attack provenance. The schema is documented in
// docs/report-schema.md; validation failures name the missing field.

#include <cmath>
#include <sstream>
#include <stdexcept>
#include <string>

#include <json.hpp>

#include "csv.hpp"

namespace miaforge {

inline constexpr int kReportVersion = 1;

namespace detail {

inline const nlohmann::json& report_field(const nlohmann::json& obj, const std::string& path,
                                          const std::string& key) {
  if (!obj.is_object() || !obj.contains(key))
    throw std::runtime_error("report schema: missing field '" +
                             (path.empty() ? key : path + "." + key) + "'");
  return obj.at(key);
}

inline double report_number(const nlohmann::json& obj, const std::string& path,
                            const std::string& key) {
  const auto& v = report_field(obj, path, key);
  if (!v.is_number())
    throw std::runtime_error("report schema: field '" + path + "." + key + "' must be a number");
  return v.get<double>();
}

inline void report_fraction(const nlohmann::json& obj, const std::string& path,
                            const std::string& key) {
  const double v = report_number(obj, path, key);
  if (!(v >= 0.0 && v <= 1.0))
    throw std::runtime_error("report schema: field '" + path + "." + key +
                             "' must lie in [0,1]");
}

// Terminal digest formatting; CSV artifacts keep the full 17 digits.
inline std::string fmt_short(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.6g", v);
  return buf;
}

}  // namespace detail

inline void validate_report(const nlohmann::json& r) {
  using detail::report_field;
  using detail::report_fraction;
  using detail::report_number;

  report_field(r, "", "version");
  report_field(r, "", "master_seed");
  const auto& sc = report_field(r, "", "scenario");
  report_number(sc, "scenario", "clients");
  report_number(sc, "scenario", "classes");
  report_number(sc, "scenario", "challenge_size");
  report_fraction(sc, "scenario", "random_floor");

  const auto& tiers = report_field(r, "", "tiers");
  if (!tiers.is_array() || tiers.empty())
    throw std::runtime_error("report schema: field 'tiers' must be a non-empty array");
  for (std::size_t t = 0; t < tiers.size(); ++t) {
    const std::string tp = "tiers[" + std::to_string(t) + "]";
    const auto& tier = tiers[t];
    report_field(tier, tp, "name");

    const auto& priv = report_field(tier, tp, "privacy");
    report_field(priv, tp + ".privacy", "epsilon");  // null for the no-DP tier
    report_number(priv, tp + ".privacy", "delta");
    report_number(priv, tp + ".privacy", "sigma");
    report_field(priv, tp + ".privacy", "clip_norm");
    report_field(priv, tp + ".privacy", "steps_per_client");

    const auto& attacks = report_field(tier, tp, "attacks");
    if (!attacks.is_array() || attacks.empty())
      throw std::runtime_error("report schema: field '" + tp +
                               ".attacks' must be a non-empty array");
    for (std::size_t a = 0; a < attacks.size(); ++a) {
      const std::string ap = tp + ".attacks[" + std::to_string(a) + "]";
      report_field(attacks[a], ap, "name");
      report_fraction(attacks[a], ap, "challenge_accuracy");
      report_field(attacks[a], ap, "decisions_file");
      if (attacks[a].contains("tpr_at_fpr")) {
        const auto& roc = attacks[a].at("tpr_at_fpr");
        report_fraction(roc, ap + ".tpr_at_fpr", "0.01");
        report_fraction(roc, ap + ".tpr_at_fpr", "0.03");
        report_fraction(attacks[a], ap, "auc");
      }
    }

    const auto& ztests = report_field(tier, tp, "z_tests");
    if (!ztests.is_array())
      throw std::runtime_error("report schema: field '" + tp + ".z_tests' must be an array");
    for (std::size_t z = 0; z < ztests.size(); ++z) {
      const std::string zp = tp + ".z_tests[" + std::to_string(z) + "]";
      report_field(ztests[z], zp, "baseline");
      report_field(ztests[z], zp, "z");        // null when the pooled proportion degenerates
      report_field(ztests[z], zp, "p_value");
    }

    const auto& fl = report_field(tier, tp, "fl");
    if (!fl.is_array())
      throw std::runtime_error("report schema: field '" + tp + ".fl' must be an array");
    for (std::size_t f = 0; f < fl.size(); ++f) {
      const std::string fp = tp + ".fl[" + std::to_string(f) + "]";
      report_number(fl[f], fp, "local_epochs");
      report_number(fl[f], fp, "rounds");
      report_fraction(fl[f], fp, "final_accuracy");
      report_field(fl[f], fp, "curve_file");
    }

    report_field(tier, tp, "provenance");
  }
}

// nlohmann::json serializes with sorted keys, so identical inputs always give
// identical bytes.
inline std::string render_report(const nlohmann::json& r) { return r.dump(2) + "\n"; }

inline void emit_report(const nlohmann::json& r, const std::string& path) {
  validate_report(r);
  write_file_atomic(path, render_report(r));
}

inline nlohmann::json load_report(const std::string& path) {
  const auto lines = read_lines(path);
  std::string text;
  for (const auto& l : lines) text += l + "\n";
  nlohmann::json r;
  try {
    r = nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    throw std::runtime_error(path + ": invalid JSON: " + e.what());
  }
  validate_report(r);
  return r;
}

// Plain-text digest for terminals; the JSON document stays the authoritative
// artifact.
inline std::string summarize_report(const nlohmann::json& r) {
  validate_report(r);
  std::ostringstream out;
  const auto& sc = r.at("scenario");
  out << "seed " << r.at("master_seed") << ", " << sc.at("clients").get<int>() << " clients, "
      << sc.at("challenge_size").get<int>() << " challenge records, random floor "
      << detail::fmt_short(sc.at("random_floor").get<double>()) << "\n";
  for (const auto& tier : r.at("tiers")) {
    const auto& priv = tier.at("privacy");
    out << "tier " << tier.at("name").get<std::string>();
    if (priv.at("epsilon").is_null())
      out << " (no DP)";
    else
      out << " (epsilon " << detail::fmt_short(priv.at("epsilon").get<double>()) << ", sigma "
          << detail::fmt_short(priv.at("sigma").get<double>()) << ")";
    out << "\n";
    for (const auto& atk : tier.at("attacks")) {
      out << "  " << atk.at("name").get<std::string>() << ": accuracy "
          << detail::fmt_short(atk.at("challenge_accuracy").get<double>());
      if (atk.contains("tpr_at_fpr"))
        out << ", TPR@1% " << detail::fmt_short(atk.at("tpr_at_fpr").at("0.01").get<double>())
            << ", TPR@3% " << detail::fmt_short(atk.at("tpr_at_fpr").at("0.03").get<double>());
      out << "\n";
    }
    for (const auto& zt : tier.at("z_tests")) {
      out << "  stacking vs " << zt.at("baseline").get<std::string>() << ": ";
      if (zt.at("z").is_null())
        out << "z undefined (degenerate pooled proportion)\n";
      else
        out << "z " << detail::fmt_short(zt.at("z").get<double>()) << ", p "
            << detail::fmt_short(zt.at("p_value").get<double>()) << "\n";
    }
    for (const auto& fl : tier.at("fl"))
      out << "  fl E=" << fl.at("local_epochs").get<int>() << ": final accuracy "
          << detail::fmt_short(fl.at("final_accuracy").get<double>()) << " after "
          << fl.at("rounds").get<int>() << " rounds\n";
  }
  return out.str();
}

}  // namespace miaforge
