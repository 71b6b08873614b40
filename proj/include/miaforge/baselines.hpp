#pragma once

// Comparison attacks: the external-profile heuristic (mean loss / mean
// confidence rule), a variance-based likelihood-ratio attack whose OUT
// distribution is a gaussian fitted on external losses only (shadow IN models
// are unavailable in this threat model), and the plain loss-threshold attack.

#include <cmath>
#include <optional>
#include <stdexcept>
#include <vector>

#include "metrics.hpp"

namespace miaforge {

struct ExternalProfile {
  double mean_loss = 0.0;
  double mean_confidence = 0.0;  // mean of max class probability
};

inline ExternalProfile fit_external_profile(const std::vector<double>& losses,
                                            const std::vector<double>& confidences) {
  if (losses.empty() || losses.size() != confidences.size())
    throw std::invalid_argument("external profile: need matching non-empty loss/confidence lists");
  ExternalProfile p;
  for (double v : losses) p.mean_loss += v;
  for (double v : confidences) p.mean_confidence += v;
  p.mean_loss /= static_cast<double>(losses.size());
  p.mean_confidence /= static_cast<double>(confidences.size());
  return p;
}

struct GaussianLossModel {
  double mu_out = 0.0;
  double sigma_out = 1e-9;
};

// Unbiased sample variance; sigma floored at 1e-9 so near-constant external
// losses (small pools) stay usable.
inline GaussianLossModel fit_gaussian_loss(const std::vector<double>& losses) {
  if (losses.empty())
    throw std::invalid_argument("gaussian loss model: need at least one external loss");
  GaussianLossModel m;
  for (double v : losses) m.mu_out += v;
  m.mu_out /= static_cast<double>(losses.size());
  double ss = 0.0;
  for (double v : losses) ss += (v - m.mu_out) * (v - m.mu_out);
  const double var = losses.size() > 1 ? ss / static_cast<double>(losses.size() - 1) : 0.0;
  m.sigma_out = std::max(std::sqrt(var), 1e-9);
  return m;
}

// Survival probability of the loss under the OUT gaussian: low loss relative
// to the external distribution looks member-like.
inline double lira_score(const GaussianLossModel& m, double loss) {
  return 1.0 - normal_cdf((loss - m.mu_out) / m.sigma_out);
}

// Candidate clients are those whose profile both conditions pass (strictly
// lower loss than the external mean, strictly higher confidence); the record
// goes to the qualifying client with the highest confidence, ties to the
// lowest index; no candidate means non-member.
inline std::optional<int> profile_heuristic_assignment(
    const std::vector<ExternalProfile>& profiles,
    const std::vector<double>& losses, const std::vector<double>& confidences) {
  if (profiles.size() != losses.size() || profiles.size() != confidences.size())
    throw std::invalid_argument("profile heuristic: per-client inputs disagree in length");
  if (profiles.empty()) throw std::invalid_argument("profile heuristic: no client profiles");
  std::optional<int> best;
  for (std::size_t c = 0; c < profiles.size(); ++c) {
    if (!(losses[c] < profiles[c].mean_loss)) continue;
    if (!(confidences[c] > profiles[c].mean_confidence)) continue;
    if (!best || confidences[c] > confidences[*best]) best = static_cast<int>(c);
  }
  return best;
}

inline std::vector<bool> loss_threshold(const std::vector<double>& losses, double tau) {
  if (std::isnan(tau)) throw std::invalid_argument("loss threshold: tau must not be NaN");
  std::vector<bool> member(losses.size());
  for (std::size_t i = 0; i < losses.size(); ++i) member[i] = losses[i] < tau;
  return member;
}

}  // namespace miaforge
