#pragma once

// Privacy accounting for the gaussian mechanism under Renyi differential
// privacy. A training run of T steps with noise multiplier sigma satisfies
// RDP(alpha) = T * alpha / (2 sigma^2); conversion to (epsilon, delta)-DP adds
// ln(1/delta)/(alpha - 1) and minimizes over alpha. The candidate set is a
// fixed grid {1.25, 1.5, ..., 512} plus the analytic optimum
// alpha* = 1 + sigma * sqrt(2 ln(1/delta) / T), whose value collapses to the
// closed form T/(2 sigma^2) + sqrt(2 T ln(1/delta)) / sigma. The grid matters
// for accountants with curved RDP profiles; here it doubles as a consistency
// check against the closed form.

#include <cmath>
#include <limits>
#include <stdexcept>
#include <string>
#include <vector>

namespace miaforge {

struct AccountantQuery {
  double sigma = 1.0;
  long long steps = 1;
  double delta = 1e-5;

  void validate() const {
    auto fail = [](const std::string& m) { throw std::invalid_argument("accountant: " + m); };
    if (!(sigma > 0.0)) fail("sigma must be positive");
    if (steps < 1) fail("steps must be at least 1");
    if (!(delta > 0.0) || !(delta < 1.0)) fail("delta must be in (0, 1)");
  }
};

inline const std::vector<double>& rdp_alpha_grid() {
  static const std::vector<double> grid = [] {
    std::vector<double> g;
    for (double a = 1.25; a <= 512.0 + 1e-9; a += 0.25) g.push_back(a);
    return g;
  }();
  return grid;
}

inline double epsilon_at_alpha(const AccountantQuery& q, double alpha) {
  if (alpha <= 1.0) throw std::invalid_argument("accountant: alpha must exceed 1");
  return static_cast<double>(q.steps) * alpha / (2.0 * q.sigma * q.sigma) +
         std::log(1.0 / q.delta) / (alpha - 1.0);
}

inline double epsilon_closed_form(const AccountantQuery& q) {
  q.validate();
  const double log_inv_delta = std::log(1.0 / q.delta);
  return static_cast<double>(q.steps) / (2.0 * q.sigma * q.sigma) +
         std::sqrt(2.0 * static_cast<double>(q.steps) * log_inv_delta) / q.sigma;
}

inline double epsilon_for(const AccountantQuery& q) {
  q.validate();
  double best = std::numeric_limits<double>::infinity();
  for (double alpha : rdp_alpha_grid()) best = std::min(best, epsilon_at_alpha(q, alpha));
  const double alpha_star =
      1.0 + q.sigma * std::sqrt(2.0 * std::log(1.0 / q.delta) / static_cast<double>(q.steps));
  best = std::min(best, epsilon_at_alpha(q, alpha_star));
  return best;
}

// Smallest noise multiplier whose accounted epsilon does not exceed the
// target, found by bisection; the returned sigma lands within a relative
// 1e-4 of the target from below.
inline double calibrate_sigma(double target_epsilon, long long steps, double delta,
                              double sigma_lo = 1e-3, double sigma_hi = 1e4) {
  if (!(target_epsilon > 0.0))
    throw std::invalid_argument("accountant: target epsilon must be positive");
  auto eps = [&](double sigma) { return epsilon_for({sigma, steps, delta}); };
  if (eps(sigma_hi) > target_epsilon)
    throw std::runtime_error("accountant: target epsilon unreachable within sigma bracket (too small)");
  if (eps(sigma_lo) < target_epsilon)
    throw std::runtime_error("accountant: target epsilon unreachable within sigma bracket (too large)");
  double lo = sigma_lo, hi = sigma_hi;
  for (int it = 0; it < 200; ++it) {
    const double mid = 0.5 * (lo + hi);
    const double e = eps(mid);
    if (e > target_epsilon)
      lo = mid;
    else {
      hi = mid;
      if (target_epsilon - e <= 1e-4 * target_epsilon) break;
    }
  }
  return hi;
}

}  // namespace miaforge
