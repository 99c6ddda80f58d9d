#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <span>
#include <string>
#include <vector>

#include "privci/error.hpp"
#include "privci/rng.hpp"

namespace privci {

// (epsilon, delta)-DP -> equivalent zCDP budget rho.
inline double zcdp_from_eps_delta(double epsilon, double delta) {
  if (!(epsilon > 0.0)) throw ArgumentError("epsilon must be > 0");
  if (!(delta > 0.0 && delta < 1.0)) throw ArgumentError("delta must lie in (0, 1)");
  const double L = std::log(1.0 / delta);
  const double a = std::sqrt(L + epsilon);
  const double b = std::sqrt(L);
  // (a - b)^2 rewritten as (eps / (a + b))^2 to avoid cancellation for small epsilon.
  const double diff = epsilon / (a + b);
  return diff * diff;
}

// rho-zCDP -> (epsilon, delta)-DP. rho = 0 is accepted and maps to 0.
inline double eps_from_zcdp(double rho, double delta) {
  if (!(rho >= 0.0)) throw ArgumentError("rho must be >= 0");
  if (!(delta > 0.0 && delta < 1.0)) throw ArgumentError("delta must lie in (0, 1)");
  return rho + 2.0 * std::sqrt(rho * std::log(1.0 / delta));
}

struct StageSpend {
  std::string name;
  double rho = 0.0;
};

// Budget split for one synthesis run.
//
// The total rho is divided into three stages: one-way measurement, edge
// selection, two-way measurement. rho_stage = rho / 3. Because 3 * (rho / 3)
// does not always round back to rho, the last stage is allotted
// rho - 2 * rho_stage; the three recorded spends then sum to rho bit-exactly
// and each stage's noise is calibrated to its own allotment.
struct PrivacyBudget {
  double epsilon = 0.0;
  double delta = 0.0;
  int d = 0;
  double rho = 0.0;
  double rho_stage = 0.0;
  double sigma_g_base = 0.0;   // 1 / sqrt(2 rho_stage), unit l2 sensitivity
  double eps_prime = 0.0;      // per-round exponential mechanism parameter
  double sigma_one_way = 0.0;  // group of m1 one-way marginals
  double sigma_two_way = 0.0;  // group of m2 two-way marginals
  std::vector<StageSpend> stages;

  double total_spent() const {
    double s = 0.0;
    for (const auto& st : stages) s += st.rho;
    return s;
  }
};

// Gaussian scale for a group of k unit-sensitivity count tables released as
// one vector query under add/remove neighbors: l2 sensitivity sqrt(k).
inline double group_sigma(int k, double rho_stage) {
  return std::sqrt(static_cast<double>(k) / (2.0 * rho_stage));
}

inline PrivacyBudget stage_plan_from_rho(double rho, int d, int m1, int m2) {
  if (d < 2) throw ArgumentError("need d >= 2 attributes");
  if (m1 < 1 || m2 < 1) throw ArgumentError("marginal group sizes must be positive");
  if (!(rho > 0.0)) throw ArgumentError("rho must be > 0");
  PrivacyBudget b;
  b.d = d;
  b.rho = rho;
  b.rho_stage = rho / 3.0;
  const double rho_last = rho - 2.0 * b.rho_stage;
  b.sigma_g_base = 1.0 / std::sqrt(2.0 * b.rho_stage);
  b.eps_prime = std::sqrt(8.0 * b.rho_stage / (d - 1));
  b.sigma_one_way = group_sigma(m1, b.rho_stage);
  b.sigma_two_way = group_sigma(m2, rho_last);
  b.stages = {{"one-way", b.rho_stage}, {"edge-selection", b.rho_stage}, {"two-way", rho_last}};
  return b;
}

inline PrivacyBudget stage_plan(double epsilon, double delta, int d, int m1, int m2) {
  if (d < 2) throw ArgumentError("need d >= 2 attributes");
  PrivacyBudget b = stage_plan_from_rho(zcdp_from_eps_delta(epsilon, delta), d, m1, m2);
  b.epsilon = epsilon;
  b.delta = delta;
  return b;
}

inline PrivacyBudget stage_plan(double epsilon, double delta, int d) { return stage_plan(epsilon, delta, d, d, d - 1); }

inline std::vector<double> gaussian_mechanism(std::span<const double> v, double sigma, RngStream& rng) {
  if (!(sigma > 0.0)) throw ArgumentError("Gaussian mechanism needs sigma > 0");
  std::vector<double> out(v.begin(), v.end());
  for (double& x : out) x += sigma * rng.normal();
  return out;
}

// Selection probabilities exp(eps * q / (2 dq)), normalized after shifting by
// the maximum score. An infinite eps puts all mass on the first maximizer.
inline std::vector<double> exponential_mechanism_probabilities(std::span<const double> scores, double eps,
                                                               double delta_q) {
  if (scores.empty()) throw SelectionError("exponential mechanism over an empty candidate set");
  if (!(delta_q > 0.0)) throw ArgumentError("score sensitivity must be > 0");
  if (!(eps > 0.0)) throw ArgumentError("exponential mechanism needs eps > 0");
  std::vector<double> p(scores.size(), 0.0);
  const auto top = std::max_element(scores.begin(), scores.end());
  if (std::isinf(eps)) {
    p[static_cast<std::size_t>(top - scores.begin())] = 1.0;
    return p;
  }
  const double scale = eps / (2.0 * delta_q);
  double z = 0.0;
  for (std::size_t k = 0; k < scores.size(); ++k) {
    p[k] = std::exp(scale * (scores[k] - *top));
    z += p[k];
  }
  for (double& x : p) x /= z;
  return p;
}

// Returns the index of the chosen candidate.
inline std::size_t exponential_mechanism(std::span<const double> scores, double eps, double delta_q,
                                         RngStream& rng) {
  const auto p = exponential_mechanism_probabilities(scores, eps, delta_q);
  if (std::isinf(eps)) return static_cast<std::size_t>(std::max_element(p.begin(), p.end()) - p.begin());
  const double u = rng.uniform();
  double acc = 0.0;
  for (std::size_t k = 0; k < p.size(); ++k) {
    acc += p[k];
    if (u < acc) return k;
  }
  // u landed in the rounding slack above the accumulated sum.
  for (std::size_t k = p.size(); k-- > 0;) {
    if (p[k] > 0.0) return k;
  }
  return p.size() - 1;
}

template <typename T>
const T& exponential_mechanism(std::span<const T> candidates, std::span<const double> scores, double eps,
                               double delta_q, RngStream& rng) {
  if (candidates.size() != scores.size()) throw ArgumentError("one score per candidate required");
  return candidates[exponential_mechanism(scores, eps, delta_q, rng)];
}

}  // namespace privci
