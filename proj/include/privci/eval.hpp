#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <map>
#include <numeric>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"
#include "privci/data.hpp"
#include "privci/error.hpp"
#include "privci/marginals.hpp"
#include "privci/model.hpp"
#include "privci/rng.hpp"
#include "privci/structure.hpp"

namespace privci {

// ---------------------------------------------------------------------------
// Distributional fidelity

inline void check_same_shape(const ProbTable& p, const ProbTable& q) {
  if (p.shape != q.shape || p.cells.size() != q.cells.size()) throw ArgumentError("table shape mismatch");
}

// KL(p || q) in nats. Infinite when q has a zero where p does not.
inline double kl_divergence(const ProbTable& p, const ProbTable& q) {
  check_same_shape(p, q);
  double s = 0.0;
  for (std::size_t k = 0; k < p.cells.size(); ++k) {
    if (p.cells[k] <= 0.0) continue;
    if (q.cells[k] <= 0.0) return std::numeric_limits<double>::infinity();
    s += p.cells[k] * std::log(p.cells[k] / q.cells[k]);
  }
  return std::max(s, 0.0);
}

inline double tv_distance(const ProbTable& p, const ProbTable& q) {
  check_same_shape(p, q);
  double s = 0.0;
  for (std::size_t k = 0; k < p.cells.size(); ++k) s += std::abs(p.cells[k] - q.cells[k]);
  return std::min(0.5 * s, 1.0);
}

inline constexpr double kKlPseudoCount = 1.0;
inline constexpr std::size_t kMaxFullJointCells = 1'000'000;

inline ProbTable smoothed(CountTable t, double alpha = kKlPseudoCount) {
  for (double& c : t.cells) c += alpha;
  return normalize(t);
}

struct PairFidelity {
  int i = 0;
  int j = 0;
  double kl = 0.0;
  double tv = 0.0;
};

struct Fidelity {
  double kl_pairwise = 0.0;
  double tv_pairwise = 0.0;
  std::optional<double> kl_full_joint;
  std::vector<PairFidelity> pairs;
};

namespace detail {

inline std::size_t full_index(const Schema& s, std::span<const int> row) {
  std::size_t idx = 0;
  for (int i = 0; i < s.d(); ++i) idx = idx * static_cast<std::size_t>(s.domain_size(i)) + static_cast<std::size_t>(row[static_cast<std::size_t>(i)]);
  return idx;
}

inline std::size_t full_size(const Schema& s) {
  std::size_t n = 1;
  for (int i = 0; i < s.d(); ++i) {
    n *= static_cast<std::size_t>(s.domain_size(i));
    if (n > std::numeric_limits<std::size_t>::max() / 1024) return std::numeric_limits<std::size_t>::max();
  }
  return n;
}

}  // namespace detail

// Mean KL (Laplace-smoothed) and mean TV (unsmoothed) over all pairwise
// marginals, real against synthetic.
inline Fidelity pairwise_fidelity(const Dataset& real, const Dataset& synth) {
  if (!real.schema().same_domains(synth.schema())) throw ArgumentError("schema mismatch between real and synthetic data");
  Fidelity f;
  const int d = real.d();
  for (int i = 0; i < d; ++i) {
    for (int j = i + 1; j < d; ++j) {
      const CountTable cr = two_way_counts(real, i, j);
      const CountTable cs = two_way_counts(synth, i, j);
      f.pairs.push_back({i, j, kl_divergence(smoothed(cr), smoothed(cs)), tv_distance(normalize(cr), normalize(cs))});
    }
  }
  for (const auto& p : f.pairs) {
    f.kl_pairwise += p.kl;
    f.tv_pairwise += p.tv;
  }
  f.kl_pairwise /= static_cast<double>(f.pairs.size());
  f.tv_pairwise /= static_cast<double>(f.pairs.size());

  const std::size_t cells = detail::full_size(real.schema());
  if (cells <= kMaxFullJointCells) {
    CountTable jr{{}, {cells}, std::vector<double>(cells, 0.0)};
    CountTable js = jr;
    std::vector<int> row(static_cast<std::size_t>(d));
    for (std::size_t r = 0; r < real.n(); ++r) {
      for (int i = 0; i < d; ++i) row[static_cast<std::size_t>(i)] = real.code(r, i);
      jr.cells[detail::full_index(real.schema(), row)] += 1.0;
    }
    for (std::size_t r = 0; r < synth.n(); ++r) {
      for (int i = 0; i < d; ++i) row[static_cast<std::size_t>(i)] = synth.code(r, i);
      js.cells[detail::full_index(real.schema(), row)] += 1.0;
    }
    f.kl_full_joint = kl_divergence(smoothed(jr), smoothed(js));
  }
  return f;
}

// ---------------------------------------------------------------------------
// Conditional mutual information

inline constexpr std::size_t kMaxCmiCells = 10'000'000;

// Joint probabilities over (x, y, z), flattened x-major: cells[(x*ky + y)*kz + z].
struct TripleTable {
  std::size_t kx = 1, ky = 1, kz = 1;
  std::vector<double> cells;
};

// Plug-in I(X;Y|Z) in nats from a (possibly unnormalized) joint table.
inline double cmi_from_joint(const TripleTable& t) {
  const double total = std::accumulate(t.cells.begin(), t.cells.end(), 0.0);
  if (total <= 0.0) return 0.0;
  std::vector<double> pz(t.kz, 0.0), pxz(t.kx * t.kz, 0.0), pyz(t.ky * t.kz, 0.0);
  for (std::size_t x = 0; x < t.kx; ++x) {
    for (std::size_t y = 0; y < t.ky; ++y) {
      for (std::size_t z = 0; z < t.kz; ++z) {
        const double p = t.cells[(x * t.ky + y) * t.kz + z] / total;
        pz[z] += p;
        pxz[x * t.kz + z] += p;
        pyz[y * t.kz + z] += p;
      }
    }
  }
  double s = 0.0;
  for (std::size_t x = 0; x < t.kx; ++x) {
    for (std::size_t y = 0; y < t.ky; ++y) {
      for (std::size_t z = 0; z < t.kz; ++z) {
        const double p = t.cells[(x * t.ky + y) * t.kz + z] / total;
        if (p <= 0.0 || pz[z] <= 0.0) continue;
        s += p * std::log(p * pz[z] / (pxz[x * t.kz + z] * pyz[y * t.kz + z]));
      }
    }
  }
  return s;
}

namespace detail {

inline std::size_t sub_index(const Schema& s, std::span<const int> attrs, std::span<const int> row) {
  std::size_t idx = 0;
  for (int a : attrs) idx = idx * static_cast<std::size_t>(s.domain_size(a)) + static_cast<std::size_t>(row[static_cast<std::size_t>(a)]);
  return idx;
}

inline TripleTable empty_triple(const Schema& s, std::span<const int> X, std::span<const int> Y, std::span<const int> Z) {
  for (auto set : {X, Y, Z}) {
    for (int a : set) {
      if (a < 0 || a >= s.d()) throw ArgumentError("CMI attribute index out of range");
    }
  }
  TripleTable t{s.joint_size(X), s.joint_size(Y), s.joint_size(Z), {}};
  const double cells = static_cast<double>(t.kx) * static_cast<double>(t.ky) * static_cast<double>(t.kz);
  if (cells > static_cast<double>(kMaxCmiCells)) {
    throw ArgumentError("CMI joint domain has " + std::to_string(static_cast<long long>(cells)) + " cells, limit " +
                        std::to_string(kMaxCmiCells));
  }
  t.cells.assign(t.kx * t.ky * t.kz, 0.0);
  return t;
}

}  // namespace detail

inline double cmi(const Dataset& data, std::span<const int> X, std::span<const int> Y, std::span<const int> Z) {
  TripleTable t = detail::empty_triple(data.schema(), X, Y, Z);
  std::vector<int> row(static_cast<std::size_t>(data.d()));
  for (std::size_t r = 0; r < data.n(); ++r) {
    for (int i = 0; i < data.d(); ++i) row[static_cast<std::size_t>(i)] = data.code(r, i);
    const std::size_t x = detail::sub_index(data.schema(), X, row);
    const std::size_t y = detail::sub_index(data.schema(), Y, row);
    const std::size_t z = detail::sub_index(data.schema(), Z, row);
    t.cells[(x * t.ky + y) * t.kz + z] += 1.0;
  }
  return cmi_from_joint(t);
}

// Exact model-level CMI by enumerating the model's full joint domain.
inline double cmi(const TreeModel& m, std::span<const int> X, std::span<const int> Y, std::span<const int> Z) {
  TripleTable t = detail::empty_triple(m.schema, X, Y, Z);
  const std::size_t cells = detail::full_size(m.schema);
  if (cells > kMaxCmiCells) {
    throw ArgumentError("model joint domain has " + std::to_string(cells) + " cells, limit " + std::to_string(kMaxCmiCells));
  }
  std::vector<int> row(static_cast<std::size_t>(m.d()), 0);
  for (std::size_t k = 0; k < cells; ++k) {
    const std::size_t x = detail::sub_index(m.schema, X, row);
    const std::size_t y = detail::sub_index(m.schema, Y, row);
    const std::size_t z = detail::sub_index(m.schema, Z, row);
    t.cells[(x * t.ky + y) * t.kz + z] += model_joint_prob(m, row);
    for (int i = m.d() - 1; i >= 0; --i) {
      if (++row[static_cast<std::size_t>(i)] < m.schema.domain_size(i)) break;
      row[static_cast<std::size_t>(i)] = 0;
    }
  }
  return cmi_from_joint(t);
}

inline double mutual_information(const Dataset& data, int i, int j) {
  const int x[] = {i};
  const int y[] = {j};
  return cmi(data, x, y, {});
}

// ---------------------------------------------------------------------------
// Downstream classifier

struct LogisticHyper {
  double learning_rate = 0.1;
  int iterations = 500;
  double l2 = 1e-4;
};

// One-hot linear model: logit = bias + sum_f w[offset_f + code_f].
struct LinearClassifier {
  int outcome = 0;
  std::vector<int> features;
  std::vector<std::size_t> offsets;
  std::vector<double> weights;
  double bias = 0.0;
  LogisticHyper hp;

  double logit(const Dataset& data, std::size_t r) const {
    double z = bias;
    for (std::size_t f = 0; f < features.size(); ++f) {
      z += weights[offsets[f] + static_cast<std::size_t>(data.code(r, features[f]))];
    }
    return z;
  }

  double predict_proba(const Dataset& data, std::size_t r) const { return 1.0 / (1.0 + std::exp(-logit(data, r))); }
};

// Training data collapsed to distinct feature patterns with label counts.
// Loss = mean log-loss + (l2 / 2) |w|^2; the bias is not penalized.
class LogisticProblem {
 public:
  LogisticProblem(const Dataset& data, int outcome, std::vector<int> features, double l2)
      : features_(std::move(features)), l2_(l2) {
    if (outcome < 0 || outcome >= data.d()) throw ArgumentError("outcome index out of range");
    if (data.schema().domain_size(outcome) != 2) {
      throw ArgumentError("logistic regression needs a binary outcome; '" + data.schema()[outcome].name + "' has " +
                          std::to_string(data.schema().domain_size(outcome)) + " values");
    }
    for (int f : features_) {
      if (f == outcome) throw ArgumentError("features must exclude the outcome");
      if (f < 0 || f >= data.d()) throw ArgumentError("feature index out of range");
    }
    std::size_t off = 0;
    for (int f : features_) {
      offsets_.push_back(off);
      off += static_cast<std::size_t>(data.schema().domain_size(f));
    }
    dim_ = off;
    std::map<std::vector<int>, std::size_t> index;
    std::vector<int> key(features_.size());
    for (std::size_t r = 0; r < data.n(); ++r) {
      for (std::size_t f = 0; f < features_.size(); ++f) key[f] = data.code(r, features_[f]);
      auto [it, fresh] = index.emplace(key, patterns_.size());
      if (fresh) {
        Pattern p;
        for (std::size_t f = 0; f < features_.size(); ++f) p.active.push_back(offsets_[f] + static_cast<std::size_t>(key[f]));
        patterns_.push_back(std::move(p));
      }
      (data.code(r, outcome) == 1 ? patterns_[it->second].pos : patterns_[it->second].neg) += 1.0;
    }
    n_ = static_cast<double>(data.n());
  }

  std::size_t dim() const { return dim_; }
  const std::vector<int>& features() const { return features_; }
  const std::vector<std::size_t>& offsets() const { return offsets_; }

  double loss(std::span<const double> w, double b) const {
    double s = 0.0;
    for (const auto& p : patterns_) {
      const double z = logit(p, w, b);
      // log(1 + e^z) - y z, summed over the pattern's labels.
      const double softplus = z > 0 ? z + std::log1p(std::exp(-z)) : std::log1p(std::exp(z));
      s += (p.pos + p.neg) * softplus - p.pos * z;
    }
    double reg = 0.0;
    for (double x : w) reg += x * x;
    return (n_ > 0 ? s / n_ : 0.0) + 0.5 * l2_ * reg;
  }

  // Writes dL/dw into gw and returns dL/db.
  double gradient(std::span<const double> w, double b, std::span<double> gw) const {
    std::fill(gw.begin(), gw.end(), 0.0);
    double gb = 0.0;
    for (const auto& p : patterns_) {
      const double prob = 1.0 / (1.0 + std::exp(-logit(p, w, b)));
      const double g = (p.pos + p.neg) * prob - p.pos;
      gb += g;
      for (std::size_t k : p.active) gw[k] += g;
    }
    const double inv = n_ > 0 ? 1.0 / n_ : 0.0;
    for (std::size_t k = 0; k < gw.size(); ++k) gw[k] = gw[k] * inv + l2_ * w[k];
    return gb * inv;
  }

 private:
  struct Pattern {
    std::vector<std::size_t> active;
    double pos = 0.0;
    double neg = 0.0;
  };

  static double logit(const Pattern& p, std::span<const double> w, double b) {
    double z = b;
    for (std::size_t k : p.active) z += w[k];
    return z;
  }

  std::vector<int> features_;
  std::vector<std::size_t> offsets_;
  std::vector<Pattern> patterns_;
  std::size_t dim_ = 0;
  double l2_ = 0.0;
  double n_ = 0.0;
};

// Full-batch gradient descent from zero; deterministic for fixed data.
inline LinearClassifier train_logistic(const Dataset& train, int outcome, std::vector<int> features,
                                       const LogisticHyper& hp = {}) {
  LogisticProblem prob(train, outcome, std::move(features), hp.l2);
  LinearClassifier clf;
  clf.outcome = outcome;
  clf.features = prob.features();
  clf.offsets = prob.offsets();
  clf.weights.assign(prob.dim(), 0.0);
  clf.hp = hp;
  std::vector<double> gw(prob.dim());
  for (int it = 0; it < hp.iterations; ++it) {
    const double gb = prob.gradient(clf.weights, clf.bias, gw);
    for (std::size_t k = 0; k < gw.size(); ++k) clf.weights[k] -= hp.learning_rate * gw[k];
    clf.bias -= hp.learning_rate * gb;
  }
  for (double x : clf.weights) {
    if (!std::isfinite(x)) throw ArgumentError("logistic regression diverged");
  }
  return clf;
}

// Mann-Whitney AUC; tied scores count one half.
inline double auc(std::span<const double> scores, std::span<const int> labels) {
  if (scores.size() != labels.size()) throw ArgumentError("scores and labels differ in length");
  std::vector<std::size_t> idx(scores.size());
  std::iota(idx.begin(), idx.end(), 0);
  std::sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });
  double pos = 0.0, neg = 0.0, rank_sum = 0.0;
  for (std::size_t k = 0; k < idx.size();) {
    std::size_t e = k;
    while (e < idx.size() && scores[idx[e]] == scores[idx[k]]) ++e;
    const double avg_rank = 0.5 * static_cast<double>(k + 1 + e);
    for (std::size_t m = k; m < e; ++m) {
      if (labels[idx[m]] == 1) {
        pos += 1.0;
        rank_sum += avg_rank;
      } else {
        neg += 1.0;
      }
    }
    k = e;
  }
  if (pos == 0.0 || neg == 0.0) throw ArgumentError("AUC needs both positive and negative labels");
  return (rank_sum - pos * (pos + 1.0) / 2.0) / (pos * neg);
}

// max over group pairs of (|dTPR| + |dFPR|) / 2. A rate undefined in either
// group of a pair contributes no gap.
inline double equalized_odds(std::span<const int> pred, std::span<const int> labels, std::span<const int> group) {
  if (pred.size() != labels.size() || pred.size() != group.size()) throw ArgumentError("EO inputs differ in length");
  struct Rates {
    double tp = 0, p = 0, fp = 0, n = 0;
  };
  std::map<int, Rates> by;
  for (std::size_t k = 0; k < pred.size(); ++k) {
    auto& r = by[group[k]];
    if (labels[k] == 1) {
      r.p += 1;
      r.tp += pred[k] == 1;
    } else {
      r.n += 1;
      r.fp += pred[k] == 1;
    }
  }
  if (by.size() < 2) return 0.0;
  double eo = 0.0;
  for (auto a = by.begin(); a != by.end(); ++a) {
    for (auto b = std::next(a); b != by.end(); ++b) {
      const Rates& x = a->second;
      const Rates& y = b->second;
      const double dt = (x.p > 0 && y.p > 0) ? std::abs(x.tp / x.p - y.tp / y.p) : 0.0;
      const double df = (x.n > 0 && y.n > 0) ? std::abs(x.fp / x.n - y.fp / y.n) : 0.0;
      eo = std::max(eo, 0.5 * (dt + df));
    }
  }
  return eo;
}

// ---------------------------------------------------------------------------
// Paired significance

enum class Direction { less, greater };

inline std::string to_string(Direction d) { return d == Direction::less ? "less" : "greater"; }

struct PairedComparison {
  std::vector<double> diffs;
  double delta = 0.0;
  double p_value = 1.0;
  Direction direction = Direction::greater;
  std::size_t n = 0;          // paired units
  std::size_t n_nonzero = 0;  // after dropping zero differences
  double w_plus = 0.0;        // sum of positive signed ranks
  bool exact = true;
};

inline constexpr std::size_t kWilcoxonExactMax = 50;

// Average ranks of |d| for the nonzero differences, doubled so tied ranks stay integral.
inline std::vector<long> doubled_abs_ranks(std::span<const double> nonzero) {
  std::vector<std::size_t> idx(nonzero.size());
  std::iota(idx.begin(), idx.end(), 0);
  std::sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) { return std::abs(nonzero[a]) < std::abs(nonzero[b]); });
  std::vector<long> r2(nonzero.size());
  for (std::size_t k = 0; k < idx.size();) {
    std::size_t e = k;
    while (e < idx.size() && std::abs(nonzero[idx[e]]) == std::abs(nonzero[idx[k]])) ++e;
    // ranks k+1 .. e averaged, times two
    const long twice_avg = static_cast<long>(k + 1 + e);
    for (std::size_t m = k; m < e; ++m) r2[idx[m]] = twice_avg;
    k = e;
  }
  return r2;
}

// Counts of sign assignments reaching each doubled rank-sum; index = sum.
inline std::vector<double> signed_rank_null_counts(std::span<const long> r2) {
  const long total = std::accumulate(r2.begin(), r2.end(), 0L);
  std::vector<double> counts(static_cast<std::size_t>(total) + 1, 0.0);
  counts[0] = 1.0;
  long reach = 0;
  for (long r : r2) {
    for (long s = reach; s >= 0; --s) {
      if (counts[static_cast<std::size_t>(s)] != 0.0) counts[static_cast<std::size_t>(s + r)] += counts[static_cast<std::size_t>(s)];
    }
    reach += r;
  }
  return counts;
}

// One-sided paired Wilcoxon signed-rank test. `greater` tests whether the
// differences tend to be positive.
inline PairedComparison wilcoxon_one_sided(std::span<const double> diffs, Direction direction) {
  PairedComparison out;
  out.diffs.assign(diffs.begin(), diffs.end());
  out.direction = direction;
  out.n = diffs.size();
  if (!diffs.empty()) out.delta = std::accumulate(diffs.begin(), diffs.end(), 0.0) / static_cast<double>(diffs.size());
  std::vector<double> nz;
  for (double x : diffs) {
    if (x != 0.0) nz.push_back(x);
  }
  out.n_nonzero = nz.size();
  if (nz.empty()) {
    out.p_value = 1.0;
    return out;
  }
  const auto r2 = doubled_abs_ranks(nz);
  long w2 = 0;
  for (std::size_t k = 0; k < nz.size(); ++k) {
    if (nz[k] > 0) w2 += r2[k];
  }
  out.w_plus = 0.5 * static_cast<double>(w2);
  const double n = static_cast<double>(nz.size());
  if (nz.size() <= kWilcoxonExactMax) {
    const auto counts = signed_rank_null_counts(r2);
    double tail = 0.0;
    if (direction == Direction::greater) {
      for (std::size_t s = static_cast<std::size_t>(w2); s < counts.size(); ++s) tail += counts[s];
    } else {
      for (std::size_t s = 0; s <= static_cast<std::size_t>(w2); ++s) tail += counts[s];
    }
    out.p_value = std::min(1.0, std::ldexp(tail, -static_cast<int>(nz.size())));
    out.exact = true;
    return out;
  }
  // Normal approximation with tie and continuity corrections.
  std::map<long, double> ties;
  for (long r : r2) ties[r] += 1.0;
  double tie_adj = 0.0;
  for (const auto& [r, t] : ties) tie_adj += t * t * t - t;
  const double mean = n * (n + 1.0) / 4.0;
  const double var = n * (n + 1.0) * (2.0 * n + 1.0) / 24.0 - tie_adj / 48.0;
  const double sd = std::sqrt(var);
  if (direction == Direction::greater) {
    const double z = (out.w_plus - mean - 0.5) / sd;
    out.p_value = 0.5 * std::erfc(z / std::sqrt(2.0));
  } else {
    const double z = (out.w_plus - mean + 0.5) / sd;
    out.p_value = 0.5 * std::erfc(-z / std::sqrt(2.0));
  }
  out.p_value = std::clamp(out.p_value, 0.0, 1.0);
  out.exact = false;
  return out;
}

inline nlohmann::json to_json(const PairedComparison& c) {
  return {{"delta", c.delta},         {"p_value", c.p_value},     {"direction", to_string(c.direction)},
          {"n", c.n},                 {"n_nonzero", c.n_nonzero}, {"w_plus", c.w_plus},
          {"exact", c.exact},         {"diffs", c.diffs}};
}

// ---------------------------------------------------------------------------
// Evaluation protocol: train on synthetic data, score on held-out real folds.

struct EvalSetup {
  CIConstraint ci;
  int outcome = 0;
  std::vector<int> features;  // every attribute except the outcome by default
  std::vector<int> group;     // protected attributes for equalized odds
  LogisticHyper hp;
};

inline EvalSetup default_eval_setup(const Schema& schema, const CheckedConfig& cfg, std::optional<int> outcome = std::nullopt) {
  EvalSetup s;
  s.ci = cfg.ci;
  s.outcome = outcome.value_or(cfg.roles.O.front());
  for (int i = 0; i < schema.d(); ++i) {
    if (i != s.outcome) s.features.push_back(i);
  }
  s.group = cfg.roles.S;
  return s;
}

struct FoldUtility {
  double auc = std::numeric_limits<double>::quiet_NaN();
  double eo = 0.0;
};

// Scores a trained classifier on a real test fold.
inline FoldUtility score_fold(const LinearClassifier& clf, const Dataset& test, const EvalSetup& setup) {
  FoldUtility u;
  std::vector<double> scores(test.n());
  std::vector<int> labels(test.n()), pred(test.n()), group(test.n());
  for (std::size_t r = 0; r < test.n(); ++r) {
    scores[r] = clf.predict_proba(test, r);
    labels[r] = test.code(r, setup.outcome);
    pred[r] = scores[r] >= 0.5 ? 1 : 0;
    int g = 0;
    for (int a : setup.group) g = g * test.schema().domain_size(a) + test.code(r, a);
    group[r] = g;
  }
  const bool both = std::find(labels.begin(), labels.end(), 0) != labels.end() &&
                    std::find(labels.begin(), labels.end(), 1) != labels.end();
  if (both) u.auc = auc(scores, labels);
  u.eo = equalized_odds(pred, labels, group);
  return u;
}

struct MetricsReport {
  std::optional<double> sum_q_count;
  std::optional<double> sum_q_prob;
  double kl_pairwise = 0.0;
  double tv_pairwise = 0.0;
  std::optional<double> kl_full_joint;
  double cmi = 0.0;
  double auc = std::numeric_limits<double>::quiet_NaN();
  double eo = 0.0;
  std::vector<double> auc_folds;
  std::vector<double> eo_folds;
  std::vector<PairFidelity> pairs;
};

namespace detail {

inline double mean_finite(std::span<const double> v) {
  double s = 0.0;
  std::size_t k = 0;
  for (double x : v) {
    if (std::isfinite(x)) {
      s += x;
      ++k;
    }
  }
  return k ? s / static_cast<double>(k) : std::numeric_limits<double>::quiet_NaN();
}

}  // namespace detail

// `reference` is the real data the synthesizer was fit to (fidelity and tree
// scores); `test_folds` are held-out real folds used only for downstream
// scoring. Synthetic labels are never used at test time.
inline MetricsReport evaluate(const Dataset& reference, const Dataset& synth, std::span<const Dataset> test_folds,
                              const EvalSetup& setup, const Tree* tree = nullptr) {
  MetricsReport rep;
  const Fidelity f = pairwise_fidelity(reference, synth);
  rep.kl_pairwise = f.kl_pairwise;
  rep.tv_pairwise = f.tv_pairwise;
  rep.kl_full_joint = f.kl_full_joint;
  rep.pairs = f.pairs;
  rep.cmi = cmi(synth, setup.ci.X, setup.ci.Y, setup.ci.Z);
  if (tree) {
    rep.sum_q_count = sum_q(*tree, exact_quality_scores(reference));
    rep.sum_q_prob = sum_q(*tree, probability_scores(reference));
  }
  const LinearClassifier clf = train_logistic(synth, setup.outcome, setup.features, setup.hp);
  for (const Dataset& test : test_folds) {
    const FoldUtility u = score_fold(clf, test, setup);
    rep.auc_folds.push_back(u.auc);
    rep.eo_folds.push_back(u.eo);
  }
  rep.auc = detail::mean_finite(rep.auc_folds);
  rep.eo = detail::mean_finite(rep.eo_folds);
  return rep;
}

namespace detail {

inline nlohmann::json num(double x) { return std::isfinite(x) ? nlohmann::json(x) : nlohmann::json(nullptr); }

inline nlohmann::json num(const std::optional<double>& x) { return x ? num(*x) : nlohmann::json(nullptr); }

}  // namespace detail

inline nlohmann::json to_json(const MetricsReport& r) {
  nlohmann::json pairs = nlohmann::json::array();
  for (const auto& p : r.pairs) pairs.push_back({{"i", p.i}, {"j", p.j}, {"kl", detail::num(p.kl)}, {"tv", p.tv}});
  nlohmann::json aucs = nlohmann::json::array();
  for (double a : r.auc_folds) aucs.push_back(detail::num(a));
  return {{"sum_q_count", detail::num(r.sum_q_count)},
          {"sum_q_prob", detail::num(r.sum_q_prob)},
          {"kl_pairwise", detail::num(r.kl_pairwise)},
          {"tv_pairwise", r.tv_pairwise},
          {"kl_full_joint", detail::num(r.kl_full_joint)},
          {"cmi", r.cmi},
          {"auc", detail::num(r.auc)},
          {"auc_folds", aucs},
          {"eo", r.eo},
          {"eo_folds", r.eo_folds},
          {"pairs", pairs}};
}

// Deterministic k-fold split: shuffled row indices dealt round-robin.
inline std::vector<std::vector<std::size_t>> kfold_indices(std::size_t n, int k, std::uint64_t seed) {
  if (k < 2) throw ArgumentError("need at least 2 folds");
  std::vector<std::size_t> idx(n);
  std::iota(idx.begin(), idx.end(), 0);
  RngStream rng(seed, "folds");
  for (std::size_t i = n; i > 1; --i) {
    const auto j = static_cast<std::size_t>(rng.uniform() * static_cast<double>(i));
    std::swap(idx[i - 1], idx[std::min(j, i - 1)]);
  }
  std::vector<std::vector<std::size_t>> folds(static_cast<std::size_t>(k));
  for (std::size_t i = 0; i < n; ++i) folds[i % static_cast<std::size_t>(k)].push_back(idx[i]);
  for (auto& f : folds) std::sort(f.begin(), f.end());
  return folds;
}

}  // namespace privci
