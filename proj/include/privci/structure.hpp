#pragma once

#include <algorithm>
#include <cmath>
#include <compare>
#include <cstddef>
#include <functional>
#include <limits>
#include <numeric>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "privci/data.hpp"
#include "privci/dp.hpp"
#include "privci/error.hpp"
#include "privci/marginals.hpp"
#include "privci/rng.hpp"

namespace privci {

// Unordered attribute pair, stored with u < v.
struct Edge {
  int u = 0;
  int v = 0;

  Edge() = default;
  Edge(int a, int b) : u(std::min(a, b)), v(std::max(a, b)) {}

  auto operator<=>(const Edge&) const = default;
};

// Symmetric pair scores over the complete graph plus the score sensitivity.
class EdgeScores {
 public:
  EdgeScores() = default;
  EdgeScores(int d, double delta_q)
      : d_(d), delta_q_(delta_q), q_(static_cast<std::size_t>(d) * static_cast<std::size_t>(d), 0.0) {
    if (d < 2) throw ArgumentError("scores need d >= 2");
    if (!(delta_q > 0.0)) throw ArgumentError("score sensitivity must be > 0");
  }

  int d() const { return d_; }
  double delta_q() const { return delta_q_; }

  double operator()(int i, int j) const {
    if (i == j || i < 0 || j < 0 || i >= d_ || j >= d_) throw ArgumentError("no score for pair (" + std::to_string(i) + "," + std::to_string(j) + ")");
    return q_[idx(i, j)];
  }
  double operator()(Edge e) const { return (*this)(e.u, e.v); }

  void set(int i, int j, double q) {
    if (i == j) throw ArgumentError("self-pairs have no score");
    if (q < 0.0 || std::isnan(q)) throw ArgumentError("scores must be nonnegative");
    q_[idx(i, j)] = q;
    q_[idx(j, i)] = q;
  }

 private:
  std::size_t idx(int i, int j) const { return static_cast<std::size_t>(i) * static_cast<std::size_t>(d_) + static_cast<std::size_t>(j); }

  int d_ = 0;
  double delta_q_ = 1.0;
  std::vector<double> q_;
};

// Disjoint sets with union by rank and path halving.
class UnionFind {
 public:
  explicit UnionFind(int n) : parent_(static_cast<std::size_t>(n)), rank_(static_cast<std::size_t>(n), 0) {
    std::iota(parent_.begin(), parent_.end(), 0);
  }

  int find(int x) {
    while (parent_[static_cast<std::size_t>(x)] != x) {
      parent_[static_cast<std::size_t>(x)] = parent_[static_cast<std::size_t>(parent_[static_cast<std::size_t>(x)])];
      x = parent_[static_cast<std::size_t>(x)];
    }
    return x;
  }

  // Returns false when a and b were already connected.
  bool unite(int a, int b) {
    a = find(a);
    b = find(b);
    if (a == b) return false;
    if (rank_[static_cast<std::size_t>(a)] < rank_[static_cast<std::size_t>(b)]) std::swap(a, b);
    parent_[static_cast<std::size_t>(b)] = a;
    if (rank_[static_cast<std::size_t>(a)] == rank_[static_cast<std::size_t>(b)]) ++rank_[static_cast<std::size_t>(a)];
    return true;
  }

  bool connected(int a, int b) { return find(a) == find(b); }

 private:
  std::vector<int> parent_;
  std::vector<int> rank_;
};

// Edge set over d nodes, in insertion (selection) order.
struct Tree {
  int d = 0;
  std::vector<Edge> edges;

  bool contains(Edge e) const { return std::find(edges.begin(), edges.end(), e) != edges.end(); }

  bool is_acyclic() const {
    UnionFind uf(d);
    for (const Edge& e : edges) {
      if (!uf.unite(e.u, e.v)) return false;
    }
    return true;
  }

  bool is_spanning() const { return static_cast<int>(edges.size()) == d - 1 && is_acyclic(); }

  std::vector<Edge> sorted_edges() const {
    auto s = edges;
    std::sort(s.begin(), s.end());
    return s;
  }
};

// ---------------------------------------------------------------------------
// Scores

// Count-space discrepancy |C_ij - n_hat * P_i (x) P_j|_1 with sensitivity 2.
// P_i are the clipped, normalized noisy one-way marginals; n_hat is the mean
// clipped total across those tables.
inline EdgeScores quality_scores(const Dataset& data, std::span<const CountTable> noisy_one_way) {
  const int d = data.d();
  if (static_cast<int>(noisy_one_way.size()) != d) {
    throw ArgumentError("quality scores need one noisy one-way table per attribute");
  }
  std::vector<std::vector<double>> probs(static_cast<std::size_t>(d));
  double n_hat = 0.0;
  for (int i = 0; i < d; ++i) {
    const auto& t = noisy_one_way[static_cast<std::size_t>(i)];
    if (t.cells.size() != static_cast<std::size_t>(data.schema().domain_size(i))) {
      throw ArgumentError("noisy one-way table for attribute " + std::to_string(i) + " has wrong shape");
    }
    CountTable clipped = t;
    for (double& c : clipped.cells) c = std::max(c, 0.0);
    n_hat += clipped.total();
    probs[static_cast<std::size_t>(i)] = normalize(clipped).cells;
  }
  n_hat /= d;

  EdgeScores s(d, 2.0);
  for (int i = 0; i < d; ++i) {
    for (int j = i + 1; j < d; ++j) {
      const CountTable c = two_way_counts(data, i, j);
      const auto& pi = probs[static_cast<std::size_t>(i)];
      const auto& pj = probs[static_cast<std::size_t>(j)];
      double q = 0.0;
      for (std::size_t u = 0; u < pi.size(); ++u) {
        for (std::size_t v = 0; v < pj.size(); ++v) q += std::abs(c.at(u, v) - n_hat * pi[u] * pj[v]);
      }
      s.set(i, j, q);
    }
  }
  return s;
}

// Exact-data scores with noiseless one-way tables; evaluation only.
inline EdgeScores exact_quality_scores(const Dataset& data) {
  std::vector<CountTable> one_way;
  for (int i = 0; i < data.d(); ++i) one_way.push_back(one_way_counts(data, i));
  return quality_scores(data, one_way);
}

// Probability-space score |P(Xi,Xj) - P(Xi)P(Xj)|_2^2 on the exact data.
// Reported alongside the count-space score; never fed to the mechanism.
inline EdgeScores probability_scores(const Dataset& data) {
  const int d = data.d();
  EdgeScores s(d, 1.0);
  std::vector<ProbTable> one(static_cast<std::size_t>(d));
  for (int i = 0; i < d; ++i) one[static_cast<std::size_t>(i)] = normalize(one_way_counts(data, i));
  for (int i = 0; i < d; ++i) {
    for (int j = i + 1; j < d; ++j) {
      const ProbTable p = normalize(two_way_counts(data, i, j));
      const auto& pi = one[static_cast<std::size_t>(i)].cells;
      const auto& pj = one[static_cast<std::size_t>(j)].cells;
      double q = 0.0;
      for (std::size_t u = 0; u < pi.size(); ++u) {
        for (std::size_t v = 0; v < pj.size(); ++v) {
          const double diff = p.at(u, v) - pi[u] * pj[v];
          q += diff * diff;
        }
      }
      s.set(i, j, q);
    }
  }
  return s;
}

inline double sum_q(const Tree& tree, const EdgeScores& scores) {
  double s = 0.0;
  for (const Edge& e : tree.edges) s += scores(e);
  return s;
}

// ---------------------------------------------------------------------------
// Separation

namespace detail {

inline std::vector<char> membership(int d, std::span<const int> set) {
  std::vector<char> m(static_cast<std::size_t>(d), 0);
  for (int a : set) m.at(static_cast<std::size_t>(a)) = 1;
  return m;
}

// True iff, in the graph on V \ Z using the given edges, no component holds
// both an X node and a Y node.
inline bool separated(int d, std::span<const Edge> edges, const CIConstraint& ci) {
  const auto inZ = membership(d, ci.Z);
  UnionFind uf(d);
  for (const Edge& e : edges) {
    if (!inZ[static_cast<std::size_t>(e.u)] && !inZ[static_cast<std::size_t>(e.v)]) uf.unite(e.u, e.v);
  }
  std::vector<char> hasX(static_cast<std::size_t>(d), 0);
  for (int x : ci.X) hasX[static_cast<std::size_t>(uf.find(x))] = 1;
  for (int y : ci.Y) {
    if (hasX[static_cast<std::size_t>(uf.find(y))]) return false;
  }
  return true;
}

}  // namespace detail

// Would adding `candidate` to `tree` join X and Y outside Z? Edges touching Z
// never do.
inline bool is_ci_consistent(const Tree& tree, Edge candidate, const CIConstraint& ci) {
  std::vector<Edge> e = tree.edges;
  e.push_back(candidate);
  return detail::separated(tree.d, e, ci);
}

// Removing Z from the tree leaves no X-Y path.
inline bool separates(const Tree& tree, const CIConstraint& ci) { return detail::separated(tree.d, tree.edges, ci); }

// ---------------------------------------------------------------------------
// Private greedy selection

struct TraceStep {
  int round = 0;
  std::size_t feasible = 0;
  Edge chosen;
  double score = 0.0;
};

using GreedyTrace = std::vector<TraceStep>;

namespace detail {

// d-1 rounds of the exponential mechanism over the acyclic candidates that
// pass `admissible`. Candidates are listed in lexicographic order, so an
// infinite eps breaks ties toward the smallest pair.
inline Tree private_greedy(const EdgeScores& scores, double eps_prime, RngStream& rng,
                           const std::function<bool(const Tree&, Edge)>& admissible, GreedyTrace* trace) {
  const int d = scores.d();
  Tree tree{d, {}};
  UnionFind uf(d);
  std::vector<Edge> cands;
  std::vector<double> q;
  for (int t = 1; t <= d - 1; ++t) {
    cands.clear();
    q.clear();
    for (int i = 0; i < d; ++i) {
      for (int j = i + 1; j < d; ++j) {
        if (uf.connected(i, j)) continue;
        const Edge e(i, j);
        if (!admissible(tree, e)) continue;
        cands.push_back(e);
        q.push_back(scores(e));
      }
    }
    if (cands.empty()) throw SelectionError("no feasible edge at round " + std::to_string(t));
    RngStream round_rng = rng.child("edge-" + std::to_string(t));
    const std::size_t k = exponential_mechanism(q, eps_prime, scores.delta_q(), round_rng);
    tree.edges.push_back(cands[k]);
    uf.unite(cands[k].u, cands[k].v);
    if (trace) trace->push_back({t, cands.size(), cands[k], q[k]});
  }
  return tree;
}

}  // namespace detail

inline Tree select_tree_mst(const EdgeScores& scores, double eps_prime, RngStream& rng, GreedyTrace* trace = nullptr) {
  return detail::private_greedy(scores, eps_prime, rng, [](const Tree&, Edge) { return true; }, trace);
}

inline Tree select_tree_privci(const EdgeScores& scores, const CIConstraint& ci, double eps_prime, RngStream& rng,
                               GreedyTrace* trace = nullptr) {
  if (ci.Z.empty()) throw ConfigError("empty conditioning set");
  return detail::private_greedy(
      scores, eps_prime, rng, [&ci](const Tree& t, Edge e) { return is_ci_consistent(t, e, ci); }, trace);
}

// Static rule: X nodes may connect only to X or Z, Y nodes only to Y or Z.
inline bool prefair_admissible(Edge e, const CIConstraint& ci, int d) {
  const auto inX = detail::membership(d, ci.X);
  const auto inY = detail::membership(d, ci.Y);
  const auto inZ = detail::membership(d, ci.Z);
  auto ok = [&](int a, int b) {
    if (inX[static_cast<std::size_t>(a)]) return inX[static_cast<std::size_t>(b)] || inZ[static_cast<std::size_t>(b)];
    if (inY[static_cast<std::size_t>(a)]) return inY[static_cast<std::size_t>(b)] || inZ[static_cast<std::size_t>(b)];
    return true;
  };
  return ok(e.u, e.v) && ok(e.v, e.u);
}

inline std::vector<Edge> prefair_surviving_edges(int d, const CIConstraint& ci) {
  std::vector<Edge> out;
  for (int i = 0; i < d; ++i) {
    for (int j = i + 1; j < d; ++j) {
      if (prefair_admissible(Edge(i, j), ci, d)) out.emplace_back(i, j);
    }
  }
  return out;
}

inline Tree select_tree_prefair(const EdgeScores& scores, const CIConstraint& ci, double eps_prime, RngStream& rng,
                                GreedyTrace* trace = nullptr) {
  if (ci.Z.empty()) throw ConfigError("empty conditioning set");
  const int d = scores.d();
  std::vector<char> allowed(static_cast<std::size_t>(d) * static_cast<std::size_t>(d), 0);
  for (const Edge& e : prefair_surviving_edges(d, ci)) allowed[static_cast<std::size_t>(e.u * d + e.v)] = 1;
  return detail::private_greedy(
      scores, eps_prime, rng, [&](const Tree&, Edge e) { return allowed[static_cast<std::size_t>(e.u * d + e.v)] != 0; },
      trace);
}

// ---------------------------------------------------------------------------
// Exhaustive oracle

// Calls f(edges) for every labeled spanning tree on d nodes, decoded from
// each Pruefer sequence.
template <typename F>
void for_each_spanning_tree(int d, F&& f) {
  if (d < 2) return;
  if (d == 2) {
    std::vector<Edge> e{Edge(0, 1)};
    f(std::as_const(e));
    return;
  }
  const int len = d - 2;
  std::vector<int> seq(static_cast<std::size_t>(len), 0);
  std::vector<int> degree(static_cast<std::size_t>(d));
  std::vector<Edge> edges;
  edges.reserve(static_cast<std::size_t>(d - 1));
  while (true) {
    std::fill(degree.begin(), degree.end(), 1);
    for (int s : seq) ++degree[static_cast<std::size_t>(s)];
    edges.clear();
    for (int s : seq) {
      int leaf = 0;
      while (degree[static_cast<std::size_t>(leaf)] != 1) ++leaf;
      edges.emplace_back(leaf, s);
      --degree[static_cast<std::size_t>(leaf)];
      --degree[static_cast<std::size_t>(s)];
    }
    int a = -1;
    for (int v = 0; v < d; ++v) {
      if (degree[static_cast<std::size_t>(v)] == 1) {
        if (a < 0) {
          a = v;
        } else {
          edges.emplace_back(a, v);
          break;
        }
      }
    }
    f(std::as_const(edges));
    int k = len - 1;
    while (k >= 0 && seq[static_cast<std::size_t>(k)] == d - 1) seq[static_cast<std::size_t>(k--)] = 0;
    if (k < 0) break;
    ++seq[static_cast<std::size_t>(k)];
  }
}

inline constexpr int kBruteForceMaxNodes = 8;

// Best spanning tree under the separation constraint (or unconstrained when
// `ci` is empty). Ties go to the lexicographically smallest sorted edge list.
inline Tree brute_force_best_ci_tree(const EdgeScores& scores, const std::optional<CIConstraint>& ci) {
  const int d = scores.d();
  if (d > kBruteForceMaxNodes) {
    throw ArgumentError("brute-force tree search refused for d = " + std::to_string(d) + " > " +
                        std::to_string(kBruteForceMaxNodes));
  }
  double best = -std::numeric_limits<double>::infinity();
  std::vector<Edge> best_edges;
  for_each_spanning_tree(d, [&](const std::vector<Edge>& edges) {
    if (ci && !detail::separated(d, edges, *ci)) return;
    double s = 0.0;
    for (const Edge& e : edges) s += scores(e);
    if (s < best) return;
    auto sorted = edges;
    std::sort(sorted.begin(), sorted.end());
    if (s > best || sorted < best_edges) {
      best = s;
      best_edges = std::move(sorted);
    }
  });
  if (best_edges.empty()) throw SelectionError("no spanning tree satisfies the constraint");
  return Tree{d, best_edges};
}

}  // namespace privci
