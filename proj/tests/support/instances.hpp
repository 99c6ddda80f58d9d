#pragma once

// Instance generators and independent oracles shared by the unit and
// acceptance suites. Nothing here calls the code paths it is used to check.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <random>
#include <vector>

#include "privci/privci.hpp"

namespace privci::testing {

inline Schema binary_schema(int d) {
  std::vector<Attribute> a;
  for (int i = 0; i < d; ++i) a.push_back({"x" + std::to_string(i), 2, {}});
  return Schema(a);
}

inline Schema schema_with(const std::vector<int>& domains) {
  std::vector<Attribute> a;
  for (std::size_t i = 0; i < domains.size(); ++i) a.push_back({"x" + std::to_string(i), domains[i], {}});
  return Schema(a);
}

inline EdgeScores random_scores(int d, std::mt19937_64& g, double hi = 100.0) {
  std::uniform_real_distribution<double> u(0.0, hi);
  EdgeScores s(d, 2.0);
  for (int i = 0; i < d; ++i) {
    for (int j = i + 1; j < d; ++j) s.set(i, j, u(g));
  }
  return s;
}

// Random disjoint nonempty X, Y, Z; leftover nodes are unconstrained.
inline CIConstraint random_constraint(int d, std::mt19937_64& g, int z_size = -1) {
  std::vector<int> nodes(static_cast<std::size_t>(d));
  std::iota(nodes.begin(), nodes.end(), 0);
  std::shuffle(nodes.begin(), nodes.end(), g);
  auto pick = [&](int lo, int hi) { return std::uniform_int_distribution<int>(lo, hi)(g); };
  const int nz = z_size > 0 ? z_size : pick(1, d - 2);
  const int nx = pick(1, d - nz - 1);
  const int ny = pick(1, d - nz - nx);
  CIConstraint c;
  std::size_t k = 0;
  for (int t = 0; t < nz; ++t) c.Z.push_back(nodes[k++]);
  for (int t = 0; t < nx; ++t) c.X.push_back(nodes[k++]);
  for (int t = 0; t < ny; ++t) c.Y.push_back(nodes[k++]);
  return c;
}

// Depth-first reachability on V \ Z; independent of the union-find path.
inline bool oracle_separates(int d, const std::vector<Edge>& edges, const CIConstraint& ci) {
  std::vector<char> blocked(static_cast<std::size_t>(d), 0);
  for (int z : ci.Z) blocked[static_cast<std::size_t>(z)] = 1;
  std::vector<std::vector<int>> adj(static_cast<std::size_t>(d));
  for (const Edge& e : edges) {
    adj[static_cast<std::size_t>(e.u)].push_back(e.v);
    adj[static_cast<std::size_t>(e.v)].push_back(e.u);
  }
  for (int x : ci.X) {
    std::vector<char> seen(static_cast<std::size_t>(d), 0);
    std::vector<int> stack{x};
    seen[static_cast<std::size_t>(x)] = 1;
    while (!stack.empty()) {
      const int v = stack.back();
      stack.pop_back();
      if (std::find(ci.Y.begin(), ci.Y.end(), v) != ci.Y.end()) return false;
      for (int w : adj[static_cast<std::size_t>(v)]) {
        if (!seen[static_cast<std::size_t>(w)] && !blocked[static_cast<std::size_t>(w)]) {
          seen[static_cast<std::size_t>(w)] = 1;
          stack.push_back(w);
        }
      }
    }
  }
  return true;
}

inline bool oracle_is_spanning_tree(int d, const std::vector<Edge>& edges) {
  if (static_cast<int>(edges.size()) != d - 1) return false;
  std::vector<std::vector<int>> adj(static_cast<std::size_t>(d));
  for (const Edge& e : edges) {
    adj[static_cast<std::size_t>(e.u)].push_back(e.v);
    adj[static_cast<std::size_t>(e.v)].push_back(e.u);
  }
  std::vector<char> seen(static_cast<std::size_t>(d), 0);
  std::vector<int> stack{0};
  seen[0] = 1;
  int count = 1;
  while (!stack.empty()) {
    const int v = stack.back();
    stack.pop_back();
    for (int w : adj[static_cast<std::size_t>(v)]) {
      if (!seen[static_cast<std::size_t>(w)]) {
        seen[static_cast<std::size_t>(w)] = 1;
        ++count;
        stack.push_back(w);
      }
    }
  }
  return count == d;
}

// Classical Kruskal by sorted edge list (descending weight, ascending pair).
inline std::vector<Edge> oracle_kruskal(const EdgeScores& s) {
  std::vector<Edge> all;
  for (int i = 0; i < s.d(); ++i) {
    for (int j = i + 1; j < s.d(); ++j) all.emplace_back(i, j);
  }
  std::stable_sort(all.begin(), all.end(), [&](Edge a, Edge b) { return s(a) > s(b); });
  std::vector<int> comp(static_cast<std::size_t>(s.d()));
  std::iota(comp.begin(), comp.end(), 0);
  std::vector<Edge> out;
  for (Edge e : all) {
    const int cu = comp[static_cast<std::size_t>(e.u)], cv = comp[static_cast<std::size_t>(e.v)];
    if (cu == cv) continue;
    for (int& c : comp) {
      if (c == cv) c = cu;
    }
    out.push_back(e);
  }
  std::sort(out.begin(), out.end());
  return out;
}

// One-sided signed-rank p-value by enumerating all 2^n sign assignments of
// the observed average ranks.
inline double oracle_wilcoxon(const std::vector<double>& diffs, Direction dir) {
  std::vector<double> nz;
  for (double x : diffs) {
    if (x != 0.0) nz.push_back(x);
  }
  const std::size_t n = nz.size();
  if (n == 0) return 1.0;
  std::vector<double> ranks(n);
  for (std::size_t i = 0; i < n; ++i) {
    double less = 0, equal = 0;
    for (std::size_t j = 0; j < n; ++j) {
      if (std::abs(nz[j]) < std::abs(nz[i])) less += 1;
      if (std::abs(nz[j]) == std::abs(nz[i])) equal += 1;
    }
    ranks[i] = less + (equal + 1.0) / 2.0;
  }
  double observed = 0;
  for (std::size_t i = 0; i < n; ++i) {
    if (nz[i] > 0) observed += ranks[i];
  }
  std::size_t hits = 0;
  for (std::uint64_t mask = 0; mask < (1ULL << n); ++mask) {
    double w = 0;
    for (std::size_t i = 0; i < n; ++i) {
      if (mask >> i & 1ULL) w += ranks[i];
    }
    if (dir == Direction::greater ? w >= observed - 1e-9 : w <= observed + 1e-9) ++hits;
  }
  return static_cast<double>(hits) / static_cast<double>(1ULL << n);
}

// Planted-bias instance: o copies s with probability 0.9 (a direct S-O
// dependence), i is a proxy of s, a is mildly tied to s, w hangs off a.
// Roles: S = {s}, O = {o}, A = {a}, I = {i, w}.
struct PlantedInstance {
  Dataset data;
  RoleAssignment roles;
  CIConstraint ci;
};

inline PlantedInstance planted_instance(std::size_t n, std::uint64_t seed) {
  std::mt19937_64 g(seed);
  std::bernoulli_distribution coin(0.5);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::uniform_int_distribution<int> three(0, 2);
  Schema schema({{"s", 2, {}}, {"a", 3, {}}, {"o", 2, {}}, {"i", 3, {}}, {"w", 2, {}}});
  std::vector<std::vector<int>> rows;
  for (std::size_t r = 0; r < n; ++r) {
    const int s = coin(g) ? 1 : 0;
    const int a = u(g) < 0.5 ? s : three(g);
    const int o = u(g) < 0.9 ? s : 1 - s;
    const int i = u(g) < 0.8 ? s : three(g);
    const int w = u(g) < 0.7 ? (a == 2 ? 1 : 0) : (coin(g) ? 1 : 0);
    rows.push_back({s, a, o, i, w});
  }
  PlantedInstance p{Dataset::from_rows(schema, rows), {{0}, {2}, {1}, {3, 4}}, {{0}, {2}, {1}}};
  return p;
}

// Random small categorical dataset drawn from a random tree-free joint.
inline Dataset random_dataset(const std::vector<int>& domains, std::size_t n, std::mt19937_64& g) {
  const Schema s = schema_with(domains);
  std::vector<std::vector<int>> rows(n, std::vector<int>(domains.size()));
  for (auto& r : rows) {
    for (std::size_t i = 0; i < domains.size(); ++i) {
      // correlate with the previous attribute half the time
      if (i > 0 && std::bernoulli_distribution(0.5)(g)) {
        r[i] = r[i - 1] % domains[i];
      } else {
        r[i] = std::uniform_int_distribution<int>(0, domains[i] - 1)(g);
      }
    }
  }
  return Dataset::from_rows(s, rows);
}

}  // namespace privci::testing
