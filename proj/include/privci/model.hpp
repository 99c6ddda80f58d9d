#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <numeric>
#include <queue>
#include <span>
#include <sstream>
#include <string>
#include <vector>

#include "json.hpp"
#include "privci/data.hpp"
#include "privci/dp.hpp"
#include "privci/error.hpp"
#include "privci/marginals.hpp"
#include "privci/rng.hpp"
#include "privci/structure.hpp"

namespace privci {

inline constexpr double kProbabilityFloor = 1e-8;
inline constexpr double kIpfTolerance = 1e-10;
inline constexpr int kIpfMaxSweeps = 500;

// Privatized marginals: one table per attribute and one per tree edge (in
// tree edge order, oriented edge.u x edge.v). Cells may be negative.
struct NoisyMeasurements {
  Schema schema;
  Tree tree;
  std::vector<CountTable> one_way;
  std::vector<CountTable> two_way;
  double sigma_one_way = 0.0;
  double sigma_two_way = 0.0;
};

namespace detail {

// Releases a group of tables as one concatenated vector query.
inline std::vector<CountTable> noisy_group(std::vector<CountTable> tables, double sigma, RngStream& rng) {
  std::vector<double> flat;
  for (const auto& t : tables) flat.insert(flat.end(), t.cells.begin(), t.cells.end());
  const auto noisy = gaussian_mechanism(flat, sigma, rng);
  std::size_t off = 0;
  for (auto& t : tables) {
    std::copy_n(noisy.begin() + static_cast<std::ptrdiff_t>(off), t.cells.size(), t.cells.begin());
    off += t.cells.size();
  }
  return tables;
}

}  // namespace detail

inline std::vector<CountTable> measure_one_way(const Dataset& data, double sigma, RngStream& rng) {
  std::vector<CountTable> exact;
  for (int i = 0; i < data.d(); ++i) exact.push_back(one_way_counts(data, i));
  return detail::noisy_group(std::move(exact), sigma, rng);
}

inline std::vector<CountTable> measure_two_way(const Dataset& data, const Tree& tree, double sigma, RngStream& rng) {
  std::vector<CountTable> exact;
  for (const Edge& e : tree.edges) exact.push_back(two_way_counts(data, e.u, e.v));
  return detail::noisy_group(std::move(exact), sigma, rng);
}

// Both measurement stages at the planned scales, on streams "one-way" and
// "two-way" derived from `rng`.
inline NoisyMeasurements measure(const Dataset& data, const Tree& tree, const PrivacyBudget& plan, RngStream& rng) {
  if (tree.d != data.d() || !tree.is_spanning()) throw ArgumentError("measurement tree must span the schema");
  RngStream one = rng.child("one-way");
  RngStream two = rng.child("two-way");
  NoisyMeasurements m;
  m.schema = data.schema();
  m.tree = tree;
  m.sigma_one_way = plan.sigma_one_way;
  m.sigma_two_way = plan.sigma_two_way;
  m.one_way = measure_one_way(data, plan.sigma_one_way, one);
  m.two_way = measure_two_way(data, tree, plan.sigma_two_way, two);
  return m;
}

// ---------------------------------------------------------------------------
// Reconciliation

struct EdgeFit {
  Edge edge;
  int sweeps = 0;
  int newton_steps = 0;
  double residual = 0.0;
  std::vector<double> table;  // fitted joint, rows = edge.u
};

// Rooted tree factorization: P(root) * prod P(child | parent).
struct TreeModel {
  Schema schema;
  Tree tree;
  int root = 0;
  std::vector<int> parent;  // -1 at the root
  std::vector<int> order;   // parents before children
  ProbTable root_marginal;
  // conditionals[c][pv * k_c + cv] = P(X_c = cv | X_parent = pv); empty for the root.
  std::vector<std::vector<double>> conditionals;
  std::vector<EdgeFit> fits;

  int d() const { return schema.d(); }

  double conditional(int child, int pv, int cv) const {
    const auto k = static_cast<std::size_t>(schema.domain_size(child));
    return conditionals[static_cast<std::size_t>(child)][static_cast<std::size_t>(pv) * k + static_cast<std::size_t>(cv)];
  }
};

// Clip at zero, normalize (uniform when nothing survives), then mix in the
// floor so every cell is at least kProbabilityFloor and the sum stays 1.
inline std::vector<double> floored_distribution(std::span<const double> cells) {
  CountTable t{{}, {cells.size()}, std::vector<double>(cells.begin(), cells.end())};
  for (double& c : t.cells) c = std::max(c, 0.0);
  auto p = normalize(t).cells;
  const double keep = 1.0 - static_cast<double>(p.size()) * kProbabilityFloor;
  for (double& x : p) x = keep * x + kProbabilityFloor;
  return p;
}

struct IpfResult {
  std::vector<double> table;
  int sweeps = 0;
  int newton_steps = 0;
  double residual = 0.0;
};

inline constexpr int kNewtonMaxSteps = 200;

namespace detail {

inline double marginal_residual(std::span<const double> table, std::span<const double> row_target,
                                std::span<const double> col_target) {
  const std::size_t rows = row_target.size(), cols = col_target.size();
  std::vector<double> rs(rows, 0.0), cs(cols, 0.0);
  for (std::size_t u = 0; u < rows; ++u) {
    for (std::size_t v = 0; v < cols; ++v) {
      rs[u] += table[u * cols + v];
      cs[v] += table[u * cols + v];
    }
  }
  double r = 0.0;
  for (std::size_t u = 0; u < rows; ++u) r = std::max(r, std::abs(rs[u] - row_target[u]));
  for (std::size_t v = 0; v < cols; ++v) r = std::max(r, std::abs(cs[v] - col_target[v]));
  return r;
}

// Dense solve by Gaussian elimination with partial pivoting; false if singular.
inline bool solve_dense(std::vector<double>& a, std::vector<double>& b, std::size_t n) {
  for (std::size_t c = 0; c < n; ++c) {
    std::size_t piv = c;
    for (std::size_t r = c + 1; r < n; ++r) {
      if (std::abs(a[r * n + c]) > std::abs(a[piv * n + c])) piv = r;
    }
    if (!(std::abs(a[piv * n + c]) > 0.0)) return false;
    if (piv != c) {
      for (std::size_t k = 0; k < n; ++k) std::swap(a[c * n + k], a[piv * n + k]);
      std::swap(b[c], b[piv]);
    }
    for (std::size_t r = c + 1; r < n; ++r) {
      const double f = a[r * n + c] / a[c * n + c];
      if (f == 0.0) continue;
      for (std::size_t k = c; k < n; ++k) a[r * n + k] -= f * a[c * n + k];
      b[r] -= f * b[c];
    }
  }
  for (std::size_t c = n; c-- > 0;) {
    double s = b[c];
    for (std::size_t k = c + 1; k < n; ++k) s -= a[c * n + k] * b[k];
    b[c] = s / a[c * n + c];
  }
  return true;
}

// Finishes a stalled IPF run. The IPF limit is table * exp(alpha_u + beta_v)
// for the scalings minimizing sum(fitted) - <rows, alpha> - <cols, beta>;
// damped Newton on that convex dual reaches the same table quadratically.
// The last column scaling is pinned to zero (the dual is shift invariant).
inline int newton_scale(std::vector<double>& table, std::span<const double> row_target,
                        std::span<const double> col_target, double tol, int max_steps) {
  const std::size_t rows = row_target.size(), cols = col_target.size();
  const std::size_t n = rows + cols - 1;
  const std::vector<double> base = table;
  std::vector<double> theta(rows + cols, 0.0);
  auto fitted = [&](const std::vector<double>& th, std::vector<double>& out) {
    for (std::size_t u = 0; u < rows; ++u) {
      for (std::size_t v = 0; v < cols; ++v) out[u * cols + v] = base[u * cols + v] * std::exp(th[u] + th[rows + v]);
    }
  };
  auto dual = [&](const std::vector<double>& th, const std::vector<double>& fit) {
    double f = std::accumulate(fit.begin(), fit.end(), 0.0);
    for (std::size_t u = 0; u < rows; ++u) f -= row_target[u] * th[u];
    for (std::size_t v = 0; v < cols; ++v) f -= col_target[v] * th[rows + v];
    return f;
  };
  std::vector<double> fit(table.size()), trial_fit(table.size()), trial(theta.size());
  fitted(theta, fit);
  double f = dual(theta, fit);
  for (int step = 1; step <= max_steps; ++step) {
    std::vector<double> rs(rows, 0.0), cs(cols, 0.0);
    for (std::size_t u = 0; u < rows; ++u) {
      for (std::size_t v = 0; v < cols; ++v) {
        rs[u] += fit[u * cols + v];
        cs[v] += fit[u * cols + v];
      }
    }
    std::vector<double> h(n * n, 0.0), g(n);
    for (std::size_t u = 0; u < rows; ++u) {
      g[u] = -(rs[u] - row_target[u]);
      h[u * n + u] = rs[u];
      for (std::size_t v = 0; v + 1 < cols; ++v) {
        h[u * n + rows + v] = fit[u * cols + v];
        h[(rows + v) * n + u] = fit[u * cols + v];
      }
    }
    for (std::size_t v = 0; v + 1 < cols; ++v) {
      g[rows + v] = -(cs[v] - col_target[v]);
      h[(rows + v) * n + rows + v] = cs[v];
    }
    if (!solve_dense(h, g, n)) return -1;
    // backtracking line search on the dual objective
    double t = 1.0, slope = 0.0;
    for (std::size_t u = 0; u < rows; ++u) slope += (rs[u] - row_target[u]) * g[u];
    for (std::size_t v = 0; v + 1 < cols; ++v) slope += (cs[v] - col_target[v]) * g[rows + v];
    double ft = f;
    for (int ls = 0; ls < 60; ++ls, t *= 0.5) {
      trial = theta;
      for (std::size_t k = 0; k < rows; ++k) trial[k] += t * g[k];
      for (std::size_t k = 0; k + 1 < cols; ++k) trial[rows + k] += t * g[rows + k];
      fitted(trial, trial_fit);
      ft = dual(trial, trial_fit);
      if (std::isfinite(ft) && ft <= f + 1e-4 * t * slope) break;
    }
    theta.swap(trial);
    fit.swap(trial_fit);
    f = ft;
    if (marginal_residual(fit, row_target, col_target) < tol) {
      table = fit;
      return step;
    }
  }
  return -1;
}

}  // namespace detail

// Alternately rescales rows and columns of a strictly positive table toward
// the target marginals until both match within `tol`.
inline IpfResult fit_to_marginals(std::vector<double> table, std::span<const double> row_target,
                                  std::span<const double> col_target, double tol = kIpfTolerance,
                                  int max_sweeps = kIpfMaxSweeps, int max_newton = kNewtonMaxSteps) {
  const std::size_t rows = row_target.size(), cols = col_target.size();
  if (table.size() != rows * cols) throw ArgumentError("table shape does not match targets");
  for (double x : table) {
    if (!(x > 0.0)) throw ArgumentError("IPF needs a strictly positive table");
  }
  IpfResult out;
  for (int sweep = 1; sweep <= max_sweeps; ++sweep) {
    for (std::size_t u = 0; u < rows; ++u) {
      double s = 0.0;
      for (std::size_t v = 0; v < cols; ++v) s += table[u * cols + v];
      for (std::size_t v = 0; v < cols; ++v) table[u * cols + v] *= row_target[u] / s;
    }
    for (std::size_t v = 0; v < cols; ++v) {
      double s = 0.0;
      for (std::size_t u = 0; u < rows; ++u) s += table[u * cols + v];
      for (std::size_t u = 0; u < rows; ++u) table[u * cols + v] *= col_target[v] / s;
    }
    out.residual = detail::marginal_residual(table, row_target, col_target);
    out.sweeps = sweep;
    if (out.residual < tol) {
      out.table = std::move(table);
      return out;
    }
  }
  // Near-boundary tables make IPF converge sublinearly; finish with Newton.
  if (max_newton > 0) {
    const int steps = detail::newton_scale(table, row_target, col_target, tol, max_newton);
    if (steps > 0) {
      out.newton_steps = steps;
      out.residual = detail::marginal_residual(table, row_target, col_target);
      out.table = std::move(table);
      return out;
    }
  }
  std::ostringstream msg;
  msg << "IPF did not converge after " << max_sweeps << " sweeps; residual " << out.residual;
  throw ReconstructionError(msg.str());
}

namespace detail {

inline void orient(TreeModel& m) {
  const int d = m.d();
  std::vector<std::vector<int>> adj(static_cast<std::size_t>(d));
  for (const Edge& e : m.tree.edges) {
    adj[static_cast<std::size_t>(e.u)].push_back(e.v);
    adj[static_cast<std::size_t>(e.v)].push_back(e.u);
  }
  for (auto& a : adj) std::sort(a.begin(), a.end());
  m.parent.assign(static_cast<std::size_t>(d), -2);
  m.order.clear();
  std::queue<int> q;
  q.push(m.root);
  m.parent[static_cast<std::size_t>(m.root)] = -1;
  while (!q.empty()) {
    const int x = q.front();
    q.pop();
    m.order.push_back(x);
    for (int y : adj[static_cast<std::size_t>(x)]) {
      if (m.parent[static_cast<std::size_t>(y)] == -2) {
        m.parent[static_cast<std::size_t>(y)] = x;
        q.push(y);
      }
    }
  }
  if (static_cast<int>(m.order.size()) != d) throw ArgumentError("model tree does not span the schema");
}

}  // namespace detail

// Clip + floor + normalize every measurement, bend each edge table to the
// canonical one-way marginals by IPF, then root at attribute 0 and read off
// child-given-parent conditionals.
inline TreeModel reconcile(const NoisyMeasurements& m) {
  const int d = m.schema.d();
  if (static_cast<int>(m.one_way.size()) != d) throw ArgumentError("need one one-way measurement per attribute");
  if (m.two_way.size() != m.tree.edges.size()) throw ArgumentError("need one two-way measurement per tree edge");
  if (m.tree.d != d || !m.tree.is_spanning()) throw ArgumentError("measurement tree must span the schema");

  std::vector<std::vector<double>> canon(static_cast<std::size_t>(d));
  for (int i = 0; i < d; ++i) {
    if (m.one_way[static_cast<std::size_t>(i)].cells.size() != static_cast<std::size_t>(m.schema.domain_size(i))) {
      throw ArgumentError("one-way measurement shape mismatch for attribute " + std::to_string(i));
    }
    canon[static_cast<std::size_t>(i)] = floored_distribution(m.one_way[static_cast<std::size_t>(i)].cells);
  }

  TreeModel model;
  model.schema = m.schema;
  model.tree = m.tree;
  model.root = 0;
  for (std::size_t k = 0; k < m.tree.edges.size(); ++k) {
    const Edge e = m.tree.edges[k];
    const auto& target_u = canon[static_cast<std::size_t>(e.u)];
    const auto& target_v = canon[static_cast<std::size_t>(e.v)];
    if (m.two_way[k].cells.size() != target_u.size() * target_v.size()) {
      throw ArgumentError("two-way measurement shape mismatch on an edge");
    }
    IpfResult fit = fit_to_marginals(floored_distribution(m.two_way[k].cells), target_u, target_v);
    model.fits.push_back({e, fit.sweeps, fit.newton_steps, fit.residual, std::move(fit.table)});
  }

  detail::orient(model);
  model.root_marginal = ProbTable{{model.root}, {canon[static_cast<std::size_t>(model.root)].size()}, canon[static_cast<std::size_t>(model.root)]};
  model.conditionals.assign(static_cast<std::size_t>(d), {});
  for (const EdgeFit& f : model.fits) {
    const int pu = model.parent[static_cast<std::size_t>(f.edge.v)] == f.edge.u ? f.edge.u : f.edge.v;
    const int child = pu == f.edge.u ? f.edge.v : f.edge.u;
    const auto ku = static_cast<std::size_t>(m.schema.domain_size(f.edge.u));
    const auto kv = static_cast<std::size_t>(m.schema.domain_size(f.edge.v));
    const auto kp = pu == f.edge.u ? ku : kv;
    const auto kc = pu == f.edge.u ? kv : ku;
    std::vector<double> cond(kp * kc);
    for (std::size_t pv = 0; pv < kp; ++pv) {
      double s = 0.0;
      for (std::size_t cv = 0; cv < kc; ++cv) {
        const double x = pu == f.edge.u ? f.table[pv * kv + cv] : f.table[cv * kv + pv];
        cond[pv * kc + cv] = x;
        s += x;
      }
      for (std::size_t cv = 0; cv < kc; ++cv) cond[pv * kc + cv] /= s;
    }
    model.conditionals[static_cast<std::size_t>(child)] = std::move(cond);
  }
  return model;
}

inline double model_joint_prob(const TreeModel& m, std::span<const int> record) {
  if (static_cast<int>(record.size()) != m.d()) throw ArgumentError("record width does not match the model");
  for (int i = 0; i < m.d(); ++i) {
    if (record[static_cast<std::size_t>(i)] < 0 || record[static_cast<std::size_t>(i)] >= m.schema.domain_size(i)) {
      throw ArgumentError("code " + std::to_string(record[static_cast<std::size_t>(i)]) + " outside domain of attribute '" +
                          m.schema[i].name + "'");
    }
  }
  double p = m.root_marginal.cells[static_cast<std::size_t>(record[static_cast<std::size_t>(m.root)])];
  for (int c = 0; c < m.d(); ++c) {
    const int par = m.parent[static_cast<std::size_t>(c)];
    if (par < 0) continue;
    p *= m.conditional(c, record[static_cast<std::size_t>(par)], record[static_cast<std::size_t>(c)]);
  }
  return p;
}

// Node marginals implied by the factorization.
inline std::vector<std::vector<double>> model_node_marginals(const TreeModel& m) {
  std::vector<std::vector<double>> out(static_cast<std::size_t>(m.d()));
  out[static_cast<std::size_t>(m.root)] = m.root_marginal.cells;
  for (int c : m.order) {
    const int par = m.parent[static_cast<std::size_t>(c)];
    if (par < 0) continue;
    const int kc = m.schema.domain_size(c);
    auto& pc = out[static_cast<std::size_t>(c)];
    pc.assign(static_cast<std::size_t>(kc), 0.0);
    const auto& pp = out[static_cast<std::size_t>(par)];
    for (std::size_t pv = 0; pv < pp.size(); ++pv) {
      for (int cv = 0; cv < kc; ++cv) pc[static_cast<std::size_t>(cv)] += pp[pv] * m.conditional(c, static_cast<int>(pv), cv);
    }
  }
  return out;
}

// Implied joint over a tree edge, rows = edge.u.
inline std::vector<double> model_edge_marginal(const TreeModel& m, Edge e) {
  const auto nodes = model_node_marginals(m);
  const int par = m.parent[static_cast<std::size_t>(e.v)] == e.u ? e.u : e.v;
  const int child = par == e.u ? e.v : e.u;
  if (m.parent[static_cast<std::size_t>(child)] != par) throw ArgumentError("edge is not in the model tree");
  const auto ku = static_cast<std::size_t>(m.schema.domain_size(e.u));
  const auto kv = static_cast<std::size_t>(m.schema.domain_size(e.v));
  std::vector<double> out(ku * kv);
  for (std::size_t a = 0; a < ku; ++a) {
    for (std::size_t b = 0; b < kv; ++b) {
      const std::size_t pv = par == e.u ? a : b;
      const std::size_t cv = par == e.u ? b : a;
      out[a * kv + b] = nodes[static_cast<std::size_t>(par)][pv] * m.conditional(child, static_cast<int>(pv), static_cast<int>(cv));
    }
  }
  return out;
}

namespace detail {

inline int draw(std::span<const double> probs, double u) {
  double acc = 0.0;
  for (std::size_t k = 0; k < probs.size(); ++k) {
    acc += probs[k];
    if (u < acc) return static_cast<int>(k);
  }
  return static_cast<int>(probs.size()) - 1;
}

}  // namespace detail

// Ancestral sampling, parents before children.
inline Dataset sample(const TreeModel& m, std::size_t n, RngStream& rng) {
  std::vector<std::vector<int>> cols(static_cast<std::size_t>(m.d()), std::vector<int>(n));
  for (std::size_t r = 0; r < n; ++r) {
    for (int c : m.order) {
      const int par = m.parent[static_cast<std::size_t>(c)];
      const double u = rng.uniform();
      if (par < 0) {
        cols[static_cast<std::size_t>(c)][r] = detail::draw(m.root_marginal.cells, u);
        continue;
      }
      const auto kc = static_cast<std::size_t>(m.schema.domain_size(c));
      const auto pv = static_cast<std::size_t>(cols[static_cast<std::size_t>(par)][r]);
      std::span<const double> row(m.conditionals[static_cast<std::size_t>(c)].data() + pv * kc, kc);
      cols[static_cast<std::size_t>(c)][r] = detail::draw(row, u);
    }
  }
  return Dataset(m.schema, std::move(cols));
}

// ---------------------------------------------------------------------------
// JSON

inline nlohmann::json schema_to_json(const Schema& s) {
  nlohmann::json a = nlohmann::json::array();
  for (const auto& attr : s.attributes()) {
    a.push_back({{"name", attr.name}, {"domain_size", attr.domain_size}, {"labels", attr.labels}});
  }
  return a;
}

inline Schema schema_from_json(const nlohmann::json& j) {
  std::vector<Attribute> attrs;
  for (const auto& a : j) {
    attrs.push_back({a.at("name").get<std::string>(), a.at("domain_size").get<int>(),
                     a.value("labels", std::vector<std::string>{})});
  }
  return Schema(std::move(attrs));
}

inline nlohmann::json to_json(const TreeModel& m) {
  nlohmann::json edges = nlohmann::json::array();
  for (const Edge& e : m.tree.edges) edges.push_back({e.u, e.v});
  nlohmann::json conds = nlohmann::json::array();
  for (int c : m.order) {
    const int par = m.parent[static_cast<std::size_t>(c)];
    if (par < 0) continue;
    nlohmann::json table = nlohmann::json::array();
    const int kc = m.schema.domain_size(c);
    for (int pv = 0; pv < m.schema.domain_size(par); ++pv) {
      std::vector<double> row;
      for (int cv = 0; cv < kc; ++cv) row.push_back(m.conditional(c, pv, cv));
      table.push_back(row);
    }
    conds.push_back({{"child", c}, {"parent", par}, {"table", table}});
  }
  return {{"schema", schema_to_json(m.schema)}, {"edges", edges},        {"root", m.root},
          {"parent", m.parent},                 {"root_marginal", m.root_marginal.cells}, {"conditionals", conds}};
}

inline TreeModel model_from_json(const nlohmann::json& j) {
  TreeModel m;
  m.schema = schema_from_json(j.at("schema"));
  m.tree.d = m.schema.d();
  for (const auto& e : j.at("edges")) m.tree.edges.emplace_back(e.at(0).get<int>(), e.at(1).get<int>());
  if (!m.tree.is_spanning()) throw ParseError("model JSON edges do not form a spanning tree");
  m.root = j.at("root").get<int>();
  detail::orient(m);
  if (j.at("parent").get<std::vector<int>>() != m.parent) throw ParseError("model JSON parent map disagrees with its edges");
  m.root_marginal = ProbTable{{m.root}, {static_cast<std::size_t>(m.schema.domain_size(m.root))},
                              j.at("root_marginal").get<std::vector<double>>()};
  if (m.root_marginal.cells.size() != m.root_marginal.shape[0]) throw ParseError("root marginal has wrong size");
  m.conditionals.assign(static_cast<std::size_t>(m.d()), {});
  for (const auto& c : j.at("conditionals")) {
    const int child = c.at("child").get<int>();
    const int par = c.at("parent").get<int>();
    if (child < 0 || child >= m.d() || m.parent[static_cast<std::size_t>(child)] != par) {
      throw ParseError("model JSON conditional does not match the tree");
    }
    auto& cond = m.conditionals[static_cast<std::size_t>(child)];
    const auto& table = c.at("table");
    if (static_cast<int>(table.size()) != m.schema.domain_size(par)) throw ParseError("conditional table has wrong row count");
    for (const auto& row : table) {
      auto r = row.get<std::vector<double>>();
      if (static_cast<int>(r.size()) != m.schema.domain_size(child)) throw ParseError("conditional row has wrong width");
      cond.insert(cond.end(), r.begin(), r.end());
    }
  }
  for (int c = 0; c < m.d(); ++c) {
    if (c != m.root && m.conditionals[static_cast<std::size_t>(c)].empty()) throw ParseError("model JSON is missing a conditional");
  }
  return m;
}

}  // namespace privci
