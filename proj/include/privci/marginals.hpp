#pragma once

#include <cstddef>
#include <numeric>
#include <vector>

#include "privci/data.hpp"
#include "privci/error.hpp"

namespace privci {

// Dense contingency table over one or two attributes. Two-way cells are
// row-major: cell (u, v) lives at u * shape[1] + v. Noisy tables may hold
// negative or fractional cells.
struct CountTable {
  std::vector<int> attrs;
  std::vector<std::size_t> shape;
  std::vector<double> cells;

  double total() const { return std::accumulate(cells.begin(), cells.end(), 0.0); }
  double at(std::size_t u, std::size_t v) const { return cells[u * shape[1] + v]; }
};

struct ProbTable {
  std::vector<int> attrs;
  std::vector<std::size_t> shape;
  std::vector<double> cells;

  double at(std::size_t u, std::size_t v) const { return cells[u * shape[1] + v]; }
};

inline CountTable one_way_counts(const Dataset& data, int i) {
  if (i < 0 || i >= data.d()) throw ArgumentError("attribute index " + std::to_string(i) + " out of range");
  const auto k = static_cast<std::size_t>(data.schema().domain_size(i));
  CountTable t{{i}, {k}, std::vector<double>(k, 0.0)};
  for (int c : data.column(i)) t.cells[static_cast<std::size_t>(c)] += 1.0;
  return t;
}

inline CountTable two_way_counts(const Dataset& data, int i, int j) {
  if (i < 0 || i >= data.d() || j < 0 || j >= data.d()) throw ArgumentError("attribute index out of range");
  if (i == j) throw ArgumentError("two-way marginal needs distinct attributes");
  const auto ki = static_cast<std::size_t>(data.schema().domain_size(i));
  const auto kj = static_cast<std::size_t>(data.schema().domain_size(j));
  CountTable t{{i, j}, {ki, kj}, std::vector<double>(ki * kj, 0.0)};
  auto ci = data.column(i);
  auto cj = data.column(j);
  for (std::size_t r = 0; r < ci.size(); ++r) {
    t.cells[static_cast<std::size_t>(ci[r]) * kj + static_cast<std::size_t>(cj[r])] += 1.0;
  }
  return t;
}

// Sums a two-way table over the other axis; `axis` 0 keeps rows, 1 keeps columns.
inline CountTable marginalize(const CountTable& t, int axis) {
  if (t.shape.size() != 2) throw ArgumentError("marginalize expects a two-way table");
  const std::size_t rows = t.shape[0], cols = t.shape[1];
  const std::size_t k = axis == 0 ? rows : cols;
  CountTable out{{t.attrs[static_cast<std::size_t>(axis)]}, {k}, std::vector<double>(k, 0.0)};
  for (std::size_t u = 0; u < rows; ++u) {
    for (std::size_t v = 0; v < cols; ++v) out.cells[axis == 0 ? u : v] += t.cells[u * cols + v];
  }
  return out;
}

// An all-zero table maps to the uniform distribution.
inline ProbTable normalize(const CountTable& t) {
  ProbTable p{t.attrs, t.shape, t.cells};
  const double total = t.total();
  if (total == 0.0) {
    const double u = p.cells.empty() ? 0.0 : 1.0 / static_cast<double>(p.cells.size());
    for (double& c : p.cells) c = u;
    return p;
  }
  for (double& c : p.cells) c /= total;
  return p;
}

}  // namespace privci
