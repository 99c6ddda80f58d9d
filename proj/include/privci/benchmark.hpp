#pragma once

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdint>
#include <iomanip>
#include <map>
#include <ostream>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include "privci/data.hpp"
#include "privci/eval.hpp"
#include "privci/pipeline.hpp"
#include "privci/rng.hpp"

namespace privci {

struct BenchmarkGrid {
  std::vector<double> epsilons{0.5, 1.0};
  int folds = 5;
  std::vector<std::uint64_t> seeds{0, 1, 2, 3, 4};
  std::vector<Method> methods{Method::privci, Method::prefair, Method::mst};
  double delta = kDefaultDelta;
  int workers = 1;
};

struct CellKey {
  double epsilon = 0.0;
  int fold = 0;
  std::uint64_t seed = 0;
  Method method = Method::privci;
};

struct CellResult {
  CellKey key;
  bool ok = false;
  std::string error;
  MetricsReport metrics;
};

// Metric name, accessor and the direction that favors the first method.
struct MetricSpec {
  const char* name;
  double (*get)(const MetricsReport&);
  Direction favors;
};

inline const std::vector<MetricSpec>& benchmark_metrics() {
  static const std::vector<MetricSpec> m{
      {"sum_q", [](const MetricsReport& r) { return r.sum_q_count.value_or(NAN); }, Direction::greater},
      {"sum_q_prob", [](const MetricsReport& r) { return r.sum_q_prob.value_or(NAN); }, Direction::greater},
      {"kl", [](const MetricsReport& r) { return r.kl_pairwise; }, Direction::less},
      {"tv", [](const MetricsReport& r) { return r.tv_pairwise; }, Direction::less},
      {"cmi", [](const MetricsReport& r) { return r.cmi; }, Direction::less},
      {"auc", [](const MetricsReport& r) { return r.auc; }, Direction::greater},
      {"eo", [](const MetricsReport& r) { return r.eo; }, Direction::less},
  };
  return m;
}

inline std::uint64_t cell_seed(std::uint64_t seed, int fold, std::size_t eps_index) {
  return detail::splitmix64(seed ^ detail::splitmix64(static_cast<std::uint64_t>(fold) * 1000003ULL + eps_index));
}

// Runs one (epsilon, fold, seed, method) cell: synthesize from the training
// folds, evaluate against the held-out fold.
inline CellResult run_cell(const Dataset& data, const CheckedConfig& cfg, const EvalSetup& setup, const BenchmarkGrid& grid,
                           const CellKey& key, std::size_t eps_index) {
  CellResult out{key, false, {}, {}};
  try {
    const auto folds = kfold_indices(data.n(), grid.folds, key.seed);
    std::vector<std::size_t> train_rows;
    for (int f = 0; f < grid.folds; ++f) {
      if (f != key.fold) train_rows.insert(train_rows.end(), folds[static_cast<std::size_t>(f)].begin(), folds[static_cast<std::size_t>(f)].end());
    }
    std::sort(train_rows.begin(), train_rows.end());
    const Dataset train = data.subset(train_rows);
    const Dataset test = data.subset(folds[static_cast<std::size_t>(key.fold)]);

    SynthesisRequest req;
    req.data = train;
    req.ci = cfg.ci;
    req.method = key.method;
    req.epsilon = key.epsilon;
    req.delta = grid.delta;
    req.n_out = train.n();
    req.seed = cell_seed(key.seed, key.fold, eps_index);
    const SynthesisResult res = synthesize(req);
    const Dataset tests[] = {test};
    out.metrics = evaluate(train, res.synthetic, tests, setup, &res.tree);
    out.ok = true;
  } catch (const std::exception& e) {
    out.error = e.what();
  }
  return out;
}

inline std::vector<CellResult> run_benchmark(const Dataset& data, const CheckedConfig& cfg, const EvalSetup& setup,
                                             const BenchmarkGrid& grid) {
  struct Job {
    CellKey key;
    std::size_t eps_index;
  };
  std::vector<Job> jobs;
  for (std::size_t e = 0; e < grid.epsilons.size(); ++e) {
    for (int f = 0; f < grid.folds; ++f) {
      for (std::uint64_t s : grid.seeds) {
        for (Method m : grid.methods) jobs.push_back({{grid.epsilons[e], f, s, m}, e});
      }
    }
  }
  std::vector<CellResult> results(jobs.size());
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t k = next++; k < jobs.size(); k = next++) {
      results[k] = run_cell(data, cfg, setup, grid, jobs[k].key, jobs[k].eps_index);
    }
  };
  const int workers = std::max(1, std::min<int>(grid.workers, static_cast<int>(jobs.size())));
  std::vector<std::thread> pool;
  for (int w = 1; w < workers; ++w) pool.emplace_back(worker);
  worker();
  for (auto& t : pool) t.join();
  return results;
}

struct ComparisonRow {
  double epsilon = 0.0;
  std::string metric;
  Method a = Method::privci;
  Method b = Method::prefair;
  PairedComparison test;
  bool significant = false;
};

inline constexpr double kSignificanceLevel = 0.05;

// Paired one-sided Wilcoxon tests of method a against method b, per epsilon
// and metric. d_i = m_i(a) - m_i(b) over the (fold, seed) units where both
// cells succeeded and the metric is finite.
inline std::vector<ComparisonRow> compare_methods(const std::vector<CellResult>& cells, Method a, Method b) {
  using Unit = std::pair<int, std::uint64_t>;
  std::map<double, std::map<Unit, std::pair<const CellResult*, const CellResult*>>> paired;
  for (const auto& c : cells) {
    if (!c.ok) continue;
    auto& slot = paired[c.key.epsilon][{c.key.fold, c.key.seed}];
    if (c.key.method == a && !slot.first) slot.first = &c;
    if (c.key.method == b && !slot.second) slot.second = &c;
  }
  std::vector<ComparisonRow> rows;
  for (const auto& [eps, units] : paired) {
    for (const auto& spec : benchmark_metrics()) {
      std::vector<double> diffs;
      for (const auto& [unit, pr] : units) {
        if (!pr.first || !pr.second) continue;
        const double x = spec.get(pr.first->metrics);
        const double y = spec.get(pr.second->metrics);
        if (std::isfinite(x) && std::isfinite(y)) diffs.push_back(x - y);
      }
      ComparisonRow row{eps, spec.name, a, b, wilcoxon_one_sided(diffs, spec.favors), false};
      row.significant = row.test.p_value < kSignificanceLevel;
      rows.push_back(std::move(row));
    }
  }
  return rows;
}

namespace detail {

inline std::string fmt(double x) {
  if (std::isnan(x)) return "nan";
  std::ostringstream os;
  os << std::setprecision(12) << x;
  return os.str();
}

}  // namespace detail

inline void write_cells_csv(const std::vector<CellResult>& cells, std::ostream& out) {
  out << "epsilon,fold,seed,method,status";
  for (const auto& m : benchmark_metrics()) out << ',' << m.name;
  out << ",error\n";
  for (const auto& c : cells) {
    out << detail::fmt(c.key.epsilon) << ',' << c.key.fold << ',' << c.key.seed << ',' << to_string(c.key.method) << ','
        << (c.ok ? "ok" : "failed");
    for (const auto& m : benchmark_metrics()) out << ',' << (c.ok ? detail::fmt(m.get(c.metrics)) : "");
    out << ',' << detail::quote_csv(c.error) << '\n';
  }
}

inline void write_comparison_csv(const std::vector<ComparisonRow>& rows, std::ostream& out) {
  out << "epsilon,metric,method_a,method_b,n,delta,p_value,direction,significant\n";
  for (const auto& r : rows) {
    out << detail::fmt(r.epsilon) << ',' << r.metric << ',' << to_string(r.a) << ',' << to_string(r.b) << ',' << r.test.n
        << ',' << detail::fmt(r.test.delta) << ',' << detail::fmt(r.test.p_value) << ',' << to_string(r.test.direction)
        << ',' << (r.significant ? 1 : 0) << '\n';
  }
}

}  // namespace privci
