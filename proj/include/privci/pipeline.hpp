#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "json.hpp"
#include "privci/data.hpp"
#include "privci/dp.hpp"
#include "privci/error.hpp"
#include "privci/model.hpp"
#include "privci/rng.hpp"
#include "privci/structure.hpp"

namespace privci {

enum class Method { mst, privci, prefair };

inline std::string to_string(Method m) {
  switch (m) {
    case Method::mst:
      return "mst";
    case Method::privci:
      return "privci";
    case Method::prefair:
      return "prefair";
  }
  return "?";
}

inline Method parse_method(const std::string& s) {
  if (s == "mst") return Method::mst;
  if (s == "privci") return Method::privci;
  if (s == "prefair") return Method::prefair;
  throw ArgumentError("unknown method '" + s + "' (expected mst, privci or prefair)");
}

inline constexpr double kDefaultDelta = 1e-9;

struct SynthesisRequest {
  Dataset data;
  CIConstraint ci;
  Method method = Method::privci;
  double epsilon = 1.0;
  double delta = kDefaultDelta;
  std::size_t n_out = 0;
  std::uint64_t seed = 0;
};

// Everything needed to audit or replay a run.
struct Provenance {
  Method method = Method::privci;
  std::uint64_t seed = 0;
  std::size_t n_in = 0;
  std::size_t n_out = 0;
  PrivacyBudget budget;
  double delta_q = 0.0;
  CIConstraint ci;
  Tree tree;
  GreedyTrace trace;
  std::vector<EdgeFit> ipf;  // fitted tables dropped
};

struct SynthesisResult {
  Dataset synthetic;
  Tree tree;
  TreeModel model;
  Provenance provenance;
};

inline bool is_constrained(Method m) { return m != Method::mst; }

inline SynthesisResult synthesize(const SynthesisRequest& req) {
  const Dataset& data = req.data;
  const int d = data.d();
  if (!(req.epsilon > 0.0)) throw ArgumentError("epsilon must be > 0");
  if (!(req.delta > 0.0 && req.delta < 1.0)) throw ArgumentError("delta must lie in (0, 1)");
  if (is_constrained(req.method) && req.ci.Z.empty()) {
    throw ConfigError("method " + to_string(req.method) + " needs a nonempty conditioning set");
  }

  const PrivacyBudget plan = stage_plan(req.epsilon, req.delta, d);
  RngStream root(req.seed, "synthesize");

  // Stage 1: one-way marginals.
  RngStream one_rng = root.child("one-way");
  const std::vector<CountTable> one_way = measure_one_way(data, plan.sigma_one_way, one_rng);

  // Stage 2: tree selection by the exponential mechanism.
  const EdgeScores scores = quality_scores(data, one_way);
  RngStream edge_rng = root.child("edge");
  GreedyTrace trace;
  Tree tree;
  switch (req.method) {
    case Method::mst:
      tree = select_tree_mst(scores, plan.eps_prime, edge_rng, &trace);
      break;
    case Method::privci:
      tree = select_tree_privci(scores, req.ci, plan.eps_prime, edge_rng, &trace);
      break;
    case Method::prefair:
      tree = select_tree_prefair(scores, req.ci, plan.eps_prime, edge_rng, &trace);
      break;
  }
  if (!tree.is_spanning()) throw SelectionError("selected structure is not a spanning tree");
  if (is_constrained(req.method) && !separates(tree, req.ci)) {
    throw SelectionError("selected tree violates the conditional-independence constraint");
  }

  // Stage 3: two-way marginals on the tree edges.
  RngStream two_rng = root.child("two-way");
  NoisyMeasurements m;
  m.schema = data.schema();
  m.tree = tree;
  m.one_way = one_way;
  m.sigma_one_way = plan.sigma_one_way;
  m.sigma_two_way = plan.sigma_two_way;
  m.two_way = measure_two_way(data, tree, plan.sigma_two_way, two_rng);

  // Post-processing only from here on.
  TreeModel model = reconcile(m);
  RngStream sample_rng = root.child("sample");
  Dataset synthetic = sample(model, req.n_out, sample_rng);

  Provenance prov;
  prov.method = req.method;
  prov.seed = req.seed;
  prov.n_in = data.n();
  prov.n_out = req.n_out;
  prov.budget = plan;
  prov.delta_q = scores.delta_q();
  prov.ci = req.ci;
  prov.tree = tree;
  prov.trace = std::move(trace);
  for (const auto& f : model.fits) prov.ipf.push_back({f.edge, f.sweeps, f.newton_steps, f.residual, {}});
  return SynthesisResult{std::move(synthetic), std::move(tree), std::move(model), std::move(prov)};
}

inline nlohmann::json trace_to_json(const TraceStep& s) {
  return {{"round", s.round}, {"feasible", s.feasible}, {"edge", {s.chosen.u, s.chosen.v}}, {"score", s.score}};
}

inline nlohmann::json to_json(const Provenance& p) {
  nlohmann::json stages = nlohmann::json::array();
  for (const auto& s : p.budget.stages) stages.push_back({{"stage", s.name}, {"rho", s.rho}});
  nlohmann::json edges = nlohmann::json::array();
  for (const Edge& e : p.tree.edges) edges.push_back({e.u, e.v});
  nlohmann::json trace = nlohmann::json::array();
  for (const auto& s : p.trace) trace.push_back(trace_to_json(s));
  nlohmann::json ipf = nlohmann::json::array();
  for (const auto& f : p.ipf) {
    ipf.push_back({{"edge", {f.edge.u, f.edge.v}}, {"sweeps", f.sweeps}, {"newton_steps", f.newton_steps}, {"residual", f.residual}});
  }
  return {{"method", to_string(p.method)},
          {"seed", p.seed},
          {"n_in", p.n_in},
          {"n_out", p.n_out},
          {"epsilon", p.budget.epsilon},
          {"delta", p.budget.delta},
          {"rho", p.budget.rho},
          {"rho_stage", p.budget.rho_stage},
          {"stages", stages},
          {"rho_spent", p.budget.total_spent()},
          {"sigma_g_base", p.budget.sigma_g_base},
          {"sigma_one_way", p.budget.sigma_one_way},
          {"sigma_two_way", p.budget.sigma_two_way},
          {"eps_prime", p.budget.eps_prime},
          {"delta_q", p.delta_q},
          {"constraint", {{"X", p.ci.X}, {"Y", p.ci.Y}, {"Z", p.ci.Z}}},
          {"edges", edges},
          {"trace", trace},
          {"ipf", ipf}};
}

}  // namespace privci
