#pragma once

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"
#include "privci/benchmark.hpp"
#include "privci/config.hpp"
#include "privci/data.hpp"
#include "privci/eval.hpp"
#include "privci/model.hpp"
#include "privci/pipeline.hpp"

namespace privci::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitFailure = 1;
inline constexpr int kExitUsage = 2;

struct SynthOptions {
  std::string input;
  std::string config;
  double epsilon = 0.0;
  double delta = kDefaultDelta;
  std::string method = "privci";
  std::optional<std::size_t> rows;
  std::uint64_t seed = 0;
  std::string out;
  bool trace = false;
};

struct EvaluateOptions {
  std::string real;
  std::string synth;
  std::string config;
  std::string model;
  int folds = 5;
  std::uint64_t seed = 0;
  std::string out;
};

struct BenchmarkOptions {
  std::string input;
  std::string config;
  std::vector<double> epsilons;
  std::optional<int> folds;
  std::vector<std::uint64_t> seeds;
  std::vector<std::string> methods;
  double delta = kDefaultDelta;
  std::optional<int> workers;
  std::string out;
};

namespace detail {

inline void write_json(const std::filesystem::path& p, const nlohmann::json& j) {
  std::ofstream out(p);
  if (!out) throw Error("cannot write '" + p.string() + "'");
  out << j.dump(2) << '\n';
}

inline std::ofstream open_out(const std::filesystem::path& p) {
  std::ofstream out(p);
  if (!out) throw Error("cannot write '" + p.string() + "'");
  return out;
}

}  // namespace detail

inline int cmd_synth(const SynthOptions& o) {
  const Config cfg = load_config(o.config);
  const Dataset data = load_dataset(o.input, cfg);
  const Method method = parse_method(o.method);
  const CheckedConfig checked = resolve(cfg, data.schema(), is_constrained(method));

  SynthesisRequest req;
  req.data = data;
  req.ci = checked.ci;
  req.method = method;
  req.epsilon = o.epsilon;
  req.delta = o.delta;
  req.n_out = o.rows.value_or(data.n());
  req.seed = o.seed;
  const SynthesisResult res = synthesize(req);

  const std::filesystem::path dir(o.out);
  std::filesystem::create_directories(dir);
  {
    auto out = detail::open_out(dir / "synthetic.csv");
    write_csv(res.synthetic, out);
  }
  detail::write_json(dir / "model.json", to_json(res.model));
  detail::write_json(dir / "provenance.json", to_json(res.provenance));
  if (o.trace) {
    auto out = detail::open_out(dir / "trace.jsonl");
    for (const auto& s : res.provenance.trace) out << trace_to_json(s).dump() << '\n';
  }
  return kExitOk;
}

inline int cmd_evaluate(const EvaluateOptions& o) {
  const Config cfg = load_config(o.config);
  const Dataset real = load_dataset(o.real, cfg);
  if (!std::filesystem::exists(o.synth)) throw Error("synthetic file '" + o.synth + "' not found");
  const Dataset synth = load_dataset_as(o.synth, cfg, real.schema());
  const CheckedConfig checked = resolve(cfg, real.schema(), false);
  const EvalSetup setup = default_eval_setup(real.schema(), checked, outcome_index(cfg, real.schema()));

  std::optional<Tree> tree;
  if (!o.model.empty()) {
    std::ifstream in(o.model);
    if (!in) throw Error("cannot open model '" + o.model + "'");
    const TreeModel m = model_from_json(nlohmann::json::parse(in));
    if (!m.schema.same_domains(real.schema())) throw Error("model schema does not match the real data");
    tree = m.tree;
  }

  std::vector<Dataset> folds;
  for (const auto& rows : kfold_indices(real.n(), o.folds, o.seed)) folds.push_back(real.subset(rows));
  const MetricsReport rep = evaluate(real, synth, folds, setup, tree ? &*tree : nullptr);
  nlohmann::json j = to_json(rep);
  j["folds"] = o.folds;
  j["outcome"] = real.schema()[setup.outcome].name;
  if (o.out.empty()) {
    std::cout << j.dump(2) << '\n';
  } else {
    const std::filesystem::path p(o.out);
    if (p.has_parent_path()) std::filesystem::create_directories(p.parent_path());
    detail::write_json(p, j);
  }
  return kExitOk;
}

inline int cmd_benchmark(const BenchmarkOptions& o) {
  const Config cfg = load_config(o.config);
  const Dataset data = load_dataset(o.input, cfg);

  BenchmarkGrid grid;
  if (!cfg.grid.epsilons.empty()) grid.epsilons = cfg.grid.epsilons;
  if (cfg.grid.folds) grid.folds = *cfg.grid.folds;
  if (!cfg.grid.seeds.empty()) grid.seeds = cfg.grid.seeds;
  if (!cfg.grid.methods.empty()) {
    grid.methods.clear();
    for (const auto& m : cfg.grid.methods) grid.methods.push_back(parse_method(m));
  }
  if (!o.epsilons.empty()) grid.epsilons = o.epsilons;
  if (o.folds) grid.folds = *o.folds;
  if (!o.seeds.empty()) grid.seeds = o.seeds;
  if (!o.methods.empty()) {
    grid.methods.clear();
    for (const auto& m : o.methods) grid.methods.push_back(parse_method(m));
  }
  grid.delta = o.delta;
  if (o.workers) {
    grid.workers = *o.workers;
  } else if (const char* env = std::getenv("PRIVCI_WORKERS")) {
    grid.workers = std::max(1, std::atoi(env));
  }
  for (double e : grid.epsilons) {
    if (!(e > 0.0)) throw ArgumentError("epsilon values must be > 0");
  }
  if (grid.folds < 2) throw ArgumentError("need at least 2 folds");

  bool constrained = false;
  for (Method m : grid.methods) constrained = constrained || is_constrained(m);
  const CheckedConfig checked = resolve(cfg, data.schema(), constrained);
  const EvalSetup setup = default_eval_setup(data.schema(), checked, outcome_index(cfg, data.schema()));

  const auto cells = run_benchmark(data, checked, setup, grid);
  const std::filesystem::path dir(o.out);
  std::filesystem::create_directories(dir);
  {
    auto out = detail::open_out(dir / "cells.csv");
    write_cells_csv(cells, out);
  }
  const auto has = [&](Method m) { return std::find(grid.methods.begin(), grid.methods.end(), m) != grid.methods.end(); };
  if (has(Method::privci) && has(Method::prefair)) {
    auto out = detail::open_out(dir / "comparison.csv");
    write_comparison_csv(compare_methods(cells, Method::privci, Method::prefair), out);
  }
  int failed = 0;
  for (const auto& c : cells) {
    if (!c.ok) {
      ++failed;
      std::cerr << "cell eps=" << c.key.epsilon << " fold=" << c.key.fold << " seed=" << c.key.seed
                << " method=" << to_string(c.key.method) << " failed: " << c.error << '\n';
    }
  }
  return failed ? kExitFailure : kExitOk;
}

// Entry point shared by the executable and the tests.
inline int run(int argc, const char* const* argv) {
  CLI::App app{"Differentially private synthetic data with a conditional-independence constraint"};
  app.require_subcommand(1);

  SynthOptions so;
  auto* synth = app.add_subcommand("synth", "Generate a synthetic dataset");
  synth->add_option("--input", so.input, "Input CSV")->required();
  synth->add_option("--config", so.config, "Config JSON")->required();
  synth->add_option("--epsilon", so.epsilon, "Privacy budget epsilon")->required();
  synth->add_option("--delta", so.delta, "Privacy parameter delta")->capture_default_str();
  synth->add_option("--method", so.method, "mst, privci or prefair")->capture_default_str();
  synth->add_option("--rows", so.rows, "Synthetic row count (default: input size)");
  synth->add_option("--seed", so.seed, "Root random seed")->capture_default_str();
  synth->add_option("--out", so.out, "Output directory")->required();
  synth->add_flag("--trace", so.trace, "Also write the greedy trace as JSON lines");

  EvaluateOptions eo;
  auto* evaluate_cmd = app.add_subcommand("evaluate", "Score a synthetic dataset against real data");
  evaluate_cmd->add_option("--real", eo.real, "Real CSV")->required();
  evaluate_cmd->add_option("--synth", eo.synth, "Synthetic CSV")->required();
  evaluate_cmd->add_option("--config", eo.config, "Config JSON")->required();
  evaluate_cmd->add_option("--model", eo.model, "Model JSON (enables tree scores)");
  evaluate_cmd->add_option("--folds", eo.folds, "Held-out real folds")->capture_default_str();
  evaluate_cmd->add_option("--seed", eo.seed, "Fold split seed")->capture_default_str();
  evaluate_cmd->add_option("--out", eo.out, "Metrics JSON path (default: stdout)");

  BenchmarkOptions bo;
  auto* bench = app.add_subcommand("benchmark", "Run the method x epsilon x fold x seed grid");
  bench->add_option("--input", bo.input, "Input CSV")->required();
  bench->add_option("--config", bo.config, "Config JSON")->required();
  bench->add_option("--epsilons", bo.epsilons, "Epsilon list")->delimiter(',');
  bench->add_option("--folds", bo.folds, "Fold count");
  bench->add_option("--seeds", bo.seeds, "Seed list")->delimiter(',');
  bench->add_option("--methods", bo.methods, "Method list")->delimiter(',');
  bench->add_option("--delta", bo.delta, "Privacy parameter delta")->capture_default_str();
  bench->add_option("--workers", bo.workers, "Worker threads (default: PRIVCI_WORKERS or 1)");
  bench->add_option("--out", bo.out, "Output directory")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kExitUsage;
  }

  try {
    if (synth->parsed()) return cmd_synth(so);
    if (evaluate_cmd->parsed()) return cmd_evaluate(eo);
    if (bench->parsed()) return cmd_benchmark(bo);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitFailure;
  }
  return kExitUsage;
}

}  // namespace privci::cli
