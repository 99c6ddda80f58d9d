#pragma once

#include <algorithm>
#include <fstream>
#include <optional>
#include <string>
#include <variant>
#include <vector>

#include "json.hpp"
#include "privci/data.hpp"
#include "privci/error.hpp"

namespace privci {

// Benchmark grid; every field is optional in the file and overridable by flags.
struct GridConfig {
  std::vector<double> epsilons;
  std::optional<int> folds;
  std::vector<std::uint64_t> seeds;
  std::vector<std::string> methods;
};

// Run configuration keyed by attribute names.
struct Config {
  std::vector<std::string> S, O, A, I;
  BinningSpec binning;
  std::optional<std::vector<std::string>> cX, cY, cZ;
  std::optional<std::string> outcome;
  GridConfig grid;
};

namespace detail {

inline std::vector<std::string> names(const nlohmann::json& j, const char* key) {
  if (!j.contains(key)) return {};
  const auto& v = j.at(key);
  if (!v.is_array()) throw ConfigError(std::string("'") + key + "' must be an array of attribute names");
  return v.get<std::vector<std::string>>();
}

inline BinningRule parse_rule(const std::string& attr, const nlohmann::json& j) {
  const std::string type = j.value("type", "");
  BinningRule rule;
  if (type == "passthrough") {
    rule = Passthrough{};
  } else if (type == "equal-width") {
    rule = EqualWidth{j.at("bins").get<int>(), j.at("min").get<double>(), j.at("max").get<double>()};
  } else if (type == "cutpoints" || type == "explicit-cutpoints") {
    rule = Cutpoints{j.at("cutpoints").get<std::vector<double>>()};
  } else {
    throw ConfigError("binning rule for '" + attr + "' has unknown type '" + type + "'");
  }
  check_rule(attr, rule);
  return rule;
}

}  // namespace detail

inline Config parse_config(const nlohmann::json& j) {
  Config c;
  try {
    if (!j.contains("roles")) throw ConfigError("config is missing 'roles'");
    const auto& r = j.at("roles");
    c.S = detail::names(r, "S");
    c.O = detail::names(r, "O");
    c.A = detail::names(r, "A");
    c.I = detail::names(r, "I");
    if (j.contains("binning")) {
      for (const auto& [name, rule] : j.at("binning").items()) c.binning.emplace(name, detail::parse_rule(name, rule));
    }
    if (j.contains("constraint")) {
      const auto& k = j.at("constraint");
      c.cX = detail::names(k, "X");
      c.cY = detail::names(k, "Y");
      c.cZ = detail::names(k, "Z");
    }
    if (j.contains("outcome")) c.outcome = j.at("outcome").get<std::string>();
    if (j.contains("grid")) {
      const auto& g = j.at("grid");
      c.grid.epsilons = g.value("epsilons", std::vector<double>{});
      if (g.contains("folds")) c.grid.folds = g.at("folds").get<int>();
      c.grid.seeds = g.value("seeds", std::vector<std::uint64_t>{});
      c.grid.methods = g.value("methods", std::vector<std::string>{});
    }
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("malformed config: ") + e.what());
  }
  return c;
}

inline Config load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config '" + path + "'");
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError("config '" + path + "' is not valid JSON: " + e.what());
  }
  return parse_config(j);
}

// Reads the CSV and applies the config's binning rules.
inline Dataset load_dataset(const std::string& csv_path, const Config& cfg) {
  const RawTable raw = read_csv(csv_path);
  return cfg.binning.empty() ? encode(raw) : discretize(raw, cfg.binning);
}

// Reads a CSV into an existing schema (e.g. synthetic output next to the
// real data). Binned columns accept either a bin label or a raw number.
inline Dataset load_dataset_as(const std::string& csv_path, const Config& cfg, const Schema& schema) {
  RawTable raw = read_csv(csv_path);
  for (std::size_t i = 0; i < raw.header.size(); ++i) {
    auto it = cfg.binning.find(raw.header[i]);
    if (it == cfg.binning.end() || std::holds_alternative<Passthrough>(it->second)) continue;
    const auto labels = detail::bin_labels(it->second);
    for (auto& r : raw.rows) {
      if (i >= r.size() || std::find(labels.begin(), labels.end(), r[i]) != labels.end()) continue;
      r[i] = labels[static_cast<std::size_t>(bin_index(it->second, detail::parse_number(raw.header[i], r[i])))];
    }
  }
  return encode(raw, schema);
}

inline CheckedConfig resolve(const Config& cfg, const Schema& schema, bool require_conditioning = true) {
  auto idx = [&](const std::vector<std::string>& ns) {
    std::vector<int> out;
    for (const auto& n : ns) out.push_back(schema.index_of(n));
    return out;
  };
  RoleAssignment roles{idx(cfg.S), idx(cfg.O), idx(cfg.A), idx(cfg.I)};
  std::optional<CIConstraint> ci;
  if (cfg.cX || cfg.cY || cfg.cZ) {
    ci = CIConstraint{idx(cfg.cX.value_or(std::vector<std::string>{})), idx(cfg.cY.value_or(std::vector<std::string>{})),
                      idx(cfg.cZ.value_or(std::vector<std::string>{}))};
  }
  return validate_roles(schema, roles, ci, require_conditioning);
}

inline std::optional<int> outcome_index(const Config& cfg, const Schema& schema) {
  if (!cfg.outcome) return std::nullopt;
  return schema.index_of(*cfg.outcome);
}

}  // namespace privci
