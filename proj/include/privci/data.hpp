#pragma once

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstddef>
#include <fstream>
#include <istream>
#include <map>
#include <optional>
#include <ostream>
#include <set>
#include <span>
#include <sstream>
#include <string>
#include <string_view>
#include <unordered_map>
#include <variant>
#include <vector>

#include "privci/error.hpp"

namespace privci {

struct Attribute {
  std::string name;
  int domain_size = 1;
  // Raw value for each code; empty means codes are written as integers.
  std::vector<std::string> labels;

  bool operator==(const Attribute&) const = default;
};

// Ordered attribute list with finite domains. Immutable once constructed.
class Schema {
 public:
  Schema() = default;

  explicit Schema(std::vector<Attribute> attributes) : attributes_(std::move(attributes)) {
    if (attributes_.size() < 2) {
      throw ArgumentError("schema needs at least 2 attributes, got " +
                          std::to_string(attributes_.size()));
    }
    std::set<std::string> seen;
    for (const auto& a : attributes_) {
      if (!seen.insert(a.name).second) throw ArgumentError("duplicate attribute name '" + a.name + "'");
      if (a.domain_size < 1) throw ArgumentError("attribute '" + a.name + "' has empty domain");
      if (!a.labels.empty() && static_cast<int>(a.labels.size()) != a.domain_size) {
        throw ArgumentError("attribute '" + a.name + "' label count does not match its domain size");
      }
    }
  }

  int d() const { return static_cast<int>(attributes_.size()); }
  const Attribute& operator[](int i) const { return attributes_.at(static_cast<std::size_t>(i)); }
  const std::vector<Attribute>& attributes() const { return attributes_; }
  int domain_size(int i) const { return (*this)[i].domain_size; }

  int index_of(std::string_view name) const {
    for (int i = 0; i < d(); ++i) {
      if (attributes_[static_cast<std::size_t>(i)].name == name) return i;
    }
    throw ConfigError("unknown attribute '" + std::string(name) + "'");
  }

  // Product of the domains of `attrs`.
  std::size_t joint_size(std::span<const int> attrs) const {
    std::size_t s = 1;
    for (int a : attrs) s *= static_cast<std::size_t>(domain_size(a));
    return s;
  }

  bool same_domains(const Schema& other) const {
    if (d() != other.d()) return false;
    for (int i = 0; i < d(); ++i) {
      if ((*this)[i].name != other[i].name || domain_size(i) != other.domain_size(i)) return false;
    }
    return true;
  }

  bool operator==(const Schema&) const = default;

 private:
  std::vector<Attribute> attributes_;
};

// Column-oriented table of category codes.
class Dataset {
 public:
  Dataset() = default;

  Dataset(Schema schema, std::vector<std::vector<int>> columns)
      : schema_(std::move(schema)), columns_(std::move(columns)) {
    if (static_cast<int>(columns_.size()) != schema_.d()) {
      throw ArgumentError("column count does not match schema");
    }
    n_ = columns_.empty() ? 0 : columns_.front().size();
    for (int i = 0; i < schema_.d(); ++i) {
      const auto& col = columns_[static_cast<std::size_t>(i)];
      if (col.size() != n_) throw ArgumentError("ragged columns");
      for (int c : col) {
        if (c < 0 || c >= schema_.domain_size(i)) {
          throw DomainError("code " + std::to_string(c) + " outside domain of attribute '" +
                            schema_[i].name + "'");
        }
      }
    }
  }

  static Dataset from_rows(Schema schema, const std::vector<std::vector<int>>& rows) {
    std::vector<std::vector<int>> cols(static_cast<std::size_t>(schema.d()));
    for (auto& c : cols) c.reserve(rows.size());
    for (std::size_t r = 0; r < rows.size(); ++r) {
      if (static_cast<int>(rows[r].size()) != schema.d()) {
        throw ArgumentError("row " + std::to_string(r) + " has wrong width");
      }
      for (int i = 0; i < schema.d(); ++i) cols[static_cast<std::size_t>(i)].push_back(rows[r][static_cast<std::size_t>(i)]);
    }
    return Dataset(std::move(schema), std::move(cols));
  }

  const Schema& schema() const { return schema_; }
  std::size_t n() const { return n_; }
  int d() const { return schema_.d(); }
  int code(std::size_t row, int attr) const { return columns_[static_cast<std::size_t>(attr)][row]; }
  std::span<const int> column(int attr) const { return columns_.at(static_cast<std::size_t>(attr)); }

  std::vector<int> row(std::size_t r) const {
    std::vector<int> out(static_cast<std::size_t>(d()));
    for (int i = 0; i < d(); ++i) out[static_cast<std::size_t>(i)] = code(r, i);
    return out;
  }

  Dataset subset(std::span<const std::size_t> rows) const {
    std::vector<std::vector<int>> cols(columns_.size());
    for (std::size_t i = 0; i < columns_.size(); ++i) {
      cols[i].reserve(rows.size());
      for (std::size_t r : rows) cols[i].push_back(columns_[i].at(r));
    }
    return Dataset(schema_, std::move(cols));
  }

  bool operator==(const Dataset&) const = default;

 private:
  Schema schema_;
  std::vector<std::vector<int>> columns_;
  std::size_t n_ = 0;
};

// ---------------------------------------------------------------------------
// CSV

struct RawTable {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;
};

namespace detail {

inline std::vector<std::string> split_csv_line(std::string_view line) {
  std::vector<std::string> cells;
  std::string cur;
  bool quoted = false;
  for (std::size_t k = 0; k < line.size(); ++k) {
    char c = line[k];
    if (quoted) {
      if (c == '"') {
        if (k + 1 < line.size() && line[k + 1] == '"') {
          cur += '"';
          ++k;
        } else {
          quoted = false;
        }
      } else {
        cur += c;
      }
    } else if (c == '"') {
      quoted = true;
    } else if (c == ',') {
      cells.push_back(std::move(cur));
      cur.clear();
    } else {
      cur += c;
    }
  }
  cells.push_back(std::move(cur));
  return cells;
}

inline std::string quote_csv(const std::string& s) {
  if (s.find_first_of(",\"\n") == std::string::npos) return s;
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += '"';
    out += c;
  }
  out += '"';
  return out;
}

}  // namespace detail

inline RawTable parse_csv(std::istream& in) {
  RawTable t;
  std::string line;
  if (!std::getline(in, line)) throw ParseError("empty CSV: missing header row");
  if (!line.empty() && line.back() == '\r') line.pop_back();
  t.header = detail::split_csv_line(line);
  std::size_t lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    auto cells = detail::split_csv_line(line);
    if (cells.size() != t.header.size()) {
      throw ParseError("row at line " + std::to_string(lineno) + " has " + std::to_string(cells.size()) +
                       " fields, header has " + std::to_string(t.header.size()));
    }
    t.rows.push_back(std::move(cells));
  }
  return t;
}

inline RawTable read_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ParseError("cannot open '" + path + "'");
  return parse_csv(in);
}

// Encodes a raw string table. Without a hint each attribute's domain is the
// lexicographically sorted set of its distinct values.
inline Dataset encode(const RawTable& raw, const std::optional<Schema>& hint = std::nullopt) {
  const std::size_t d = raw.header.size();
  std::vector<Attribute> attrs(d);
  std::vector<std::vector<int>> cols(d, std::vector<int>(raw.rows.size()));
  for (std::size_t i = 0; i < d; ++i) {
    std::unordered_map<std::string, int> index;
    if (hint) {
      if (hint->d() != static_cast<int>(d)) throw DomainError("schema hint width does not match CSV header");
      attrs[i] = (*hint)[static_cast<int>(i)];
      if (attrs[i].name != raw.header[i]) {
        throw DomainError("schema hint attribute '" + attrs[i].name + "' does not match header '" +
                          raw.header[i] + "'");
      }
      for (int c = 0; c < static_cast<int>(attrs[i].labels.size()); ++c) index.emplace(attrs[i].labels[static_cast<std::size_t>(c)], c);
    } else {
      std::set<std::string> values;
      for (const auto& r : raw.rows) values.insert(r[i]);
      attrs[i].name = raw.header[i];
      attrs[i].labels.assign(values.begin(), values.end());
      attrs[i].domain_size = std::max<int>(1, static_cast<int>(values.size()));
      if (values.empty()) attrs[i].labels = {""};
      for (int c = 0; c < static_cast<int>(attrs[i].labels.size()); ++c) index.emplace(attrs[i].labels[static_cast<std::size_t>(c)], c);
    }
    for (std::size_t r = 0; r < raw.rows.size(); ++r) {
      const std::string& v = raw.rows[r][i];
      if (auto it = index.find(v); it != index.end()) {
        cols[i][r] = it->second;
        continue;
      }
      int code = -1;
      if (hint && attrs[i].labels.empty()) {
        auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), code);
        if (ec != std::errc() || p != v.data() + v.size()) code = -1;
      }
      if (code < 0 || code >= attrs[i].domain_size) {
        throw DomainError("value '" + v + "' outside domain of attribute '" + attrs[i].name + "'");
      }
      cols[i][r] = code;
    }
  }
  return Dataset(Schema(std::move(attrs)), std::move(cols));
}

inline Dataset load_csv(const std::string& path, const std::optional<Schema>& hint = std::nullopt) {
  return encode(read_csv(path), hint);
}

inline RawTable decode(const Dataset& data) {
  RawTable t;
  const Schema& s = data.schema();
  for (const auto& a : s.attributes()) t.header.push_back(a.name);
  t.rows.resize(data.n());
  for (std::size_t r = 0; r < data.n(); ++r) {
    t.rows[r].reserve(static_cast<std::size_t>(s.d()));
    for (int i = 0; i < s.d(); ++i) {
      const int c = data.code(r, i);
      t.rows[r].push_back(s[i].labels.empty() ? std::to_string(c) : s[i].labels[static_cast<std::size_t>(c)]);
    }
  }
  return t;
}

inline void write_csv(const RawTable& t, std::ostream& out) {
  for (std::size_t i = 0; i < t.header.size(); ++i) out << (i ? "," : "") << detail::quote_csv(t.header[i]);
  out << '\n';
  for (const auto& r : t.rows) {
    for (std::size_t i = 0; i < r.size(); ++i) out << (i ? "," : "") << detail::quote_csv(r[i]);
    out << '\n';
  }
}

inline void write_csv(const Dataset& data, std::ostream& out) { write_csv(decode(data), out); }

// ---------------------------------------------------------------------------
// Discretization

struct Passthrough {};

struct EqualWidth {
  int bins = 1;
  double min = 0.0;
  double max = 1.0;
};

struct Cutpoints {
  std::vector<double> cuts;  // strictly increasing
};

using BinningRule = std::variant<Passthrough, EqualWidth, Cutpoints>;

// Attribute name -> rule. Attributes without an entry pass through.
using BinningSpec = std::map<std::string, BinningRule>;

inline void check_rule(const std::string& attr, const BinningRule& rule) {
  if (const auto* ew = std::get_if<EqualWidth>(&rule)) {
    if (ew->bins < 1) throw ConfigError("equal-width rule for '" + attr + "' needs bins >= 1");
    if (!(ew->max > ew->min)) throw ConfigError("equal-width rule for '" + attr + "' needs max > min");
  } else if (const auto* cp = std::get_if<Cutpoints>(&rule)) {
    for (std::size_t k = 1; k < cp->cuts.size(); ++k) {
      if (!(cp->cuts[k] > cp->cuts[k - 1])) {
        throw ConfigError("cutpoints for '" + attr + "' must be strictly increasing");
      }
    }
  }
}

inline int bin_count(const BinningRule& rule) {
  if (const auto* ew = std::get_if<EqualWidth>(&rule)) return ew->bins;
  if (const auto* cp = std::get_if<Cutpoints>(&rule)) return static_cast<int>(cp->cuts.size()) + 1;
  return 0;
}

// Half-open bins [lo, hi); out-of-range values clamp to the first/last bin.
inline int bin_index(const BinningRule& rule, double v) {
  if (const auto* ew = std::get_if<EqualWidth>(&rule)) {
    const double width = (ew->max - ew->min) / ew->bins;
    const double k = std::floor((v - ew->min) / width);
    if (!(k >= 0)) return 0;
    return k >= ew->bins ? ew->bins - 1 : static_cast<int>(k);
  }
  const auto& cuts = std::get<Cutpoints>(rule).cuts;
  return static_cast<int>(std::upper_bound(cuts.begin(), cuts.end(), v) - cuts.begin());
}

namespace detail {

inline std::string fmt_num(double v) {
  std::ostringstream os;
  os << v;
  return os.str();
}

inline std::vector<std::string> bin_labels(const BinningRule& rule) {
  std::vector<std::string> out;
  if (const auto* ew = std::get_if<EqualWidth>(&rule)) {
    const double width = (ew->max - ew->min) / ew->bins;
    for (int k = 0; k < ew->bins; ++k) {
      out.push_back("[" + fmt_num(ew->min + k * width) + "," + fmt_num(ew->min + (k + 1) * width) + ")");
    }
  } else {
    const auto& cuts = std::get<Cutpoints>(rule).cuts;
    for (std::size_t k = 0; k <= cuts.size(); ++k) {
      const std::string lo = k == 0 ? "-inf" : fmt_num(cuts[k - 1]);
      const std::string hi = k == cuts.size() ? "inf" : fmt_num(cuts[k]);
      out.push_back("[" + lo + "," + hi + ")");
    }
  }
  return out;
}

inline double parse_number(const std::string& attr, const std::string& s) {
  double v = 0.0;
  const char* b = s.data();
  const char* e = s.data() + s.size();
  while (b < e && *b == ' ') ++b;
  auto [p, ec] = std::from_chars(b, e, v);
  if (ec != std::errc() || p != e || b == e) {
    throw TypeError("non-numeric value '" + s + "' under numeric rule for attribute '" + attr + "'");
  }
  return v;
}

}  // namespace detail

inline Dataset discretize(const RawTable& raw, const BinningSpec& spec) {
  for (const auto& [name, rule] : spec) {
    if (std::find(raw.header.begin(), raw.header.end(), name) == raw.header.end()) {
      throw ConfigError("binning rule for unknown attribute '" + name + "'");
    }
    check_rule(name, rule);
  }
  // Numeric columns are binned first; the rest go through sorted-value encoding.
  std::vector<std::optional<BinningRule>> rules(raw.header.size());
  for (std::size_t i = 0; i < raw.header.size(); ++i) {
    auto it = spec.find(raw.header[i]);
    if (it != spec.end() && !std::holds_alternative<Passthrough>(it->second)) rules[i] = it->second;
  }
  Dataset base = encode(raw);
  std::vector<Attribute> attrs = base.schema().attributes();
  std::vector<std::vector<int>> cols(raw.header.size());
  for (std::size_t i = 0; i < raw.header.size(); ++i) {
    if (!rules[i]) {
      auto c = base.column(static_cast<int>(i));
      cols[i].assign(c.begin(), c.end());
      continue;
    }
    attrs[i].domain_size = bin_count(*rules[i]);
    attrs[i].labels = detail::bin_labels(*rules[i]);
    cols[i].reserve(raw.rows.size());
    for (const auto& r : raw.rows) cols[i].push_back(bin_index(*rules[i], detail::parse_number(raw.header[i], r[i])));
  }
  return Dataset(Schema(std::move(attrs)), std::move(cols));
}

// ---------------------------------------------------------------------------
// Roles and the conditional-independence constraint

struct RoleAssignment {
  std::vector<int> S;  // protected
  std::vector<int> O;  // outcome
  std::vector<int> A;  // admissible
  std::vector<int> I;  // inadmissible
};

// X independent of Y given Z.
struct CIConstraint {
  std::vector<int> X;
  std::vector<int> Y;
  std::vector<int> Z;

  bool operator==(const CIConstraint&) const = default;
};

struct CheckedConfig {
  RoleAssignment roles;
  CIConstraint ci;
};

// Validates the S/O/A/I partition and the constraint. Without an explicit
// constraint the fairness reading S _||_ O | A is used. An empty conditioning
// set is rejected unless `require_conditioning` is false (unconstrained runs).
inline CheckedConfig validate_roles(const Schema& schema, const RoleAssignment& roles,
                                    const std::optional<CIConstraint>& ci = std::nullopt,
                                    bool require_conditioning = true) {
  const int d = schema.d();
  std::vector<int> owner(static_cast<std::size_t>(d), -1);
  const std::vector<int>* sets[] = {&roles.S, &roles.O, &roles.A, &roles.I};
  const char* names[] = {"S", "O", "A", "I"};
  for (int k = 0; k < 4; ++k) {
    for (int a : *sets[k]) {
      if (a < 0 || a >= d) throw ConfigError(std::string("role ") + names[k] + " has out-of-range attribute index " + std::to_string(a));
      if (owner[static_cast<std::size_t>(a)] != -1) {
        throw ConfigError("roles overlap: attribute '" + schema[a].name + "' is in both " +
                          names[owner[static_cast<std::size_t>(a)]] + " and " + names[k]);
      }
      owner[static_cast<std::size_t>(a)] = k;
    }
  }
  for (int a = 0; a < d; ++a) {
    if (owner[static_cast<std::size_t>(a)] == -1) throw ConfigError("attribute not covered by roles: '" + schema[a].name + "'");
  }
  if (roles.S.empty()) throw ConfigError("empty protected set S");
  if (roles.O.empty()) throw ConfigError("empty outcome set O");

  CIConstraint c = ci.value_or(CIConstraint{roles.S, roles.O, roles.A});
  std::vector<int> seen(static_cast<std::size_t>(d), 0);
  for (const auto* set : {&c.X, &c.Y, &c.Z}) {
    for (int a : *set) {
      if (a < 0 || a >= d) throw ConfigError("constraint has out-of-range attribute index " + std::to_string(a));
      if (seen[static_cast<std::size_t>(a)]++) throw ConfigError("constraint sets overlap at attribute '" + schema[a].name + "'");
    }
  }
  if (c.X.empty() || c.Y.empty()) throw ConfigError("constraint needs nonempty X and Y");
  if (require_conditioning && c.Z.empty()) throw ConfigError("empty conditioning set");
  return CheckedConfig{roles, std::move(c)};
}

}  // namespace privci
