#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <random>
#include <sstream>

#include "privci/config.hpp"
#include "privci/data.hpp"
#include "support/instances.hpp"

namespace privci {
namespace {

RawTable parse(const std::string& text) {
  std::istringstream in(text);
  return parse_csv(in);
}

TEST(LoadCsv, CodesFollowSortedValues) {
  const Dataset d = encode(parse("a,b\ny,1\nx,0\ny,0\n"));
  EXPECT_EQ(d.n(), 3u);
  EXPECT_EQ(d.schema().domain_size(0), 2);
  EXPECT_EQ(d.schema().domain_size(1), 2);
  EXPECT_EQ(d.schema()[0].labels, (std::vector<std::string>{"x", "y"}));
  EXPECT_EQ(d.code(0, 0), 1);
  EXPECT_EQ(d.code(1, 0), 0);
  EXPECT_EQ(d.code(0, 1), 1);
  EXPECT_EQ(d.code(2, 1), 0);
}

TEST(LoadCsv, HeaderOnlyGivesEmptyDataset) {
  const Dataset d = encode(parse("a,b\n"));
  EXPECT_EQ(d.n(), 0u);
  EXPECT_EQ(d.d(), 2);
}

TEST(LoadCsv, RaggedRowReportsLine) {
  try {
    parse("a,b\n1,2\n1,2,3\n");
    FAIL() << "expected ParseError";
  } catch (const ParseError& e) {
    EXPECT_NE(std::string(e.what()).find("line 3"), std::string::npos) << e.what();
  }
}

TEST(LoadCsv, HintedDomainRejectsUnknownValue) {
  const Schema hint({{"a", 2, {"x", "y"}}, {"b", 2, {"0", "1"}}});
  EXPECT_NO_THROW(encode(parse("a,b\nx,1\n"), hint));
  try {
    encode(parse("a,b\nz,1\n"), hint);
    FAIL() << "expected DomainError";
  } catch (const DomainError& e) {
    const std::string msg = e.what();
    EXPECT_NE(msg.find("'a'"), std::string::npos);
    EXPECT_NE(msg.find("'z'"), std::string::npos);
  }
}

TEST(LoadCsv, QuotedFieldsRoundTrip) {
  const RawTable raw = parse("name,v\n\"a,b\",1\n\"say \"\"hi\"\"\",2\n");
  EXPECT_EQ(raw.rows[0][0], "a,b");
  EXPECT_EQ(raw.rows[1][0], "say \"hi\"");
  std::ostringstream out;
  write_csv(encode(raw), out);
  const RawTable back = parse(out.str());
  EXPECT_EQ(back.rows, raw.rows);
}

TEST(LoadCsv, FileRoundTrip) {
  const auto path = std::filesystem::temp_directory_path() / "privci_test_data.csv";
  {
    std::ofstream f(path);
    f << "c,d\nlo,3\nhi,7\n";
  }
  const Dataset d = load_csv(path.string());
  EXPECT_EQ(d.schema()[0].labels, (std::vector<std::string>{"hi", "lo"}));
  EXPECT_THROW(load_csv((path.string() + ".missing")), ParseError);
  std::filesystem::remove(path);
}

// Encoding then decoding reproduces the raw strings exactly.
TEST(LoadCsv, EncodeDecodeRoundTripProperty) {
  std::mt19937_64 g(7);
  const std::vector<std::string> pool{"a", "b", "zz", "10", "9", "", "x y", "Ä"};
  for (int trial = 0; trial < 200; ++trial) {
    const int d = std::uniform_int_distribution<int>(2, 5)(g);
    const int n = std::uniform_int_distribution<int>(0, 30)(g);
    RawTable raw;
    for (int i = 0; i < d; ++i) raw.header.push_back("c" + std::to_string(i));
    for (int r = 0; r < n; ++r) {
      std::vector<std::string> row;
      for (int i = 0; i < d; ++i) row.push_back(pool[std::uniform_int_distribution<std::size_t>(0, pool.size() - 1)(g)]);
      raw.rows.push_back(row);
    }
    const RawTable back = decode(encode(raw));
    ASSERT_EQ(back.header, raw.header);
    ASSERT_EQ(back.rows, raw.rows);
  }
}

TEST(Discretize, EqualWidthMidpointSplit) {
  const RawTable raw = parse("v,k\n1,a\n9,b\n");
  const Dataset d = discretize(raw, {{"v", EqualWidth{2, 0.0, 10.0}}});
  EXPECT_EQ(d.code(0, 0), 0);
  EXPECT_EQ(d.code(1, 0), 1);
  EXPECT_EQ(d.schema().domain_size(0), 2);
}

TEST(Discretize, CutpointsAreHalfOpen) {
  const RawTable raw = parse("v,k\n4,a\n5,a\n6,a\n");
  const Dataset d = discretize(raw, {{"v", Cutpoints{{5.0}}}});
  EXPECT_EQ(d.code(0, 0), 0);
  EXPECT_EQ(d.code(1, 0), 1);
  EXPECT_EQ(d.code(2, 0), 1);
}

TEST(Discretize, ClampsAtBoundaries) {
  const RawTable raw = parse("v,k\n8,a\n-3,a\n100,a\n");
  const Dataset d = discretize(raw, {{"v", EqualWidth{4, 0.0, 8.0}}});
  EXPECT_EQ(d.code(0, 0), 3);
  EXPECT_EQ(d.code(1, 0), 0);
  EXPECT_EQ(d.code(2, 0), 3);
}

TEST(Discretize, NonNumericValueIsTypeError) {
  const RawTable raw = parse("v,k\n1,a\nabc,a\n");
  EXPECT_THROW(discretize(raw, {{"v", EqualWidth{2, 0.0, 10.0}}}), TypeError);
}

TEST(Discretize, PassthroughKeepsCategories) {
  const RawTable raw = parse("v,k\n1,b\n2,a\n");
  const Dataset d = discretize(raw, {{"k", Passthrough{}}, {"v", Cutpoints{{1.5}}}});
  EXPECT_EQ(d.code(0, 1), 1);
  EXPECT_EQ(d.code(1, 1), 0);
}

TEST(Discretize, RejectsBadRules) {
  const RawTable raw = parse("v,k\n1,b\n");
  EXPECT_THROW(discretize(raw, {{"v", Cutpoints{{2.0, 1.0}}}}), ConfigError);
  EXPECT_THROW(discretize(raw, {{"v", EqualWidth{0, 0.0, 1.0}}}), ConfigError);
  EXPECT_THROW(discretize(raw, {{"nope", Passthrough{}}}), ConfigError);
}

// v1 <= v2 implies code(v1) <= code(v2) under any single rule.
TEST(Discretize, MonotoneProperty) {
  std::mt19937_64 g(11);
  std::uniform_real_distribution<double> u(-50.0, 150.0);
  for (int trial = 0; trial < 300; ++trial) {
    BinningRule rule;
    if (trial % 2 == 0) {
      const double lo = u(g);
      rule = EqualWidth{std::uniform_int_distribution<int>(1, 9)(g), lo, lo + 1.0 + std::abs(u(g))};
    } else {
      std::vector<double> cuts(static_cast<std::size_t>(std::uniform_int_distribution<int>(0, 6)(g)));
      for (double& c : cuts) c = u(g);
      std::sort(cuts.begin(), cuts.end());
      cuts.erase(std::unique(cuts.begin(), cuts.end()), cuts.end());
      rule = Cutpoints{cuts};
    }
    for (int k = 0; k < 50; ++k) {
      double a = u(g), b = u(g);
      if (a > b) std::swap(a, b);
      ASSERT_LE(bin_index(rule, a), bin_index(rule, b));
      ASSERT_GE(bin_index(rule, a), 0);
      ASSERT_LT(bin_index(rule, b), bin_count(rule));
    }
  }
}

TEST(ValidateRoles, DefaultConstraintIsSIndependentOfOGivenA) {
  const Schema s = testing::binary_schema(4);
  const CheckedConfig c = validate_roles(s, {{0}, {1}, {2}, {3}});
  EXPECT_EQ(c.ci, (CIConstraint{{0}, {1}, {2}}));
}

TEST(ValidateRoles, OverlapIsRejected) {
  const Schema s = testing::binary_schema(4);
  try {
    validate_roles(s, {{0}, {0}, {2}, {1, 3}});
    FAIL();
  } catch (const ConfigError& e) {
    EXPECT_NE(std::string(e.what()).find("roles overlap"), std::string::npos);
  }
}

TEST(ValidateRoles, EmptyConditioningSetIsRejected) {
  const Schema s = testing::binary_schema(4);
  try {
    validate_roles(s, {{0}, {1}, {}, {2, 3}});
    FAIL();
  } catch (const ConfigError& e) {
    EXPECT_NE(std::string(e.what()).find("empty conditioning set"), std::string::npos);
  }
  EXPECT_NO_THROW(validate_roles(s, {{0}, {1}, {}, {2, 3}}, std::nullopt, false));
}

TEST(ValidateRoles, UncoveredAndEmptyRolesAreRejected) {
  const Schema s = testing::binary_schema(4);
  EXPECT_THROW(validate_roles(s, {{0}, {1}, {2}, {}}), ConfigError);
  EXPECT_THROW(validate_roles(s, {{}, {1}, {2}, {0, 3}}), ConfigError);
  EXPECT_THROW(validate_roles(s, {{0}, {}, {2}, {1, 3}}), ConfigError);
  EXPECT_THROW(validate_roles(s, {{0}, {1}, {2}, {3}}, CIConstraint{{0}, {0}, {2}}), ConfigError);
}

// Exhaustive: validation accepts exactly the assignments meeting every rule.
TEST(ValidateRoles, AcceptsIffInvariantsHold) {
  for (int d = 2; d <= 5; ++d) {
    const Schema s = testing::binary_schema(d);
    // Each attribute goes to S, O, A, I, or nowhere (5 choices); a sixth
    // choice puts it in both S and O.
    long combos = 1;
    for (int i = 0; i < d; ++i) combos *= 6;
    for (long code = 0; code < combos; ++code) {
      RoleAssignment r;
      bool overlap = false, uncovered = false;
      long c = code;
      for (int i = 0; i < d; ++i, c /= 6) {
        switch (c % 6) {
          case 0: r.S.push_back(i); break;
          case 1: r.O.push_back(i); break;
          case 2: r.A.push_back(i); break;
          case 3: r.I.push_back(i); break;
          case 4: uncovered = true; break;
          case 5: r.S.push_back(i); r.O.push_back(i); overlap = true; break;
        }
      }
      const bool valid = !overlap && !uncovered && !r.S.empty() && !r.O.empty() && !r.A.empty();
      bool accepted = true;
      try {
        validate_roles(s, r);
      } catch (const ConfigError&) {
        accepted = false;
      }
      ASSERT_EQ(accepted, valid) << "d=" << d << " code=" << code;
    }
  }
}

TEST(Config, ParsesRolesBinningAndConstraint) {
  const auto j = nlohmann::json::parse(R"({
    "roles": {"S": ["s"], "O": ["o"], "A": ["a"], "I": ["i"]},
    "binning": {"age": {"type": "equal-width", "bins": 4, "min": 0, "max": 80},
                "inc": {"type": "cutpoints", "cutpoints": [10, 20]},
                "s": {"type": "passthrough"}},
    "constraint": {"X": ["s"], "Y": ["o"], "Z": ["a"]},
    "outcome": "o"
  })");
  const Config c = parse_config(j);
  EXPECT_EQ(c.S, std::vector<std::string>{"s"});
  EXPECT_EQ(c.binning.size(), 3u);
  EXPECT_EQ(std::get<EqualWidth>(c.binning.at("age")).bins, 4);
  EXPECT_EQ(std::get<Cutpoints>(c.binning.at("inc")).cuts.size(), 2u);
  ASSERT_TRUE(c.cZ.has_value());
  EXPECT_EQ(*c.outcome, "o");

  const Schema schema({{"s", 2, {}}, {"a", 2, {}}, {"o", 2, {}}, {"i", 2, {}}});
  const CheckedConfig checked = resolve(c, schema);
  EXPECT_EQ(checked.ci, (CIConstraint{{0}, {2}, {1}}));
}

TEST(Config, RejectsMalformedInput) {
  EXPECT_THROW(parse_config(nlohmann::json::parse(R"({"binning": {}})")), ConfigError);
  EXPECT_THROW(parse_config(nlohmann::json::parse(R"({"roles": {"S": "s"}})")), ConfigError);
  EXPECT_THROW(parse_config(nlohmann::json::parse(R"({"roles": {}, "binning": {"x": {"type": "magic"}}})")), ConfigError);
}

}  // namespace
}  // namespace privci
