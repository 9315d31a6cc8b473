// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 The sattf Authors

#include <cmath>
#include <map>
#include <set>

#include "doctest.h"
#include "json.hpp"
#include "sattf/instance_gen.hpp"

using namespace sattf;

namespace {

void check_structure(const Instance& in, int p, double rmin, double rmax) {
  const auto& f = in.formula;
  CHECK(f.num_vars == p);
  const double ratio = static_cast<double>(f.clauses.size()) / p;
  CHECK(ratio >= rmin - 1e-12);
  CHECK(ratio <= rmax + 1e-12);
  for (const auto& c : f.clauses) {
    REQUIRE(c.size() == 3u);
    std::set<int> vars;
    for (int l : c) {
      CHECK(l != 0);
      CHECK(std::abs(l) <= p);
      vars.insert(std::abs(l));
    }
    CHECK(vars.size() == 3u);
  }
  CHECK(in.label == brute_force_sat(f));
}

GenSpec spec(Distribution d, int p, int count, uint64_t seed) {
  GenSpec s;
  s.distribution = d;
  s.num_vars = p;
  s.count = count;
  s.seed = seed;
  return s;
}

}  // namespace

TEST_CASE("clause count range") {
  CHECK(clause_count_range(8, 4.1, 4.4) == std::pair<int, int>{33, 35});
  CHECK(clause_count_range(10, 4.1, 4.4) == std::pair<int, int>{41, 44});
  CHECK(distribution_name(parse_distribution("skewed")) == std::string("skewed"));
  CHECK_THROWS_AS(parse_distribution("uniform"), Error);
}

TEST_CASE("random and skewed instances satisfy the structural constraints") {
  for (auto d : {Distribution::Random, Distribution::Skewed}) {
    auto data = generate(spec(d, 8, 60, 3));
    REQUIRE(data.size() == 60u);
    for (size_t i = 0; i < data.size(); ++i) {
      CHECK(data[i].id == static_cast<int>(i));
      CHECK(data[i].distribution == d);
      check_structure(data[i], 8, 4.1, 4.4);
    }
  }
}

TEST_CASE("skewed formulas are polarity biased") {
  std::mt19937_64 rng(5);
  SkewPrior strong{0.9, 0.9, 1.0};
  long majority = 0, total = 0;
  for (int k = 0; k < 200; ++k) {
    CnfFormula f = sample_skewed_formula(10, 43, strong, rng);
    std::map<int, std::pair<int, int>> pol;
    for (const auto& c : f.clauses)
      for (int l : c) (l > 0 ? pol[std::abs(l)].first : pol[std::abs(l)].second)++;
    for (auto& [v, pn] : pol) {
      majority += std::max(pn.first, pn.second);
      total += pn.first + pn.second;
    }
  }
  CHECK(static_cast<double>(majority) / total > 0.8);
}

TEST_CASE("marginal pairs differ in one literal and flip the label") {
  auto data = generate(spec(Distribution::Marginal, 6, 40, 9));
  REQUIRE(data.size() == 40u);
  Vocabulary v(6);
  int sat = 0;
  for (size_t k = 0; k < data.size(); k += 2) {
    const Instance& a = data[k];
    const Instance& b = data[k + 1];
    check_structure(a, 6, 4.1, 4.4);
    check_structure(b, 6, 4.1, 4.4);
    CHECK(a.label == Label::Sat);
    CHECK(b.label == Label::Unsat);
    CHECK(a.pair_id == b.pair_id);
    CHECK(a.pair_id == static_cast<int>(k / 2));
    auto ta = encode_to_tokens(a.formula, v), tb = encode_to_tokens(b.formula, v);
    REQUIRE(ta.size() == tb.size());
    int diff = 0;
    for (size_t i = 0; i < ta.size(); ++i) diff += ta[i] != tb[i];
    CHECK(diff == 1);
    sat += a.label == Label::Sat;
    sat += b.label == Label::Sat;
  }
  CHECK(sat == 20);
  CHECK_THROWS_AS(generate(spec(Distribution::Marginal, 6, 3, 9)), Error);
}

TEST_CASE("generation is deterministic and thread independent") {
  for (auto d : {Distribution::Random, Distribution::Skewed, Distribution::Marginal}) {
    auto one = to_jsonl(generate(spec(d, 6, 20, 42), 1));
    auto again = to_jsonl(generate(spec(d, 6, 20, 42), 1));
    auto threaded = to_jsonl(generate(spec(d, 6, 20, 42), 3));
    CHECK(one == again);
    CHECK(one == threaded);
    CHECK(one != to_jsonl(generate(spec(d, 6, 20, 43), 1)));
  }
  CHECK(derive_seed(1, Distribution::Random, 0) != derive_seed(1, Distribution::Skewed, 0));
  CHECK(derive_seed(1, Distribution::Random, 0) != derive_seed(1, Distribution::Random, 1));
}

TEST_CASE("JSONL round trip") {
  auto data = generate(spec(Distribution::Marginal, 5, 6, 1));
  std::string text = to_jsonl(data);
  auto back = read_jsonl(text);
  REQUIRE(back.size() == data.size());
  for (size_t i = 0; i < data.size(); ++i) {
    CHECK(back[i].id == data[i].id);
    CHECK(back[i].formula == data[i].formula);
    CHECK(back[i].label == data[i].label);
    CHECK(back[i].pair_id == data[i].pair_id);
    CHECK(back[i].seed == data[i].seed);
    CHECK(back[i].distribution == data[i].distribution);
  }
  CHECK(to_jsonl(back) == text);
  auto first = nlohmann::json::parse(text.substr(0, text.find('\n')));
  for (const char* key : {"id", "distribution", "p", "c", "dimacs_text", "label", "pair_id", "seed"})
    CHECK(first.contains(key));
  CHECK_THROWS_AS(read_jsonl("{\"id\": 1}\n"), Error);
  CHECK_THROWS_AS(read_jsonl("not json\n"), Error);
  CHECK_THROWS_AS(read_jsonl(R"({"id":0,"distribution":"random","p":3,"c":2,"dimacs_text":"1 2 3 0","label":"SAT"})"),
                  Error);
}

TEST_CASE("invalid specs are rejected") {
  CHECK_THROWS_AS(generate(spec(Distribution::Random, 2, 4, 0)), Error);
  CHECK_THROWS_AS(generate(spec(Distribution::Random, 25, 4, 0)), Error);
  GenSpec bad = spec(Distribution::Random, 8, 4, 0);
  bad.ratio_min = 4.4;
  bad.ratio_max = 4.1;
  CHECK_THROWS_AS(generate(bad), Error);
}
