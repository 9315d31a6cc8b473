// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 The sattf Authors

#include <random>

#include "doctest.h"
#include "sattf/dpll.hpp"
#include "sattf/instance_gen.hpp"

using namespace sattf;

namespace {

const char* kFigureFormula = "-2 -4 -1 0 3 4 -1 0 -1 -3 -2 0 1 -2 -4 0 -4 2 1 0 1 -2 4 0";
const char* kFigureTrace = "D 2 D 1 -4 3 [BT] D 2 -1 -4 [BT] -2 D 3 D 4 1 SAT";

std::vector<TrailLit> trail_of(std::initializer_list<std::pair<int, bool>> xs) {
  std::vector<TrailLit> t;
  for (auto [l, d] : xs) t.push_back({l, d});
  return t;
}

std::vector<int> concat(std::vector<int> a, const std::vector<int>& b) {
  a.insert(a.end(), b.begin(), b.end());
  return a;
}

}  // namespace

TEST_CASE("unit clause then conflict ends in UNSAT") {
  CnfFormula f = parse_text("1 0 -1 0");
  DpllState s;
  s = step(f, s, Rule::UnitPropagate, 1);
  CHECK(s.trail == trail_of({{1, false}}));
  CHECK_THROWS_AS(step(f, s, Rule::BackTrack), TransitionError);
  s = step(f, s, Rule::Fail);
  CHECK(s.kind == StateKind::Unsat);
  CHECK_THROWS_AS(step(f, s, Rule::Decide, 1), TransitionError);
}

TEST_CASE("transitions on the figure formula") {
  CnfFormula f = parse_text(kFigureFormula);
  DpllState s;
  s = step(f, s, Rule::Decide, 2);
  s = step(f, s, Rule::Decide, 1);
  CHECK(unit_literals(f, s.trail) == std::vector<int>{-3, -4});
  CHECK_THROWS_AS(step(f, s, Rule::UnitPropagate, 3), TransitionError);
  s = step(f, s, Rule::UnitPropagate, -4);
  CHECK(s.trail.back() == TrailLit{-4, false});
  CHECK_THROWS_AS(step(f, s, Rule::Decide, 4), TransitionError);
  CHECK_THROWS_AS(step(f, s, Rule::Success), TransitionError);
  s = step(f, s, Rule::UnitPropagate, 3);
  CHECK(conflict_clause(f, s.trail) >= 0);
  CHECK_THROWS_AS(step(f, s, Rule::Fail), TransitionError);
  s = step(f, s, Rule::BackTrack);
  CHECK(s.trail == trail_of({{2, true}, {-1, false}}));
}

TEST_CASE("success only when the assignment satisfies F") {
  CnfFormula f = parse_text("1 2 3 0");
  DpllState s = step(f, DpllState{}, Rule::Decide, 2);
  s = step(f, s, Rule::Success);
  CHECK(s.kind == StateKind::Sat);
}

TEST_CASE("scripted chooser reproduces the figure trace") {
  Vocabulary v(4);
  CnfFormula f = parse_text(kFigureFormula);
  auto r = solve_with_trace(f, v, scripted_chooser({2, 1, -4, 3, -4, 3, 4, 1}));
  CHECK(r.label == Label::Sat);
  CHECK(v.detokenize(r.trace.generated) == kFigureTrace);
  auto val = validate_full_trace(r.trace.prompt, r.trace.generated, v);
  CHECK(val.valid);
  CHECK(val.halted);
  CHECK(val.label == Label::Sat);
  CHECK(r.trace.roles[6] == TokenRole::BackTrackMarker);
  CHECK(r.trace.roles[7] == TokenRole::Replay);
  CHECK(r.trace.roles[9] == TokenRole::BackTrackLiteral);
}

TEST_CASE("validator on the figure trace and a corrupted copy") {
  Vocabulary v(4);
  auto prompt = encode_to_tokens(parse_text(kFigureFormula), v);
  auto val = validate_full_trace(prompt, v.tokenize(kFigureTrace), v);
  CHECK(val.valid);
  CHECK(val.halted);
  auto bad = validate_full_trace(prompt, v.tokenize("D 2 D 1 -4 4 [BT] D 2 -1 -4 [BT] -2 D 3 D 4 1 SAT"), v);
  CHECK_FALSE(bad.valid);
  CHECK(bad.first_violation == 5);
  auto early = validate_full_trace(prompt, v.tokenize("D 2 D 1 -4 3 UNSAT"), v);
  CHECK_FALSE(early.valid);
  CHECK(early.first_violation == 6);
  auto sat_early = validate_full_trace(prompt, v.tokenize("D 2 SAT"), v);
  CHECK_FALSE(sat_early.valid);
  auto double_d = validate_full_trace(prompt, v.tokenize("D D 2"), v);
  CHECK_FALSE(double_d.valid);
  CHECK(double_d.first_violation == 1);
  auto after_end = validate_full_trace(prompt, v.tokenize("D 2 D 1 -4 3 [BT] D 2 -1 -4 [BT] -2 D 3 D 4 1 SAT D"), v);
  CHECK_FALSE(after_end.valid);
  auto partial = validate_full_trace(prompt, v.tokenize("D 2 D 1"), v);
  CHECK(partial.valid);
  CHECK_FALSE(partial.halted);
}

TEST_CASE("cot_to_state") {
  Vocabulary v(4);
  auto prompt = encode_to_tokens(parse_text(kFigureFormula), v);
  auto st = cot_to_state(concat(prompt, v.tokenize("D 2 D 1 -4 3 [BT] D 2 D -1 -4")), v);
  CHECK(st.state.kind == StateKind::Running);
  CHECK(st.state.trail == trail_of({{2, true}, {-1, true}, {-4, false}}));
  CHECK(st.formula.clauses.size() == 6);
  CHECK(cot_to_state(concat(prompt, v.tokenize(kFigureTrace)), v).state.kind == StateKind::Sat);
  CHECK_THROWS_AS(cot_to_state(concat(prompt, v.tokenize("D D 2")), v), ParseError);
  CHECK_THROWS_AS(cot_to_state(concat(prompt, v.tokenize("D 2 [SEP]")), v), ParseError);
  CHECK_THROWS_AS(cot_to_state(concat(prompt, v.tokenize("D 2 0")), v), ParseError);
  CHECK_THROWS_AS(cot_to_state(v.tokenize("[BOS] 1 2 [SEP]"), v), ParseError);
}

TEST_CASE("small formulas") {
  Vocabulary v(3);
  CnfFormula empty;
  empty.num_vars = 3;
  auto r = solve_with_trace(empty, v, lowest_lane_chooser());
  CHECK(r.label == Label::Sat);
  CHECK(v.detokenize(r.trace.generated) == "SAT");
  CHECK(brute_force_sat(empty) == Label::Sat);

  CnfFormula contra = parse_text("1 0 -1 0", 3);
  r = solve_with_trace(contra, v, lowest_lane_chooser());
  CHECK(v.detokenize(r.trace.generated) == "1 UNSAT");
  CHECK(brute_force_sat(contra) == Label::Unsat);

  CnfFormula all8 = parse_text("1 2 3 0 1 2 -3 0 1 -2 3 0 1 -2 -3 0 -1 2 3 0 -1 2 -3 0 -1 -2 3 0 -1 -2 -3 0");
  r = solve_with_trace(all8, v, lowest_lane_chooser());
  CHECK(r.label == Label::Unsat);
  CHECK(validate_full_trace(r.trace.prompt, r.trace.generated, v).valid);
  CHECK(brute_force_sat(all8) == Label::Unsat);

  CnfFormula one = parse_text("1 2 3 0");
  r = solve_with_trace(one, v, lowest_lane_chooser());
  CHECK(v.detokenize(r.trace.generated) == "D 1 SAT");
  CHECK(r.trace.generated.size() <= 2u * 3u + 2u);
}

TEST_CASE("oracle agrees with brute force and round-trips through cot_to_state") {
  Vocabulary v(8);
  std::mt19937_64 rng(7);
  std::uniform_int_distribution<int> pick(0, 1);
  for (int k = 0; k < 300; ++k) {
    CnfFormula f = sample_uniform_formula(8, 34, rng);
    std::mt19937_64 crng(k);
    Chooser random_choice = [&crng](const ChoiceContext& ctx) {
      std::uniform_int_distribution<size_t> d(0, ctx.candidates.size() - 1);
      return ctx.candidates[d(crng)];
    };
    for (const Chooser& ch : {lowest_lane_chooser(), random_choice}) {
      auto r = solve_with_trace(f, v, ch);
      REQUIRE(r.label == brute_force_sat(f));
      auto val = validate_full_trace(r.trace.prompt, r.trace.generated, v);
      REQUIRE(val.valid);
      REQUIRE(val.halted);
      CHECK(r.steps <= 8L * (1L << 9));

      DpllState s;
      std::vector<int> prefix = r.trace.prompt;
      for (size_t i = 0; i < r.trace.generated.size(); ++i) {
        prefix.push_back(r.trace.generated[i]);
        TokenRole role = r.trace.roles[i];
        bool boundary = role == TokenRole::Decision || role == TokenRole::Propagation ||
                        role == TokenRole::BackTrackLiteral || role == TokenRole::Terminal;
        if (!boundary) continue;
        if (role == TokenRole::Decision) s = step(f, s, Rule::Decide, v.literal(r.trace.generated[i]));
        if (role == TokenRole::Propagation) s = step(f, s, Rule::UnitPropagate, v.literal(r.trace.generated[i]));
        if (role == TokenRole::BackTrackLiteral) s = step(f, s, Rule::BackTrack);
        if (role == TokenRole::Terminal) s = step(f, s, r.label == Label::Sat ? Rule::Success : Rule::Fail);
        auto st = cot_to_state(prefix, v);
        REQUIRE(st.state.kind == s.kind);
        if (s.kind == StateKind::Running) REQUIRE(st.state.trail == s.trail);
      }
    }
  }
}
