// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 The sattf Authors

#include <random>

#include "doctest.h"
#include "sattf/compiler.hpp"
#include "sattf/instance_gen.hpp"
#include "sattf/sat_program.hpp"

using namespace sattf;

namespace {

const char* kFigurePrompt =
    "[BOS] -2 -4 -1 0 3 4 -1 0 -1 -3 -2 0 1 -2 -4 0 -4 2 1 0 1 -2 4 0 [SEP]";
const char* kSixClauseText = "1 -2 0 -1 2 -3 0 2 4 -1 0 1 -3 4 0 -2 -3 -4 0 -4 -1 0";

SatProgram program(int p, int c) {
  SatProgramParams params;
  params.num_vars = p;
  params.max_clauses = c;
  return build_sat_program(params);
}

std::vector<int> abstract_decode(const SatProgram& prog, const std::vector<int>& prompt, int limit) {
  const Vocabulary& v = prog.graph->vocab();
  dsl::AbstractEvaluator ev(*prog.graph, {prog.root});
  ev.push(prompt);
  std::vector<int> gen;
  for (int s = 0; s < limit; ++s) {
    int t = dsl::argmax_lowest(ev.row(prog.root, ev.length() - 1), v.size());
    gen.push_back(t);
    if (t == v.sat() || t == v.unsat()) break;
    ev.push(t);
  }
  return gen;
}

double signal_at(const SatProgram& prog, const std::string& name, const std::vector<int>& toks, int pos, int lane = 0) {
  dsl::AbstractEvaluator ev(*prog.graph, {prog.nodes.at(name)});
  ev.push(toks);
  return ev.row(prog.nodes.at(name), pos)[lane];
}

}  // namespace

TEST_CASE("figure prompt decodes to the expected trace") {
  SatProgram prog = program(4, 8);
  const Vocabulary& v = prog.graph->vocab();
  auto prompt = v.tokenize(kFigurePrompt);
  auto gen = abstract_decode(prog, prompt, 100);
  CHECK(v.detokenize(gen) == "D -2 D 1 D 3 SAT");
  CHECK(validate_full_trace(prompt, gen, v).valid);
  CnfFormula f = parse_dimacs_tokens(prompt, v);
  auto oracle = solve_with_trace(f, v, model_mirror_chooser(4, 8));
  CHECK(oracle.trace.generated == gen);
}

TEST_CASE("small formulas") {
  SatProgram prog = program(3, 4);
  const Vocabulary& v = prog.graph->vocab();
  auto gen = abstract_decode(prog, v.tokenize("[BOS] 1 0 -1 0 [SEP]"), 20);
  CHECK(v.detokenize(gen) == "1 UNSAT");
  gen = abstract_decode(prog, v.tokenize("[BOS] 1 2 3 0 [SEP]"), 20);
  REQUIRE(gen.size() >= 3u);
  CHECK(gen[0] == v.d());
  CHECK(gen.back() == v.sat());
  CHECK(gen.size() <= 2u * 3u + 2u);
  CHECK(v.detokenize(abstract_decode(prog, v.tokenize("[BOS] [SEP]"), 5)) == "SAT");
}

TEST_CASE("the SAT program reaches the terminal state on the six-clause example") {
  SatProgram prog = program(4, 8);
  const Vocabulary& v = prog.graph->vocab();
  CnfFormula f = parse_text(kSixClauseText);
  auto prompt = encode_to_tokens(f, v);
  auto gen = abstract_decode(prog, prompt, 200);
  auto val = validate_full_trace(prompt, gen, v);
  CHECK(val.valid);
  CHECK(val.halted);
  CHECK(val.label == brute_force_sat(f));
}

TEST_CASE("clause heads") {
  SatProgram prog = program(2, 3);
  const Vocabulary& v = prog.graph->vocab();
  auto sat = v.tokenize("[BOS] 1 -2 0 [SEP] D 1");
  CHECK(signal_at(prog, "sat", sat, static_cast<int>(sat.size()) - 1) == 1.0);
  CHECK(signal_at(prog, "sat", sat, static_cast<int>(sat.size()) - 2) == 0.0);
  auto conflict = v.tokenize("[BOS] 1 2 0 [SEP] D -1 D -2");
  CHECK(signal_at(prog, "cont", conflict, static_cast<int>(conflict.size()) - 1) == 1.0);
  CHECK(signal_at(prog, "cont", conflict, static_cast<int>(conflict.size()) - 3) == 0.0);

  SatProgram four = program(4, 8);
  const Vocabulary& v4 = four.graph->vocab();
  auto prompt = encode_to_tokens(parse_text(kSixClauseText), v4);
  auto toks = prompt;
  for (int t : v4.tokenize("D 2 D 1")) toks.push_back(t);
  const int last = static_cast<int>(toks.size()) - 1;
  for (int lane = 0; lane < 8; ++lane)
    CHECK(signal_at(four, "e_up", toks, last, lane) == (lane == v4.literal_id(-4) ? 1.0 : 0.0));
}

TEST_CASE("separator bookkeeping") {
  SatProgram prog = program(4, 8);
  const Vocabulary& v = prog.graph->vocab();
  auto prompt = v.tokenize(kFigurePrompt);
  const int sep = static_cast<int>(prompt.size()) - 1;
  auto toks = prompt;
  for (int t : v.tokenize("D 2 D 1 -4 3 [BT] D 2 -1")) toks.push_back(t);
  CHECK(signal_at(prog, "p_sp", toks, sep + 1) == sep);
  CHECK(signal_at(prog, "p_sep", toks, sep + 1) == sep);
  CHECK(signal_at(prog, "p_sp", toks, 1) == 0.0);
  CHECK(signal_at(prog, "p_sep", toks, 1) == 0.0);
  CHECK(signal_at(prog, "p_D", toks, sep + 2) == sep + 1);
  const int bt = sep + 7;
  REQUIRE(toks[bt] == v.bt());
  CHECK(signal_at(prog, "p_D_min", toks, bt + 1) == sep + 3);
  CHECK(signal_at(prog, "copy", toks, bt) == 1.0);
  CHECK(signal_at(prog, "back", toks, bt + 2) == 1.0);
  CHECK(signal_at(prog, "emit_bt", toks, bt - 1) == 1.0);
}

TEST_CASE("tie-break bias") {
  auto tb = tie_break_bias(2, 5);
  REQUIRE(tb.size() == 4u);
  CHECK(tb[0] == doctest::Approx(3.0 / 4.0 / 10.0));
  CHECK(tb[3] == 0.0);
  for (size_t i = 1; i < tb.size(); ++i) CHECK(tb[i] < tb[i - 1]);
  CHECK(default_max_clauses(10) == 44);
  CHECK(default_max_clauses(1) == 4);
}

TEST_CASE("clause heuristic") {
  CnfFormula f = parse_text("1 2 0 -1 3 0 2 3 0");
  auto h = clause_heuristic(f, {{1, true}});
  CHECK(h == std::vector<double>{0, 0, 1, 1, 0, 0});
  auto h0 = clause_heuristic(f, {});
  CHECK(h0 == std::vector<double>{1.0 / 3, 2.0 / 3, 2.0 / 3, 1.0 / 3, 0, 0});
}

TEST_CASE("program decisions track the mirror oracle on random formulas") {
  const int p = 5, c = default_max_clauses(p);
  SatProgram prog = program(p, c);
  const Vocabulary& v = prog.graph->vocab();
  std::mt19937_64 rng(11);
  std::uniform_int_distribution<int> nc(1, c);
  for (int k = 0; k < 40; ++k) {
    CnfFormula f = sample_uniform_formula(p, nc(rng), rng);
    auto prompt = encode_to_tokens(f, v);
    auto gen = abstract_decode(prog, prompt, 400);
    auto val = validate_full_trace(prompt, gen, v);
    REQUIRE(val.valid);
    REQUIRE(val.halted);
    CHECK(val.label == brute_force_sat(f));
    CHECK(solve_with_trace(f, v, model_mirror_chooser(p, c)).trace.generated == gen);
  }
}

TEST_CASE("invalid parameters") {
  SatProgramParams bad;
  bad.num_vars = 0;
  bad.max_clauses = 3;
  CHECK_THROWS_AS(build_sat_program(bad), Error);
  bad.num_vars = 3;
  bad.max_clauses = 0;
  CHECK_THROWS_AS(build_sat_program(bad), Error);
  bad.max_clauses = 3;
  bad.nonsep_penalty = 1.25;
  CHECK_THROWS_AS(build_sat_program(bad), Error);
}

TEST_CASE("compiled size is independent of the clause budget in layers and heads") {
  SatProgramParams a;
  a.num_vars = 3;
  a.max_clauses = 4;
  SatProgramParams b = a;
  b.max_clauses = 40;
  CompilerConfig cfg;
  cfg.context_len = 400;
  ModelWeights wa = compile_sat_model(a, cfg), wb = compile_sat_model(b, cfg);
  CHECK(wa.n_layers == wb.n_layers);
  CHECK(wa.n_heads == wb.n_heads);
  CHECK(wa.d_emb == wb.d_emb);
}
