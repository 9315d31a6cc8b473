// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 The sattf Authors

#include "doctest.h"
#include "sattf/cnf_io.hpp"
#include "sattf/error.hpp"
#include "sattf/vocab.hpp"

using namespace sattf;

namespace {
const char* kSixClauseText = "1 -2 0 -1 2 -3 0 2 4 -1 0 1 -3 4 0 -2 -3 -4 0 -4 -1 0";
const char* kFigurePrompt =
    "[BOS] -2 -4 -1 0 3 4 -1 0 -1 -3 -2 0 1 -2 -4 0 -4 2 1 0 1 -2 4 0 [SEP]";
}  // namespace

TEST_CASE("vocabulary layout") {
  Vocabulary v(4);
  CHECK(v.size() == 15);
  CHECK(v.id("1") == 0);
  CHECK(v.id("4") == 3);
  CHECK(v.id("-1") == 4);
  CHECK(v.id("-4") == 7);
  CHECK(v.token(v.zero()) == "0");
  CHECK(v.token(v.sep()) == "[SEP]");
  CHECK(v.token(v.bt()) == "[BT]");
  CHECK(v.token(v.bos()) == "[BOS]");
  CHECK(v.token(v.d()) == "D");
  CHECK(v.token(v.sat()) == "SAT");
  CHECK(v.token(v.unsat()) == "UNSAT");
  CHECK(v.literal(v.literal_id(-3)) == -3);
  CHECK_THROWS_AS(v.id("5"), ParseError);
  CHECK(v.detokenize(v.tokenize("  D 2  [BT] -1 ")) == "D 2 [BT] -1");
}

TEST_CASE("parse and emit the six-clause example") {
  CnfFormula f = parse_text(kSixClauseText);
  CHECK(f.num_vars == 4);
  REQUIRE(f.clauses.size() == 6);
  CHECK(f.clauses[0] == std::vector<int>{1, -2});
  CHECK(f.clauses[5] == std::vector<int>{-4, -1});
  CHECK(emit_text(f) == kSixClauseText);
  CHECK(parse_text(emit_text(f)) == f);
}

TEST_CASE("DIMACS header and comments") {
  CnfFormula f = parse_text("c comment\np cnf 5 2\n1 -2 0\n3 0\n");
  CHECK(f.num_vars == 5);
  CHECK(f.clauses.size() == 2);
  CHECK(parse_text("1 2 0", 6).num_vars == 6);
}

TEST_CASE("encode to tokens") {
  Vocabulary v(4);
  CnfFormula f = parse_text("-2 -4 -1 0 3 4 -1 0 -1 -3 -2 0 1 -2 -4 0 -4 2 1 0 1 -2 4 0");
  auto toks = encode_to_tokens(f, v);
  CHECK(v.detokenize(toks) == kFigurePrompt);
  CHECK(parse_dimacs_tokens(toks, v) == f);
  CnfFormula empty;
  empty.num_vars = 4;
  CHECK(v.detokenize(encode_to_tokens(empty, v)) == "[BOS] [SEP]");
}

TEST_CASE("malformed input is rejected") {
  CHECK_THROWS_AS(parse_text("1 -1 0"), ParseError);
  CHECK_THROWS_AS(parse_text("1 2 3 4 0"), ParseError);
  CHECK_THROWS_AS(parse_text("1 1 0"), ParseError);
  CHECK_THROWS_AS(parse_text("1 2"), ParseError);
  CHECK_THROWS_AS(parse_text("1 x 0"), ParseError);
  CHECK_THROWS_AS(parse_text("0"), ParseError);
  CHECK_THROWS_AS(parse_text("5 0", 4), ParseError);
  CHECK_THROWS_AS(parse_text("p dnf 3 1\n1 0"), ParseError);
  Vocabulary v(3);
  CHECK_THROWS_AS(parse_dimacs_tokens(v.tokenize("[BOS] 1 D 0 [SEP]"), v), ParseError);
  CHECK_THROWS_AS(parse_dimacs_tokens(v.tokenize("[BOS] 1 2 [SEP]"), v), ParseError);
  CnfFormula big = parse_text("1 2 5 0");
  CHECK_THROWS_AS(encode_to_tokens(big, v), Error);
}

TEST_CASE("parse error locations point at the clause") {
  try {
    parse_text("1 2 0 3 -3 0");
    FAIL("expected a parse error");
  } catch (const ParseError& e) {
    CHECK(e.location() == 3);
  }
}
