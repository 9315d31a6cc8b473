// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 The sattf Authors

#pragma once

#include <string>
#include <string_view>
#include <vector>

#include "sattf/vocab.hpp"

namespace sattf {

/// A 3-SAT formula: clauses of 1 to 3 distinct variables, literals 1-based and
/// signed (negative means negated). Clause and literal order are preserved.
struct CnfFormula {
  int num_vars = 0;
  std::vector<std::vector<int>> clauses;

  bool operator==(const CnfFormula& o) const = default;
};

/// Checks the formula invariants; throws ParseError naming the offending clause.
void validate_formula(const CnfFormula& f);

/// Parses whitespace-separated DIMACS text. Comment lines ('c') are skipped and a
/// "p cnf" header, if present, supplies the variable count. With no header the
/// count is `num_vars` when positive, otherwise the largest variable seen.
CnfFormula parse_text(std::string_view text, int num_vars = 0);

/// Single-line DIMACS body, every clause terminated by 0.
std::string emit_text(const CnfFormula& f);

/// Prompt token ids: [BOS], the clause literals with 0 terminators, [SEP].
std::vector<int> encode_to_tokens(const CnfFormula& f, const Vocabulary& vocab);

/// Inverse of encode_to_tokens. A leading [BOS] and trailing [SEP] are optional;
/// any other non-literal, non-0 token is rejected with its index.
CnfFormula parse_dimacs_tokens(const std::vector<int>& tokens, const Vocabulary& vocab);

}  // namespace sattf
