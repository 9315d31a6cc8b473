// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 The sattf Authors

#include "sattf/cnf_io.hpp"

#include <cstdlib>
#include <sstream>

#include "sattf/error.hpp"

namespace sattf {
namespace {

void check_clause(const std::vector<int>& clause, int num_vars, long location) {
  if (clause.empty()) throw ParseError("empty clause", location);
  if (clause.size() > 3) throw ParseError("clause has more than 3 literals", location);
  for (size_t a = 0; a < clause.size(); ++a) {
    int v = std::abs(clause[a]);
    if (clause[a] == 0 || v > num_vars) {
      throw ParseError("literal " + std::to_string(clause[a]) + " out of range 1.." + std::to_string(num_vars), location);
    }
    for (size_t b = 0; b < a; ++b) {
      if (clause[b] == -clause[a]) throw ParseError("clause contains a variable and its negation", location);
      if (clause[b] == clause[a]) throw ParseError("clause repeats a literal", location);
    }
  }
}

}  // namespace

void validate_formula(const CnfFormula& f) {
  if (f.num_vars < 0) throw ParseError("negative variable count", -1);
  for (size_t i = 0; i < f.clauses.size(); ++i) {
    try {
      check_clause(f.clauses[i], f.num_vars, -1);
    } catch (const ParseError& e) {
      throw ParseError(std::string(e.what()) + " in clause " + std::to_string(i), -1);
    }
  }
}

CnfFormula parse_text(std::string_view text, int num_vars) {
  CnfFormula f;
  int header_vars = -1;
  std::vector<int> lits;
  std::vector<long> starts;
  std::vector<int> current;
  long current_start = 0;
  long count = 0;
  std::istringstream lines{std::string(text)};
  std::string line;
  while (std::getline(lines, line)) {
    std::istringstream ls(line);
    std::string first;
    if (!(ls >> first)) continue;
    if (first == "c" || first[0] == 'c' || first == "%") continue;
    if (first == "p") {
      std::string fmt;
      long nv = 0, nc = 0;
      if (!(ls >> fmt >> nv >> nc) || fmt != "cnf" || nv < 0) throw ParseError("malformed 'p cnf' header", count);
      header_vars = static_cast<int>(nv);
      continue;
    }
    std::istringstream ts(line);
    std::string tok;
    while (ts >> tok) {
      char* end = nullptr;
      long v = std::strtol(tok.c_str(), &end, 10);
      if (end == tok.c_str() || *end != '\0') throw ParseError("non-integer token '" + tok + "'", count);
      if (current.empty()) current_start = count;
      ++count;
      if (v == 0) {
        if (current.empty()) throw ParseError("empty clause", count - 1);
        f.clauses.push_back(current);
        starts.push_back(current_start);
        current.clear();
      } else {
        current.push_back(static_cast<int>(v));
      }
    }
  }
  if (!current.empty()) throw ParseError("missing 0 terminator on final clause", current_start);
  int max_var = 0;
  for (const auto& c : f.clauses)
    for (int l : c) max_var = std::max(max_var, std::abs(l));
  if (header_vars >= 0) {
    f.num_vars = header_vars;
  } else if (num_vars > 0) {
    f.num_vars = num_vars;
  } else {
    f.num_vars = max_var;
  }
  for (size_t i = 0; i < f.clauses.size(); ++i) check_clause(f.clauses[i], f.num_vars, starts[i]);
  return f;
}

std::string emit_text(const CnfFormula& f) {
  std::string s;
  for (const auto& c : f.clauses) {
    for (int l : c) {
      if (!s.empty()) s += ' ';
      s += std::to_string(l);
    }
    if (!s.empty()) s += ' ';
    s += '0';
  }
  return s;
}

std::vector<int> encode_to_tokens(const CnfFormula& f, const Vocabulary& vocab) {
  if (f.num_vars > vocab.num_vars()) {
    throw Error(ErrorCode::InvalidArgument, "formula uses " + std::to_string(f.num_vars) +
                                                " variables but the vocabulary supports " +
                                                std::to_string(vocab.num_vars()));
  }
  validate_formula(f);
  std::vector<int> out{vocab.bos()};
  for (const auto& c : f.clauses) {
    for (int l : c) out.push_back(vocab.literal_id(l));
    out.push_back(vocab.zero());
  }
  out.push_back(vocab.sep());
  return out;
}

CnfFormula parse_dimacs_tokens(const std::vector<int>& tokens, const Vocabulary& vocab) {
  size_t begin = 0, end = tokens.size();
  if (begin < end && tokens[begin] == vocab.bos()) ++begin;
  if (end > begin && tokens[end - 1] == vocab.sep()) --end;
  CnfFormula f;
  f.num_vars = vocab.num_vars();
  std::vector<int> current;
  long start = static_cast<long>(begin);
  for (size_t i = begin; i < end; ++i) {
    int t = tokens[i];
    if (vocab.is_literal(t)) {
      if (current.empty()) start = static_cast<long>(i);
      current.push_back(vocab.literal(t));
      if (current.size() > 3) throw ParseError("clause has more than 3 literals", static_cast<long>(i));
    } else if (t == vocab.zero()) {
      check_clause(current, f.num_vars, current.empty() ? static_cast<long>(i) : start);
      f.clauses.push_back(current);
      current.clear();
    } else {
      throw ParseError("unexpected token '" + vocab.token(t) + "' in formula", static_cast<long>(i));
    }
  }
  if (!current.empty()) throw ParseError("missing 0 terminator on final clause", start);
  return f;
}

}  // namespace sattf
