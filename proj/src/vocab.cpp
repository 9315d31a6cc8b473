// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 The sattf Authors

#include "sattf/vocab.hpp"

#include <cstdlib>
#include <sstream>

#include "sattf/error.hpp"

namespace sattf {

Vocabulary::Vocabulary(int num_vars) : p_(num_vars) {
  if (num_vars < 1) throw Error(ErrorCode::InvalidArgument, "vocabulary needs at least one variable");
  for (int v = 1; v <= p_; ++v) tokens_.push_back(std::to_string(v));
  for (int v = 1; v <= p_; ++v) tokens_.push_back(std::to_string(-v));
  for (const char* t : {"0", "[SEP]", "[BT]", "[BOS]", "D", "SAT", "UNSAT"}) tokens_.push_back(t);
  for (int i = 0; i < size(); ++i) index_.emplace(tokens_[i], i);
}

const std::string& Vocabulary::token(int id) const {
  if (id < 0 || id >= size()) throw Error(ErrorCode::InvalidArgument, "token id out of range: " + std::to_string(id));
  return tokens_[id];
}

int Vocabulary::id(std::string_view tok) const {
  auto it = index_.find(std::string(tok));
  if (it == index_.end()) throw ParseError("unknown token '" + std::string(tok) + "'", -1);
  return it->second;
}

bool Vocabulary::contains(std::string_view tok) const { return index_.count(std::string(tok)) != 0; }

int Vocabulary::literal(int id) const {
  if (!is_literal(id)) throw Error(ErrorCode::InvalidArgument, "token id is not a literal: " + std::to_string(id));
  return id < p_ ? id + 1 : -(id - p_ + 1);
}

int Vocabulary::literal_id(int lit) const {
  int v = std::abs(lit);
  if (lit == 0 || v > p_) throw Error(ErrorCode::InvalidArgument, "literal out of range: " + std::to_string(lit));
  return lit > 0 ? v - 1 : p_ + v - 1;
}

std::vector<int> Vocabulary::tokenize(std::string_view text) const {
  std::vector<int> out;
  std::istringstream in{std::string(text)};
  std::string tok;
  while (in >> tok) {
    auto it = index_.find(tok);
    if (it == index_.end()) throw ParseError("unknown token '" + tok + "'", static_cast<long>(out.size()));
    out.push_back(it->second);
  }
  return out;
}

std::string Vocabulary::detokenize(const std::vector<int>& ids) const {
  std::string s;
  for (size_t i = 0; i < ids.size(); ++i) {
    if (i) s += ' ';
    s += token(ids[i]);
  }
  return s;
}

}  // namespace sattf
