// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 The sattf Authors

#pragma once

#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

namespace sattf {

/// Token vocabulary for formulas over `p` variables.
///
/// Order: literals 1..p, then -1..-p, then 0, [SEP], [BT], [BOS], D, SAT, UNSAT.
/// The literal x_v therefore sits at id v-1 and its negation at id p+v-1, which
/// coincides with the lane layout of the 2p-dimensional clause/assignment encoding.
class Vocabulary {
 public:
  Vocabulary() = default;
  explicit Vocabulary(int num_vars);

  int num_vars() const { return p_; }
  int size() const { return static_cast<int>(tokens_.size()); }
  const std::vector<std::string>& tokens() const { return tokens_; }
  const std::string& token(int id) const;

  /// Id of a token string; throws ParseError for unknown tokens.
  int id(std::string_view tok) const;
  bool contains(std::string_view tok) const;

  int zero() const { return 2 * p_; }
  int sep() const { return 2 * p_ + 1; }
  int bt() const { return 2 * p_ + 2; }
  int bos() const { return 2 * p_ + 3; }
  int d() const { return 2 * p_ + 4; }
  int sat() const { return 2 * p_ + 5; }
  int unsat() const { return 2 * p_ + 6; }

  bool is_literal(int id) const { return id >= 0 && id < 2 * p_; }
  /// Signed literal (1-based, negative = negated) for a literal token id.
  int literal(int id) const;
  /// Token id of a signed literal.
  int literal_id(int lit) const;

  std::vector<int> tokenize(std::string_view text) const;
  std::string detokenize(const std::vector<int>& ids) const;

  bool operator==(const Vocabulary& o) const { return tokens_ == o.tokens_; }

 private:
  int p_ = 0;
  std::vector<std::string> tokens_;
  std::unordered_map<std::string, int> index_;
};

}  // namespace sattf
