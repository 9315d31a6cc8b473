// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 The sattf Authors

#pragma once

#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include "sattf/cnf_io.hpp"
#include "sattf/dpll.hpp"

namespace sattf {

enum class Distribution { Random, Skewed, Marginal };
const char* distribution_name(Distribution d);
Distribution parse_distribution(const std::string& name);

/// Prior for the skewed distribution: each variable leans toward a random polarity
/// with probability drawn from [bias_min, bias_max]; variable weights follow
/// 1 / rank^power over a random ranking.
struct SkewPrior {
  double bias_min = 0.6;
  double bias_max = 0.9;
  double power = 1.0;
};

struct GenSpec {
  Distribution distribution = Distribution::Random;
  int num_vars = 8;
  double ratio_min = 4.1;
  double ratio_max = 4.4;
  int count = 100;
  uint64_t seed = 0;
  SkewPrior skew;
  int flip_proposals = 4000;  // per attempt, marginal only
  int max_retries = 64;       // fresh formulas per pair, marginal only
};

struct Instance {
  int id = 0;
  Distribution distribution = Distribution::Random;
  CnfFormula formula;
  Label label = Label::Sat;
  int pair_id = -1;
  uint64_t seed = 0;
};

/// [ceil(ratio_min p), floor(ratio_max p)].
std::pair<int, int> clause_count_range(int num_vars, double ratio_min, double ratio_max);

/// Seed of instance (or pair) k, derived from the dataset seed and distribution.
uint64_t derive_seed(uint64_t seed, Distribution d, long k);

CnfFormula sample_uniform_formula(int num_vars, int num_clauses, std::mt19937_64& rng);
CnfFormula sample_skewed_formula(int num_vars, int num_clauses, const SkewPrior& prior, std::mt19937_64& rng);

std::vector<Instance> gen_random(const GenSpec& spec, int threads = 1);
std::vector<Instance> gen_skewed(const GenSpec& spec, int threads = 1);
/// Pairs (SAT, UNSAT) differing in exactly one literal; count must be even.
std::vector<Instance> gen_marginal(const GenSpec& spec, int threads = 1);
std::vector<Instance> generate(const GenSpec& spec, int threads = 1);

/// One JSON object per line: {id, distribution, p, c, dimacs_text, label, pair_id?, seed}.
std::string to_jsonl(const std::vector<Instance>& instances);
std::vector<Instance> read_jsonl(const std::string& text);

}  // namespace sattf
