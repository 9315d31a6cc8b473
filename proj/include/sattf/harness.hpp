// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 The sattf Authors

#pragma once

#include <optional>
#include <string>
#include <vector>

#include "json.hpp"
#include "sattf/engine.hpp"
#include "sattf/instance_gen.hpp"
#include "sattf/sat_program.hpp"

namespace sattf {

/// Soft CoT length bound 8 p 2^(0.08 p).
double cot_length_bound(int num_vars);
/// Hard iteration cap p 2^(p+1), saturating at LONG_MAX / 4.
long theoretical_cap(int num_vars);
/// min(4 * cot_length_bound, room left in the context), never above theoretical_cap.
long default_budget(int num_vars, long context_room);
/// Prompt length of a formula with c clauses: [BOS], 4 tokens per clause, [SEP].
long prompt_length(int num_clauses);
/// Context length that fits c clauses plus the default decode budget.
int default_context_len(int num_vars, int max_clauses);

/// Program parameters recorded in a compiled model's configuration echo.
SatProgramParams model_program_params(const ModelWeights& w);

/// Compiles the SAT model for p variables; c <= 0 selects floor(4.4 p), context_len <= 0 the default.
ModelWeights compile_default(int num_vars, int max_clauses, double beta, int context_len = 0, int float_width = 32);

nlohmann::json model_info(const ModelWeights& w);

struct SolveOutcome {
  std::vector<int> prompt;
  DecodeResult decode;
  TraceValidation validation;
  long budget = 0;
};
SolveOutcome solve_formula(const CompiledModel& m, const CnfFormula& f, long budget = -1);
nlohmann::json solve_json(const CompiledModel& m, const SolveOutcome& s);

struct InstanceResult {
  int id = 0;
  Distribution distribution = Distribution::Random;
  int num_vars = 0, num_clauses = 0;
  Label expected = Label::Sat;
  bool halted = false;
  Label predicted = Label::Sat;  // meaningful when halted
  bool correct = false;
  bool trace_valid = false;
  std::string violation;
  long cot_length = 0;
  long budget = 0;
  double min_logit_gap = 0.0;
};

struct EvalOptions {
  long budget = -1;  // -1: default_budget
  int threads = 1;
};

struct EvalReport {
  int num_vars = 0;
  double beta = 0.0;
  long count = 0, correct = 0, wrong = 0, non_halting = 0, trace_valid = 0;
  long bound_violations = 0;  // CoT length above cot_length_bound
  long cap_reached = 0;       // CoT length at or above theoretical_cap
  long max_length = 0;
  double mean_length = 0.0;
  double accuracy = 0.0, validity = 0.0;
  double wall_seconds = 0.0;
  std::vector<InstanceResult> results;  // ordered by instance id

  nlohmann::json to_json() const;
  std::string to_table() const;
};

/// Greedy-decodes every instance; throws Error(InvalidArgument) when an instance's
/// variable count differs from the model's or its clause count exceeds the model's.
EvalReport evaluate(const CompiledModel& m, const std::vector<Instance>& instances, const EvalOptions& opts = {});

struct SweepSpec {
  std::vector<int> num_vars;
  std::vector<double> betas;
  int count = 200;  // marginal instances per p
  uint64_t seed = 0;
  int threads = 1;
};
struct SweepCell {
  int num_vars = 0;
  double beta = 0.0;
  EvalReport report;
};
std::vector<SweepCell> sweep_beta(const SweepSpec& spec);
nlohmann::json sweep_json(const std::vector<SweepCell>& cells);
std::string sweep_table(const std::vector<SweepCell>& cells);

/// Oracle DPLL run with the named chooser ("mirror", "lowest") as JSON.
nlohmann::json oracle_json(const CnfFormula& f, const std::string& chooser);
/// Validation of a generated trace against a prompt as JSON.
nlohmann::json check_trace_json(const Vocabulary& vocab, const std::vector<int>& prompt, const std::vector<int>& generated);

}  // namespace sattf
