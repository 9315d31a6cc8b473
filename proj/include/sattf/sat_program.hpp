// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 The sattf Authors

#pragma once

#include <map>
#include <memory>
#include <string>
#include <vector>

#include "sattf/dpll.hpp"
#include "sattf/dsl.hpp"
#include "sattf/model.hpp"

namespace sattf {

struct SatProgramParams {
  int num_vars = 0;            // p
  int max_clauses = 0;         // c, an upper bound on clauses per formula
  double nonsep_penalty = 20.0;
  bool tie_break = true;       // lane-ordered bias on the heuristic output
};

/// floor(4.4 p), at least 1.
int default_max_clauses(int num_vars);

/// The DPLL-emulating program as a DSL graph over the SAT vocabulary of p variables.
struct SatProgram {
  std::unique_ptr<dsl::Graph> graph;
  dsl::NodeId root = -1;
  std::map<std::string, dsl::NodeId> nodes;  // named intermediate signals
  SatProgramParams params;
};

SatProgram build_sat_program(const SatProgramParams& params);

/// Per-literal-lane bias added to the heuristic output: (2p - 1 - l) / (2p) / (2c).
std::vector<double> tie_break_bias(int num_vars, int max_clauses);

/// Builds and compiles the program; the configuration echo records both parameter sets.
ModelWeights compile_sat_model(const SatProgramParams& params, const CompilerConfig& cfg);

/// Chooser reproducing the program's propagation and decision choices: among the
/// candidates, the highest heuristic value plus tie-break bias, where the heuristic is
/// the mean encoding of the clauses maximizing (#false - 10 #true).
Chooser model_mirror_chooser(int num_vars, int max_clauses);

/// Heuristic values per literal lane (length 2p) for a formula and trail.
std::vector<double> clause_heuristic(const CnfFormula& f, const std::vector<TrailLit>& trail);

}  // namespace sattf
