// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 The sattf Authors

#pragma once

#include <functional>
#include <string>
#include <vector>

#include "sattf/cnf_io.hpp"
#include "sattf/error.hpp"
#include "sattf/vocab.hpp"

namespace sattf {

/// One entry of the annotated literal trail M.
struct TrailLit {
  int lit = 0;
  bool decision = false;
  bool operator==(const TrailLit& o) const = default;
};

enum class StateKind { Running, Sat, Unsat };

/// Abstract DPLL state: a trail M over an external formula F, or a terminal.
struct DpllState {
  StateKind kind = StateKind::Running;
  std::vector<TrailLit> trail;
  bool operator==(const DpllState& o) const = default;
};

enum class Rule { UnitPropagate, Decide, BackTrack, Fail, Success };

/// A transition whose side condition does not hold.
class TransitionError : public Error {
 public:
  explicit TransitionError(const std::string& what) : Error(ErrorCode::InvalidArgument, what) {}
};

enum class Label { Sat, Unsat };
const char* label_name(Label l);

/// Per-variable value under a trail: +1 true, -1 false, 0 undefined (index 0 unused).
std::vector<int> trail_values(int num_vars, const std::vector<TrailLit>& trail);
/// +1, -1 or 0 for a signed literal under `values`.
int literal_value(const std::vector<int>& values, int lit);

/// M |= F: every clause has a true literal.
bool satisfies(const CnfFormula& f, const std::vector<TrailLit>& trail);
/// Index of the first clause falsified by M, or -1.
int conflict_clause(const CnfFormula& f, const std::vector<TrailLit>& trail);
/// Literals forced by some clause whose other literals are all false, in token-id order.
std::vector<int> unit_literals(const CnfFormula& f, const std::vector<TrailLit>& trail);
/// Undefined literals (both polarities) of variables occurring in F, in token-id order.
std::vector<int> decision_candidates(const CnfFormula& f, const std::vector<TrailLit>& trail);
bool has_decision(const std::vector<TrailLit>& trail);

/// Applies one transition; throws TransitionError when its side condition fails.
DpllState step(const CnfFormula& f, const DpllState& s, Rule rule, int lit = 0);

enum class ChoiceKind { Propagate, Decide };

/// What a heuristic sees when the solver must pick a literal.
struct ChoiceContext {
  const CnfFormula& formula;
  const std::vector<TrailLit>& trail;
  ChoiceKind kind;
  const std::vector<int>& candidates;  // token-id order, never empty
};

/// Picks one of `candidates`.
using Chooser = std::function<int(const ChoiceContext&)>;

/// Lowest literal lane (token id) first, for both propagation and decisions.
Chooser lowest_lane_chooser();
/// Consumes `script` in order for every choice; falls back to lowest lane when exhausted.
/// Throws TransitionError if a scripted literal is not among the candidates.
Chooser scripted_chooser(std::vector<int> script);

enum class TokenRole { DecisionMarker, Decision, Propagation, BackTrackMarker, Replay, BackTrackLiteral, Terminal };
const char* role_name(TokenRole r);

/// A prompt together with its generated chain of thought.
struct TraceRecord {
  std::vector<int> prompt;
  std::vector<int> generated;
  std::vector<TokenRole> roles;  // parallel to `generated` when produced by the oracle
  bool halted = false;
};

struct SolveResult {
  Label label = Label::Sat;
  TraceRecord trace;
  long steps = 0;  // abstract transitions taken
};

/// Runs the transition system to a terminal state and emits the token trace:
/// decisions as "D l", propagations as "l", and on conflict with decisions "[BT]"
/// followed by a verbatim copy of the failed attempt up to its last D and then the
/// negated decision literal without a D marker.
SolveResult solve_with_trace(const CnfFormula& f, const Vocabulary& vocab, const Chooser& chooser);

/// Result of translating a token sequence to an abstract state.
struct CotState {
  CnfFormula formula;
  DpllState state;
};

/// Translates prompt + chain of thought to the abstract state it denotes.
CotState cot_to_state(const std::vector<int>& tokens, const Vocabulary& vocab);

struct TraceValidation {
  bool valid = true;            // no token violates a transition rule
  bool halted = false;          // ends with SAT or UNSAT
  long first_violation = -1;    // index into `generated`
  std::string message;
  Label label = Label::Sat;     // meaningful when halted
};

/// Replays `generated` against the formula in `prompt`, checking every token.
TraceValidation validate_full_trace(const std::vector<int>& prompt, const std::vector<int>& generated,
                                    const Vocabulary& vocab);

/// Exhaustive 2^p enumeration; requires p <= 24.
Label brute_force_sat(const CnfFormula& f);

}  // namespace sattf
