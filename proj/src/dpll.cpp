// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 The sattf Authors

#include "sattf/dpll.hpp"

#include <algorithm>
#include <cstdint>
#include <cstdlib>
#include <deque>
#include <memory>

namespace sattf {
namespace {

bool lane_less(int a, int b) {
  if ((a < 0) != (b < 0)) return a > 0;
  return std::abs(a) < std::abs(b);
}

void sort_lanes(std::vector<int>& lits) {
  std::sort(lits.begin(), lits.end(), lane_less);
  lits.erase(std::unique(lits.begin(), lits.end()), lits.end());
}

std::vector<bool> occurring_vars(const CnfFormula& f) {
  std::vector<bool> occ(f.num_vars + 1, false);
  for (const auto& c : f.clauses)
    for (int l : c) occ[std::abs(l)] = true;
  return occ;
}

int last_decision_index(const std::vector<TrailLit>& trail) {
  for (int i = static_cast<int>(trail.size()) - 1; i >= 0; --i)
    if (trail[i].decision) return i;
  return -1;
}

}  // namespace

const char* label_name(Label l) { return l == Label::Sat ? "SAT" : "UNSAT"; }

const char* role_name(TokenRole r) {
  switch (r) {
    case TokenRole::DecisionMarker: return "decision_marker";
    case TokenRole::Decision: return "decision";
    case TokenRole::Propagation: return "propagation";
    case TokenRole::BackTrackMarker: return "backtrack_marker";
    case TokenRole::Replay: return "replay";
    case TokenRole::BackTrackLiteral: return "backtrack_literal";
    case TokenRole::Terminal: return "terminal";
  }
  return "?";
}

std::vector<int> trail_values(int num_vars, const std::vector<TrailLit>& trail) {
  std::vector<int> values(num_vars + 1, 0);
  for (const auto& t : trail) {
    int v = std::abs(t.lit);
    if (v >= 1 && v <= num_vars) values[v] = t.lit > 0 ? 1 : -1;
  }
  return values;
}

int literal_value(const std::vector<int>& values, int lit) {
  int v = values[std::abs(lit)];
  return lit > 0 ? v : -v;
}

bool satisfies(const CnfFormula& f, const std::vector<TrailLit>& trail) {
  auto values = trail_values(f.num_vars, trail);
  for (const auto& c : f.clauses) {
    bool sat = false;
    for (int l : c) sat = sat || literal_value(values, l) > 0;
    if (!sat) return false;
  }
  return true;
}

int conflict_clause(const CnfFormula& f, const std::vector<TrailLit>& trail) {
  auto values = trail_values(f.num_vars, trail);
  for (size_t i = 0; i < f.clauses.size(); ++i) {
    bool all_false = true;
    for (int l : f.clauses[i]) all_false = all_false && literal_value(values, l) < 0;
    if (all_false) return static_cast<int>(i);
  }
  return -1;
}

std::vector<int> unit_literals(const CnfFormula& f, const std::vector<TrailLit>& trail) {
  auto values = trail_values(f.num_vars, trail);
  std::vector<int> units;
  for (const auto& c : f.clauses) {
    int undefined = 0, candidate = 0;
    bool all_other_false = true;
    for (int l : c) {
      int val = literal_value(values, l);
      if (val == 0) {
        ++undefined;
        candidate = l;
      } else if (val > 0) {
        all_other_false = false;
      }
    }
    if (all_other_false && undefined == 1) units.push_back(candidate);
  }
  sort_lanes(units);
  return units;
}

std::vector<int> decision_candidates(const CnfFormula& f, const std::vector<TrailLit>& trail) {
  auto values = trail_values(f.num_vars, trail);
  auto occ = occurring_vars(f);
  std::vector<int> out;
  for (int v = 1; v <= f.num_vars; ++v)
    if (occ[v] && values[v] == 0) out.push_back(v);
  for (int v = 1; v <= f.num_vars; ++v)
    if (occ[v] && values[v] == 0) out.push_back(-v);
  return out;
}

bool has_decision(const std::vector<TrailLit>& trail) { return last_decision_index(trail) >= 0; }

DpllState step(const CnfFormula& f, const DpllState& s, Rule rule, int lit) {
  if (s.kind != StateKind::Running) throw TransitionError("no transition leaves a terminal state");
  auto values = trail_values(f.num_vars, s.trail);
  auto require_undefined = [&](int l) {
    if (l == 0 || std::abs(l) > f.num_vars) throw TransitionError("literal out of range: " + std::to_string(l));
    if (values[std::abs(l)] != 0) throw TransitionError("literal " + std::to_string(l) + " is already defined");
  };
  DpllState next = s;
  switch (rule) {
    case Rule::UnitPropagate: {
      require_undefined(lit);
      auto units = unit_literals(f, s.trail);
      if (std::find(units.begin(), units.end(), lit) == units.end())
        throw TransitionError("no clause C or " + std::to_string(lit) + " has M |= not C");
      next.trail.push_back({lit, false});
      return next;
    }
    case Rule::Decide: {
      require_undefined(lit);
      if (!occurring_vars(f)[std::abs(lit)])
        throw TransitionError("variable " + std::to_string(std::abs(lit)) + " does not occur in F");
      next.trail.push_back({lit, true});
      return next;
    }
    case Rule::BackTrack: {
      int c = conflict_clause(f, s.trail);
      if (c < 0) throw TransitionError("BackTrack needs a falsified clause");
      int d = last_decision_index(s.trail);
      if (d < 0) throw TransitionError("BackTrack needs a decision literal in M");
      int l = s.trail[d].lit;
      next.trail.resize(d);
      next.trail.push_back({-l, false});
      return next;
    }
    case Rule::Fail: {
      int c = conflict_clause(f, s.trail);
      if (c < 0) throw TransitionError("Fail needs a falsified clause");
      if (has_decision(s.trail)) throw TransitionError("Fail needs M without decision literals");
      return DpllState{StateKind::Unsat, {}};
    }
    case Rule::Success: {
      if (!satisfies(f, s.trail)) throw TransitionError("Success needs M |= F");
      return DpllState{StateKind::Sat, s.trail};
    }
  }
  throw TransitionError("unknown rule");
}

Chooser lowest_lane_chooser() {
  return [](const ChoiceContext& ctx) { return ctx.candidates.front(); };
}

Chooser scripted_chooser(std::vector<int> script) {
  auto state = std::make_shared<std::pair<std::vector<int>, size_t>>(std::move(script), 0);
  return [state](const ChoiceContext& ctx) {
    auto& [lits, pos] = *state;
    if (pos >= lits.size()) return ctx.candidates.front();
    int want = lits[pos++];
    if (std::find(ctx.candidates.begin(), ctx.candidates.end(), want) == ctx.candidates.end())
      throw TransitionError("scripted literal " + std::to_string(want) + " is not a legal choice");
    return want;
  };
}

SolveResult solve_with_trace(const CnfFormula& f, const Vocabulary& vocab, const Chooser& chooser) {
  validate_formula(f);
  SolveResult res;
  res.trace.prompt = encode_to_tokens(f, vocab);
  auto& gen = res.trace.generated;
  auto& roles = res.trace.roles;
  auto emit = [&](int tok, TokenRole role) {
    gen.push_back(tok);
    roles.push_back(role);
  };
  std::vector<TrailLit> trail;
  std::vector<int> attempt;  // tokens since the last separator
  auto pick = [&](ChoiceKind kind, const std::vector<int>& cands) {
    ChoiceContext ctx{f, trail, kind, cands};
    int l = chooser(ctx);
    if (std::find(cands.begin(), cands.end(), l) == cands.end())
      throw TransitionError("chooser returned an illegal literal " + std::to_string(l));
    return l;
  };
  while (true) {
    ++res.steps;
    if (satisfies(f, trail)) {
      emit(vocab.sat(), TokenRole::Terminal);
      res.label = Label::Sat;
      break;
    }
    if (conflict_clause(f, trail) >= 0) {
      int d = last_decision_index(trail);
      if (d < 0) {
        emit(vocab.unsat(), TokenRole::Terminal);
        res.label = Label::Unsat;
        break;
      }
      emit(vocab.bt(), TokenRole::BackTrackMarker);
      auto last_d = std::find(attempt.rbegin(), attempt.rend(), vocab.d());
      size_t keep = static_cast<size_t>(attempt.rend() - last_d) - 1;
      std::vector<int> replay(attempt.begin(), attempt.begin() + static_cast<long>(keep));
      for (int t : replay) emit(t, TokenRole::Replay);
      int neg = -trail[d].lit;
      emit(vocab.literal_id(neg), TokenRole::BackTrackLiteral);
      trail.resize(d);
      trail.push_back({neg, false});
      attempt = replay;
      attempt.push_back(vocab.literal_id(neg));
      continue;
    }
    auto units = unit_literals(f, trail);
    if (!units.empty()) {
      int l = pick(ChoiceKind::Propagate, units);
      emit(vocab.literal_id(l), TokenRole::Propagation);
      attempt.push_back(vocab.literal_id(l));
      trail.push_back({l, false});
      continue;
    }
    auto cands = decision_candidates(f, trail);
    int l = pick(ChoiceKind::Decide, cands);
    emit(vocab.d(), TokenRole::DecisionMarker);
    emit(vocab.literal_id(l), TokenRole::Decision);
    attempt.push_back(vocab.d());
    attempt.push_back(vocab.literal_id(l));
    trail.push_back({l, true});
  }
  res.trace.halted = true;
  return res;
}

CotState cot_to_state(const std::vector<int>& tokens, const Vocabulary& vocab) {
  long sep = -1;
  for (size_t i = 0; i < tokens.size(); ++i) {
    if (tokens[i] == vocab.sep()) {
      if (sep >= 0) throw ParseError("duplicate [SEP]", static_cast<long>(i));
      sep = static_cast<long>(i);
    }
  }
  if (sep < 0) throw ParseError("missing [SEP]", -1);
  if (tokens.empty() || tokens[0] != vocab.bos()) throw ParseError("prompt must start with [BOS]", 0);
  CotState out;
  out.formula = parse_dimacs_tokens(std::vector<int>(tokens.begin(), tokens.begin() + sep + 1), vocab);
  if (tokens.back() == vocab.sat() || tokens.back() == vocab.unsat()) {
    if (static_cast<long>(tokens.size()) - 1 == sep) throw ParseError("terminal token without a trace", sep);
    out.state.kind = tokens.back() == vocab.sat() ? StateKind::Sat : StateKind::Unsat;
  }
  size_t end = out.state.kind == StateKind::Running ? tokens.size() : tokens.size() - 1;
  size_t begin = static_cast<size_t>(sep) + 1;
  for (size_t i = begin; i < end; ++i)
    if (tokens[i] == vocab.bt()) begin = i + 1;
  bool pending = false;
  std::vector<bool> seen(vocab.num_vars() + 1, false);
  for (size_t i = begin; i < end; ++i) {
    int t = tokens[i];
    if (t == vocab.d()) {
      if (pending) throw ParseError("D followed by D", static_cast<long>(i));
      pending = true;
    } else if (vocab.is_literal(t)) {
      int lit = vocab.literal(t);
      if (seen[std::abs(lit)]) throw ParseError("variable assigned twice", static_cast<long>(i));
      seen[std::abs(lit)] = true;
      if (out.state.kind == StateKind::Running) out.state.trail.push_back({lit, pending});
      pending = false;
    } else {
      throw ParseError("stray token '" + vocab.token(t) + "' in trace", static_cast<long>(i));
    }
  }
  return out;
}

TraceValidation validate_full_trace(const std::vector<int>& prompt, const std::vector<int>& generated,
                                    const Vocabulary& vocab) {
  TraceValidation res;
  CnfFormula f = parse_dimacs_tokens(prompt, vocab);
  if (prompt.empty() || prompt.front() != vocab.bos() || prompt.back() != vocab.sep())
    throw ParseError("prompt must be framed by [BOS] and [SEP]", 0);
  auto occ = occurring_vars(f);
  std::vector<TrailLit> trail;
  std::vector<int> attempt;
  std::deque<int> replay;  // expected tokens after [BT]; the last one is the negated decision
  bool pending_d = false;
  auto fail = [&](long k, const std::string& why) {
    res.valid = false;
    res.first_violation = k;
    res.message = why;
    return res;
  };
  for (size_t k = 0; k < generated.size(); ++k) {
    long idx = static_cast<long>(k);
    int t = generated[k];
    if (t < 0 || t >= vocab.size()) return fail(idx, "token id out of range");
    const std::string& name = vocab.token(t);
    if (res.halted) return fail(idx, "token after terminal");
    if (!replay.empty()) {
      if (t != replay.front()) return fail(idx, "backtrack replay expected '" + vocab.token(replay.front()) + "' got '" + name + "'");
      replay.pop_front();
      attempt.push_back(t);
      if (t == vocab.d()) {
        pending_d = true;
      } else {
        trail.push_back({vocab.literal(t), pending_d && !replay.empty()});
        pending_d = false;
      }
      continue;
    }
    if (pending_d) {
      if (!vocab.is_literal(t)) return fail(idx, "D must be followed by a literal, got '" + name + "'");
      int lit = vocab.literal(t);
      if (std::abs(lit) > f.num_vars || !occ[std::abs(lit)]) return fail(idx, "decided variable does not occur in F");
      if (trail_values(f.num_vars, trail)[std::abs(lit)] != 0) return fail(idx, "decided variable already assigned");
      trail.push_back({lit, true});
      attempt.push_back(t);
      pending_d = false;
      continue;
    }
    if (t == vocab.d()) {
      if (decision_candidates(f, trail).empty()) return fail(idx, "D with no undefined variable left");
      pending_d = true;
      attempt.push_back(t);
    } else if (vocab.is_literal(t)) {
      int lit = vocab.literal(t);
      auto units = unit_literals(f, trail);
      if (std::find(units.begin(), units.end(), lit) == units.end() ||
          trail_values(f.num_vars, trail)[std::abs(lit)] != 0)
        return fail(idx, "literal " + name + " is not implied by a unit clause");
      trail.push_back({lit, false});
      attempt.push_back(t);
    } else if (t == vocab.bt()) {
      if (conflict_clause(f, trail) < 0) return fail(idx, "[BT] without a falsified clause");
      int d = last_decision_index(trail);
      if (d < 0) return fail(idx, "[BT] without a decision literal");
      auto last_d = std::find(attempt.rbegin(), attempt.rend(), vocab.d());
      size_t keep = static_cast<size_t>(attempt.rend() - last_d) - 1;
      replay.assign(attempt.begin(), attempt.begin() + static_cast<long>(keep));
      replay.push_back(vocab.literal_id(-trail[d].lit));
      trail.clear();
      attempt.clear();
    } else if (t == vocab.sat()) {
      if (!satisfies(f, trail)) return fail(idx, "SAT while M does not satisfy F");
      res.halted = true;
      res.label = Label::Sat;
    } else if (t == vocab.unsat()) {
      if (conflict_clause(f, trail) < 0) return fail(idx, "UNSAT without a falsified clause");
      if (has_decision(trail)) return fail(idx, "UNSAT while decision literals remain");
      res.halted = true;
      res.label = Label::Unsat;
    } else {
      return fail(idx, "token '" + name + "' is not a transition");
    }
  }
  return res;
}

Label brute_force_sat(const CnfFormula& f) {
  if (f.num_vars > 24) throw Error(ErrorCode::InvalidArgument, "brute force limited to 24 variables");
  std::vector<std::pair<uint32_t, uint32_t>> masks;
  for (const auto& c : f.clauses) {
    uint32_t pos = 0, neg = 0;
    for (int l : c) (l > 0 ? pos : neg) |= 1u << (std::abs(l) - 1);
    masks.emplace_back(pos, neg);
  }
  const uint32_t total = 1u << f.num_vars;
  for (uint32_t a = 0; a < total; ++a) {
    bool ok = true;
    for (const auto& [pos, neg] : masks) {
      if (!((a & pos) | (~a & neg))) {
        ok = false;
        break;
      }
    }
    if (ok) return Label::Sat;
  }
  return Label::Unsat;
}

}  // namespace sattf
