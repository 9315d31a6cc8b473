// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 The sattf Authors

#include "sattf/sat_program.hpp"

#include <cmath>
#include <limits>

#include "json.hpp"
#include "sattf/compiler.hpp"
#include "sattf/error.hpp"

namespace sattf {

using dsl::IndexMode;
using dsl::Matrix;
using dsl::SOp;
using dsl::Vector;

int default_max_clauses(int num_vars) { return std::max(1, static_cast<int>(std::floor(4.4 * num_vars + 1e-9))); }

std::vector<double> tie_break_bias(int p, int c) {
  std::vector<double> tb(2 * p);
  for (int l = 0; l < 2 * p; ++l) tb[l] = static_cast<double>(2 * p - 1 - l) / (2.0 * p) / (2.0 * c);
  return tb;
}

namespace {

// Per-variable map of an assignment encoding e (lanes x_v and not x_v) to
// lane values chosen by the variable's state: true, false or unassigned.
SOp by_state(SOp enc, int p, std::pair<double, double> when_true, std::pair<double, double> when_false,
             std::pair<double, double> when_free) {
  Matrix m = Matrix::Zero(2 * p, 2 * p);
  Vector b(2 * p);
  for (int v = 0; v < p; ++v) {
    m(v, v) = when_true.first - when_free.first;
    m(p + v, v) = when_true.second - when_free.first;
    b(v) = when_free.first;
    m(v, p + v) = when_false.first - when_free.second;
    m(p + v, p + v) = when_false.second - when_free.second;
    b(p + v) = when_free.second;
  }
  return enc.graph->linear({enc}, m, b);
}

}  // namespace

SatProgram build_sat_program(const SatProgramParams& params) {
  const int p = params.num_vars;
  const int c = params.max_clauses;
  const double pen_w = params.nonsep_penalty;
  if (p < 1) throw Error(ErrorCode::InvalidArgument, "num_vars must be at least 1");
  if (c < 1) throw Error(ErrorCode::InvalidArgument, "max_clauses must be at least 1");
  if (!(pen_w >= 2.0) || std::abs(2.0 * pen_w - std::round(2.0 * pen_w)) > 1e-12)
    throw Error(ErrorCode::InvalidArgument, "nonsep_penalty must be a multiple of 0.5 and at least 2");

  SatProgram prog;
  prog.params = params;
  prog.graph = std::make_unique<dsl::Graph>(Vocabulary(p));
  dsl::Graph& g = *prog.graph;
  const Vocabulary& vocab = g.vocab();
  const int V = vocab.size();
  auto name = [&](SOp s, const std::string& n) {
    prog.nodes[n] = s.id;
    return s.named(n);
  };

  SOp E = g.tokens();
  SOp I = g.indices();
  SOp ones = g.ones();
  SOp isbos = g.is_bos();
  auto lane = [&](int tok) { return E.col(tok); };
  SOp ev = g.slice(E, 0, 2 * p);

  // Most recent position holding one of `targets`, or the BOS position.
  auto nearest = [&](const std::vector<int>& targets, bool with_flags) {
    std::vector<SOp> ind;
    for (int t : targets) ind.push_back(lane(t));
    SOp any = ind.size() == 1 ? ind[0] : g.linear({g.concat(ind)}, Matrix::Ones(static_cast<long>(ind.size()), 1));
    std::vector<SOp> v = {I};
    if (with_flags) v.push_back(g.concat(ind));
    return g.mean({ones}, {I * any}, v, 0.5, 0.5);
  };
  SOp ns = name(nearest({vocab.zero(), vocab.sep(), vocab.bt()}, true), "nearest_separator");
  SOp p_sp = name(ns.col(0), "p_sp");
  SOp b_sep = ns.col(2);
  SOp b_bt = ns.col(3);
  SOp p_D = name(nearest({vocab.d()}, false), "p_D");

  SOp prev = g.index_select(p_sp, I - 1.0, IndexMode::Clamp);
  SOp p_sep = name(prev - isbos, "p_sep");
  SOp d_sep = I - p_sep;

  SOp p_sep_sq = p_sep * p_sep;
  SOp r_pre = g.mean({p_sep_sq, p_sep, ones}, {-ones, 2.0 * p_sep, -p_sep_sq}, {ev}, 0.0, 1.0);
  SOp r = name(r_pre * d_sep, "r");

  SOp p_sep_min = g.index_select(p_sep, p_sp, IndexMode::Strict);
  SOp d_sp = I - p_sp;
  SOp pmin = name(p_sep_min + d_sp + static_cast<double>(p) * b_sep, "p_min");
  SOp p_D_min = name(g.index_select(p_D, p_sp, IndexMode::Strict), "p_D_min");
  SOp b_D_min = eq(p_D_min, pmin + 1.0);

  SOp pen = pen_w * lane(vocab.zero()) - pen_w;
  SOp not_false = by_state(r, p, {1, 0}, {0, 1}, {1, 1});
  SOp assigned = by_state(r, p, {1, 1}, {1, 1}, {0, 0});

  SOp sat_mean = g.mean({r, ones}, {-r, pen}, {isbos}, pen_w - 0.5, 0.5);
  SOp b_sat = name(gt(sat_mean, 0.0), "sat");
  SOp cont_mean = g.mean({not_false, ones}, {-r, pen}, {1.0 - isbos}, pen_w - 0.5, 0.5);
  SOp b_cont = name(gt(cont_mean, 0.0), "cont");
  SOp b_copy_pos = lt(pmin, p_sp - 1.0);
  SOp o_up = name(g.mean({not_false, ones}, {-r, pen}, {static_cast<double>(c) * r}, pen_w - 1.5, 0.5), "o_up");
  SOp e_up = name(g.relu_combination({{o_up - assigned, 1.0}, {o_up - 1.0, -1.0}}), "e_up");

  SOp h_q = by_state(r, p, {-10, 1}, {1, -10}, {0, 0});
  SOp heur = name(g.mean({h_q, ones}, {r, pen}, {r}, 0.0, 1.0), "heuristic");

  SOp b_no_dec = le(p_D, p_sep);
  SOp b_bt_fail = le(p_D_min, pmin) * b_bt;
  SOp e_bt = by_state(g.index_select(ev, p_D_min + 1.0, IndexMode::Clamp), p, {0, 1}, {1, 0}, {0, 0});
  SOp copy_src = g.concat({ev, lane(vocab.d())});
  SOp e_copy_core = g.index_select(copy_src, pmin + 1.0, IndexMode::Clamp);
  Matrix place = Matrix::Zero(2 * p + 1, V);
  for (int l = 0; l < 2 * p; ++l) place(l, l) = 1.0;
  place(2 * p, vocab.d()) = 1.0;
  SOp e_copy = g.linear({e_copy_core}, place);

  SOp b_unsat = name(b_no_dec * b_cont, "unsat");
  SOp b_back = name(b_D_min * b_bt, "back");
  SOp b_copy = name(b_copy_pos * (1.0 - b_bt_fail), "copy");
  SOp b_emit_bt = name(b_cont * (1.0 - lane(vocab.bt())), "emit_bt");
  SOp b_not_d = 1.0 - lane(vocab.d());
  SOp unassigned = by_state(r, p, {0, 0}, {0, 0}, {1, 1});

  Vector tb = Vector::Zero(2 * p);
  if (params.tie_break) {
    auto bias = tie_break_bias(p, c);
    for (int l = 0; l < 2 * p; ++l) tb(l) = bias[l];
  }
  SOp fallback = g.linear({unassigned, heur}, (Matrix(4 * p, 2 * p) << Matrix::Identity(2 * p, 2 * p),
                                               Matrix::Identity(2 * p, 2 * p)).finished(), tb);

  SOp out = g.priority_output(V, {
      {b_sat, std::nullopt, vocab.sat(), 16.0},
      {b_unsat, std::nullopt, vocab.unsat(), 15.0},
      {b_emit_bt, std::nullopt, vocab.bt(), 14.0},
      {b_back, g.pad(e_bt, V, 0), -1, 12.0},
      {b_copy, e_copy, -1, 6.0},
      {std::nullopt, g.pad(e_up, V, 0), -1, 4.0},
      {b_not_d, std::nullopt, vocab.d(), 3.0},
      {std::nullopt, g.pad(fallback, V, 0), -1, 1.0},
  });
  prog.root = name(out, "output").id;
  return prog;
}

ModelWeights compile_sat_model(const SatProgramParams& params, const CompilerConfig& cfg) {
  SatProgram prog = build_sat_program(params);
  nlohmann::json echo = {{"program", "dpll"},
                         {"num_vars", params.num_vars},
                         {"max_clauses", params.max_clauses},
                         {"nonsep_penalty", params.nonsep_penalty},
                         {"tie_break", params.tie_break},
                         {"beta", cfg.beta},
                         {"context_len", cfg.context_len},
                         {"float_width", cfg.float_width}};
  return compiler::compile(*prog.graph, prog.root, cfg, echo.dump());
}

std::vector<double> clause_heuristic(const CnfFormula& f, const std::vector<TrailLit>& trail) {
  const int p = f.num_vars;
  auto values = trail_values(p, trail);
  std::vector<int> score(f.clauses.size());
  int best = std::numeric_limits<int>::min();
  for (size_t k = 0; k < f.clauses.size(); ++k) {
    int n_false = 0, n_true = 0;
    for (int l : f.clauses[k]) {
      int v = literal_value(values, l);
      n_false += v < 0;
      n_true += v > 0;
    }
    score[k] = n_false - 10 * n_true;
    best = std::max(best, score[k]);
  }
  std::vector<double> h(2 * p, 0.0);
  int tied = 0;
  for (size_t k = 0; k < f.clauses.size(); ++k) {
    if (score[k] != best) continue;
    ++tied;
    for (int l : f.clauses[k]) h[l > 0 ? l - 1 : p - l - 1] += 1.0;
  }
  if (tied > 0)
    for (double& x : h) x /= tied;
  return h;
}

Chooser model_mirror_chooser(int num_vars, int max_clauses) {
  auto tb = std::make_shared<std::vector<double>>(tie_break_bias(num_vars, max_clauses));
  return [tb, num_vars](const ChoiceContext& ctx) {
    if (ctx.formula.num_vars != num_vars) throw Error(ErrorCode::InvalidArgument, "mirror chooser: variable count mismatch");
    auto h = clause_heuristic(ctx.formula, ctx.trail);
    int best = ctx.candidates.front();
    double best_v = -std::numeric_limits<double>::infinity();
    int best_lane = std::numeric_limits<int>::max();
    for (int lit : ctx.candidates) {
      int lane = lit > 0 ? lit - 1 : num_vars - lit - 1;
      double v = h[lane] + (*tb)[lane];
      if (v > best_v || (v == best_v && lane < best_lane)) {
        best_v = v;
        best = lit;
        best_lane = lane;
      }
    }
    return best;
  };
}

}  // namespace sattf
