// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 The sattf Authors

#include "sattf/harness.hpp"

#include <chrono>
#include <climits>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <sstream>

#include "sattf/error.hpp"
#include "sattf/parallel.hpp"

namespace sattf {

using nlohmann::json;
using nlohmann::ordered_json;

int default_threads() {
  if (const char* env = std::getenv("SATTF_THREADS")) {
    char* end = nullptr;
    long n = std::strtol(env, &end, 10);
    if (end != env && *end == '\0' && n >= 1 && n <= 1024) return static_cast<int>(n);
  }
  unsigned hw = std::thread::hardware_concurrency();
  return hw == 0 ? 1 : static_cast<int>(hw);
}

double cot_length_bound(int p) { return 8.0 * p * std::pow(2.0, 0.08 * p); }

long theoretical_cap(int p) {
  if (p + 1 >= 58) return LONG_MAX / 4;
  long cap = static_cast<long>(p) << (p + 1);
  return std::min(cap, LONG_MAX / 4);
}

long default_budget(int p, long context_room) {
  long soft = static_cast<long>(std::floor(4.0 * cot_length_bound(p)));
  return std::max(1L, std::min({soft, context_room, theoretical_cap(p)}));
}

long prompt_length(int num_clauses) { return 4L * num_clauses + 2; }

int default_context_len(int p, int c) {
  long soft = static_cast<long>(std::floor(4.0 * cot_length_bound(p)));
  long len = prompt_length(c) + std::min(soft, theoretical_cap(p));
  if (len > (1 << 20)) throw Error(ErrorCode::InvalidArgument, "default context length too large");
  return static_cast<int>(len);
}

SatProgramParams model_program_params(const ModelWeights& w) {
  json cfg = json::parse(w.config_json, nullptr, false);
  if (cfg.is_discarded() || !cfg.is_object() || cfg.value("program", "") != "dpll")
    throw Error(ErrorCode::InvalidArgument, "model was not compiled from the SAT program");
  SatProgramParams p;
  p.num_vars = cfg.value("num_vars", 0);
  p.max_clauses = cfg.value("max_clauses", 0);
  p.nonsep_penalty = cfg.value("nonsep_penalty", 20.0);
  p.tie_break = cfg.value("tie_break", true);
  if (p.num_vars != w.vocab.num_vars()) throw Error(ErrorCode::InvalidArgument, "configuration echo disagrees with vocabulary");
  return p;
}

ModelWeights compile_default(int p, int c, double beta, int context_len, int float_width) {
  SatProgramParams params;
  params.num_vars = p;
  params.max_clauses = c > 0 ? c : default_max_clauses(p);
  CompilerConfig cfg;
  cfg.beta = beta;
  cfg.context_len = context_len > 0 ? context_len : default_context_len(p, params.max_clauses);
  cfg.float_width = float_width;
  return compile_sat_model(params, cfg);
}

json model_info(const ModelWeights& w) {
  ordered_json j;
  j["num_vars"] = w.vocab.num_vars();
  j["vocab_size"] = w.vocab.size();
  j["d_emb"] = w.d_emb;
  j["d_head"] = w.d_head;
  j["d_mlp"] = w.d_mlp;
  j["n_layers"] = w.n_layers;
  j["n_heads"] = w.n_heads;
  j["context_len"] = w.context_len;
  j["float_width"] = w.float_width;
  j["parameters"] = w.parameter_count();
  j["config"] = json::parse(w.config_json, nullptr, false);
  ordered_json heads = ordered_json::array();
  for (size_t l = 0; l < w.head_table.size(); ++l)
    for (const auto& h : w.head_table[l])
      heads.push_back({{"layer", l}, {"label", h.label}, {"margin", h.margin}, {"scale", h.scale}, {"certified", h.certified}});
  j["heads"] = heads;
  return j;
}

SolveOutcome solve_formula(const CompiledModel& m, const CnfFormula& f, long budget) {
  const ModelWeights& w = m.weights();
  SolveOutcome s;
  CnfFormula g = f;
  if (g.num_vars > w.vocab.num_vars())
    throw Error(ErrorCode::InvalidArgument, "formula uses " + std::to_string(g.num_vars) + " variables; the model supports " +
                                                std::to_string(w.vocab.num_vars()));
  g.num_vars = w.vocab.num_vars();
  const auto params = model_program_params(w);
  if (static_cast<int>(g.clauses.size()) > params.max_clauses)
    throw Error(ErrorCode::InvalidArgument, "formula has " + std::to_string(g.clauses.size()) +
                                                " clauses; the model supports at most " + std::to_string(params.max_clauses));
  s.prompt = encode_to_tokens(g, w.vocab);
  const long room = w.context_len - static_cast<long>(s.prompt.size()) + 1;
  if (room < 1) throw Error(ErrorCode::InvalidArgument, "prompt does not fit the model context");
  s.budget = budget > 0 ? std::min(budget, room) : default_budget(g.num_vars, room);
  DecodeOptions opts;
  opts.max_new_tokens = s.budget;
  s.decode = greedy_decode(m, s.prompt, opts);
  s.validation = validate_full_trace(s.prompt, s.decode.generated, w.vocab);
  return s;
}

json solve_json(const CompiledModel& m, const SolveOutcome& s) {
  const Vocabulary& v = m.weights().vocab;
  ordered_json j;
  j["prompt"] = v.detokenize(s.prompt);
  j["trace"] = v.detokenize(s.decode.generated);
  j["length"] = s.decode.generated.size();
  j["budget"] = s.budget;
  j["halted"] = s.decode.halted;
  j["stop_reason"] = s.decode.stop_reason;
  j["label"] = s.decode.halted ? json(label_name(s.validation.label)) : json(nullptr);
  j["trace_valid"] = s.validation.valid;
  if (!s.validation.valid) {
    j["first_violation"] = s.validation.first_violation;
    j["message"] = s.validation.message;
  }
  j["min_logit_gap"] = s.decode.min_logit_gap;
  return j;
}

EvalReport evaluate(const CompiledModel& m, const std::vector<Instance>& instances, const EvalOptions& opts) {
  const auto t0 = std::chrono::steady_clock::now();
  const ModelWeights& w = m.weights();
  const auto params = model_program_params(w);
  json cfg = json::parse(w.config_json, nullptr, false);
  EvalReport r;
  r.num_vars = params.num_vars;
  r.beta = cfg.value("beta", 0.0);
  for (const auto& in : instances) {
    if (in.formula.num_vars != params.num_vars)
      throw Error(ErrorCode::InvalidArgument, "instance " + std::to_string(in.id) + " has p=" +
                                                  std::to_string(in.formula.num_vars) + " but the model has p=" +
                                                  std::to_string(params.num_vars));
    if (static_cast<int>(in.formula.clauses.size()) > params.max_clauses)
      throw Error(ErrorCode::InvalidArgument, "instance " + std::to_string(in.id) + " exceeds the model's clause capacity");
  }
  r.results.resize(instances.size());
  parallel_for(static_cast<long>(instances.size()), std::max(1, opts.threads), [&](long k) {
    const Instance& in = instances[k];
    SolveOutcome s = solve_formula(m, in.formula, opts.budget);
    InstanceResult& o = r.results[k];
    o.id = in.id;
    o.distribution = in.distribution;
    o.num_vars = in.formula.num_vars;
    o.num_clauses = static_cast<int>(in.formula.clauses.size());
    o.expected = in.label;
    o.halted = s.decode.halted;
    o.predicted = s.decode.halted && s.decode.generated.back() == w.vocab.sat() ? Label::Sat : Label::Unsat;
    o.correct = o.halted && o.predicted == o.expected;
    o.trace_valid = s.validation.valid && s.validation.halted;
    if (!s.validation.valid) o.violation = s.validation.message + " at " + std::to_string(s.validation.first_violation);
    o.cot_length = static_cast<long>(s.decode.generated.size());
    o.budget = s.budget;
    o.min_logit_gap = s.decode.min_logit_gap;
  });
  std::stable_sort(r.results.begin(), r.results.end(), [](const auto& a, const auto& b) { return a.id < b.id; });
  r.count = static_cast<long>(r.results.size());
  double total = 0.0;
  const double bound = cot_length_bound(r.num_vars);
  const long cap = theoretical_cap(r.num_vars);
  for (const auto& o : r.results) {
    r.correct += o.correct;
    r.non_halting += !o.halted;
    r.wrong += o.halted && !o.correct;
    r.trace_valid += o.trace_valid;
    r.bound_violations += o.cot_length > bound;
    r.cap_reached += o.cot_length >= cap;
    r.max_length = std::max(r.max_length, o.cot_length);
    total += static_cast<double>(o.cot_length);
  }
  r.mean_length = r.count ? total / r.count : 0.0;
  r.accuracy = r.count ? static_cast<double>(r.correct) / r.count : 1.0;
  r.validity = r.count ? static_cast<double>(r.trace_valid) / r.count : 1.0;
  r.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return r;
}

json EvalReport::to_json() const {
  ordered_json j;
  j["p"] = num_vars;
  j["beta"] = beta;
  j["count"] = count;
  j["correct"] = correct;
  j["wrong"] = wrong;
  j["non_halting"] = non_halting;
  j["accuracy"] = accuracy;
  j["trace_valid"] = trace_valid;
  j["trace_validity"] = validity;
  j["cot_length"] = {{"max", max_length}, {"mean", mean_length}, {"bound", cot_length_bound(num_vars)},
                     {"bound_violations", bound_violations}, {"cap", theoretical_cap(num_vars)}, {"cap_reached", cap_reached}};
  j["wall_seconds"] = wall_seconds;
  ordered_json items = ordered_json::array();
  for (const auto& o : results) {
    ordered_json e;
    e["id"] = o.id;
    e["distribution"] = distribution_name(o.distribution);
    e["p"] = o.num_vars;
    e["c"] = o.num_clauses;
    e["expected"] = label_name(o.expected);
    e["outcome"] = !o.halted ? "non-halting" : (o.correct ? "correct" : "wrong");
    e["predicted"] = o.halted ? json(label_name(o.predicted)) : json(nullptr);
    e["trace_valid"] = o.trace_valid;
    if (!o.violation.empty()) e["violation"] = o.violation;
    e["cot_length"] = o.cot_length;
    e["budget"] = o.budget;
    e["budget_exhausted"] = !o.halted;
    e["min_logit_gap"] = o.min_logit_gap;
    items.push_back(e);
  }
  j["instances"] = items;
  return j;
}

std::string EvalReport::to_table() const {
  std::ostringstream os;
  os << "p     beta    count  correct  wrong  non-halt  accuracy  validity  max_len  mean_len  bound   wall_s\n";
  char buf[256];
  std::snprintf(buf, sizeof buf, "%-5d %-7.2f %-6ld %-8ld %-6ld %-9ld %-9.4f %-9.4f %-8ld %-9.2f %-7.1f %.2f\n", num_vars, beta, count,
                correct, wrong, non_halting, accuracy, validity, max_length, mean_length, cot_length_bound(num_vars),
                wall_seconds);
  os << buf;
  return os.str();
}

std::vector<SweepCell> sweep_beta(const SweepSpec& spec) {
  if (spec.num_vars.empty() || spec.betas.empty()) throw Error(ErrorCode::InvalidArgument, "sweep needs p values and beta values");
  std::vector<SweepCell> cells;
  for (int p : spec.num_vars) {
    GenSpec g;
    g.distribution = Distribution::Marginal;
    g.num_vars = p;
    g.count = spec.count;
    g.seed = spec.seed;
    auto data = generate(g, spec.threads);
    for (double beta : spec.betas) {
      CompiledModel m(compile_default(p, 0, beta));
      EvalOptions o;
      o.threads = spec.threads;
      cells.push_back({p, beta, evaluate(m, data, o)});
    }
  }
  return cells;
}

json sweep_json(const std::vector<SweepCell>& cells) {
  ordered_json arr = ordered_json::array();
  for (const auto& c : cells)
    arr.push_back({{"p", c.num_vars}, {"beta", c.beta}, {"count", c.report.count}, {"accuracy", c.report.accuracy},
                   {"trace_validity", c.report.validity}, {"non_halting", c.report.non_halting},
                   {"wall_seconds", c.report.wall_seconds}});
  return {{"cells", arr}};
}

std::string sweep_table(const std::vector<SweepCell>& cells) {
  std::ostringstream os;
  os << "p     beta    count  accuracy  validity  non-halt\n";
  for (const auto& c : cells) {
    char buf[160];
    std::snprintf(buf, sizeof buf, "%-5d %-7.2f %-6ld %-9.4f %-9.4f %ld\n", c.num_vars, c.beta, c.report.count, c.report.accuracy,
                  c.report.validity, c.report.non_halting);
    os << buf;
  }
  return os.str();
}

json oracle_json(const CnfFormula& f, const std::string& chooser) {
  Vocabulary v(f.num_vars);
  Chooser ch;
  if (chooser == "mirror") {
    ch = model_mirror_chooser(f.num_vars, std::max<int>(default_max_clauses(f.num_vars), static_cast<int>(f.clauses.size())));
  } else if (chooser == "lowest") {
    ch = lowest_lane_chooser();
  } else {
    throw Error(ErrorCode::InvalidArgument, "unknown chooser '" + chooser + "' (expected mirror or lowest)");
  }
  SolveResult r = solve_with_trace(f, v, ch);
  ordered_json j;
  j["label"] = label_name(r.label);
  j["prompt"] = v.detokenize(r.trace.prompt);
  j["trace"] = v.detokenize(r.trace.generated);
  j["length"] = r.trace.generated.size();
  j["steps"] = r.steps;
  if (f.num_vars <= 24) j["brute_force"] = label_name(brute_force_sat(f));
  return j;
}

json check_trace_json(const Vocabulary& vocab, const std::vector<int>& prompt, const std::vector<int>& generated) {
  TraceValidation t = validate_full_trace(prompt, generated, vocab);
  ordered_json j;
  j["valid"] = t.valid;
  j["halted"] = t.halted;
  if (!t.valid) {
    j["first_violation"] = t.first_violation;
    j["message"] = t.message;
  }
  if (t.halted) j["label"] = label_name(t.label);
  return j;
}

}  // namespace sattf
