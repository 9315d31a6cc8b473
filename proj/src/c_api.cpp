// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 The sattf Authors

#include "sattf/sattf.h"

#include <cstring>
#include <memory>
#include <string>

#include "json.hpp"
#include "sattf/error.hpp"
#include "sattf/harness.hpp"
#include "sattf/parallel.hpp"

struct sattf_model {
  explicit sattf_model(sattf::ModelWeights w) : model(std::move(w)) {}
  sattf::CompiledModel model;
};

namespace {

using nlohmann::json;

thread_local std::string g_last_error;

sattf_status status_of(sattf::ErrorCode c) {
  switch (c) {
    case sattf::ErrorCode::InvalidArgument: return SATTF_ERR_INVALID_ARGUMENT;
    case sattf::ErrorCode::Parse: return SATTF_ERR_PARSE;
    case sattf::ErrorCode::Io: return SATTF_ERR_IO;
    case sattf::ErrorCode::Compile: return SATTF_ERR_COMPILE;
    case sattf::ErrorCode::Eval: return SATTF_ERR_EVAL;
    case sattf::ErrorCode::Runtime: return SATTF_ERR_RUNTIME;
  }
  return SATTF_ERR_INTERNAL;
}

template <typename F>
sattf_status guarded(F&& f) {
  g_last_error.clear();
  try {
    f();
    return SATTF_OK;
  } catch (const sattf::Error& e) {
    g_last_error = e.what();
    return status_of(e.code());
  } catch (const json::exception& e) {
    g_last_error = std::string("invalid JSON: ") + e.what();
    return SATTF_ERR_PARSE;
  } catch (const std::bad_alloc&) {
    g_last_error = "out of memory";
    return SATTF_ERR_INTERNAL;
  } catch (const std::exception& e) {
    g_last_error = e.what();
    return SATTF_ERR_INTERNAL;
  } catch (...) {
    g_last_error = "unknown error";
    return SATTF_ERR_INTERNAL;
  }
}

void require(bool ok, const char* what) {
  if (!ok) throw sattf::Error(sattf::ErrorCode::InvalidArgument, what);
}

char* dup_string(const std::string& s) {
  char* out = new char[s.size() + 1];
  std::memcpy(out, s.c_str(), s.size() + 1);
  return out;
}

json parse_options(const char* text) {
  if (text == nullptr || *text == '\0') return json::object();
  json j = json::parse(text);
  require(j.is_object(), "options must be a JSON object");
  return j;
}

int threads_of(const json& o) {
  int t = o.value("threads", 0);
  return t > 0 ? t : sattf::default_threads();
}

}  // namespace

extern "C" {

int sattf_abi_version(void) { return SATTF_ABI_VERSION; }

const char* sattf_last_error(void) { return g_last_error.c_str(); }

void sattf_string_free(char* s) { delete[] s; }

sattf_status sattf_compile(const char* options_json, sattf_model** out) {
  return guarded([&] {
    require(out != nullptr, "null output pointer");
    *out = nullptr;
    json o = parse_options(options_json);
    require(o.contains("p"), "compile options need p");
    sattf::SatProgramParams params;
    params.num_vars = o.at("p").get<int>();
    require(params.num_vars >= 1 && params.num_vars <= 512, "p must be in [1, 512]");
    params.max_clauses = o.value("c", 0);
    if (params.max_clauses <= 0) params.max_clauses = sattf::default_max_clauses(params.num_vars);
    params.nonsep_penalty = o.value("nonsep_penalty", 20.0);
    params.tie_break = o.value("tie_break", true);
    sattf::CompilerConfig cfg;
    cfg.beta = o.value("beta", 20.0);
    cfg.nonsep_penalty = params.nonsep_penalty;
    cfg.context_len = o.value("context_len", 0);
    if (cfg.context_len <= 0) cfg.context_len = sattf::default_context_len(params.num_vars, params.max_clauses);
    cfg.float_width = o.value("float_width", 32);
    *out = new sattf_model(sattf::compile_sat_model(params, cfg));
  });
}

sattf_status sattf_model_save(const sattf_model* m, const char* dir) {
  return guarded([&] {
    require(m != nullptr && dir != nullptr, "null argument");
    sattf::save_bundle(m->model.weights(), dir);
  });
}

sattf_status sattf_model_load(const char* dir, sattf_model** out) {
  return guarded([&] {
    require(out != nullptr && dir != nullptr, "null argument");
    *out = nullptr;
    *out = new sattf_model(sattf::load_bundle(dir));
  });
}

void sattf_model_free(sattf_model* m) { delete m; }

sattf_status sattf_model_info_json(const sattf_model* m, char** out_json) {
  return guarded([&] {
    require(m != nullptr && out_json != nullptr, "null argument");
    *out_json = dup_string(sattf::model_info(m->model.weights()).dump(2));
  });
}

sattf_status sattf_solve(const sattf_model* m, const char* dimacs_text, long budget, char** out_json) {
  return guarded([&] {
    require(m != nullptr && dimacs_text != nullptr && out_json != nullptr, "null argument");
    sattf::CnfFormula f = sattf::parse_text(dimacs_text, m->model.weights().vocab.num_vars());
    auto s = sattf::solve_formula(m->model, f, budget);
    *out_json = dup_string(sattf::solve_json(m->model, s).dump(2));
  });
}

sattf_status sattf_generate(const char* spec_json, int threads, char** out_jsonl) {
  return guarded([&] {
    require(out_jsonl != nullptr, "null output pointer");
    json o = parse_options(spec_json);
    sattf::GenSpec g;
    g.distribution = sattf::parse_distribution(o.value("distribution", std::string("random")));
    require(o.contains("p"), "generation spec needs p");
    g.num_vars = o.at("p").get<int>();
    g.count = o.value("count", 100);
    g.seed = o.value("seed", uint64_t{0});
    g.ratio_min = o.value("ratio_min", 4.1);
    g.ratio_max = o.value("ratio_max", 4.4);
    g.skew.bias_min = o.value("skew_bias_min", g.skew.bias_min);
    g.skew.bias_max = o.value("skew_bias_max", g.skew.bias_max);
    g.skew.power = o.value("skew_power", g.skew.power);
    auto data = sattf::generate(g, threads > 0 ? threads : sattf::default_threads());
    *out_jsonl = dup_string(sattf::to_jsonl(data));
  });
}

sattf_status sattf_evaluate(const sattf_model* m, const char* dataset_jsonl, const char* options_json,
                            char** out_report_json) {
  return guarded([&] {
    require(m != nullptr && dataset_jsonl != nullptr && out_report_json != nullptr, "null argument");
    json o = parse_options(options_json);
    sattf::EvalOptions opts;
    opts.budget = o.value("budget", -1L);
    opts.threads = threads_of(o);
    auto report = sattf::evaluate(m->model, sattf::read_jsonl(dataset_jsonl), opts);
    json j = report.to_json();
    j["table"] = report.to_table();
    *out_report_json = dup_string(j.dump(2));
  });
}

sattf_status sattf_sweep_beta(const char* options_json, char** out_report_json) {
  return guarded([&] {
    require(out_report_json != nullptr, "null output pointer");
    json o = parse_options(options_json);
    sattf::SweepSpec s;
    require(o.contains("p") && o.contains("beta"), "sweep options need p and beta arrays");
    s.num_vars = o.at("p").get<std::vector<int>>();
    s.betas = o.at("beta").get<std::vector<double>>();
    s.count = o.value("count", 200);
    s.seed = o.value("seed", uint64_t{0});
    s.threads = threads_of(o);
    auto cells = sattf::sweep_beta(s);
    json j = sattf::sweep_json(cells);
    j["table"] = sattf::sweep_table(cells);
    *out_report_json = dup_string(j.dump(2));
  });
}

sattf_status sattf_oracle(const char* dimacs_text, int num_vars, const char* chooser, char** out_json) {
  return guarded([&] {
    require(dimacs_text != nullptr && out_json != nullptr, "null argument");
    sattf::CnfFormula f = sattf::parse_text(dimacs_text, num_vars > 0 ? num_vars : 0);
    *out_json = dup_string(sattf::oracle_json(f, chooser ? chooser : "mirror").dump(2));
  });
}

sattf_status sattf_check_trace(int num_vars, const char* prompt_text, const char* trace_text, char** out_json) {
  return guarded([&] {
    require(prompt_text != nullptr && trace_text != nullptr && out_json != nullptr, "null argument");
    require(num_vars >= 1, "num_vars must be positive");
    sattf::Vocabulary v(num_vars);
    auto j = sattf::check_trace_json(v, v.tokenize(prompt_text), v.tokenize(trace_text));
    *out_json = dup_string(j.dump(2));
  });
}

}  // extern "C"
