// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 The sattf Authors

#include <cstdio>
#include <fstream>
#include <iostream>
#include <memory>
#include <sstream>
#include <string>

#include "CLI11.hpp"
#include "json.hpp"
#include "sattf/sattf.h"

namespace {

using nlohmann::json;

constexpr int kExitOk = 0;
constexpr int kExitUsage = 1;
constexpr int kExitData = 2;
constexpr int kExitAcceptance = 3;

struct Failure {
  int code;
  std::string message;
};

void check(sattf_status s) {
  if (s != SATTF_OK) throw Failure{kExitData, sattf_last_error()};
}

std::string take(char* s) {
  std::string out = s ? s : "";
  sattf_string_free(s);
  return out;
}

std::string read_file(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw Failure{kExitData, "cannot read " + path};
  std::ostringstream os;
  os << f.rdbuf();
  return os.str();
}

void write_file(const std::string& path, const std::string& text) {
  std::ofstream f(path, std::ios::binary);
  if (!f || !(f << text)) throw Failure{kExitData, "cannot write " + path};
}

struct Model {
  sattf_model* m = nullptr;
  explicit Model(const std::string& dir) { check(sattf_model_load(dir.c_str(), &m)); }
  ~Model() { sattf_model_free(m); }
};

std::string formula_text(const std::string& file, const std::string& inline_text) {
  if (!file.empty() && !inline_text.empty()) throw Failure{kExitUsage, "give either --dimacs or --formula, not both"};
  if (!file.empty()) return read_file(file);
  if (!inline_text.empty()) return inline_text;
  throw Failure{kExitUsage, "a formula is required (--dimacs FILE or --formula TEXT)"};
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Compile a DPLL-emulating program into Transformer weights and run it"};
  app.require_subcommand(1);
  int threads = 0;
  app.add_option("--threads", threads, "Worker threads (default: SATTF_THREADS or hardware concurrency)");

  // compile
  auto* compile = app.add_subcommand("compile", "Compile the SAT model to a weight bundle");
  int c_p = 0, c_c = 0, c_ctx = 0, c_fw = 32;
  double c_beta = 20.0;
  std::string c_out;
  compile->add_option("--p", c_p, "Number of variables")->required();
  compile->add_option("--c", c_c, "Maximum clauses (default floor(4.4 p))");
  compile->add_option("--beta", c_beta, "Softmax exactness scale")->capture_default_str();
  compile->add_option("--context-len", c_ctx, "Context length (default: prompt plus decode budget)");
  compile->add_option("--float-width", c_fw, "Weight precision, 32 or 64")->check(CLI::IsMember({32, 64}))->capture_default_str();
  compile->add_option("--out", c_out, "Output bundle directory")->required();

  // solve
  auto* solve = app.add_subcommand("solve", "Greedy-decode a formula with a compiled model");
  std::string s_model, s_file, s_text;
  long s_budget = 0;
  bool s_json = false;
  solve->add_option("--model", s_model, "Weight bundle directory")->required();
  solve->add_option("--dimacs", s_file, "DIMACS file");
  solve->add_option("--formula", s_text, "Inline DIMACS text");
  solve->add_option("--budget", s_budget, "Decode budget in tokens (default rule when omitted)");
  solve->add_flag("--json", s_json, "Print the full JSON result");

  // gen
  auto* gen = app.add_subcommand("gen", "Generate a labelled dataset (JSONL)");
  std::string g_dist = "random", g_out;
  int g_p = 0, g_count = 100;
  uint64_t g_seed = 0;
  double g_rmin = 4.1, g_rmax = 4.4, g_bmin = 0.6, g_bmax = 0.9, g_pow = 1.0;
  gen->add_option("--distribution", g_dist, "random, skewed or marginal")
      ->check(CLI::IsMember({"random", "skewed", "marginal"}))
      ->capture_default_str();
  gen->add_option("--p", g_p, "Number of variables")->required();
  gen->add_option("--count", g_count, "Number of instances")->capture_default_str();
  gen->add_option("--seed", g_seed, "Dataset seed")->capture_default_str();
  gen->add_option("--ratio-min", g_rmin, "Minimum clause/variable ratio")->capture_default_str();
  gen->add_option("--ratio-max", g_rmax, "Maximum clause/variable ratio")->capture_default_str();
  gen->add_option("--skew-bias-min", g_bmin, "Skewed: minimum polarity bias")->capture_default_str();
  gen->add_option("--skew-bias-max", g_bmax, "Skewed: maximum polarity bias")->capture_default_str();
  gen->add_option("--skew-power", g_pow, "Skewed: variable weight power law exponent")->capture_default_str();
  gen->add_option("--out", g_out, "Output file (default: stdout)");

  // eval
  auto* eval = app.add_subcommand("eval", "Evaluate a compiled model on a dataset");
  std::string e_model, e_data, e_report;
  long e_budget = -1;
  eval->add_option("--model", e_model, "Weight bundle directory")->required();
  eval->add_option("--dataset", e_data, "JSONL dataset")->required();
  eval->add_option("--report", e_report, "Write the JSON report here");
  eval->add_option("--budget", e_budget, "Decode budget per instance (default rule when omitted)");

  // sweep-beta
  auto* sweep = app.add_subcommand("sweep-beta", "Accuracy per (p, beta) on generated marginal data");
  std::vector<int> w_p;
  std::vector<double> w_beta;
  int w_count = 200;
  uint64_t w_seed = 0;
  std::string w_report;
  sweep->add_option("--p", w_p, "Variable counts")->required()->delimiter(',');
  sweep->add_option("--beta", w_beta, "Beta values")->required()->delimiter(',');
  sweep->add_option("--count", w_count, "Marginal instances per p")->capture_default_str();
  sweep->add_option("--seed", w_seed, "Dataset seed")->capture_default_str();
  sweep->add_option("--report", w_report, "Write the JSON report here");

  // oracle
  auto* oracle = app.add_subcommand("oracle", "Run the abstract DPLL oracle");
  std::string o_file, o_text, o_chooser = "mirror";
  int o_p = 0;
  oracle->add_option("--dimacs", o_file, "DIMACS file");
  oracle->add_option("--formula", o_text, "Inline DIMACS text");
  oracle->add_option("--p", o_p, "Variable count when there is no header");
  oracle->add_option("--chooser", o_chooser, "mirror or lowest")->check(CLI::IsMember({"mirror", "lowest"}))->capture_default_str();

  // check-trace
  auto* ct = app.add_subcommand("check-trace", "Validate a CoT trace against its prompt");
  int t_p = 0;
  std::string t_prompt, t_trace, t_prompt_file, t_trace_file;
  ct->add_option("--p", t_p, "Number of variables")->required();
  ct->add_option("--prompt", t_prompt, "Prompt tokens");
  ct->add_option("--prompt-file", t_prompt_file, "File holding the prompt tokens");
  ct->add_option("--trace", t_trace, "Generated tokens");
  ct->add_option("--trace-file", t_trace_file, "File holding the generated tokens");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    int rc = app.exit(e);
    return rc == 0 ? kExitOk : kExitUsage;
  }

  try {
    if (*compile) {
      json o = {{"p", c_p}, {"beta", c_beta}, {"float_width", c_fw}};
      if (c_c > 0) o["c"] = c_c;
      if (c_ctx > 0) o["context_len"] = c_ctx;
      sattf_model* m = nullptr;
      check(sattf_compile(o.dump().c_str(), &m));
      std::unique_ptr<sattf_model, void (*)(sattf_model*)> guard(m, sattf_model_free);
      check(sattf_model_save(m, c_out.c_str()));
      char* info = nullptr;
      check(sattf_model_info_json(m, &info));
      json j = json::parse(take(info));
      std::printf("compiled p=%d: L=%d H=%d d_emb=%d d_head=%d d_mlp=%d params=%ld context=%d -> %s\n", c_p,
                  j["n_layers"].get<int>(), j["n_heads"].get<int>(), j["d_emb"].get<int>(), j["d_head"].get<int>(),
                  j["d_mlp"].get<int>(), j["parameters"].get<long>(), j["context_len"].get<int>(), c_out.c_str());
      return kExitOk;
    }
    if (*solve) {
      Model m(s_model);
      std::string text = formula_text(s_file, s_text);
      char* out = nullptr;
      check(sattf_solve(m.m, text.c_str(), s_budget, &out));
      json j = json::parse(take(out));
      if (s_json) {
        std::cout << j.dump(2) << "\n";
      } else {
        std::cout << j["trace"].get<std::string>() << "\n";
        if (j["halted"].get<bool>()) {
          std::cout << j["label"].get<std::string>() << "\n";
        } else {
          std::cout << "non-halting within budget " << j["budget"] << "\n";
        }
      }
      if (!j["trace_valid"].get<bool>()) {
        std::cerr << "invalid trace: " << j.value("message", "") << " at token " << j.value("first_violation", -1L) << "\n";
        return kExitAcceptance;
      }
      return j["halted"].get<bool>() ? kExitOk : kExitAcceptance;
    }
    if (*gen) {
      json o = {{"distribution", g_dist}, {"p", g_p},          {"count", g_count},         {"seed", g_seed},
                {"ratio_min", g_rmin},    {"ratio_max", g_rmax}, {"skew_bias_min", g_bmin}, {"skew_bias_max", g_bmax},
                {"skew_power", g_pow}};
      char* out = nullptr;
      check(sattf_generate(o.dump().c_str(), threads, &out));
      std::string data = take(out);
      if (g_out.empty()) {
        std::cout << data;
      } else {
        write_file(g_out, data);
        std::fprintf(stderr, "wrote %d instances to %s\n", g_count, g_out.c_str());
      }
      return kExitOk;
    }
    if (*eval) {
      Model m(e_model);
      json o = {{"budget", e_budget}, {"threads", threads}};
      std::string data = read_file(e_data);
      char* out = nullptr;
      check(sattf_evaluate(m.m, data.c_str(), o.dump().c_str(), &out));
      json j = json::parse(take(out));
      std::cout << j["table"].get<std::string>();
      j.erase("table");
      if (!e_report.empty()) write_file(e_report, j.dump(2) + "\n");
      const bool pass = j["accuracy"].get<double>() == 1.0 && j["trace_validity"].get<double>() == 1.0;
      return pass ? kExitOk : kExitAcceptance;
    }
    if (*sweep) {
      json o = {{"p", w_p}, {"beta", w_beta}, {"count", w_count}, {"seed", w_seed}, {"threads", threads}};
      char* out = nullptr;
      check(sattf_sweep_beta(o.dump().c_str(), &out));
      json j = json::parse(take(out));
      std::cout << j["table"].get<std::string>();
      j.erase("table");
      if (!w_report.empty()) write_file(w_report, j.dump(2) + "\n");
      return kExitOk;
    }
    if (*oracle) {
      std::string text = formula_text(o_file, o_text);
      char* out = nullptr;
      check(sattf_oracle(text.c_str(), o_p, o_chooser.c_str(), &out));
      json j = json::parse(take(out));
      std::cout << j["trace"].get<std::string>() << "\n" << j["label"].get<std::string>() << "\n";
      return kExitOk;
    }
    if (*ct) {
      if (t_prompt.empty() == t_prompt_file.empty()) throw Failure{kExitUsage, "give exactly one of --prompt, --prompt-file"};
      if (t_trace.empty() == t_trace_file.empty()) throw Failure{kExitUsage, "give exactly one of --trace, --trace-file"};
      std::string prompt = t_prompt_file.empty() ? t_prompt : read_file(t_prompt_file);
      std::string trace = t_trace_file.empty() ? t_trace : read_file(t_trace_file);
      char* out = nullptr;
      check(sattf_check_trace(t_p, prompt.c_str(), trace.c_str(), &out));
      json j = json::parse(take(out));
      if (j["valid"].get<bool>()) {
        std::cout << "valid" << (j["halted"].get<bool>() ? " " + j["label"].get<std::string>() : std::string(" (not halted)"))
                  << "\n";
        return kExitOk;
      }
      std::cout << "invalid at token " << j["first_violation"] << ": " << j["message"].get<std::string>() << "\n";
      return kExitAcceptance;
    }
  } catch (const Failure& f) {
    std::cerr << "error: " << f.message << "\n";
    return f.code;
  } catch (const json::exception& e) {
    std::cerr << "error: malformed library output: " << e.what() << "\n";
    return kExitData;
  }
  return kExitUsage;
}
