// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 The sattf Authors

#include "sattf/instance_gen.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

#include "json.hpp"
#include "sattf/error.hpp"
#include "sattf/parallel.hpp"

namespace sattf {

const char* distribution_name(Distribution d) {
  switch (d) {
    case Distribution::Random: return "random";
    case Distribution::Skewed: return "skewed";
    case Distribution::Marginal: return "marginal";
  }
  return "?";
}

Distribution parse_distribution(const std::string& name) {
  if (name == "random") return Distribution::Random;
  if (name == "skewed") return Distribution::Skewed;
  if (name == "marginal") return Distribution::Marginal;
  throw Error(ErrorCode::InvalidArgument, "unknown distribution '" + name + "'");
}

std::pair<int, int> clause_count_range(int p, double ratio_min, double ratio_max) {
  int lo = static_cast<int>(std::ceil(ratio_min * p - 1e-9));
  int hi = static_cast<int>(std::floor(ratio_max * p + 1e-9));
  return {std::max(lo, 1), hi};
}

uint64_t derive_seed(uint64_t seed, Distribution d, long k) {
  std::seed_seq seq{static_cast<uint32_t>(seed), static_cast<uint32_t>(seed >> 32), static_cast<uint32_t>(d),
                    static_cast<uint32_t>(k), static_cast<uint32_t>(static_cast<uint64_t>(k) >> 32)};
  std::mt19937_64 rng(seq);
  return rng();
}

namespace {

void check_spec(const GenSpec& s) {
  if (s.num_vars < 3 || s.num_vars > 24) throw Error(ErrorCode::InvalidArgument, "num_vars must be in [3, 24] for labelled generation");
  if (s.count < 0) throw Error(ErrorCode::InvalidArgument, "count must be non-negative");
  if (!(s.ratio_min > 0.0) || s.ratio_max < s.ratio_min) throw Error(ErrorCode::InvalidArgument, "invalid clause ratio bounds");
  auto [lo, hi] = clause_count_range(s.num_vars, s.ratio_min, s.ratio_max);
  if (hi < lo) throw Error(ErrorCode::InvalidArgument, "clause ratio bounds admit no integer clause count");
  if (s.distribution == Distribution::Skewed &&
      !(s.skew.bias_min >= 0.5 && s.skew.bias_min <= s.skew.bias_max && s.skew.bias_max <= 1.0 && s.skew.power >= 0.0))
    throw Error(ErrorCode::InvalidArgument, "invalid skew prior");
  if (s.distribution == Distribution::Marginal && s.count % 2 != 0)
    throw Error(ErrorCode::InvalidArgument, "marginal count must be even");
}

int sample_clause_count(const GenSpec& s, std::mt19937_64& rng) {
  auto [lo, hi] = clause_count_range(s.num_vars, s.ratio_min, s.ratio_max);
  return std::uniform_int_distribution<int>(lo, hi)(rng);
}

bool clause_ok(const std::vector<int>& c) {
  for (size_t a = 0; a < c.size(); ++a)
    for (size_t b = a + 1; b < c.size(); ++b)
      if (std::abs(c[a]) == std::abs(c[b])) return false;
  return true;
}

}  // namespace

CnfFormula sample_uniform_formula(int p, int num_clauses, std::mt19937_64& rng) {
  CnfFormula f;
  f.num_vars = p;
  std::uniform_int_distribution<int> var(1, p);
  std::bernoulli_distribution neg(0.5);
  for (int k = 0; k < num_clauses; ++k) {
    std::vector<int> c;
    while (c.size() < 3) {
      int v = var(rng);
      if (std::any_of(c.begin(), c.end(), [&](int l) { return std::abs(l) == v; })) continue;
      c.push_back(neg(rng) ? -v : v);
    }
    f.clauses.push_back(c);
  }
  return f;
}

CnfFormula sample_skewed_formula(int p, int num_clauses, const SkewPrior& prior, std::mt19937_64& rng) {
  std::vector<int> rank(p);
  std::iota(rank.begin(), rank.end(), 0);
  std::shuffle(rank.begin(), rank.end(), rng);
  std::vector<double> weight(p), pos_prob(p);
  std::uniform_real_distribution<double> bias(prior.bias_min, prior.bias_max);
  std::bernoulli_distribution coin(0.5);
  for (int v = 0; v < p; ++v) {
    weight[v] = 1.0 / std::pow(static_cast<double>(rank[v] + 1), prior.power);
    double b = bias(rng);
    pos_prob[v] = coin(rng) ? b : 1.0 - b;
  }
  std::discrete_distribution<int> pick(weight.begin(), weight.end());
  CnfFormula f;
  f.num_vars = p;
  for (int k = 0; k < num_clauses; ++k) {
    std::vector<int> c;
    while (c.size() < 3) {
      int v = pick(rng) + 1;
      if (std::any_of(c.begin(), c.end(), [&](int l) { return std::abs(l) == v; })) continue;
      c.push_back(std::bernoulli_distribution(pos_prob[v - 1])(rng) ? v : -v);
    }
    f.clauses.push_back(c);
  }
  return f;
}

std::vector<Instance> gen_random(const GenSpec& spec, int threads) {
  GenSpec s = spec;
  s.distribution = Distribution::Random;
  return generate(s, threads);
}

std::vector<Instance> gen_skewed(const GenSpec& spec, int threads) {
  GenSpec s = spec;
  s.distribution = Distribution::Skewed;
  return generate(s, threads);
}

std::vector<Instance> gen_marginal(const GenSpec& spec, int threads) {
  GenSpec s = spec;
  s.distribution = Distribution::Marginal;
  return generate(s, threads);
}

std::vector<Instance> generate(const GenSpec& spec, int threads) {
  check_spec(spec);
  std::vector<Instance> out(spec.count);
  const int p = spec.num_vars;
  if (spec.distribution != Distribution::Marginal) {
    parallel_for(spec.count, threads, [&](long k) {
      Instance& in = out[k];
      in.id = static_cast<int>(k);
      in.distribution = spec.distribution;
      in.seed = derive_seed(spec.seed, spec.distribution, k);
      std::mt19937_64 rng(in.seed);
      int c = sample_clause_count(spec, rng);
      in.formula = spec.distribution == Distribution::Random ? sample_uniform_formula(p, c, rng)
                                                             : sample_skewed_formula(p, c, spec.skew, rng);
      in.label = brute_force_sat(in.formula);
    });
    return out;
  }
  parallel_for(spec.count / 2, threads, [&](long k) {
    const uint64_t seed = derive_seed(spec.seed, spec.distribution, k);
    std::mt19937_64 rng(seed);
    for (int attempt = 0; attempt < spec.max_retries; ++attempt) {
      CnfFormula f = sample_uniform_formula(p, sample_clause_count(spec, rng), rng);
      const Label base = brute_force_sat(f);
      std::uniform_int_distribution<int> clause(0, static_cast<int>(f.clauses.size()) - 1);
      std::uniform_int_distribution<int> slot(0, 2);
      std::uniform_int_distribution<int> lit(0, 2 * p - 1);
      for (int t = 0; t < spec.flip_proposals; ++t) {
        const int ci = clause(rng), si = slot(rng), li = lit(rng);
        const int repl = li < p ? li + 1 : -(li - p + 1);
        if (repl == f.clauses[ci][si]) continue;
        CnfFormula g = f;
        g.clauses[ci][si] = repl;
        if (!clause_ok(g.clauses[ci])) continue;
        const Label flipped = brute_force_sat(g);
        if (flipped == base) continue;
        const bool base_sat = base == Label::Sat;
        Instance a, b;
        a.formula = base_sat ? f : g;
        b.formula = base_sat ? g : f;
        a.label = Label::Sat;
        b.label = Label::Unsat;
        for (Instance* in : {&a, &b}) {
          in->distribution = Distribution::Marginal;
          in->pair_id = static_cast<int>(k);
          in->seed = seed;
        }
        a.id = static_cast<int>(2 * k);
        b.id = static_cast<int>(2 * k + 1);
        out[2 * k] = std::move(a);
        out[2 * k + 1] = std::move(b);
        return;
      }
    }
    throw Error(ErrorCode::Runtime, "marginal pair " + std::to_string(k) + ": flip search budget exhausted");
  });
  return out;
}

std::string to_jsonl(const std::vector<Instance>& instances) {
  std::ostringstream os;
  for (const auto& in : instances) {
    nlohmann::ordered_json j;
    j["id"] = in.id;
    j["distribution"] = distribution_name(in.distribution);
    j["p"] = in.formula.num_vars;
    j["c"] = in.formula.clauses.size();
    j["dimacs_text"] = emit_text(in.formula);
    j["label"] = label_name(in.label);
    if (in.pair_id >= 0) j["pair_id"] = in.pair_id;
    j["seed"] = in.seed;
    os << j.dump() << "\n";
  }
  return os.str();
}

std::vector<Instance> read_jsonl(const std::string& text) {
  std::vector<Instance> out;
  std::istringstream is(text);
  std::string line;
  long lineno = 0;
  while (std::getline(is, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      auto j = nlohmann::json::parse(line);
      Instance in;
      in.id = j.at("id").get<int>();
      in.distribution = parse_distribution(j.at("distribution").get<std::string>());
      in.formula = parse_text(j.at("dimacs_text").get<std::string>(), j.at("p").get<int>());
      if (static_cast<long>(in.formula.clauses.size()) != j.at("c").get<long>())
        throw Error(ErrorCode::Parse, "clause count does not match c");
      const std::string label = j.at("label").get<std::string>();
      if (label != "SAT" && label != "UNSAT") throw Error(ErrorCode::Parse, "unknown label '" + label + "'");
      in.label = label == "SAT" ? Label::Sat : Label::Unsat;
      in.pair_id = j.contains("pair_id") ? j.at("pair_id").get<int>() : -1;
      in.seed = j.value("seed", uint64_t{0});
      out.push_back(std::move(in));
    } catch (const nlohmann::json::exception& e) {
      throw Error(ErrorCode::Parse, "dataset line " + std::to_string(lineno) + ": " + e.what());
    } catch (const Error& e) {
      throw Error(ErrorCode::Parse, "dataset line " + std::to_string(lineno) + ": " + e.what());
    }
  }
  return out;
}

}  // namespace sattf
