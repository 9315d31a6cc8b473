// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 The sattf Authors

#include <unistd.h>

#include <cstring>
#include <filesystem>
#include <fstream>
#include <random>

#include "doctest.h"
#include "json.hpp"
#include "sattf/cnf_io.hpp"
#include "sattf/engine.hpp"
#include "sattf/sat_program.hpp"

using namespace sattf;

namespace {

const char* kFigurePrompt =
    "[BOS] -2 -4 -1 0 3 4 -1 0 -1 -3 -2 0 1 -2 -4 0 -4 2 1 0 1 -2 4 0 [SEP]";

const ModelWeights& small_model() {
  static const ModelWeights w = [] {
    SatProgramParams p;
    p.num_vars = 4;
    p.max_clauses = 8;
    CompilerConfig cfg;
    cfg.context_len = 160;
    return compile_sat_model(p, cfg);
  }();
  return w;
}

std::filesystem::path temp_dir(const std::string& name) {
  auto d = std::filesystem::temp_directory_path() / ("sattf_test_" + name + "_" + std::to_string(::getpid()));
  std::filesystem::remove_all(d);
  return d;
}

template <typename M>
bool bit_equal(const M& a, const M& b) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) return false;
  for (long i = 0; i < a.size(); ++i)
    if (std::memcmp(&a.data()[i], &b.data()[i], sizeof(double)) != 0) return false;
  return true;
}

}  // namespace

TEST_CASE("sparse column products match dense products") {
  std::mt19937_64 rng(4);
  std::uniform_real_distribution<double> u(-1, 1);
  RowMat m = RowMat::Zero(9, 7);
  for (int r = 0; r < 9; ++r)
    for (int c = 0; c < 7; ++c)
      if (rng() % 3 == 0) m(r, c) = u(rng);
  SparseCols s = SparseCols::from_dense(m);
  std::vector<double> x(9), y(7);
  for (auto& v : x) v = u(rng);
  s.multiply(x.data(), y.data());
  for (int c = 0; c < 7; ++c) {
    double acc = 0.0;
    for (int r = 0; r < 9; ++r)
      if (m(r, c) != 0.0) acc += x[r] * m(r, c);
    CHECK(y[c] == acc);
  }
  std::vector<int> cols{6, 1};
  std::vector<double> z(2);
  s.multiply_cols(x.data(), cols, z.data());
  CHECK(z[0] == y[6]);
  CHECK(z[1] == y[1]);
}

TEST_CASE("incremental decoding equals the dense reference") {
  const ModelWeights& w = small_model();
  w.check_shapes();
  CHECK(w.n_layers == 7);
  CHECK(w.n_heads == 5);
  CompiledModel m(w);
  auto toks = w.vocab.tokenize(std::string(kFigurePrompt) + " D -2 D 1 D 3");
  RowMat dense = dense_forward(w, toks);
  DecodeSession s(m);
  for (size_t i = 0; i < toks.size(); ++i) {
    const auto& logits = s.push(toks[i]);
    for (int c = 0; c < w.vocab.size(); ++c) REQUIRE(logits[c] == dense(static_cast<long>(i), c));
  }
}

TEST_CASE("greedy decoding on the figure prompt") {
  const ModelWeights& w = small_model();
  CompiledModel m(w);
  auto prompt = w.vocab.tokenize(kFigurePrompt);
  DecodeOptions opts;
  opts.track_saturation = true;
  DecodeResult r = greedy_decode(m, prompt, opts);
  CHECK(r.halted);
  CHECK(r.stop_reason == "halt");
  CHECK(w.vocab.detokenize(r.generated) == "D -2 D 1 D 3 SAT");
  CHECK(r.margins.size() == r.generated.size());
  CHECK(r.min_logit_gap > 1e-3);
  REQUIRE_FALSE(r.saturation.empty());
  CHECK(r.saturation.size() <= 35u);
  for (const auto& h : r.saturation) {
    CHECK(h.rows == static_cast<long>(prompt.size() + r.generated.size() - 1));
    if (h.certified) {
      CHECK(h.ambiguous_rows == 0);
      CHECK(h.max_deviation < 1e-3);
    }
  }

  DecodeOptions short_budget;
  short_budget.max_new_tokens = 2;
  DecodeResult b = greedy_decode(m, prompt, short_budget);
  CHECK_FALSE(b.halted);
  CHECK(b.stop_reason == "budget");
  CHECK(b.generated.size() == 2u);

  std::vector<int> long_prompt(200, w.vocab.zero());
  long_prompt[0] = w.vocab.bos();
  CHECK_THROWS_AS(greedy_decode(m, long_prompt), Error);
}

TEST_CASE("decoding stops at the context length") {
  SatProgramParams p;
  p.num_vars = 4;
  p.max_clauses = 8;
  CompilerConfig cfg;
  cfg.context_len = 28;
  CompiledModel m(compile_sat_model(p, cfg));
  DecodeResult r = greedy_decode(m, m.weights().vocab.tokenize(kFigurePrompt));
  CHECK(r.stop_reason == "context");
  CHECK(r.generated.size() == 3u);
}

TEST_CASE("residuals are exposed when requested") {
  CompiledModel m(small_model());
  SessionOptions o;
  o.keep_residuals = true;
  DecodeSession s(m, o);
  s.push(m.weights().vocab.bos());
  const double* r0 = s.residual(0, 0);
  const auto& w = m.weights();
  for (int c = 0; c < w.d_emb; ++c) CHECK(r0[c] == w.token_embedding(w.vocab.bos(), c));
  CHECK(s.residual(w.n_layers, 0) != nullptr);
}

TEST_CASE("bundle round trip is bit exact") {
  const ModelWeights& w = small_model();
  auto dir = temp_dir("bundle");
  save_bundle(w, dir.string());
  CHECK(std::filesystem::exists(dir / "manifest.json"));
  CHECK(std::filesystem::exists(dir / "weights.bin"));
  CHECK(std::filesystem::file_size(dir / "weights.bin") % 4 == 0);
  ModelWeights back = load_bundle(dir.string());
  CHECK(back.vocab == w.vocab);
  CHECK(back.d_emb == w.d_emb);
  CHECK(back.pos_lane == w.pos_lane);
  CHECK(back.config_json == w.config_json);
  CHECK(bit_equal(back.token_embedding, w.token_embedding));
  CHECK(bit_equal(back.w_out, w.w_out));
  CHECK(bit_equal(back.b_out, w.b_out));
  REQUIRE(back.layers.size() == w.layers.size());
  for (size_t l = 0; l < w.layers.size(); ++l) {
    const auto &a = w.layers[l], &b = back.layers[l];
    CHECK(bit_equal(a.w_o, b.w_o));
    CHECK(bit_equal(a.w_1, b.w_1));
    CHECK(bit_equal(a.b_1, b.b_1));
    CHECK(bit_equal(a.w_2, b.w_2));
    CHECK(bit_equal(a.b_2, b.b_2));
    for (size_t h = 0; h < a.heads.size(); ++h) {
      CHECK(bit_equal(a.heads[h].w_q, b.heads[h].w_q));
      CHECK(bit_equal(a.heads[h].w_k, b.heads[h].w_k));
      CHECK(bit_equal(a.heads[h].w_v, b.heads[h].w_v));
    }
  }
  CHECK(back.parameter_count() == w.parameter_count());
  CHECK(back.head_table.size() == w.head_table.size());
  CHECK(back.lanes.size() == w.lanes.size());

  auto again = temp_dir("bundle2");
  save_bundle(back, again.string());
  std::ifstream a(dir / "weights.bin", std::ios::binary), b(again / "weights.bin", std::ios::binary);
  std::string sa((std::istreambuf_iterator<char>(a)), {}), sb((std::istreambuf_iterator<char>(b)), {});
  CHECK(sa == sb);

  std::ifstream mf(dir / "manifest.json");
  auto manifest = nlohmann::json::parse(mf);
  CHECK(manifest["dtype"] == "float32");
  CHECK(manifest["byte_order"] == "little");
  CHECK(manifest["tensors"].is_array());
  std::filesystem::remove_all(dir);
  std::filesystem::remove_all(again);
}

TEST_CASE("corrupt bundles are rejected") {
  const ModelWeights& w = small_model();
  auto dir = temp_dir("corrupt");
  save_bundle(w, dir.string());
  std::filesystem::resize_file(dir / "weights.bin", std::filesystem::file_size(dir / "weights.bin") - 4);
  CHECK_THROWS_AS(load_bundle(dir.string()), Error);
  CHECK_THROWS_AS(load_bundle((dir / "missing").string()), Error);
  std::filesystem::remove_all(dir);
}

TEST_CASE("float64 bundles round trip") {
  SatProgramParams p;
  p.num_vars = 3;
  p.max_clauses = 4;
  CompilerConfig cfg;
  cfg.context_len = 64;
  cfg.float_width = 64;
  ModelWeights w = compile_sat_model(p, cfg);
  auto dir = temp_dir("f64");
  save_bundle(w, dir.string());
  ModelWeights back = load_bundle(dir.string());
  CHECK(back.float_width == 64);
  CHECK(bit_equal(back.w_out, w.w_out));
  std::filesystem::remove_all(dir);
}
