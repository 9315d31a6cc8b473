// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 The sattf Authors

#include <random>

#include "doctest.h"
#include "sattf/compiler.hpp"
#include "sattf/engine.hpp"

using namespace sattf;
using namespace sattf::compiler;
using dsl::Graph;
using dsl::SOp;

namespace {

Vector vec(std::initializer_list<double> xs) {
  Vector v(static_cast<long>(xs.size()));
  long i = 0;
  for (double x : xs) v(i++) = x;
  return v;
}

int count_kind(const ReducedProgram& p, BaseKind k) {
  int n = 0;
  for (const auto& b : p.nodes) n += b.kind == k;
  return n;
}

std::vector<int> random_tokens(const Vocabulary& v, int n, std::mt19937_64& rng) {
  std::uniform_int_distribution<int> tok(0, v.size() - 1);
  std::vector<int> t{v.bos()};
  while (static_cast<int>(t.size()) < n) {
    int x = tok(rng);
    if (x != v.bos()) t.push_back(x);
  }
  return t;
}

// Value of the last `0` token position, or the mean of all positions when none exists yet.
SOp last_zero_tokens(Graph& g) {
  SOp z = g.tokens().col(g.vocab().zero());
  return g.mean({g.ones()}, {g.indices() * z}, {g.tokens()}, 0.0, 0.5);
}

}  // namespace

TEST_CASE("relu MLP as a gated MLP") {
  std::mt19937_64 rng(1);
  std::normal_distribution<double> n01;
  Matrix w1(3, 5), w2(5, 2);
  Vector b1(5), b2(2);
  for (long i = 0; i < w1.size(); ++i) w1.data()[i] = n01(rng);
  for (long i = 0; i < w2.size(); ++i) w2.data()[i] = n01(rng);
  for (long i = 0; i < 5; ++i) b1(i) = n01(rng);
  for (long i = 0; i < 2; ++i) b2(i) = n01(rng);
  GluSpec s = build_reglu_for_relu(w1, b1, w2, b2);
  CHECK(s.w_lin.isZero(0.0));
  CHECK(s.b_lin == Vector::Ones(5));
  for (int t = 0; t < 100; ++t) {
    Vector x(3);
    for (long i = 0; i < 3; ++i) x(i) = n01(rng);
    Eigen::RowVectorXd h = (x.transpose() * w1 + b1.transpose()).cwiseMax(0.0);
    Vector direct = (h * w2 + b2.transpose()).transpose();
    CHECK(eval_glu(s, x) == direct);
  }
  GluSpec id = build_reglu_for_relu(Matrix::Identity(2, 2), Vector::Zero(2), Matrix::Identity(2, 2), Vector::Zero(2));
  CHECK(eval_glu(id, vec({-1, 2})) == vec({0, 2}));
}

TEST_CASE("multiplication as a gated MLP") {
  GluSpec s = build_reglu_for_mul(2);
  CHECK(eval_glu(s, vec({2, -3, -1, 4})) == vec({-2, -12}));
  CHECK(eval_glu(s, vec({2, -3, 0, 0})) == vec({0, 0}));
  CHECK(eval_glu(s, vec({1, 1, -7.25, 3.5})) == vec({-7.25, 3.5}));
  std::mt19937_64 rng(2);
  std::uniform_real_distribution<double> u(-100, 100);
  for (int t = 0; t < 10000; ++t) {
    double a = u(rng), b = u(rng);
    Vector r = eval_glu(build_reglu_for_mul(1), vec({a, b}));
    REQUIRE(r(0) == a * b);
  }
}

TEST_CASE("linear chains fuse into one affine map") {
  Graph g{Vocabulary(2)};
  const int V = g.vocab().size();
  Matrix a = Matrix::Random(V, 3), b = Matrix::Random(3, V);
  SOp x = g.linear({g.tokens()}, a);
  SOp y = g.linear({x}, b);
  ReducedProgram p = reduce_to_base(g, y.id);
  CHECK(count_kind(p, BaseKind::GatedMlp) == 0);
  CHECK(count_kind(p, BaseKind::SelfAttention) == 0);
  Affine r = p.root_affine();
  REQUIRE(r.terms.size() == 1);
  CHECK(r.terms[0].src == p.token_node);
  CHECK(r.terms[0].w.isApprox(a * b, 1e-14));
  ModelWeights w = compile(g, y.id, CompilerConfig{});
  CHECK(w.n_layers == 0);
  auto toks = g.vocab().tokenize("[BOS] 1 -2 0");
  CHECK(dense_forward(w, toks).isApprox(dsl::abstract_eval(g, y.id, toks), 1e-6));
}

TEST_CASE("multiplication and comparison lower to one gated MLP each") {
  Graph g{Vocabulary(2)};
  SOp prod = g.indices() * g.indices();
  ReducedProgram p1 = reduce_to_base(g, prod.id);
  CHECK(count_kind(p1, BaseKind::GatedMlp) + count_kind(p1, BaseKind::SelfAttention) <= 1);

  SOp a = g.indices() * 0.5;
  SOp cmp = ge(a, 2.0);
  ReducedProgram p2 = reduce_to_base(g, cmp.id);
  CHECK(count_kind(p2, BaseKind::GatedMlp) == 1);
  std::vector<int> toks(12, g.vocab().zero());
  toks[0] = g.vocab().bos();
  Matrix c = concrete_eval(p2, toks);
  Matrix ab = dsl::abstract_eval(g, cmp.id, toks);
  CHECK(c == ab);
  for (long i = 0; i < c.rows(); ++i) CHECK((c(i, 0) == 0.0 || c(i, 0) == 1.0));
  for (auto op : {dsl::CompareOp::Le, dsl::CompareOp::Lt, dsl::CompareOp::Gt, dsl::CompareOp::Eq}) {
    SOp x = g.compare(op, a, g.constant(2.5));
    CHECK(concrete_eval(reduce_to_base(g, x.id), toks) == dsl::abstract_eval(g, x.id, toks));
  }
}

TEST_CASE("approximation parameter limits") {
  AttentionApproxParams ap;
  ap.delta = 0.5;
  ap.M_bound = 2.0;
  ap.epsilon = 1e-3;
  CHECK(copy_rho_limit(ap) == doctest::Approx(0.25 / 16.0));
  CHECK(mean_rho_limit(ap, 400) == doctest::Approx(0.5e-3 / (32.0 * std::log(8.0 * 400 / 1e-3))));
  CHECK(softmax_error_bound(40.0, 0.5, 1.0, 400) < 1e-3);
  CHECK(softmax_error_bound(10.0, 0.5, 1.0, 400) > 1e-3);
}

TEST_CASE("uncertifiable margins are compile errors") {
  Graph g{Vocabulary(1)};
  SOp bad = g.mean({g.ones()}, {g.indices()}, {g.tokens()}, 0.3, 0.5);
  try {
    reduce_to_base(g, bad.id);
    FAIL("expected a compile error");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::Compile);
  }
  SOp zero_margin = g.mean({g.ones()}, {g.indices()}, {g.tokens()}, 0.0, 0.0);
  CHECK_THROWS_AS(reduce_to_base(g, zero_margin.id), Error);
  SOp fine = g.mean({g.ones()}, {g.indices()}, {g.tokens()}, 0.0, 0.5);
  CompilerConfig cfg;
  cfg.beta = 0.0;
  CHECK_THROWS_AS(compile(g, fine.id, cfg), Error);
  cfg.beta = 20.0;
  cfg.float_width = 16;
  CHECK_THROWS_AS(compile(g, fine.id, cfg), Error);
}

TEST_CASE("layer plan respects dependencies and lanes partition the residual") {
  Graph g{Vocabulary(3)};
  SOp m = last_zero_tokens(g);
  SOp flag = ge(g.indices(), 3.0);
  SOp gated = m * flag;
  SOp again = g.index_select(g.tokens(), g.mean({g.ones()}, {g.indices() * flag}, {g.indices()}, 0.5, 0.5));
  SOp out = gated + again;
  ReducedProgram p = reduce_to_base(g, out.id);
  LayerPlan plan = plan_layers(p);
  std::vector<int> owner(plan.d_emb, -1);
  for (const auto& n : p.nodes) {
    if (n.kind == BaseKind::Linear) continue;
    auto [s, e] = plan.lanes[n.id];
    REQUIRE(s >= 0);
    for (int l = s; l < e; ++l) {
      CHECK(owner[l] == -1);
      owner[l] = n.id;
    }
    for (int d : n.deps()) {
      if (p.nodes[d].kind == BaseKind::Linear) continue;
      CHECK(plan.sublayer[d] < plan.sublayer[n.id]);
    }
  }
  for (int o : owner) CHECK(o >= 0);
  CHECK(plan.n_layers >= 2);
}

TEST_CASE("compiled mean heads track the abstract mean") {
  Graph g{Vocabulary(3)};
  SOp m = last_zero_tokens(g);
  ModelWeights w = compile(g, m.id, CompilerConfig{});
  CHECK(w.n_layers == 2);
  CompiledModel cm(w);
  ReducedProgram p = reduce_to_base(g, m.id);
  std::mt19937_64 rng(5);
  double worst = 0.0;
  for (int t = 0; t < 1000; ++t) {
    auto toks = random_tokens(g.vocab(), 2 + static_cast<int>(rng() % 60), rng);
    Matrix ab = dsl::abstract_eval(g, m.id, toks);
    DecodeSession s(cm);
    for (size_t i = 0; i < toks.size(); ++i) {
      const auto& logits = s.push(toks[i]);
      for (int c = 0; c < w.vocab.size(); ++c)
        worst = std::max(worst, std::abs(logits[c] - ab(static_cast<long>(i), c)));
    }
    if (t < 50) CHECK(concrete_eval(p, toks) == ab);
  }
  CHECK(worst <= 1e-3);
}

TEST_CASE("concrete evaluation matches abstract evaluation on a mixed program") {
  Graph g{Vocabulary(3)};
  const auto& v = g.vocab();
  SOp z = g.tokens().col(v.zero());
  SOp last = g.mean({g.ones()}, {g.indices() * z}, {g.indices()}, 0.5, 0.5);
  SOp dist = g.indices() - last;
  SOp far = gt(dist, 2.0) & ge(g.indices(), 1.0);
  SOp copy = g.index_select(g.tokens(), last);
  SOp out = g.linear({copy}, Matrix::Identity(v.size(), v.size())) +
            g.pad(far, v.size(), v.sat()) * 4.0;
  ReducedProgram p = reduce_to_base(g, out.id);
  std::mt19937_64 rng(9);
  for (int t = 0; t < 50; ++t) {
    auto toks = random_tokens(v, 30, rng);
    CHECK(concrete_eval(p, toks) == dsl::abstract_eval(g, out.id, toks));
  }
  ModelWeights w = compile(g, out.id, CompilerConfig{});
  CompiledModel cm(w);
  auto toks = random_tokens(v, 40, rng);
  Matrix ab = dsl::abstract_eval(g, out.id, toks);
  DecodeSession s(cm);
  for (size_t i = 0; i < toks.size(); ++i) {
    const auto& logits = s.push(toks[i]);
    int best = dsl::argmax_lowest(logits.data(), v.size());
    Vector want = ab.row(static_cast<long>(i)).transpose();
    CHECK(best == dsl::argmax_lowest(want.data(), v.size()));
  }
}

TEST_CASE("float32 emission rounds every weight") {
  Graph g{Vocabulary(2)};
  SOp m = g.mean({g.ones()}, {g.indices()}, {g.tokens() * 0.1}, 0.0, 0.5);
  CompilerConfig cfg;
  ModelWeights w32 = compile(g, m.id, cfg);
  for (long i = 0; i < w32.layers[0].heads[0].w_v.size(); ++i) {
    double x = w32.layers[0].heads[0].w_v.data()[i];
    CHECK(static_cast<double>(static_cast<float>(x)) == x);
  }
  cfg.float_width = 64;
  ModelWeights w64 = compile(g, m.id, cfg);
  CHECK(w64.float_width == 64);
}
