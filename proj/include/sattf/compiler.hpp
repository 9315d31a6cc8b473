// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 The sattf Authors

#pragma once

#include <optional>
#include <string>
#include <unordered_map>
#include <vector>

#include "sattf/dsl.hpp"
#include "sattf/model.hpp"

namespace sattf::compiler {

using dsl::GluSpec;
using dsl::Matrix;
using dsl::Vector;

enum class BaseKind { TokenEmbedding, Ones, IsBos, PositionIndex, Linear, GatedMlp, SelfAttention };
const char* base_kind_name(BaseKind k);

/// Contribution of one materialized node to an affine expression.
struct Term {
  int src = -1;
  Matrix w;  // width(src) x expression width
};

/// sum_t src_t W_t + bias, over materialized (non-Linear) nodes. Every Linear chain
/// of the source program collapses into one of these.
struct Affine {
  int width = 0;
  std::vector<Term> terms;
  Vector bias;

  static Affine zero(int width);
  static Affine identity(int src, int width);
  static Affine constant(const Vector& value);
  Affine compose(const Matrix& m) const;
  Affine scaled(double s) const;
  Affine columns(int start, int end) const;
  Affine placed(int out_width, int start) const;
  Affine broadcast(int width) const;
  static Affine hstack(const std::vector<Affine>& parts);
  Affine& operator+=(const Affine& o);
  bool column_is_zero(int c) const;
  bool is_constant() const { return terms.empty(); }
};

struct BaseNode {
  int id = -1;
  BaseKind kind = BaseKind::Ones;
  int width = 1;
  std::string label;
  dsl::NodeId origin = -1;

  Affine expr;  // Linear

  Affine lin, gate;  // GatedMlp: hidden = lin * relu(gate)
  Matrix w_out;      // hidden x width
  Vector b_out;

  Affine q, k, v;    // SelfAttention
  double bos_weight = 0.0;
  double margin = 1.0;
  bool certified = true;  // false for raw self-attention (no exactness claim)

  std::vector<int> deps() const;
};

/// Program after reduction to base operations.
struct ReducedProgram {
  Vocabulary vocab;
  std::vector<BaseNode> nodes;
  int token_node = -1, ones_node = -1, isbos_node = -1, pos_node = -1;
  int root = -1;  // the node whose value is the program output
  std::unordered_map<dsl::NodeId, Affine> lowered;  // every reduced source node

  /// Output as an affine map over materialized nodes.
  Affine root_affine() const;
};

/// Lowers the subgraph under `root` to {token/positional inputs, Linear, GatedMlp,
/// SelfAttention}. Affine operations fuse; each multiplication, comparison, logical
/// operation and gated MLP becomes one GatedMlp; Mean, SelfAttention and IndexSelect
/// become SelfAttention heads.
ReducedProgram reduce_to_base(const dsl::Graph& graph, dsl::NodeId root);

/// ReLU MLP  y = relu(x W1 + b1) W2 + b2  as a gated MLP with a constant-one linear branch.
GluSpec build_reglu_for_relu(const Matrix& w1, const Vector& b1, const Matrix& w2, const Vector& b2);
/// Input [x1, x2] of width 2n; output x1 * x2 through x1 relu(x2) - x1 relu(-x2).
GluSpec build_reglu_for_mul(int n);
/// Direct evaluation of a gated MLP on one row.
Vector eval_glu(const GluSpec& g, const Vector& x);

/// Tolerances for the softmax-to-saturated-attention argument.
struct AttentionApproxParams {
  double rho = 0.0;
  double delta = 0.5;
  double M_bound = 1.0;
  double epsilon = 1e-3;
};
double copy_rho_limit(const AttentionApproxParams& a);
double mean_rho_limit(const AttentionApproxParams& a, double n);
/// Upper bound on the softmax-versus-saturated error of one head whose logits are
/// `scale` times scores with gap `delta`, values bounded by M_bound, and n keys.
double softmax_error_bound(double scale, double delta, double M_bound, double n);

struct LayerPlan {
  std::vector<int> sublayer;                       // 0 inputs, 2l-1 attention, 2l MLP, -1 unplaced
  std::vector<std::pair<int, int>> lanes;          // [start, end) per node, (-1,-1) if none
  std::vector<std::vector<int>> heads;             // per layer
  std::vector<std::vector<int>> mlps;              // per layer
  int n_layers = 0;
  int d_emb = 0;
};

/// Greedy earliest-feasible layer assignment and lane allocation in node order.
LayerPlan plan_layers(const ReducedProgram& prog);

/// Emits weights. Each attention head's query is scaled by beta / margin.
ModelWeights emit(const ReducedProgram& prog, const LayerPlan& plan, const CompilerConfig& cfg,
                  const std::string& config_json = "{}");

/// All four stages in sequence; throws Error(Compile) naming the failing node.
ModelWeights compile(const dsl::Graph& graph, dsl::NodeId root, const CompilerConfig& cfg,
                     const std::string& config_json = "{}");

/// Saturated-attention interpreter of the reduced program, row-incremental.
class ConcreteEvaluator {
 public:
  explicit ConcreteEvaluator(const ReducedProgram& prog);
  void push(int token);
  void push(const std::vector<int>& tokens);
  int length() const { return n_; }
  const double* row(int node, int pos) const;
  /// Value of an affine expression at one position.
  Vector eval(const Affine& a, int pos) const;
  /// Value of a lowered source node over all positions.
  Matrix value_of(dsl::NodeId id) const;
  Matrix output() const;

 private:
  const ReducedProgram& p_;
  std::vector<std::vector<double>> data_;
  std::vector<int> tokens_;
  int n_ = 0;
};

/// Output rows of the reduced program on `tokens`.
Matrix concrete_eval(const ReducedProgram& prog, const std::vector<int>& tokens);

}  // namespace sattf::compiler
