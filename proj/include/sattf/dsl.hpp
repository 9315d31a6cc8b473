// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 The sattf Authors

#pragma once

#include <Eigen/Dense>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "sattf/error.hpp"
#include "sattf/vocab.hpp"

namespace sattf::dsl {

using NodeId = int;
using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

enum class OpKind {
  TokenEmbedding,
  PositionIndex,
  Ones,
  IsBos,
  Linear,
  ElementwiseBinary,
  Compare,
  Mean,
  SelfAttention,
  GatedMlp,
  IndexSelect,
  Slice,
  Concat,
  Pad,
  PriorityOutput,
};
const char* kind_name(OpKind k);

enum class BinaryOp { Add, Sub, Mul, And, Or };
enum class CompareOp { Le, Lt, Ge, Gt, Eq };

/// Strict rejects indices outside [0, i]; Clamp maps them to the nearest valid position.
enum class IndexMode { Strict, Clamp };

/// Gated MLP over the concatenated inputs x (row vector):
/// out = ((x W_lin + b_lin) * relu(x W_gate + b_gate)) W_out + b_out.
struct GluSpec {
  Matrix w_lin, w_gate, w_out;
  Vector b_lin, b_gate, b_out;
};

/// One prioritized output rule. `cond` and `value` are node ids or -1; with no value
/// node the rule contributes a one-hot at `token`.
struct PriorityRule {
  NodeId cond = -1;
  NodeId value = -1;
  int token = -1;
  double weight = 0.0;
};

struct Node {
  NodeId id = -1;
  OpKind kind = OpKind::Ones;
  int width = 1;
  std::vector<NodeId> inputs;
  std::string name;

  Matrix matrix;  // Linear: rows = summed input width, cols = width
  Vector bias;    // Linear: length width (realized through the Ones lane)
  BinaryOp binary = BinaryOp::Add;
  CompareOp compare = CompareOp::Ge;
  double bos_weight = 0.0;  // Mean / SelfAttention
  double margin = 1.0;      // Mean / SelfAttention: declared minimum score gap
  int num_q = 0, num_k = 0; // Mean / SelfAttention: inputs are q..., k..., v...
  GluSpec glu;
  IndexMode index_mode = IndexMode::Strict;
  int start = 0, end = 0;   // Slice; Pad uses start as the first output lane
  std::vector<PriorityRule> rules;
};

class Graph;

/// Lightweight handle to a node of a Graph; the Graph must outlive it.
struct SOp {
  Graph* graph = nullptr;
  NodeId id = -1;

  int width() const;
  const Node& node() const;
  /// Row gather: index_select(*this, idx) in strict mode.
  SOp operator[](const SOp& idx) const;
  /// Single-lane slice.
  SOp col(int lane) const;
  SOp named(const std::string& name) const;
};

struct RuleSpec {
  std::optional<SOp> cond;
  std::optional<SOp> value;
  int token = -1;
  double weight = 0.0;
};

/// Append-only program graph. Nodes may only reference earlier nodes, so node id
/// order is always a topological order.
class Graph {
 public:
  explicit Graph(Vocabulary vocab);
  Graph(const Graph&) = delete;
  Graph& operator=(const Graph&) = delete;

  const Vocabulary& vocab() const { return vocab_; }
  int size() const { return static_cast<int>(nodes_.size()); }
  const Node& node(NodeId id) const;
  Node& mutable_node(NodeId id);

  /// Base inputs; repeated calls return the same node.
  SOp make_base(OpKind kind);
  SOp tokens() { return make_base(OpKind::TokenEmbedding); }
  SOp indices() { return make_base(OpKind::PositionIndex); }
  SOp ones() { return make_base(OpKind::Ones); }
  SOp is_bos() { return make_base(OpKind::IsBos); }

  /// out = concat(inputs) * matrix + bias. An empty input list denotes a constant.
  SOp linear(const std::vector<SOp>& inputs, const Matrix& matrix, const Vector& bias = Vector());
  SOp constant(const Vector& value);
  SOp constant(double value) { return constant(Vector::Constant(1, value)); }

  SOp binary(BinaryOp op, SOp a, SOp b);
  SOp compare(CompareOp op, SOp a, SOp b);
  SOp mean(const std::vector<SOp>& q, const std::vector<SOp>& k, const std::vector<SOp>& v, double bos_weight = 0.0,
           double margin = 0.5);
  SOp self_attention(const std::vector<SOp>& q, const std::vector<SOp>& k, const std::vector<SOp>& v,
                     double margin = 1.0);
  SOp gated_mlp(const std::vector<SOp>& inputs, const GluSpec& spec);
  /// sum_k coeff_k * relu(x_k) as a single gated MLP; all x_k share one width.
  SOp relu_combination(const std::vector<std::pair<SOp, double>>& terms);
  SOp index_select(SOp src, SOp idx, IndexMode mode = IndexMode::Strict);
  SOp slice(SOp src, int start, int end);
  SOp concat(const std::vector<SOp>& parts);
  SOp pad(SOp src, int out_width, int start_lane);
  /// Rules must be listed with strictly decreasing weights.
  SOp priority_output(int width, const std::vector<RuleSpec>& rules);

 private:
  SOp add(Node n);
  Vocabulary vocab_;
  std::vector<Node> nodes_;
  NodeId base_[4] = {-1, -1, -1, -1};
};

SOp operator+(SOp a, SOp b);
SOp operator-(SOp a, SOp b);
SOp operator*(SOp a, SOp b);
SOp operator&(SOp a, SOp b);
SOp operator|(SOp a, SOp b);
SOp operator+(SOp a, double c);
SOp operator+(double c, SOp a);
SOp operator-(SOp a, double c);
SOp operator-(double c, SOp a);
SOp operator*(SOp a, double c);
SOp operator*(double c, SOp a);
SOp operator-(SOp a);
SOp ge(SOp a, SOp b);
SOp gt(SOp a, SOp b);
SOp le(SOp a, SOp b);
SOp lt(SOp a, SOp b);
SOp eq(SOp a, SOp b);
SOp ge(SOp a, double b);
SOp gt(SOp a, double b);
SOp le(SOp a, double b);
SOp lt(SOp a, double b);
SOp eq(SOp a, double b);

/// Contract violation found during abstract evaluation.
class EvalError : public Error {
 public:
  EvalError(NodeId node, long position, const std::string& what)
      : Error(ErrorCode::Eval, "node " + std::to_string(node) + " at position " + std::to_string(position) + ": " + what),
        node_(node), position_(position) {}
  NodeId node() const noexcept { return node_; }
  long position() const noexcept { return position_; }

 private:
  NodeId node_;
  long position_;
};

/// Exact, row-incremental interpreter: push tokens one at a time and every live node
/// gains one row. Rows never change once computed because all operations are causal.
class AbstractEvaluator {
 public:
  AbstractEvaluator(const Graph& graph, const std::vector<NodeId>& roots);
  void push(int token);
  void push(const std::vector<int>& tokens);
  int length() const { return static_cast<int>(tokens_.size()); }
  const double* row(NodeId id, int pos) const;
  Matrix value(NodeId id) const;

 private:
  void eval_row(const Node& n, int i);
  void gather(const std::vector<NodeId>& ids, size_t first, size_t last, int pos, std::vector<double>& out) const;
  const Graph& g_;
  std::vector<char> live_;
  std::vector<std::vector<double>> data_;
  std::vector<int> tokens_;
  std::vector<double> scratch_;
};

/// Evaluates `root` on `tokens`: positions x width.
Matrix abstract_eval(const Graph& graph, NodeId root, const std::vector<int>& tokens);

/// Argmax with ties broken toward the lowest index.
int argmax_lowest(const double* values, int n);

}  // namespace sattf::dsl
