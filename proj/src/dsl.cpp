// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 The sattf Authors

#include "sattf/dsl.hpp"

#include <algorithm>
#include <cmath>

namespace sattf::dsl {
namespace {

Error build_error(const std::string& what) { return Error(ErrorCode::InvalidArgument, what); }

int broadcast_width(int a, int b, const char* what) {
  if (a == b || b == 1) return a;
  if (a == 1) return b;
  throw build_error(std::string(what) + ": incompatible widths " + std::to_string(a) + " and " + std::to_string(b));
}

int total_width(const Graph& g, const std::vector<NodeId>& ids, size_t first, size_t last) {
  int w = 0;
  for (size_t i = first; i < last; ++i) w += g.node(ids[i]).width;
  return w;
}

std::vector<NodeId> ids_of(const std::vector<SOp>& ops) {
  std::vector<NodeId> out;
  for (const auto& o : ops) out.push_back(o.id);
  return out;
}

Graph& graph_of(const SOp& a) {
  if (!a.graph) throw build_error("null SOp handle");
  return *a.graph;
}

}  // namespace

const char* kind_name(OpKind k) {
  switch (k) {
    case OpKind::TokenEmbedding: return "TokenEmbedding";
    case OpKind::PositionIndex: return "PositionIndex";
    case OpKind::Ones: return "Ones";
    case OpKind::IsBos: return "IsBos";
    case OpKind::Linear: return "Linear";
    case OpKind::ElementwiseBinary: return "ElementwiseBinary";
    case OpKind::Compare: return "Compare";
    case OpKind::Mean: return "Mean";
    case OpKind::SelfAttention: return "SelfAttention";
    case OpKind::GatedMlp: return "GatedMlp";
    case OpKind::IndexSelect: return "IndexSelect";
    case OpKind::Slice: return "Slice";
    case OpKind::Concat: return "Concat";
    case OpKind::Pad: return "Pad";
    case OpKind::PriorityOutput: return "PriorityOutput";
  }
  return "?";
}

int SOp::width() const { return node().width; }
const Node& SOp::node() const { return graph_of(*this).node(id); }
SOp SOp::operator[](const SOp& idx) const { return graph_of(*this).index_select(*this, idx); }
SOp SOp::col(int lane) const { return graph_of(*this).slice(*this, lane, lane + 1); }
SOp SOp::named(const std::string& name) const {
  graph_of(*this).mutable_node(id).name = name;
  return *this;
}

Graph::Graph(Vocabulary vocab) : vocab_(std::move(vocab)) {}

const Node& Graph::node(NodeId id) const {
  if (id < 0 || id >= size()) throw build_error("node id out of range: " + std::to_string(id));
  return nodes_[id];
}

Node& Graph::mutable_node(NodeId id) {
  if (id < 0 || id >= size()) throw build_error("node id out of range: " + std::to_string(id));
  return nodes_[id];
}

SOp Graph::add(Node n) {
  for (NodeId in : n.inputs)
    if (in < 0 || in >= size()) throw build_error("input node does not exist: " + std::to_string(in));
  if (n.width < 1) throw build_error(std::string(kind_name(n.kind)) + ": width must be positive");
  n.id = size();
  nodes_.push_back(std::move(n));
  return SOp{this, nodes_.back().id};
}

SOp Graph::make_base(OpKind kind) {
  int slot;
  switch (kind) {
    case OpKind::TokenEmbedding: slot = 0; break;
    case OpKind::PositionIndex: slot = 1; break;
    case OpKind::Ones: slot = 2; break;
    case OpKind::IsBos: slot = 3; break;
    default: throw build_error("make_base: not a base kind");
  }
  if (base_[slot] >= 0) return SOp{this, base_[slot]};
  Node n;
  n.kind = kind;
  if (kind == OpKind::TokenEmbedding) {
    if (vocab_.size() == 0) throw build_error("make_base: empty vocabulary");
    n.width = vocab_.size();
  }
  n.name = kind_name(kind);
  SOp s = add(std::move(n));
  base_[slot] = s.id;
  return s;
}

SOp Graph::linear(const std::vector<SOp>& inputs, const Matrix& matrix, const Vector& bias) {
  Node n;
  n.kind = OpKind::Linear;
  n.inputs = ids_of(inputs);
  int in_w = total_width(*this, n.inputs, 0, n.inputs.size());
  if (matrix.rows() != in_w) throw build_error("linear: matrix rows do not match input width");
  n.width = static_cast<int>(matrix.cols());
  n.matrix = matrix;
  n.bias = bias.size() ? bias : Vector::Zero(n.width);
  if (n.bias.size() != n.width) throw build_error("linear: bias length does not match width");
  return add(std::move(n));
}

SOp Graph::constant(const Vector& value) { return linear({}, Matrix::Zero(0, value.size()), value); }

SOp Graph::binary(BinaryOp op, SOp a, SOp b) {
  Node n;
  n.kind = OpKind::ElementwiseBinary;
  n.binary = op;
  n.inputs = {a.id, b.id};
  n.width = broadcast_width(node(a.id).width, node(b.id).width, "elementwise");
  return add(std::move(n));
}

SOp Graph::compare(CompareOp op, SOp a, SOp b) {
  Node n;
  n.kind = OpKind::Compare;
  n.compare = op;
  n.inputs = {a.id, b.id};
  n.width = broadcast_width(node(a.id).width, node(b.id).width, "compare");
  return add(std::move(n));
}

SOp Graph::mean(const std::vector<SOp>& q, const std::vector<SOp>& k, const std::vector<SOp>& v, double bos_weight,
                double margin) {
  Node n;
  n.kind = OpKind::Mean;
  n.inputs = ids_of(q);
  auto kk = ids_of(k), vv = ids_of(v);
  n.inputs.insert(n.inputs.end(), kk.begin(), kk.end());
  n.inputs.insert(n.inputs.end(), vv.begin(), vv.end());
  n.num_q = static_cast<int>(q.size());
  n.num_k = static_cast<int>(k.size());
  int qw = total_width(*this, n.inputs, 0, q.size());
  int kw = total_width(*this, n.inputs, q.size(), q.size() + k.size());
  if (qw != kw) throw build_error("mean: query width " + std::to_string(qw) + " != key width " + std::to_string(kw));
  if (v.empty()) throw build_error("mean: no value nodes");
  n.width = total_width(*this, n.inputs, q.size() + k.size(), n.inputs.size());
  n.bos_weight = bos_weight;
  n.margin = margin;
  return add(std::move(n));
}

SOp Graph::self_attention(const std::vector<SOp>& q, const std::vector<SOp>& k, const std::vector<SOp>& v,
                          double margin) {
  SOp s = mean(q, k, v, 0.0, margin);
  nodes_[s.id].kind = OpKind::SelfAttention;
  return s;
}

SOp Graph::gated_mlp(const std::vector<SOp>& inputs, const GluSpec& spec) {
  Node n;
  n.kind = OpKind::GatedMlp;
  n.inputs = ids_of(inputs);
  int in_w = total_width(*this, n.inputs, 0, n.inputs.size());
  const auto h = spec.w_lin.cols();
  if (spec.w_lin.rows() != in_w || spec.w_gate.rows() != in_w || spec.w_gate.cols() != h || spec.w_out.rows() != h)
    throw build_error("gated_mlp: inconsistent weight shapes");
  n.glu = spec;
  n.width = static_cast<int>(spec.w_out.cols());
  if (!n.glu.b_lin.size()) n.glu.b_lin = Vector::Zero(h);
  if (!n.glu.b_gate.size()) n.glu.b_gate = Vector::Zero(h);
  if (!n.glu.b_out.size()) n.glu.b_out = Vector::Zero(n.width);
  if (n.glu.b_lin.size() != h || n.glu.b_gate.size() != h || n.glu.b_out.size() != n.width)
    throw build_error("gated_mlp: inconsistent bias shapes");
  return add(std::move(n));
}

SOp Graph::relu_combination(const std::vector<std::pair<SOp, double>>& terms) {
  if (terms.empty()) throw build_error("relu_combination: no terms");
  const int w = terms.front().first.width();
  const int k = static_cast<int>(terms.size());
  GluSpec s;
  s.w_lin = Matrix::Zero(k * w, k * w);
  s.b_lin = Vector::Ones(k * w);
  s.w_gate = Matrix::Zero(k * w, k * w);
  s.b_gate = Vector::Zero(k * w);
  s.w_out = Matrix::Zero(k * w, w);
  std::vector<SOp> inputs;
  for (int t = 0; t < k; ++t) {
    if (terms[t].first.width() != w) throw build_error("relu_combination: widths differ");
    inputs.push_back(terms[t].first);
    for (int j = 0; j < w; ++j) {
      s.w_gate(t * w + j, t * w + j) = 1.0;
      s.w_out(t * w + j, j) = terms[t].second;
    }
  }
  return gated_mlp(inputs, s);
}

SOp Graph::index_select(SOp src, SOp idx, IndexMode mode) {
  if (node(idx.id).width != 1) throw build_error("index_select: index must have width 1");
  Node n;
  n.kind = OpKind::IndexSelect;
  n.inputs = {src.id, idx.id};
  n.width = node(src.id).width;
  n.index_mode = mode;
  return add(std::move(n));
}

SOp Graph::slice(SOp src, int start, int end) {
  if (start < 0 || start >= end || end > node(src.id).width) throw build_error("slice: bad range");
  Node n;
  n.kind = OpKind::Slice;
  n.inputs = {src.id};
  n.start = start;
  n.end = end;
  n.width = end - start;
  return add(std::move(n));
}

SOp Graph::concat(const std::vector<SOp>& parts) {
  if (parts.empty()) throw build_error("concat: no parts");
  Node n;
  n.kind = OpKind::Concat;
  n.inputs = ids_of(parts);
  n.width = total_width(*this, n.inputs, 0, n.inputs.size());
  return add(std::move(n));
}

SOp Graph::pad(SOp src, int out_width, int start_lane) {
  if (start_lane < 0 || start_lane + node(src.id).width > out_width) throw build_error("pad: source does not fit");
  Node n;
  n.kind = OpKind::Pad;
  n.inputs = {src.id};
  n.start = start_lane;
  n.width = out_width;
  return add(std::move(n));
}

SOp Graph::priority_output(int width, const std::vector<RuleSpec>& rules) {
  Node n;
  n.kind = OpKind::PriorityOutput;
  n.width = width;
  double prev = 0;
  for (size_t r = 0; r < rules.size(); ++r) {
    const auto& spec = rules[r];
    if (r > 0 && !(spec.weight < prev)) throw build_error("priority_output: weights must strictly decrease");
    prev = spec.weight;
    PriorityRule rule;
    rule.weight = spec.weight;
    if (spec.cond) {
      if (spec.cond->width() != 1) throw build_error("priority_output: condition must have width 1");
      rule.cond = spec.cond->id;
      n.inputs.push_back(rule.cond);
    }
    if (spec.value) {
      if (spec.value->width() != width) throw build_error("priority_output: value width differs from output width");
      rule.value = spec.value->id;
      n.inputs.push_back(rule.value);
    } else {
      if (spec.token < 0 || spec.token >= width) throw build_error("priority_output: token lane out of range");
      rule.token = spec.token;
    }
    n.rules.push_back(rule);
  }
  return add(std::move(n));
}

SOp operator+(SOp a, SOp b) { return graph_of(a).binary(BinaryOp::Add, a, b); }
SOp operator-(SOp a, SOp b) { return graph_of(a).binary(BinaryOp::Sub, a, b); }
SOp operator*(SOp a, SOp b) { return graph_of(a).binary(BinaryOp::Mul, a, b); }
SOp operator&(SOp a, SOp b) { return graph_of(a).binary(BinaryOp::And, a, b); }
SOp operator|(SOp a, SOp b) { return graph_of(a).binary(BinaryOp::Or, a, b); }

namespace {
SOp affine(SOp a, double scale, double shift) {
  const int w = a.width();
  return graph_of(a).linear({a}, Matrix::Identity(w, w) * scale, Vector::Constant(w, shift));
}
}  // namespace

SOp operator+(SOp a, double c) { return affine(a, 1.0, c); }
SOp operator+(double c, SOp a) { return affine(a, 1.0, c); }
SOp operator-(SOp a, double c) { return affine(a, 1.0, -c); }
SOp operator-(double c, SOp a) { return affine(a, -1.0, c); }
SOp operator*(SOp a, double c) { return affine(a, c, 0.0); }
SOp operator*(double c, SOp a) { return affine(a, c, 0.0); }
SOp operator-(SOp a) { return affine(a, -1.0, 0.0); }

SOp ge(SOp a, SOp b) { return graph_of(a).compare(CompareOp::Ge, a, b); }
SOp gt(SOp a, SOp b) { return graph_of(a).compare(CompareOp::Gt, a, b); }
SOp le(SOp a, SOp b) { return graph_of(a).compare(CompareOp::Le, a, b); }
SOp lt(SOp a, SOp b) { return graph_of(a).compare(CompareOp::Lt, a, b); }
SOp eq(SOp a, SOp b) { return graph_of(a).compare(CompareOp::Eq, a, b); }
SOp ge(SOp a, double b) { return ge(a, graph_of(a).constant(b)); }
SOp gt(SOp a, double b) { return gt(a, graph_of(a).constant(b)); }
SOp le(SOp a, double b) { return le(a, graph_of(a).constant(b)); }
SOp lt(SOp a, double b) { return lt(a, graph_of(a).constant(b)); }
SOp eq(SOp a, double b) { return eq(a, graph_of(a).constant(b)); }

int argmax_lowest(const double* values, int n) {
  int best = 0;
  for (int i = 1; i < n; ++i)
    if (values[i] > values[best]) best = i;
  return best;
}

AbstractEvaluator::AbstractEvaluator(const Graph& graph, const std::vector<NodeId>& roots)
    : g_(graph), live_(graph.size(), 0), data_(graph.size()) {
  for (NodeId r : roots) graph.node(r), live_[r] = 1;
  for (NodeId id = graph.size() - 1; id >= 0; --id)
    if (live_[id])
      for (NodeId in : graph.node(id).inputs) live_[in] = 1;
}

const double* AbstractEvaluator::row(NodeId id, int pos) const {
  if (id < 0 || id >= g_.size() || !live_[id]) throw build_error("node is not evaluated: " + std::to_string(id));
  if (pos < 0 || pos >= length()) throw build_error("position out of range");
  return data_[id].data() + static_cast<size_t>(pos) * g_.node(id).width;
}

Matrix AbstractEvaluator::value(NodeId id) const {
  const int w = g_.node(id).width;
  Matrix m(length(), w);
  for (int i = 0; i < length(); ++i) {
    const double* r = row(id, i);
    for (int c = 0; c < w; ++c) m(i, c) = r[c];
  }
  return m;
}

void AbstractEvaluator::push(const std::vector<int>& tokens) {
  for (int t : tokens) push(t);
}

void AbstractEvaluator::push(int token) {
  if (token < 0 || token >= g_.vocab().size()) throw build_error("token id out of vocabulary: " + std::to_string(token));
  tokens_.push_back(token);
  const int i = length() - 1;
  for (NodeId id = 0; id < g_.size(); ++id)
    if (live_[id]) eval_row(g_.node(id), i);
}

void AbstractEvaluator::gather(const std::vector<NodeId>& ids, size_t first, size_t last, int pos,
                               std::vector<double>& out) const {
  out.clear();
  for (size_t k = first; k < last; ++k) {
    const double* r = row(ids[k], pos);
    out.insert(out.end(), r, r + g_.node(ids[k]).width);
  }
}

void AbstractEvaluator::eval_row(const Node& n, int i) {
  std::vector<double>& out = data_[n.id];
  const size_t base = out.size();
  out.resize(base + n.width, 0.0);
  double* o = out.data() + base;
  auto in_row = [&](int k, int pos) { return row(n.inputs[k], pos); };
  auto in_width = [&](int k) { return g_.node(n.inputs[k]).width; };
  switch (n.kind) {
    case OpKind::TokenEmbedding: o[tokens_[i]] = 1.0; break;
    case OpKind::PositionIndex: o[0] = i; break;
    case OpKind::Ones: o[0] = 1.0; break;
    case OpKind::IsBos: o[0] = i == 0 ? 1.0 : 0.0; break;
    case OpKind::Linear: {
      gather(n.inputs, 0, n.inputs.size(), i, scratch_);
      for (int c = 0; c < n.width; ++c) {
        double s = n.bias(c);
        for (size_t r = 0; r < scratch_.size(); ++r) s += scratch_[r] * n.matrix(static_cast<long>(r), c);
        o[c] = s;
      }
      break;
    }
    case OpKind::ElementwiseBinary:
    case OpKind::Compare: {
      const double* a = in_row(0, i);
      const double* b = in_row(1, i);
      const int wa = in_width(0), wb = in_width(1);
      for (int c = 0; c < n.width; ++c) {
        double x = a[wa == 1 ? 0 : c], y = b[wb == 1 ? 0 : c];
        if (n.kind == OpKind::Compare) {
          bool r = false;
          switch (n.compare) {
            case CompareOp::Le: r = x <= y; break;
            case CompareOp::Lt: r = x < y; break;
            case CompareOp::Ge: r = x >= y; break;
            case CompareOp::Gt: r = x > y; break;
            case CompareOp::Eq: r = x == y; break;
          }
          o[c] = r ? 1.0 : 0.0;
          continue;
        }
        if ((n.binary == BinaryOp::And || n.binary == BinaryOp::Or) &&
            ((x != 0.0 && x != 1.0) || (y != 0.0 && y != 1.0)))
          throw EvalError(n.id, i, "logical operation on a non-boolean value");
        switch (n.binary) {
          case BinaryOp::Add: o[c] = x + y; break;
          case BinaryOp::Sub: o[c] = x - y; break;
          case BinaryOp::Mul: o[c] = x * y; break;
          case BinaryOp::And: o[c] = std::min(x, y); break;
          case BinaryOp::Or: o[c] = std::max(x, y); break;
        }
      }
      break;
    }
    case OpKind::Mean:
    case OpKind::SelfAttention: {
      const size_t nq = n.num_q, nk = n.num_k;
      std::vector<double> q, k;
      gather(n.inputs, 0, nq, i, q);
      double best = -INFINITY;
      std::vector<int> argmax;
      for (int j = 0; j <= i; ++j) {
        gather(n.inputs, nq, nq + nk, j, k);
        double s = j == 0 ? n.bos_weight : 0.0;
        for (size_t d = 0; d < q.size(); ++d) s += q[d] * k[d];
        if (s > best) {
          best = s;
          argmax.assign(1, j);
        } else if (s == best) {
          argmax.push_back(j);
        }
      }
      if (!std::isfinite(best)) throw EvalError(n.id, i, "non-finite attention score");
      std::vector<double> v;
      for (int j : argmax) {
        gather(n.inputs, nq + nk, n.inputs.size(), j, v);
        for (int c = 0; c < n.width; ++c) o[c] += v[c];
      }
      for (int c = 0; c < n.width; ++c) o[c] /= static_cast<double>(argmax.size());
      break;
    }
    case OpKind::GatedMlp: {
      gather(n.inputs, 0, n.inputs.size(), i, scratch_);
      Eigen::Map<const Eigen::RowVectorXd> x(scratch_.data(), static_cast<long>(scratch_.size()));
      Eigen::RowVectorXd lin = x * n.glu.w_lin + n.glu.b_lin.transpose();
      Eigen::RowVectorXd gate = x * n.glu.w_gate + n.glu.b_gate.transpose();
      Eigen::RowVectorXd h = lin.cwiseProduct(gate.cwiseMax(0.0));
      Eigen::RowVectorXd y = h * n.glu.w_out + n.glu.b_out.transpose();
      for (int c = 0; c < n.width; ++c) o[c] = y(c);
      break;
    }
    case OpKind::IndexSelect: {
      double idx = in_row(1, i)[0];
      double r = std::round(idx);
      if (!std::isfinite(idx) || std::abs(idx - r) > 1e-9) throw EvalError(n.id, i, "non-integer index");
      long j = static_cast<long>(r);
      if (j < 0 || j > i) {
        if (n.index_mode == IndexMode::Strict)
          throw EvalError(n.id, i, "index " + std::to_string(j) + " outside [0, " + std::to_string(i) + "]");
        j = std::clamp<long>(j, 0, i);
      }
      const double* src = in_row(0, static_cast<int>(j));
      std::copy(src, src + n.width, o);
      break;
    }
    case OpKind::Slice: {
      const double* src = in_row(0, i);
      std::copy(src + n.start, src + n.end, o);
      break;
    }
    case OpKind::Concat: {
      int off = 0;
      for (size_t k = 0; k < n.inputs.size(); ++k) {
        const double* src = in_row(static_cast<int>(k), i);
        std::copy(src, src + in_width(static_cast<int>(k)), o + off);
        off += in_width(static_cast<int>(k));
      }
      break;
    }
    case OpKind::Pad: {
      const double* src = in_row(0, i);
      std::copy(src, src + in_width(0), o + n.start);
      break;
    }
    case OpKind::PriorityOutput: {
      for (const auto& rule : n.rules) {
        double c = rule.cond >= 0 ? row(rule.cond, i)[0] : 1.0;
        if (c == 0.0) continue;
        if (rule.value >= 0) {
          const double* v = row(rule.value, i);
          for (int l = 0; l < n.width; ++l) o[l] += rule.weight * c * v[l];
        } else {
          o[rule.token] += rule.weight * c;
        }
      }
      break;
    }
  }
}

Matrix abstract_eval(const Graph& graph, NodeId root, const std::vector<int>& tokens) {
  AbstractEvaluator ev(graph, {root});
  ev.push(tokens);
  return ev.value(root);
}

}  // namespace sattf::dsl
