// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 The sattf Authors

#include "sattf/compiler.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "sattf/error.hpp"

namespace sattf::compiler {
namespace {

Error compile_error(const std::string& what) { return Error(ErrorCode::Compile, what); }

bool col_zero(const Matrix& m, int c) {
  for (int r = 0; r < m.rows(); ++r)
    if (m(r, c) != 0.0) return false;
  return true;
}

bool row_zero(const Matrix& m, int r) {
  for (int c = 0; c < m.cols(); ++c)
    if (m(r, c) != 0.0) return false;
  return true;
}

Matrix block_diag(const std::vector<Matrix>& blocks) {
  long rows = 0, cols = 0;
  for (const auto& b : blocks) rows += b.rows(), cols += b.cols();
  Matrix m = Matrix::Zero(rows, cols);
  long r = 0, c = 0;
  for (const auto& b : blocks) {
    m.block(r, c, b.rows(), b.cols()) = b;
    r += b.rows();
    c += b.cols();
  }
  return m;
}

Vector vcat(const std::vector<Vector>& parts) {
  long n = 0;
  for (const auto& p : parts) n += p.size();
  Vector v(n);
  long off = 0;
  for (const auto& p : parts) {
    v.segment(off, p.size()) = p;
    off += p.size();
  }
  return v;
}

Matrix vstack(const std::vector<Matrix>& parts) {
  long rows = 0;
  long cols = parts.empty() ? 0 : parts.front().cols();
  for (const auto& p : parts) rows += p.rows();
  Matrix m(rows, cols);
  long off = 0;
  for (const auto& p : parts) {
    m.middleRows(off, p.rows()) = p;
    off += p.rows();
  }
  return m;
}

Matrix hstack_m(const std::vector<Matrix>& parts) {
  long cols = 0;
  long rows = parts.empty() ? 0 : parts.front().rows();
  for (const auto& p : parts) cols += p.cols();
  Matrix m(rows, cols);
  long off = 0;
  for (const auto& p : parts) {
    m.middleCols(off, p.cols()) = p;
    off += p.cols();
  }
  return m;
}

}  // namespace

const char* base_kind_name(BaseKind k) {
  switch (k) {
    case BaseKind::TokenEmbedding: return "TokenEmbedding";
    case BaseKind::Ones: return "Ones";
    case BaseKind::IsBos: return "IsBos";
    case BaseKind::PositionIndex: return "PositionIndex";
    case BaseKind::Linear: return "Linear";
    case BaseKind::GatedMlp: return "GatedMlp";
    case BaseKind::SelfAttention: return "SelfAttention";
  }
  return "?";
}

Affine Affine::zero(int width) {
  Affine a;
  a.width = width;
  a.bias = Vector::Zero(width);
  return a;
}

Affine Affine::identity(int src, int width) {
  Affine a = zero(width);
  a.terms.push_back({src, Matrix::Identity(width, width)});
  return a;
}

Affine Affine::constant(const Vector& value) {
  Affine a = zero(static_cast<int>(value.size()));
  a.bias = value;
  return a;
}

Affine Affine::compose(const Matrix& m) const {
  if (m.rows() != width) throw compile_error("affine composition: shape mismatch");
  Affine out = zero(static_cast<int>(m.cols()));
  for (const auto& t : terms) {
    Matrix w = t.w * m;
    if (!w.isZero(0.0)) out.terms.push_back({t.src, std::move(w)});
  }
  out.bias = m.transpose() * bias;
  return out;
}

Affine Affine::scaled(double s) const {
  Affine out = *this;
  for (auto& t : out.terms) t.w *= s;
  out.bias *= s;
  return out;
}

Affine Affine::columns(int start, int end) const {
  Affine out = zero(end - start);
  for (const auto& t : terms) {
    Matrix w = t.w.middleCols(start, end - start);
    if (!w.isZero(0.0)) out.terms.push_back({t.src, std::move(w)});
  }
  out.bias = bias.segment(start, end - start);
  return out;
}

Affine Affine::placed(int out_width, int start) const {
  Affine out = zero(out_width);
  for (const auto& t : terms) {
    Matrix w = Matrix::Zero(t.w.rows(), out_width);
    w.middleCols(start, width) = t.w;
    out.terms.push_back({t.src, std::move(w)});
  }
  out.bias.segment(start, width) = bias;
  return out;
}

Affine Affine::broadcast(int w) const {
  if (width == w) return *this;
  if (width != 1) throw compile_error("affine broadcast from width " + std::to_string(width));
  return compose(Matrix::Ones(1, w));
}

Affine Affine::hstack(const std::vector<Affine>& parts) {
  int total = 0;
  for (const auto& p : parts) total += p.width;
  Affine out = zero(total);
  int off = 0;
  for (const auto& p : parts) {
    out += p.placed(total, off);
    off += p.width;
  }
  return out;
}

Affine& Affine::operator+=(const Affine& o) {
  if (o.width != width) throw compile_error("affine sum: width mismatch");
  for (const auto& t : o.terms) {
    auto it = std::find_if(terms.begin(), terms.end(), [&](const Term& x) { return x.src == t.src; });
    if (it == terms.end()) {
      terms.push_back(t);
    } else {
      it->w += t.w;
    }
  }
  terms.erase(std::remove_if(terms.begin(), terms.end(), [](const Term& t) { return t.w.isZero(0.0); }), terms.end());
  bias += o.bias;
  return *this;
}

bool Affine::column_is_zero(int c) const {
  if (bias(c) != 0.0) return false;
  for (const auto& t : terms)
    if (!col_zero(t.w, c)) return false;
  return true;
}

std::vector<int> BaseNode::deps() const {
  std::vector<int> d;
  auto add = [&](const Affine& a) {
    for (const auto& t : a.terms) d.push_back(t.src);
  };
  add(expr);
  add(lin);
  add(gate);
  add(q);
  add(k);
  add(v);
  std::sort(d.begin(), d.end());
  d.erase(std::unique(d.begin(), d.end()), d.end());
  return d;
}

Affine ReducedProgram::root_affine() const {
  const BaseNode& r = nodes.at(root);
  if (r.kind == BaseKind::Linear) return r.expr;
  return Affine::identity(root, r.width);
}

GluSpec build_reglu_for_relu(const Matrix& w1, const Vector& b1, const Matrix& w2, const Vector& b2) {
  const long h = w1.cols();
  if (b1.size() != h || w2.rows() != h || b2.size() != w2.cols())
    throw Error(ErrorCode::InvalidArgument, "build_reglu_for_relu: shape mismatch");
  GluSpec s;
  s.w_lin = Matrix::Zero(w1.rows(), h);
  s.b_lin = Vector::Ones(h);
  s.w_gate = w1;
  s.b_gate = b1;
  s.w_out = w2;
  s.b_out = b2;
  return s;
}

GluSpec build_reglu_for_mul(int n) {
  const Matrix I = Matrix::Identity(n, n);
  const Matrix Z = Matrix::Zero(n, n);
  GluSpec s;
  s.w_lin = vstack({hstack_m({I, I}), hstack_m({Z, Z})});
  s.w_gate = vstack({hstack_m({Z, Z}), hstack_m({I, Matrix(-I)})});
  s.b_lin = Vector::Zero(2 * n);
  s.b_gate = Vector::Zero(2 * n);
  s.w_out = vstack({I, Matrix(-I)});
  s.b_out = Vector::Zero(n);
  return s;
}

Vector eval_glu(const GluSpec& g, const Vector& x) {
  Eigen::RowVectorXd xr = x.transpose();
  Eigen::RowVectorXd lin = xr * g.w_lin + g.b_lin.transpose();
  Eigen::RowVectorXd gate = xr * g.w_gate + g.b_gate.transpose();
  Eigen::RowVectorXd h = lin.cwiseProduct(gate.cwiseMax(0.0));
  return (h * g.w_out + g.b_out.transpose()).transpose();
}

double copy_rho_limit(const AttentionApproxParams& a) { return a.delta * a.delta / (8.0 * a.M_bound); }

double mean_rho_limit(const AttentionApproxParams& a, double n) {
  return a.delta * a.epsilon / (16.0 * a.M_bound * std::log(4.0 * a.M_bound * n / a.epsilon));
}

double softmax_error_bound(double scale, double delta, double M_bound, double n) {
  return 2.0 * M_bound * n * std::exp(-scale * delta);
}

namespace {

class Reducer {
 public:
  Reducer(const dsl::Graph& g) : g_(g) {
    out_.vocab = g.vocab();
    out_.token_node = add_input(BaseKind::TokenEmbedding, g.vocab().size(), "tokens");
    out_.ones_node = add_input(BaseKind::Ones, 1, "ones");
    out_.isbos_node = add_input(BaseKind::IsBos, 1, "is_bos");
    out_.pos_node = add_input(BaseKind::PositionIndex, 1, "position");
  }

  ReducedProgram run(dsl::NodeId root) {
    std::vector<char> live(g_.size(), 0);
    live[g_.node(root).id] = 1;
    for (dsl::NodeId id = root; id >= 0; --id)
      if (live[id])
        for (dsl::NodeId in : g_.node(id).inputs) live[in] = 1;
    for (dsl::NodeId id = 0; id <= root; ++id)
      if (live[id]) out_.lowered.emplace(id, lower(g_.node(id)));
    const Affine& r = out_.lowered.at(root);
    if (r.terms.size() == 1 && r.bias.isZero(0.0) && r.terms[0].w.rows() == r.width &&
        r.terms[0].w == Matrix::Identity(r.width, r.width) &&
        out_.nodes[r.terms[0].src].width == r.width) {
      out_.root = r.terms[0].src;
    } else {
      BaseNode n;
      n.kind = BaseKind::Linear;
      n.width = r.width;
      n.expr = r;
      n.origin = root;
      n.label = label_of(g_.node(root));
      out_.root = add(std::move(n));
    }
    return std::move(out_);
  }

 private:
  int add(BaseNode n) {
    n.id = static_cast<int>(out_.nodes.size());
    out_.nodes.push_back(std::move(n));
    return out_.nodes.back().id;
  }

  int add_input(BaseKind kind, int width, const char* label) {
    BaseNode n;
    n.kind = kind;
    n.width = width;
    n.label = label;
    return add(std::move(n));
  }

  std::string label_of(const dsl::Node& n) const {
    return n.name.empty() ? std::string(dsl::kind_name(n.kind)) + "#" + std::to_string(n.id) : n.name;
  }

  const Affine& in(const dsl::Node& n, size_t k) const { return out_.lowered.at(n.inputs[k]); }

  Affine inputs_hstack(const dsl::Node& n, size_t first, size_t last) const {
    std::vector<Affine> parts;
    for (size_t k = first; k < last; ++k) parts.push_back(in(n, k));
    return parts.empty() ? Affine::zero(0) : Affine::hstack(parts);
  }

  Affine pos() const { return Affine::identity(out_.pos_node, 1); }

  // Materializes a gated MLP over input expression x, dropping hidden units and output
  // columns that are identically zero. Returns the node's value as an affine expression.
  Affine mlp(const Affine& x, const GluSpec& s, const std::string& label, dsl::NodeId origin) {
    Affine lin = x.compose(s.w_lin);
    lin.bias += s.b_lin;
    Affine gate = x.compose(s.w_gate);
    gate.bias += s.b_gate;
    const int width = static_cast<int>(s.w_out.cols());
    std::vector<int> hidden;
    for (int h = 0; h < lin.width; ++h) {
      if (row_zero(s.w_out, h) || lin.column_is_zero(h)) continue;
      bool gate_const = true;
      for (const auto& t : gate.terms) gate_const = gate_const && col_zero(t.w, h);
      if (gate_const && gate.bias(h) <= 0.0) continue;
      hidden.push_back(h);
    }
    std::vector<int> cols;
    for (int c = 0; c < width; ++c) {
      bool nz = s.b_out(c) != 0.0;
      for (int h : hidden) nz = nz || s.w_out(h, c) != 0.0;
      if (nz) cols.push_back(c);
    }
    if (cols.empty()) return Affine::zero(width);
    Matrix sel_h = Matrix::Zero(lin.width, static_cast<long>(hidden.size()));
    for (size_t k = 0; k < hidden.size(); ++k) sel_h(hidden[k], static_cast<long>(k)) = 1.0;
    BaseNode n;
    n.kind = BaseKind::GatedMlp;
    n.width = static_cast<int>(cols.size());
    n.label = label;
    n.origin = origin;
    n.lin = lin.compose(sel_h);
    n.gate = gate.compose(sel_h);
    n.w_out = Matrix::Zero(static_cast<long>(hidden.size()), n.width);
    n.b_out = Vector::Zero(n.width);
    for (size_t c = 0; c < cols.size(); ++c) {
      n.b_out(static_cast<long>(c)) = s.b_out(cols[c]);
      for (size_t k = 0; k < hidden.size(); ++k) n.w_out(static_cast<long>(k), static_cast<long>(c)) = s.w_out(hidden[k], cols[c]);
    }
    int id = add(std::move(n));
    Matrix place = Matrix::Zero(static_cast<long>(cols.size()), width);
    for (size_t c = 0; c < cols.size(); ++c) place(static_cast<long>(c), cols[c]) = 1.0;
    Affine a = Affine::zero(width);
    a.terms.push_back({id, place});
    return a;
  }

  // One gated MLP computing sum_k a_k * b_k (all of width w) using exact product gates.
  Affine product(const std::vector<std::pair<Affine, Affine>>& pairs, int w, const std::string& label,
                 dsl::NodeId origin) {
    std::vector<Affine> xs;
    std::vector<Matrix> lin, gate, out;
    std::vector<Vector> bl, bg;
    for (const auto& [a, b] : pairs) {
      xs.push_back(a.broadcast(w));
      xs.push_back(b.broadcast(w));
      GluSpec s = build_reglu_for_mul(w);
      lin.push_back(s.w_lin);
      gate.push_back(s.w_gate);
      out.push_back(s.w_out);
      bl.push_back(s.b_lin);
      bg.push_back(s.b_gate);
    }
    GluSpec s;
    s.w_lin = block_diag(lin);
    s.w_gate = block_diag(gate);
    s.b_lin = vcat(bl);
    s.b_gate = vcat(bg);
    s.w_out = vstack(out);
    s.b_out = Vector::Zero(w);
    return mlp(Affine::hstack(xs), s, label, origin);
  }

  // A ReLU MLP over x: relu(x W1 + b1) W2 + b2.
  Affine relu_mlp(const Affine& x, const Matrix& w1, const Vector& b1, const Matrix& w2, const Vector& b2,
                  const std::string& label, dsl::NodeId origin) {
    return mlp(x, build_reglu_for_relu(w1, b1, w2, b2), label, origin);
  }

  Affine attention(const Affine& q, const Affine& k, const Affine& v, double bos_weight, double margin,
                   bool certified, const std::string& label, dsl::NodeId origin) {
    if (!(margin > 0.0) || !std::isfinite(margin))
      throw compile_error("cannot certify score margin for node '" + label + "': margin must be positive");
    double ratio = bos_weight / margin;
    if (std::abs(ratio - std::round(ratio)) > 1e-9)
      throw compile_error("cannot certify score margin for node '" + label + "': bos_weight " +
                          std::to_string(bos_weight) + " is off the score grid of step " + std::to_string(margin));
    std::vector<int> dims;
    for (int d = 0; d < q.width; ++d)
      if (!q.column_is_zero(d) && !k.column_is_zero(d)) dims.push_back(d);
    Matrix sel = Matrix::Zero(q.width, static_cast<long>(dims.size()));
    for (size_t i = 0; i < dims.size(); ++i) sel(dims[i], static_cast<long>(i)) = 1.0;
    std::vector<int> cols;
    for (int c = 0; c < v.width; ++c)
      if (!v.column_is_zero(c)) cols.push_back(c);
    if (cols.empty()) return Affine::zero(v.width);
    Matrix vsel = Matrix::Zero(v.width, static_cast<long>(cols.size()));
    for (size_t i = 0; i < cols.size(); ++i) vsel(cols[i], static_cast<long>(i)) = 1.0;
    BaseNode n;
    n.kind = BaseKind::SelfAttention;
    n.width = static_cast<int>(cols.size());
    n.label = label;
    n.origin = origin;
    n.q = q.compose(sel);
    n.k = k.compose(sel);
    n.v = v.compose(vsel);
    n.bos_weight = bos_weight;
    n.margin = margin;
    n.certified = certified;
    int id = add(std::move(n));
    Affine a = Affine::zero(v.width);
    a.terms.push_back({id, Matrix(vsel.transpose())});
    return a;
  }

  Affine square(dsl::NodeId src, const Affine& x, const std::string& label) {
    auto it = squares_.find(src);
    if (it != squares_.end()) return it->second;
    Affine s;
    if (x.terms.size() == 1 && x.terms[0].src == out_.pos_node) {
      // (a i + b)^2 = a^2 i^2 + 2ab i + b^2 over the shared position square.
      const double a = x.terms[0].w(0, 0), b = x.bias(0);
      s = position_square().scaled(a * a);
      s += pos().scaled(2.0 * a * b);
      s.bias(0) += b * b;
    } else {
      s = product({{x, x}}, 1, label + "^2", src);
    }
    squares_.emplace(src, s);
    return s;
  }

  const Affine& position_square() {
    if (pos_sq_.width == 0) pos_sq_ = product({{pos(), pos()}}, 1, "position^2", -1);
    return pos_sq_;
  }

  Affine compare(const dsl::Node& n) {
    const int w = n.width;
    Affine a = in(n, 0).broadcast(w), b = in(n, 1).broadcast(w);
    Affine d = a;
    switch (n.compare) {
      case dsl::CompareOp::Ge: d += b.scaled(-1.0); break;
      case dsl::CompareOp::Gt: d += b.scaled(-1.0); d.bias.array() -= 0.5; break;
      case dsl::CompareOp::Le: d = b; d += a.scaled(-1.0); break;
      case dsl::CompareOp::Lt: d = b; d += a.scaled(-1.0); d.bias.array() -= 0.5; break;
      case dsl::CompareOp::Eq: d += b.scaled(-1.0); break;
    }
    // Step relu(k(x + 1/k)) - relu(k x) with slope k = 2.
    const Matrix I = Matrix::Identity(w, w);
    const Matrix two = 2.0 * I;
    if (n.compare == dsl::CompareOp::Eq) {
      Matrix w1 = hstack_m({two, two, Matrix(-two), Matrix(-two)});
      Vector b1 = vcat({Vector::Ones(w), Vector::Zero(w), Vector::Ones(w), Vector::Zero(w)});
      Matrix w2 = vstack({I, Matrix(-I), I, Matrix(-I)});
      return relu_mlp(d, w1, b1, w2, Vector::Constant(w, -1.0), label_of(n), n.id);
    }
    Matrix w1 = hstack_m({two, two});
    Vector b1 = vcat({Vector::Ones(w), Vector::Zero(w)});
    Matrix w2 = vstack({I, Matrix(-I)});
    return relu_mlp(d, w1, b1, w2, Vector::Zero(w), label_of(n), n.id);
  }

  Affine lower(const dsl::Node& n) {
    using dsl::OpKind;
    switch (n.kind) {
      case OpKind::TokenEmbedding: return Affine::identity(out_.token_node, n.width);
      case OpKind::PositionIndex: return pos();
      case OpKind::Ones: return Affine::constant(Vector::Ones(1));
      case OpKind::IsBos: return Affine::identity(out_.isbos_node, 1);
      case OpKind::Linear: {
        Affine x = inputs_hstack(n, 0, n.inputs.size());
        Affine y = x.compose(n.matrix);
        y.bias += n.bias;
        return y;
      }
      case OpKind::ElementwiseBinary: {
        const int w = n.width;
        Affine a = in(n, 0).broadcast(w), b = in(n, 1).broadcast(w);
        const Matrix I = Matrix::Identity(w, w);
        switch (n.binary) {
          case dsl::BinaryOp::Add: a += b; return a;
          case dsl::BinaryOp::Sub: a += b.scaled(-1.0); return a;
          case dsl::BinaryOp::Mul: return product({{a, b}}, w, label_of(n), n.id);
          case dsl::BinaryOp::And: {
            a += b;
            a.bias.array() -= 1.0;
            return relu_mlp(a, I, Vector::Zero(w), I, Vector::Zero(w), label_of(n), n.id);
          }
          case dsl::BinaryOp::Or: {
            Affine x = a.scaled(-1.0);
            x += b.scaled(-1.0);
            x.bias.array() += 1.0;
            return relu_mlp(x, I, Vector::Zero(w), Matrix(-I), Vector::Ones(w), label_of(n), n.id);
          }
        }
        break;
      }
      case OpKind::Compare: return compare(n);
      case OpKind::Mean:
      case OpKind::SelfAttention: {
        Affine q = inputs_hstack(n, 0, n.num_q);
        Affine k = inputs_hstack(n, n.num_q, n.num_q + n.num_k);
        Affine v = inputs_hstack(n, n.num_q + n.num_k, n.inputs.size());
        return attention(q, k, v, n.bos_weight, n.margin, n.kind == OpKind::Mean, label_of(n), n.id);
      }
      case OpKind::GatedMlp: return mlp(inputs_hstack(n, 0, n.inputs.size()), n.glu, label_of(n), n.id);
      case OpKind::IndexSelect: {
        const Affine& idx = in(n, 1);
        Affine sq = square(n.inputs[1], idx, label_of(g_.node(n.inputs[1])));
        Affine q = Affine::hstack({sq, idx, Affine::constant(Vector::Ones(1))});
        Affine k = Affine::hstack({Affine::constant(Vector::Constant(1, -1.0)), pos().scaled(2.0), position_square().scaled(-1.0)});
        return attention(q, k, in(n, 0), 0.0, 1.0, true, label_of(n), n.id);
      }
      case OpKind::Slice: return in(n, 0).columns(n.start, n.end);
      case OpKind::Concat: return inputs_hstack(n, 0, n.inputs.size());
      case OpKind::Pad: return in(n, 0).placed(n.width, n.start);
      case OpKind::PriorityOutput: {
        Affine outp = Affine::zero(n.width);
        std::vector<std::pair<Affine, Affine>> prods;
        for (const auto& r : n.rules) {
          if (r.value < 0) {
            if (r.cond < 0) {
              outp.bias(r.token) += r.weight;
            } else {
              outp += out_.lowered.at(r.cond).scaled(r.weight).placed(n.width, r.token);
            }
          } else if (r.cond < 0) {
            outp += out_.lowered.at(r.value).scaled(r.weight);
          } else {
            prods.emplace_back(out_.lowered.at(r.cond), out_.lowered.at(r.value).scaled(r.weight));
          }
        }
        if (!prods.empty()) outp += product(prods, n.width, label_of(n) + ".products", n.id);
        return outp;
      }
    }
    throw compile_error("unsupported node kind");
  }

  const dsl::Graph& g_;
  ReducedProgram out_;
  std::unordered_map<dsl::NodeId, Affine> squares_;
  Affine pos_sq_;
};

}  // namespace

ReducedProgram reduce_to_base(const dsl::Graph& graph, dsl::NodeId root) { return Reducer(graph).run(root); }

LayerPlan plan_layers(const ReducedProgram& prog) {
  LayerPlan plan;
  const int n = static_cast<int>(prog.nodes.size());
  plan.sublayer.assign(n, -1);
  plan.lanes.assign(n, {-1, -1});
  std::vector<int> ready(n, 0);
  for (const auto& node : prog.nodes) {
    int dep = 0;
    for (int d : node.deps()) {
      if (d >= node.id) throw compile_error("reduced graph is not topologically ordered");
      dep = std::max(dep, ready[d]);
    }
    int s = 0;
    switch (node.kind) {
      case BaseKind::TokenEmbedding:
      case BaseKind::Ones:
      case BaseKind::IsBos:
      case BaseKind::PositionIndex: s = 0; break;
      case BaseKind::Linear: s = dep; break;
      case BaseKind::SelfAttention: s = dep + 1 + (dep % 2 == 1 ? 1 : 0); break;
      case BaseKind::GatedMlp: s = dep + 1 + (dep % 2 == 0 ? 1 : 0); break;
    }
    ready[node.id] = s;
    if (node.kind != BaseKind::Linear) plan.sublayer[node.id] = s;
  }
  int max_s = 0;
  for (int s : plan.sublayer) max_s = std::max(max_s, s);
  plan.n_layers = (max_s + 1) / 2;
  plan.heads.assign(plan.n_layers, {});
  plan.mlps.assign(plan.n_layers, {});
  long lane = 0;
  for (const auto& node : prog.nodes) {
    if (node.kind == BaseKind::Linear) continue;
    plan.lanes[node.id] = {static_cast<int>(lane), static_cast<int>(lane + node.width)};
    lane += node.width;
    if (lane > std::numeric_limits<int>::max() / 4) throw compile_error("residual lane budget overflow");
    int s = plan.sublayer[node.id];
    if (node.kind == BaseKind::SelfAttention) plan.heads[(s - 1) / 2].push_back(node.id);
    if (node.kind == BaseKind::GatedMlp) plan.mlps[s / 2 - 1].push_back(node.id);
  }
  plan.d_emb = static_cast<int>(lane);
  return plan;
}

namespace {

// Writes affine `a` into columns [col, col + a.width) of a d_emb-row matrix, with
// its bias routed through the Ones lane.
void write_affine(const Affine& a, const LayerPlan& plan, int ones_lane, RowMat& m, int col, double scale) {
  for (const auto& t : a.terms) {
    const int start = plan.lanes[t.src].first;
    if (start < 0) throw compile_error("affine term reads a node without lanes");
    for (int r = 0; r < t.w.rows(); ++r)
      for (int c = 0; c < t.w.cols(); ++c)
        if (t.w(r, c) != 0.0) m(start + r, col + c) += scale * t.w(r, c);
  }
  for (int c = 0; c < a.width; ++c)
    if (a.bias(c) != 0.0) m(ones_lane, col + c) += scale * a.bias(c);
}

double round_to(double x, int float_width) { return float_width == 32 ? static_cast<double>(static_cast<float>(x)) : x; }

template <typename M>
void round_all(M& m, int fw) {
  m = m.unaryExpr([fw](double x) { return round_to(x, fw); });
}

}  // namespace

ModelWeights emit(const ReducedProgram& prog, const LayerPlan& plan, const CompilerConfig& cfg,
                  const std::string& config_json) {
  if (!(cfg.beta > 0.0)) throw compile_error("beta must be positive");
  if (cfg.float_width != 32 && cfg.float_width != 64) throw compile_error("float_width must be 32 or 64");
  if (cfg.context_len < 1 || cfg.context_len > (1 << 20))
    throw compile_error("context_len outside the range where position scores stay exact");
  ModelWeights w;
  w.vocab = prog.vocab;
  w.d_emb = plan.d_emb;
  w.n_layers = plan.n_layers;
  w.context_len = cfg.context_len;
  w.float_width = cfg.float_width;
  w.config_json = config_json;
  const int V = prog.vocab.size();
  const int ones_lane = plan.lanes[prog.ones_node].first;
  w.pos_lane = plan.lanes[prog.pos_node].first;

  int d_head = 1, n_heads = 0, d_mlp = 0;
  for (int l = 0; l < plan.n_layers; ++l) {
    n_heads = std::max(n_heads, static_cast<int>(plan.heads[l].size()));
    int hidden = 0;
    for (int id : plan.mlps[l]) hidden += prog.nodes[id].lin.width;
    d_mlp = std::max(d_mlp, hidden);
    for (int id : plan.heads[l]) {
      const auto& n = prog.nodes[id];
      d_head = std::max({d_head, n.q.width + (n.bos_weight != 0.0 ? 1 : 0), n.v.width});
    }
  }
  w.d_head = d_head;
  w.n_heads = n_heads;
  w.d_mlp = d_mlp;
  const double sqrt_d = std::sqrt(static_cast<double>(d_head));

  w.token_embedding = RowMat::Zero(V, w.d_emb);
  const int tok_lane = plan.lanes[prog.token_node].first;
  const int bos_lane = plan.lanes[prog.isbos_node].first;
  for (int t = 0; t < V; ++t) {
    w.token_embedding(t, tok_lane + t) = 1.0;
    w.token_embedding(t, ones_lane) = 1.0;
    if (t == prog.vocab.bos()) w.token_embedding(t, bos_lane) = 1.0;
  }
  for (const auto& node : prog.nodes) {
    if (plan.lanes[node.id].first < 0) continue;
    w.lanes.push_back({node.label, node.id, plan.lanes[node.id].first, plan.lanes[node.id].second});
  }

  w.layers.resize(plan.n_layers);
  w.head_table.resize(plan.n_layers);
  w.mlp_table.resize(plan.n_layers);
  for (int l = 0; l < plan.n_layers; ++l) {
    LayerWeights& L = w.layers[l];
    L.heads.resize(n_heads);
    for (auto& h : L.heads) {
      h.w_q = RowMat::Zero(w.d_emb, d_head);
      h.w_k = RowMat::Zero(w.d_emb, d_head);
      h.w_v = RowMat::Zero(w.d_emb, d_head);
    }
    L.w_o = RowMat::Zero(static_cast<long>(n_heads) * d_head, w.d_emb);
    for (size_t hi = 0; hi < plan.heads[l].size(); ++hi) {
      const BaseNode& n = prog.nodes[plan.heads[l][hi]];
      HeadWeights& h = L.heads[hi];
      const double scale = cfg.beta / n.margin;
      write_affine(n.q, plan, ones_lane, h.w_q, 0, scale * sqrt_d);
      write_affine(n.k, plan, ones_lane, h.w_k, 0, 1.0);
      if (n.bos_weight != 0.0) {
        h.w_q(ones_lane, n.q.width) += n.bos_weight * scale * sqrt_d;
        h.w_k(bos_lane, n.q.width) += 1.0;
      }
      write_affine(n.v, plan, ones_lane, h.w_v, 0, 1.0);
      const int lane = plan.lanes[n.id].first;
      for (int c = 0; c < n.width; ++c) L.w_o(static_cast<long>(hi) * d_head + c, lane + c) = 1.0;
      w.head_table[l].push_back({n.label, n.id, n.q.width + (n.bos_weight != 0.0 ? 1 : 0), n.v.width, scale, n.margin,
                                 n.bos_weight, n.certified});
    }
    L.w_1 = RowMat::Zero(w.d_emb, 2L * d_mlp);
    L.b_1 = Eigen::VectorXd::Zero(2L * d_mlp);
    L.w_2 = RowMat::Zero(d_mlp, w.d_emb);
    L.b_2 = Eigen::VectorXd::Zero(w.d_emb);
    int off = 0;
    for (int id : plan.mlps[l]) {
      const BaseNode& n = prog.nodes[id];
      const int h = n.lin.width;
      Affine lin = n.lin, gate = n.gate;
      L.b_1.segment(off, h) += lin.bias;
      L.b_1.segment(d_mlp + off, h) += gate.bias;
      lin.bias.setZero();
      gate.bias.setZero();
      write_affine(lin, plan, ones_lane, L.w_1, off, 1.0);
      write_affine(gate, plan, ones_lane, L.w_1, d_mlp + off, 1.0);
      const int lane = plan.lanes[n.id].first;
      for (int k = 0; k < h; ++k)
        for (int c = 0; c < n.width; ++c) L.w_2(off + k, lane + c) = n.w_out(k, c);
      for (int c = 0; c < n.width; ++c) L.b_2(lane + c) += n.b_out(c);
      w.mlp_table[l].push_back({n.label, n.id, off, off + h});
      off += h;
    }
  }
  Affine outp = prog.root_affine();
  if (outp.width != V) throw compile_error("program output width " + std::to_string(outp.width) + " != vocabulary size");
  w.w_out = RowMat::Zero(w.d_emb, V);
  w.b_out = outp.bias;
  outp.bias.setZero();
  write_affine(outp, plan, ones_lane, w.w_out, 0, 1.0);

  const int fw = cfg.float_width;
  round_all(w.token_embedding, fw);
  round_all(w.w_out, fw);
  round_all(w.b_out, fw);
  for (auto& L : w.layers) {
    for (auto& h : L.heads) {
      round_all(h.w_q, fw);
      round_all(h.w_k, fw);
      round_all(h.w_v, fw);
    }
    round_all(L.w_o, fw);
    round_all(L.w_1, fw);
    round_all(L.b_1, fw);
    round_all(L.w_2, fw);
    round_all(L.b_2, fw);
  }
  auto finite = [](const auto& m) { return m.allFinite(); };
  bool ok = finite(w.token_embedding) && finite(w.w_out) && finite(w.b_out);
  for (const auto& L : w.layers) {
    ok = ok && finite(L.w_o) && finite(L.w_1) && finite(L.b_1) && finite(L.w_2) && finite(L.b_2);
    for (const auto& h : L.heads) ok = ok && finite(h.w_q) && finite(h.w_k) && finite(h.w_v);
  }
  if (!ok) throw compile_error("emitted weights contain non-finite values");
  return w;
}

ModelWeights compile(const dsl::Graph& graph, dsl::NodeId root, const CompilerConfig& cfg,
                     const std::string& config_json) {
  ReducedProgram prog = reduce_to_base(graph, root);
  LayerPlan plan = plan_layers(prog);
  return emit(prog, plan, cfg, config_json);
}

ConcreteEvaluator::ConcreteEvaluator(const ReducedProgram& prog) : p_(prog), data_(prog.nodes.size()) {}

const double* ConcreteEvaluator::row(int node, int pos) const {
  if (pos < 0 || pos >= n_) throw Error(ErrorCode::InvalidArgument, "position out of range");
  return data_.at(node).data() + static_cast<size_t>(pos) * p_.nodes[node].width;
}

Vector ConcreteEvaluator::eval(const Affine& a, int pos) const {
  Vector out = a.bias;
  for (const auto& t : a.terms) {
    const double* r = row(t.src, pos);
    for (int c = 0; c < a.width; ++c) {
      double s = 0.0;
      for (int k = 0; k < t.w.rows(); ++k) s += r[k] * t.w(k, c);
      out(c) += s;
    }
  }
  return out;
}

void ConcreteEvaluator::push(const std::vector<int>& tokens) {
  for (int t : tokens) push(t);
}

void ConcreteEvaluator::push(int token) {
  if (token < 0 || token >= p_.vocab.size()) throw Error(ErrorCode::InvalidArgument, "token out of vocabulary");
  tokens_.push_back(token);
  const int i = n_++;
  for (const auto& n : p_.nodes) {
    auto& d = data_[n.id];
    const size_t base = d.size();
    d.resize(base + n.width, 0.0);
    switch (n.kind) {
      case BaseKind::TokenEmbedding: d[base + token] = 1.0; break;
      case BaseKind::Ones: d[base] = 1.0; break;
      case BaseKind::IsBos: d[base] = i == 0 ? 1.0 : 0.0; break;
      case BaseKind::PositionIndex: d[base] = i; break;
      case BaseKind::Linear: {
        Vector v = eval(n.expr, i);
        for (int c = 0; c < n.width; ++c) d[base + c] = v(c);
        break;
      }
      case BaseKind::GatedMlp: {
        Vector lin = eval(n.lin, i), gate = eval(n.gate, i);
        Eigen::RowVectorXd h = lin.cwiseProduct(gate.cwiseMax(0.0)).transpose();
        Eigen::RowVectorXd y = h * n.w_out + n.b_out.transpose();
        for (int c = 0; c < n.width; ++c) d[base + c] = y(c);
        break;
      }
      case BaseKind::SelfAttention: {
        Vector q = eval(n.q, i);
        double best = -INFINITY;
        std::vector<int> arg;
        for (int j = 0; j <= i; ++j) {
          double s = q.dot(eval(n.k, j)) + n.bos_weight * row(p_.isbos_node, j)[0];
          if (s > best) {
            best = s;
            arg.assign(1, j);
          } else if (s == best) {
            arg.push_back(j);
          }
        }
        Vector acc = Vector::Zero(n.width);
        for (int j : arg) acc += eval(n.v, j);
        acc /= static_cast<double>(arg.size());
        for (int c = 0; c < n.width; ++c) d[base + c] = acc(c);
        break;
      }
    }
  }
}

Matrix ConcreteEvaluator::value_of(dsl::NodeId id) const {
  const Affine& a = p_.lowered.at(id);
  Matrix m(n_, a.width);
  for (int i = 0; i < n_; ++i) m.row(i) = eval(a, i).transpose();
  return m;
}

Matrix ConcreteEvaluator::output() const {
  Affine a = p_.root_affine();
  Matrix m(n_, a.width);
  for (int i = 0; i < n_; ++i) m.row(i) = eval(a, i).transpose();
  return m;
}

Matrix concrete_eval(const ReducedProgram& prog, const std::vector<int>& tokens) {
  ConcreteEvaluator ev(prog);
  ev.push(tokens);
  return ev.output();
}

}  // namespace sattf::compiler
