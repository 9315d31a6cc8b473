// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 The sattf Authors

#include "sattf/engine.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "sattf/error.hpp"

namespace sattf {

SparseCols SparseCols::from_dense(const RowMat& m) {
  SparseCols s;
  s.rows = static_cast<int>(m.rows());
  s.cols = static_cast<int>(m.cols());
  s.col_start.assign(s.cols + 1, 0);
  for (int c = 0; c < s.cols; ++c) {
    for (int r = 0; r < s.rows; ++r) {
      if (m(r, c) != 0.0) {
        s.row_index.push_back(r);
        s.value.push_back(m(r, c));
      }
    }
    s.col_start[c + 1] = static_cast<int>(s.row_index.size());
  }
  return s;
}

void SparseCols::multiply(const double* x, double* y) const {
  for (int c = 0; c < cols; ++c) {
    double acc = 0.0;
    for (int k = col_start[c]; k < col_start[c + 1]; ++k) acc += x[row_index[k]] * value[k];
    y[c] = acc;
  }
}

void SparseCols::multiply_cols(const double* x, const std::vector<int>& which, double* y) const {
  for (size_t i = 0; i < which.size(); ++i) {
    const int c = which[i];
    double acc = 0.0;
    for (int k = col_start[c]; k < col_start[c + 1]; ++k) acc += x[row_index[k]] * value[k];
    y[i] = acc;
  }
}

namespace {

RowMat select_cols(const RowMat& m, const std::vector<int>& cols) {
  RowMat out(m.rows(), static_cast<long>(cols.size()));
  for (size_t i = 0; i < cols.size(); ++i) out.col(static_cast<long>(i)) = m.col(cols[i]);
  return out;
}

bool col_nonzero(const RowMat& m, int c) {
  for (long r = 0; r < m.rows(); ++r)
    if (m(r, c) != 0.0) return true;
  return false;
}

void check_finite(const double* v, size_t n, const char* where) {
  for (size_t i = 0; i < n; ++i)
    if (!std::isfinite(v[i])) throw Error(ErrorCode::Runtime, std::string("non-finite value in ") + where);
}

// Softmax weights over logits in place, max-subtracted, summed in index order.
void softmax(std::vector<double>& l) {
  double m = -std::numeric_limits<double>::infinity();
  for (double x : l) m = std::max(m, x);
  double z = 0.0;
  for (double& x : l) {
    x = std::exp(x - m);
    z += x;
  }
  for (double& x : l) x /= z;
}

}  // namespace

CompiledModel::CompiledModel(ModelWeights w) : w_(std::move(w)) {
  w_.check_shapes();
  const double inv_sqrt_d = 1.0 / std::sqrt(static_cast<double>(w_.d_head));
  for (int l = 0; l < w_.n_layers; ++l) {
    const LayerWeights& L = w_.layers[l];
    Layer out;
    for (int h = 0; h < w_.n_heads; ++h) {
      const HeadWeights& hw = L.heads[h];
      Head hd;
      for (int d = 0; d < w_.d_head; ++d) {
        if (col_nonzero(hw.w_q, d) && col_nonzero(hw.w_k, d)) hd.qk_dims.push_back(d);
        if (col_nonzero(hw.w_v, d)) hd.v_dims.push_back(d);
      }
      hd.w_q = SparseCols::from_dense(select_cols(hw.w_q, hd.qk_dims));
      hd.w_k = SparseCols::from_dense(select_cols(hw.w_k, hd.qk_dims));
      hd.w_v = SparseCols::from_dense(select_cols(hw.w_v, hd.v_dims));
      hd.inv_sqrt_d = inv_sqrt_d;
      if (l < static_cast<int>(w_.head_table.size()) && h < static_cast<int>(w_.head_table[l].size())) {
        const HeadInfo& info = w_.head_table[l][h];
        hd.margin = info.margin;
        hd.scale = info.scale;
        hd.certified = info.certified;
        hd.label = info.label;
      } else {
        hd.label = "padding";
      }
      out.heads.push_back(std::move(hd));
    }
    out.w_o = SparseCols::from_dense(L.w_o);
    out.w_1 = SparseCols::from_dense(L.w_1);
    out.w_2 = SparseCols::from_dense(L.w_2);
    layers_.push_back(std::move(out));
  }
  w_out_ = SparseCols::from_dense(w_.w_out);
}

DecodeSession::DecodeSession(const CompiledModel& model, SessionOptions opts) : m_(model), opts_(opts) {
  const auto& w = m_.weights();
  cache_.assign(w.n_layers, std::vector<HeadCache>(w.n_heads));
  if (opts_.keep_residuals) residuals_.assign(w.n_layers + 1, {});
  for (int l = 0; l < w.n_layers; ++l)
    for (int h = 0; h < w.n_heads; ++h) {
      HeadSaturation s;
      s.layer = l;
      s.head = h;
      s.label = m_.layers()[l].heads[h].label;
      s.certified = m_.layers()[l].heads[h].certified;
      sat_.push_back(s);
    }
}

const double* DecodeSession::residual(int boundary, int pos) const {
  if (!opts_.keep_residuals) throw Error(ErrorCode::InvalidArgument, "session does not keep residuals");
  if (boundary < 0 || boundary >= static_cast<int>(residuals_.size()) || pos < 0 || pos >= n_)
    throw Error(ErrorCode::InvalidArgument, "residual index out of range");
  return residuals_[boundary].data() + static_cast<size_t>(pos) * m_.weights().d_emb;
}

std::vector<HeadSaturation> DecodeSession::saturation() const { return sat_; }

const std::vector<double>& DecodeSession::push(int token) {
  const ModelWeights& w = m_.weights();
  const int V = w.vocab.size();
  if (token < 0 || token >= V) throw Error(ErrorCode::InvalidArgument, "token id " + std::to_string(token) + " out of range");
  if (n_ >= w.context_len)
    throw Error(ErrorCode::Runtime, "context length " + std::to_string(w.context_len) + " exceeded");
  const int i = n_;
  const int D = w.d_emb;
  std::vector<double> x(D);
  for (int e = 0; e < D; ++e) x[e] = w.token_embedding(token, e);
  x[w.pos_lane] += static_cast<double>(i);
  if (opts_.keep_residuals) residuals_[0].insert(residuals_[0].end(), x.begin(), x.end());

  std::vector<double> attn(static_cast<size_t>(w.n_heads) * w.d_head);
  std::vector<double> delta(D), q, kv, scores, u(2L * w.d_mlp), hid(w.d_mlp);
  for (int l = 0; l < w.n_layers; ++l) {
    const auto& L = m_.layers()[l];
    std::fill(attn.begin(), attn.end(), 0.0);
    for (int h = 0; h < w.n_heads; ++h) {
      const auto& hd = L.heads[h];
      HeadCache& c = cache_[l][h];
      const size_t nq = hd.qk_dims.size(), nv = hd.v_dims.size();
      q.assign(nq, 0.0);
      kv.assign(nq, 0.0);
      hd.w_q.multiply(x.data(), q.data());
      hd.w_k.multiply(x.data(), kv.data());
      c.k.insert(c.k.end(), kv.begin(), kv.end());
      kv.assign(nv, 0.0);
      hd.w_v.multiply(x.data(), kv.data());
      c.v.insert(c.v.end(), kv.begin(), kv.end());
      scores.assign(i + 1, 0.0);
      for (int j = 0; j <= i; ++j) {
        const double* kj = c.k.data() + static_cast<size_t>(j) * nq;
        double s = 0.0;
        for (size_t d = 0; d < nq; ++d) s += q[d] * kj[d];
        scores[j] = s * hd.inv_sqrt_d;
      }
      std::vector<double> raw;
      if (opts_.track_saturation) raw = scores;
      softmax(scores);
      double* out = attn.data() + static_cast<size_t>(h) * w.d_head;
      for (int j = 0; j <= i; ++j) {
        const double a = scores[j];
        if (a == 0.0) continue;
        const double* vj = c.v.data() + static_cast<size_t>(j) * nv;
        for (size_t d = 0; d < nv; ++d) out[hd.v_dims[d]] += a * vj[d];
      }
      if (opts_.track_saturation) {
        HeadSaturation& st = sat_[static_cast<size_t>(l) * w.n_heads + h];
        const double mx = *std::max_element(raw.begin(), raw.end());
        const double tol = hd.scale * hd.margin / 4.0;
        const double gap = hd.scale * hd.margin;
        std::vector<double> sat(nv, 0.0);
        int cnt = 0;
        bool ambiguous = false;
        for (int j = 0; j <= i; ++j) {
          const double drop = mx - raw[j];
          if (drop <= tol) {
            ++cnt;
            const double* vj = c.v.data() + static_cast<size_t>(j) * nv;
            for (size_t d = 0; d < nv; ++d) sat[d] += vj[d];
          } else if (drop < gap - tol) {
            ambiguous = true;
          }
        }
        for (size_t d = 0; d < nv; ++d) {
          sat[d] /= cnt;
          st.max_deviation = std::max(st.max_deviation, std::abs(sat[d] - out[hd.v_dims[d]]));
        }
        st.ambiguous_rows += ambiguous ? 1 : 0;
        st.rows += 1;
      }
    }
    if (w.n_heads > 0) {
      L.w_o.multiply(attn.data(), delta.data());
      for (int e = 0; e < D; ++e) x[e] += delta[e];
    }
    if (w.d_mlp > 0) {
      const LayerWeights& LW = w.layers[l];
      L.w_1.multiply(x.data(), u.data());
      for (int k = 0; k < 2 * w.d_mlp; ++k) u[k] += LW.b_1(k);
      for (int k = 0; k < w.d_mlp; ++k) hid[k] = u[k] * std::max(u[w.d_mlp + k], 0.0);
      L.w_2.multiply(hid.data(), delta.data());
      for (int e = 0; e < D; ++e) x[e] += delta[e] + LW.b_2(e);
    }
    check_finite(x.data(), x.size(), "residual stream");
    if (opts_.keep_residuals) residuals_[l + 1].insert(residuals_[l + 1].end(), x.begin(), x.end());
  }
  logits_.assign(V, 0.0);
  m_.w_out().multiply(x.data(), logits_.data());
  for (int t = 0; t < V; ++t) logits_[t] += w.b_out(t);
  check_finite(logits_.data(), logits_.size(), "output logits");
  ++n_;
  return logits_;
}

RowMat dense_forward(const ModelWeights& w, const std::vector<int>& tokens) {
  w.check_shapes();
  const int n = static_cast<int>(tokens.size());
  if (n > w.context_len) throw Error(ErrorCode::Runtime, "context length exceeded");
  const int D = w.d_emb, V = w.vocab.size(), H = w.n_heads, dh = w.d_head, dm = w.d_mlp;
  const double inv_sqrt_d = 1.0 / std::sqrt(static_cast<double>(dh));
  auto vecmat = [](const std::vector<double>& x, const RowMat& m) {
    std::vector<double> y(m.cols());
    for (long c = 0; c < m.cols(); ++c) {
      double acc = 0.0;
      for (long r = 0; r < m.rows(); ++r)
        if (m(r, c) != 0.0) acc += x[r] * m(r, c);
      y[c] = acc;
    }
    return y;
  };
  std::vector<std::vector<double>> X(n, std::vector<double>(D));
  for (int i = 0; i < n; ++i) {
    if (tokens[i] < 0 || tokens[i] >= V) throw Error(ErrorCode::InvalidArgument, "token id out of range");
    for (int e = 0; e < D; ++e) X[i][e] = w.token_embedding(tokens[i], e);
    X[i][w.pos_lane] += static_cast<double>(i);
  }
  for (int l = 0; l < w.n_layers; ++l) {
    const LayerWeights& L = w.layers[l];
    std::vector<std::vector<double>> A(n, std::vector<double>(static_cast<size_t>(H) * dh, 0.0));
    for (int h = 0; h < H; ++h) {
      std::vector<std::vector<double>> Q(n), K(n), Vv(n);
      for (int i = 0; i < n; ++i) {
        Q[i] = vecmat(X[i], L.heads[h].w_q);
        K[i] = vecmat(X[i], L.heads[h].w_k);
        Vv[i] = vecmat(X[i], L.heads[h].w_v);
      }
      for (int i = 0; i < n; ++i) {
        std::vector<double> s(i + 1);
        for (int j = 0; j <= i; ++j) {
          double acc = 0.0;
          for (int d = 0; d < dh; ++d)
            if (Q[i][d] != 0.0 && K[j][d] != 0.0) acc += Q[i][d] * K[j][d];
          s[j] = acc * inv_sqrt_d;
        }
        softmax(s);
        for (int j = 0; j <= i; ++j) {
          if (s[j] == 0.0) continue;
          for (int d = 0; d < dh; ++d)
            if (Vv[j][d] != 0.0) A[i][static_cast<size_t>(h) * dh + d] += s[j] * Vv[j][d];
        }
      }
    }
    for (int i = 0; i < n; ++i) {
      if (H > 0) {
        auto delta = vecmat(A[i], L.w_o);
        for (int e = 0; e < D; ++e) X[i][e] += delta[e];
      }
      if (dm > 0) {
        auto u = vecmat(X[i], L.w_1);
        for (int k = 0; k < 2 * dm; ++k) u[k] += L.b_1(k);
        std::vector<double> hid(dm);
        for (int k = 0; k < dm; ++k) hid[k] = u[k] * std::max(u[dm + k], 0.0);
        auto delta = vecmat(hid, L.w_2);
        for (int e = 0; e < D; ++e) X[i][e] += delta[e] + L.b_2(e);
      }
      check_finite(X[i].data(), X[i].size(), "residual stream");
    }
  }
  RowMat out(n, V);
  for (int i = 0; i < n; ++i) {
    auto y = vecmat(X[i], w.w_out);
    for (int t = 0; t < V; ++t) out(i, t) = y[t] + w.b_out(t);
  }
  return out;
}

DecodeResult greedy_decode(const CompiledModel& model, const std::vector<int>& prompt, const DecodeOptions& opts) {
  const ModelWeights& w = model.weights();
  if (prompt.empty()) throw Error(ErrorCode::InvalidArgument, "empty prompt");
  if (static_cast<long>(prompt.size()) > w.context_len)
    throw Error(ErrorCode::Runtime, "prompt of length " + std::to_string(prompt.size()) + " exceeds the context length");
  DecodeSession s(model, {opts.track_saturation, false});
  for (size_t k = 0; k + 1 < prompt.size(); ++k) s.push(prompt[k]);
  DecodeResult r;
  r.min_logit_gap = std::numeric_limits<double>::infinity();
  int next = prompt.back();
  const int V = w.vocab.size();
  while (true) {
    const auto& lg = s.push(next);
    int best = 0;
    for (int t = 1; t < V; ++t)
      if (lg[t] > lg[best]) best = t;
    double second = -std::numeric_limits<double>::infinity();
    for (int t = 0; t < V; ++t)
      if (t != best) second = std::max(second, lg[t]);
    r.margins.push_back(lg[best] - second);
    r.min_logit_gap = std::min(r.min_logit_gap, lg[best] - second);
    r.generated.push_back(best);
    if (best == w.vocab.sat() || best == w.vocab.unsat()) {
      r.halted = true;
      r.stop_reason = "halt";
      break;
    }
    if (opts.max_new_tokens >= 0 && static_cast<long>(r.generated.size()) >= opts.max_new_tokens) {
      r.stop_reason = "budget";
      break;
    }
    if (s.length() >= w.context_len) {
      r.stop_reason = "context";
      break;
    }
    next = best;
  }
  if (opts.track_saturation) r.saturation = s.saturation();
  return r;
}

}  // namespace sattf
