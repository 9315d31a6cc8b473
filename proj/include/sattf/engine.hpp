// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 The sattf Authors

#pragma once

#include <memory>
#include <string>
#include <vector>

#include "sattf/model.hpp"

namespace sattf {

/// Column-compressed sparse matrix for row-vector products y = x W.
struct SparseCols {
  int rows = 0, cols = 0;
  std::vector<int> col_start;  // cols + 1
  std::vector<int> row_index;
  std::vector<double> value;

  static SparseCols from_dense(const RowMat& m);
  /// y[c] = sum over rows r (ascending) of x[r] * W[r, c], for c in [0, cols).
  void multiply(const double* x, double* y) const;
  /// Same for a chosen subset of output columns, written densely into y.
  void multiply_cols(const double* x, const std::vector<int>& cols, double* y) const;
};

/// Per-head statistics comparing softmax attention with its saturated limit.
struct HeadSaturation {
  int layer = 0, head = 0;
  std::string label;
  bool certified = true;
  double max_deviation = 0.0;  // max |softmax output - saturated output| over positions and value dims
  long ambiguous_rows = 0;     // rows with a score drop farther than the tolerance from both 0 and the margin
  long rows = 0;
};

/// Inference-ready model: sparse weight structure precomputed once, shared read-only
/// by any number of sessions.
class CompiledModel {
 public:
  explicit CompiledModel(ModelWeights w);
  const ModelWeights& weights() const { return w_; }
  int vocab_size() const { return w_.vocab.size(); }

  struct Head {
    std::vector<int> qk_dims;  // dims where both W_Q and W_K have a nonzero column
    std::vector<int> v_dims;   // dims where W_V has a nonzero column
    SparseCols w_q, w_k, w_v;  // restricted to the dims above
    double inv_sqrt_d = 1.0;
    double margin = 1.0, scale = 1.0;
    bool certified = true;
    std::string label;
  };
  struct Layer {
    std::vector<Head> heads;
    SparseCols w_o, w_1, w_2;
  };
  const std::vector<Layer>& layers() const { return layers_; }
  const SparseCols& w_out() const { return w_out_; }

 private:
  ModelWeights w_;
  std::vector<Layer> layers_;
  SparseCols w_out_;
};

struct SessionOptions {
  bool track_saturation = false;
  bool keep_residuals = false;
};

/// Incremental decoding with a key/value cache. Each push runs one position through
/// the network and returns its output logits.
class DecodeSession {
 public:
  explicit DecodeSession(const CompiledModel& model, SessionOptions opts = {});
  const std::vector<double>& push(int token);
  int length() const { return n_; }
  const std::vector<double>& logits() const { return logits_; }
  /// Residual stream of `pos` at boundary b (0 = embedding, l = after layer l); needs keep_residuals.
  const double* residual(int boundary, int pos) const;
  std::vector<HeadSaturation> saturation() const;

 private:
  struct HeadCache {
    std::vector<double> k, v;
  };
  const CompiledModel& m_;
  SessionOptions opts_;
  int n_ = 0;
  std::vector<std::vector<HeadCache>> cache_;
  std::vector<double> logits_;
  std::vector<std::vector<double>> residuals_;
  std::vector<HeadSaturation> sat_;
};

/// Dense reference: logits for every position of `tokens` by plain loops over the full
/// weight matrices, summing in the same order as the sparse engine.
RowMat dense_forward(const ModelWeights& w, const std::vector<int>& tokens);

struct DecodeOptions {
  long max_new_tokens = -1;  // -1: until the context is full
  bool track_saturation = false;
};

struct DecodeResult {
  std::vector<int> generated;
  bool halted = false;
  std::string stop_reason;     // "halt", "budget" or "context"
  std::vector<double> margins; // top-1 minus top-2 logit per generated step
  double min_logit_gap = 0.0;  // smallest entry of margins
  std::vector<HeadSaturation> saturation;
};

/// Greedy decoding until SAT or UNSAT, the token budget, or the context length.
DecodeResult greedy_decode(const CompiledModel& model, const std::vector<int>& prompt, const DecodeOptions& opts = {});

}  // namespace sattf
