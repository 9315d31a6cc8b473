// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 The sattf Authors

#pragma once

#include <Eigen/Dense>
#include <string>
#include <vector>

#include "sattf/vocab.hpp"

namespace sattf {

using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

/// Bundle format version written to and required from manifests.
inline constexpr int kBundleFormatVersion = 1;

struct CompilerConfig {
  double beta = 20.0;            // softmax exactness scale
  double nonsep_penalty = 20.0;  // score penalty for non-clause positions
  int context_len = 1024;        // longest supported sequence
  int float_width = 32;          // 32 or 64 bit emitted weights
};

/// One attention head: row-vector convention, q = x W_Q with x in R^{d_emb}.
struct HeadWeights {
  RowMat w_q, w_k, w_v;  // d_emb x d_head
};

struct LayerWeights {
  std::vector<HeadWeights> heads;
  RowMat w_o;          // (H d_head) x d_emb
  RowMat w_1;          // d_emb x 2 d_mlp: linear branch, then gate branch
  Eigen::VectorXd b_1; // 2 d_mlp
  RowMat w_2;          // d_mlp x d_emb
  Eigen::VectorXd b_2; // d_emb
};

struct LaneRange {
  std::string label;
  int node = -1;
  int start = 0, end = 0;
};

struct HeadInfo {
  std::string label;
  int node = -1;
  int q_dim = 0, v_dim = 0;
  double scale = 1.0, margin = 1.0, bos_weight = 0.0;
  bool certified = true;
};

struct MlpSegment {
  std::string label;
  int node = -1;
  int hidden_start = 0, hidden_end = 0;
};

/// Immutable compiled Transformer. The residual stream starts as the token embedding
/// row plus the position index added on lane `pos_lane`.
struct ModelWeights {
  Vocabulary vocab;
  int d_emb = 0, d_head = 1, d_mlp = 1, n_layers = 0, n_heads = 0;
  int pos_lane = -1;
  int context_len = 0;
  int float_width = 32;
  RowMat token_embedding;  // V x d_emb
  std::vector<LayerWeights> layers;
  RowMat w_out;            // d_emb x V
  Eigen::VectorXd b_out;   // V

  std::vector<LaneRange> lanes;
  std::vector<std::vector<HeadInfo>> head_table;
  std::vector<std::vector<MlpSegment>> mlp_table;
  std::string config_json = "{}";  // configuration echo

  /// Dense parameter count, excluding the positional rule.
  long parameter_count() const;
  /// Throws Error when shapes disagree with the declared dimensions.
  void check_shapes() const;
};

/// Writes `dir/manifest.json` and `dir/weights.bin`.
void save_bundle(const ModelWeights& w, const std::string& dir);
/// Reads a bundle written by save_bundle; values round-trip bit-exactly.
ModelWeights load_bundle(const std::string& dir);

}  // namespace sattf
