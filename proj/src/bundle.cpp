// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 The sattf Authors

#include <bit>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "json.hpp"
#include "sattf/error.hpp"
#include "sattf/model.hpp"

namespace sattf {
namespace {

using nlohmann::json;

Error io_error(const std::string& what) { return Error(ErrorCode::Io, what); }
Error format_error(const std::string& what) { return Error(ErrorCode::Parse, "bundle: " + what); }

struct TensorRef {
  std::string name;
  long rows, cols;
  double* data;
};

// All tensors in blob order.
template <typename W>
std::vector<TensorRef> tensors(W& w) {
  std::vector<TensorRef> out;
  auto add = [&](const std::string& name, auto& m) {
    out.push_back({name, static_cast<long>(m.rows()), static_cast<long>(m.cols()), const_cast<double*>(m.data())});
  };
  add("token_embedding", w.token_embedding);
  for (size_t l = 0; l < w.layers.size(); ++l) {
    auto& L = w.layers[l];
    const std::string p = "layers." + std::to_string(l) + ".";
    for (size_t h = 0; h < L.heads.size(); ++h) {
      const std::string hp = p + "heads." + std::to_string(h) + ".";
      add(hp + "w_q", L.heads[h].w_q);
      add(hp + "w_k", L.heads[h].w_k);
      add(hp + "w_v", L.heads[h].w_v);
    }
    add(p + "w_o", L.w_o);
    add(p + "w_1", L.w_1);
    add(p + "b_1", L.b_1);
    add(p + "w_2", L.w_2);
    add(p + "b_2", L.b_2);
  }
  add("w_out", w.w_out);
  add("b_out", w.b_out);
  return out;
}

template <typename T>
void put_le(std::string& buf, T v) {
  for (size_t k = 0; k < sizeof(T); ++k) buf.push_back(static_cast<char>((v >> (8 * k)) & 0xFF));
}

template <typename T>
T get_le(const char* p) {
  T v = 0;
  for (size_t k = 0; k < sizeof(T); ++k) v |= static_cast<T>(static_cast<unsigned char>(p[k])) << (8 * k);
  return v;
}

}  // namespace

long ModelWeights::parameter_count() const {
  long n = 0;
  for (const auto& t : tensors(*this)) n += t.rows * t.cols;
  return n;
}

void ModelWeights::check_shapes() const {
  auto expect = [](bool ok, const std::string& what) {
    if (!ok) throw Error(ErrorCode::InvalidArgument, "model shape mismatch: " + what);
  };
  const long V = vocab.size();
  expect(token_embedding.rows() == V && token_embedding.cols() == d_emb, "token_embedding");
  expect(static_cast<int>(layers.size()) == n_layers, "layer count");
  for (const auto& L : layers) {
    expect(static_cast<int>(L.heads.size()) == n_heads, "head count");
    for (const auto& h : L.heads)
      for (const RowMat* m : {&h.w_q, &h.w_k, &h.w_v}) expect(m->rows() == d_emb && m->cols() == d_head, "head weights");
    expect(L.w_o.rows() == static_cast<long>(n_heads) * d_head && L.w_o.cols() == d_emb, "w_o");
    expect(L.w_1.rows() == d_emb && L.w_1.cols() == 2L * d_mlp, "w_1");
    expect(L.b_1.size() == 2L * d_mlp, "b_1");
    expect(L.w_2.rows() == d_mlp && L.w_2.cols() == d_emb, "w_2");
    expect(L.b_2.size() == d_emb, "b_2");
  }
  expect(w_out.rows() == d_emb && w_out.cols() == V, "w_out");
  expect(b_out.size() == V, "b_out");
  expect(pos_lane >= 0 && pos_lane < d_emb, "pos_lane");
  expect(float_width == 32 || float_width == 64, "float_width");
}

void save_bundle(const ModelWeights& w, const std::string& dir) {
  w.check_shapes();
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw io_error("cannot create directory " + dir + ": " + ec.message());
  const size_t elem = w.float_width == 32 ? 4 : 8;
  json m;
  m["format_version"] = kBundleFormatVersion;
  m["vocab"] = w.vocab.tokens();
  m["num_vars"] = w.vocab.num_vars();
  m["dims"] = {{"d_emb", w.d_emb}, {"d_head", w.d_head}, {"d_mlp", w.d_mlp}, {"n_layers", w.n_layers},
               {"n_heads", w.n_heads}, {"vocab_size", w.vocab.size()}, {"context_len", w.context_len},
               {"pos_lane", w.pos_lane}};
  m["dtype"] = w.float_width == 32 ? "float32" : "float64";
  m["byte_order"] = "little";
  std::string blob;
  json list = json::array();
  for (const auto& t : tensors(w)) {
    list.push_back({{"name", t.name}, {"shape", {t.rows, t.cols}}, {"offset", blob.size()}});
    for (long i = 0; i < t.rows * t.cols; ++i) {
      if (elem == 4) {
        float f = static_cast<float>(t.data[i]);
        if (static_cast<double>(f) != t.data[i]) throw Error(ErrorCode::InvalidArgument, "tensor " + t.name + " is not float32-representable");
        put_le(blob, std::bit_cast<uint32_t>(f));
      } else {
        put_le(blob, std::bit_cast<uint64_t>(t.data[i]));
      }
    }
  }
  m["tensors"] = list;
  m["weights_bytes"] = blob.size();
  json lanes = json::array();
  for (const auto& l : w.lanes) lanes.push_back({{"label", l.label}, {"node", l.node}, {"start", l.start}, {"end", l.end}});
  m["lanes"] = lanes;
  json heads = json::array();
  for (const auto& layer : w.head_table) {
    json row = json::array();
    for (const auto& h : layer)
      row.push_back({{"label", h.label}, {"node", h.node}, {"q_dim", h.q_dim}, {"v_dim", h.v_dim}, {"scale", h.scale},
                     {"margin", h.margin}, {"bos_weight", h.bos_weight}, {"certified", h.certified}});
    heads.push_back(row);
  }
  m["heads"] = heads;
  json mlps = json::array();
  for (const auto& layer : w.mlp_table) {
    json row = json::array();
    for (const auto& s : layer)
      row.push_back({{"label", s.label}, {"node", s.node}, {"hidden_start", s.hidden_start}, {"hidden_end", s.hidden_end}});
    mlps.push_back(row);
  }
  m["mlps"] = mlps;
  json cfg = json::parse(w.config_json, nullptr, false);
  m["config"] = cfg.is_discarded() ? json::object() : cfg;

  const auto base = std::filesystem::path(dir);
  {
    std::ofstream f(base / "weights.bin", std::ios::binary);
    if (!f) throw io_error("cannot write " + (base / "weights.bin").string());
    f.write(blob.data(), static_cast<std::streamsize>(blob.size()));
    if (!f) throw io_error("write failed for weights.bin");
  }
  {
    std::ofstream f(base / "manifest.json");
    if (!f) throw io_error("cannot write " + (base / "manifest.json").string());
    f << m.dump(2) << "\n";
    if (!f) throw io_error("write failed for manifest.json");
  }
}

ModelWeights load_bundle(const std::string& dir) {
  const auto base = std::filesystem::path(dir);
  std::ifstream mf(base / "manifest.json");
  if (!mf) throw io_error("cannot open " + (base / "manifest.json").string());
  json m;
  try {
    m = json::parse(mf);
  } catch (const json::exception& e) {
    throw format_error(std::string("malformed manifest: ") + e.what());
  }
  std::ifstream bf(base / "weights.bin", std::ios::binary);
  if (!bf) throw io_error("cannot open " + (base / "weights.bin").string());
  std::stringstream ss;
  ss << bf.rdbuf();
  const std::string blob = ss.str();

  ModelWeights w;
  try {
    if (m.at("format_version").get<int>() != kBundleFormatVersion)
      throw format_error("unsupported format_version " + m.at("format_version").dump());
    w.vocab = Vocabulary(m.at("num_vars").get<int>());
    if (m.at("vocab").get<std::vector<std::string>>() != w.vocab.tokens()) throw format_error("vocabulary mismatch");
    const auto& d = m.at("dims");
    w.d_emb = d.at("d_emb");
    w.d_head = d.at("d_head");
    w.d_mlp = d.at("d_mlp");
    w.n_layers = d.at("n_layers");
    w.n_heads = d.at("n_heads");
    w.context_len = d.at("context_len");
    w.pos_lane = d.at("pos_lane");
    const std::string dtype = m.at("dtype");
    if (dtype != "float32" && dtype != "float64") throw format_error("unknown dtype " + dtype);
    w.float_width = dtype == "float32" ? 32 : 64;
    if (blob.size() != m.at("weights_bytes").get<size_t>()) throw format_error("weights.bin size mismatch");
    if (w.d_emb < 0 || w.d_head < 0 || w.d_mlp < 0 || w.n_layers < 0 || w.n_heads < 0) throw format_error("negative dimension");

    w.token_embedding.resize(w.vocab.size(), w.d_emb);
    w.layers.resize(w.n_layers);
    for (auto& L : w.layers) {
      L.heads.resize(w.n_heads);
      for (auto& h : L.heads) {
        h.w_q.resize(w.d_emb, w.d_head);
        h.w_k.resize(w.d_emb, w.d_head);
        h.w_v.resize(w.d_emb, w.d_head);
      }
      L.w_o.resize(static_cast<long>(w.n_heads) * w.d_head, w.d_emb);
      L.w_1.resize(w.d_emb, 2L * w.d_mlp);
      L.b_1.resize(2L * w.d_mlp);
      L.w_2.resize(w.d_mlp, w.d_emb);
      L.b_2.resize(w.d_emb);
    }
    w.w_out.resize(w.d_emb, w.vocab.size());
    w.b_out.resize(w.vocab.size());

    const size_t elem = w.float_width == 32 ? 4 : 8;
    auto refs = tensors(w);
    const auto& list = m.at("tensors");
    if (list.size() != refs.size()) throw format_error("tensor count mismatch");
    for (size_t i = 0; i < refs.size(); ++i) {
      const auto& t = refs[i];
      const auto& e = list[i];
      if (e.at("name").get<std::string>() != t.name) throw format_error("unexpected tensor " + e.at("name").dump());
      auto shape = e.at("shape").get<std::vector<long>>();
      if (shape.size() != 2 || shape[0] != t.rows || shape[1] != t.cols) throw format_error("shape mismatch for " + t.name);
      size_t off = e.at("offset").get<size_t>();
      size_t count = static_cast<size_t>(t.rows * t.cols);
      if (off > blob.size() || count * elem > blob.size() - off) throw format_error("tensor " + t.name + " out of bounds");
      for (size_t k = 0; k < count; ++k) {
        const char* p = blob.data() + off + k * elem;
        t.data[k] = elem == 4 ? static_cast<double>(std::bit_cast<float>(get_le<uint32_t>(p)))
                              : std::bit_cast<double>(get_le<uint64_t>(p));
      }
    }
    for (const auto& l : m.at("lanes")) w.lanes.push_back({l.at("label"), l.at("node"), l.at("start"), l.at("end")});
    for (const auto& row : m.at("heads")) {
      w.head_table.emplace_back();
      for (const auto& h : row)
        w.head_table.back().push_back({h.at("label"), h.at("node"), h.at("q_dim"), h.at("v_dim"), h.at("scale"),
                                       h.at("margin"), h.at("bos_weight"), h.at("certified")});
    }
    for (const auto& row : m.at("mlps")) {
      w.mlp_table.emplace_back();
      for (const auto& s : row)
        w.mlp_table.back().push_back({s.at("label"), s.at("node"), s.at("hidden_start"), s.at("hidden_end")});
    }
    w.config_json = m.at("config").dump();
  } catch (const json::exception& e) {
    throw format_error(std::string("malformed manifest: ") + e.what());
  }
  w.check_shapes();
  return w;
}

}  // namespace sattf
