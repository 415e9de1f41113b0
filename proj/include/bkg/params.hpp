#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include "bkg/autograd.hpp"
#include "bkg/common.hpp"
#include "bkg/kg.hpp"

namespace bkg {

using DMat = ad::Mat<double>;

struct Dims {
  Eigen::Index vocab = 0;      // token vocabulary rows, id 0 = <unk>
  Eigen::Index d = 64;
  Eigen::Index L = 1;          // encoder blocks
  Eigen::Index max_len = 64;   // position table rows
  Eigen::Index max_dist = 4;   // distance table has max_dist + 2 rows (clamp + far)
  Eigen::Index n_relations = 34;

  Eigen::Index dist_rows() const { return max_dist + 2; }
  bool operator==(const Dims&) const = default;
};

// Statement/concept token ids. Derived from the graph's concept surfaces:
// sorted unique whitespace tokens, with id 0 reserved for <unk>.
struct TokenVocab {
  std::vector<std::string> tokens;
  std::unordered_map<std::string, std::uint32_t> index;

  static TokenVocab from_graph(const KnowledgeGraph& graph);

  std::size_t size() const { return tokens.size(); }
  std::uint32_t id_of(const std::string& token) const {
    auto it = index.find(token);
    return it == index.end() ? 0u : it->second;
  }
  std::vector<Eigen::Index> ids(std::span<const std::string> toks) const {
    std::vector<Eigen::Index> out;
    out.reserve(toks.size());
    for (const auto& t : toks) out.push_back(static_cast<Eigen::Index>(id_of(t)));
    return out;
  }
};

// All trainable tensors, 64-bit. tensors() fixes the canonical order used by
// initialization, checkpoints, gradient reduction, and the optimizer.
struct ModelParams {
  struct Block {
    DMat Wq, Wk, Wv;    // d×d
    DMat Wff1;          // d×2d
    DMat bff1;          // 1×2d
    DMat Wff2;          // 2d×d
    DMat bff2;          // 1×d
  };

  Dims dims;
  DMat W_e;                  // vocab×d token embeddings
  DMat W_p;                  // max_len×d positions
  std::vector<Block> blocks; // dims.L entries
  DMat bi_w1;                // d×1 similarity weight on concept rows
  DMat bi_w2;                // 1×d similarity weight on statement rows
  DMat bi_w3;                // 1×d elementwise similarity weights
  DMat mlp_W;                // 2d×d fusion transform
  DMat mlp_b;                // 1×d
  DMat W_d;                  // (max_dist+2)×d distance rows, last = far
  DMat W_r;                  // n_relations×d relation embeddings
  DMat W_2;                  // 5d×d triple bilinear form
  DMat W_3;                  // 2d×d selection bilinear form

  ModelParams() = default;
  explicit ModelParams(const Dims& dm);

  // Uniform ±1/√d for tables, zeros for biases, drawn in tensors() order.
  void init(Rng& rng);

  std::vector<std::pair<std::string, DMat*>> tensors();
  std::vector<std::pair<std::string, const DMat*>> tensors() const;

  bool operator==(const ModelParams&) const = default;
};

// Per-tape handles for every tensor, leased in tensors() order.
template <typename Scalar>
struct ParamVars {
  Dims dims;
  ad::VarId W_e, W_p;
  struct Block {
    ad::VarId Wq, Wk, Wv, Wff1, bff1, Wff2, bff2;
  };
  std::vector<Block> blocks;
  ad::VarId bi_w1, bi_w2, bi_w3, mlp_W, mlp_b, W_d, W_r, W_2, W_3;
  std::vector<ad::VarId> ordered;  // parallel to ModelParams::tensors()
};

template <typename Scalar>
ParamVars<Scalar> lease_params(ad::Tape<Scalar>& tape, const ModelParams& p,
                               bool needs_grad) {
  ParamVars<Scalar> v;
  v.dims = p.dims;
  auto named = p.tensors();
  std::size_t next = 0;
  auto take = [&]() {
    const auto& [name, mat] = named[next++];
    ad::VarId id = tape.input(mat->template cast<Scalar>(), needs_grad, name);
    v.ordered.push_back(id);
    return id;
  };
  v.W_e = take();
  v.W_p = take();
  for (Eigen::Index b = 0; b < p.dims.L; ++b) {
    typename ParamVars<Scalar>::Block blk;
    blk.Wq = take();
    blk.Wk = take();
    blk.Wv = take();
    blk.Wff1 = take();
    blk.bff1 = take();
    blk.Wff2 = take();
    blk.bff2 = take();
    v.blocks.push_back(blk);
  }
  v.bi_w1 = take();
  v.bi_w2 = take();
  v.bi_w3 = take();
  v.mlp_W = take();
  v.mlp_b = take();
  v.W_d = take();
  v.W_r = take();
  v.W_2 = take();
  v.W_3 = take();
  return v;
}

// Checkpoint container: magic "BKGM", version, d, L, vocab checksum, then
// named tensors (name, rows, cols, row-major f64).
void save_checkpoint(const std::string& path, const ModelParams& params,
                     std::uint64_t vocab_checksum);

struct LoadedCheckpoint {
  ModelParams params;
  std::uint64_t vocab_checksum = 0;
};
LoadedCheckpoint load_checkpoint(const std::string& path,
                                 std::optional<std::uint64_t> expected_checksum = {});

}  // namespace bkg
