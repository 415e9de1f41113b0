#pragma once

#include <algorithm>
#include <cmath>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "bkg/autograd.hpp"
#include "bkg/params.hpp"
#include "bkg/subgraph.hpp"

namespace bkg {

template <typename Scalar>
struct StatementEncoding {
  ad::VarId H;  // N×d context rows
  ad::VarId h;  // 1×d column-max pool
  std::size_t n_tokens = 0;
};

// H⁰ = W_e[tokens] + W_p[0..N); each block applies single-head scaled
// dot-product self-attention with a residual, then a two-layer relu
// feed-forward with a residual. h = column max of the last layer.
template <typename Scalar>
StatementEncoding<Scalar> encode_statement(ad::Tape<Scalar>& tape,
                                           const ParamVars<Scalar>& pv,
                                           std::span<const Eigen::Index> token_ids) {
  if (token_ids.empty()) throw DataError("statement has no tokens");
  if (std::cmp_greater(token_ids.size(), pv.dims.max_len))
    throw DataError("statement of " + std::to_string(token_ids.size()) +
                    " tokens exceeds max_len " + std::to_string(pv.dims.max_len));
  std::vector<Eigen::Index> tok(token_ids.begin(), token_ids.end());
  std::vector<Eigen::Index> pos(token_ids.size());
  for (std::size_t i = 0; i < pos.size(); ++i) pos[i] = static_cast<Eigen::Index>(i);

  ad::VarId H = tape.add(tape.gather_rows(pv.W_e, std::move(tok)),
                         tape.gather_rows(pv.W_p, std::move(pos)));
  Scalar inv_sqrt_d = Scalar(1) / std::sqrt(static_cast<Scalar>(pv.dims.d));
  for (const auto& blk : pv.blocks) {
    ad::VarId q = tape.matmul(H, blk.Wq);
    ad::VarId k = tape.matmul(H, blk.Wk);
    ad::VarId v = tape.matmul(H, blk.Wv);
    ad::VarId attn = tape.softmax_rows(tape.scale(tape.matmul_nt(q, k), inv_sqrt_d));
    H = tape.add(H, tape.matmul(attn, v));
    ad::VarId ff = tape.relu(tape.add_row_bcast(tape.matmul(H, blk.Wff1), blk.bff1));
    ff = tape.add_row_bcast(tape.matmul(ff, blk.Wff2), blk.bff2);
    H = tape.add(H, ff);
  }
  StatementEncoding<Scalar> out;
  out.H = H;
  out.h = tape.colwise_max(H);
  out.n_tokens = token_ids.size();
  return out;
}

// Distance table row: finite distances clamp to max_dist, the unreachable
// sentinel takes the dedicated far row.
inline Eigen::Index distance_row(std::uint32_t d_c, const Dims& dims) {
  if (d_c == kUnreachableDist) return dims.max_dist + 1;
  return std::min<Eigen::Index>(static_cast<Eigen::Index>(d_c), dims.max_dist);
}

// h_c = [mlp(colmax([H_tok ; H_con])) ; W_d row]: concept tokens attend to
// statement rows through the trainable similarity
// S_ij = w1·u_i + w2·v_j + w3·(u_i ⊙ v_j), row-softmaxed into convex
// combinations H_con of statement rows.
template <typename Scalar>
ad::VarId encode_concept(ad::Tape<Scalar>& tape, const ParamVars<Scalar>& pv,
                         std::span<const Eigen::Index> concept_token_ids,
                         std::uint32_t d_c, ad::VarId H_x) {
  if (concept_token_ids.empty()) throw DataError("concept has no tokens");
  std::vector<Eigen::Index> tok(concept_token_ids.begin(), concept_token_ids.end());
  ad::VarId H_tok = tape.gather_rows(pv.W_e, std::move(tok));

  ad::VarId cross = tape.matmul_nt(tape.mul_row_bcast(H_tok, pv.bi_w3), H_x);
  ad::VarId S = tape.add_col_bcast(cross, tape.matmul(H_tok, pv.bi_w1));
  S = tape.add_row_bcast(S, tape.matmul_nt(pv.bi_w2, H_x));
  ad::VarId H_con = tape.matmul(tape.softmax_rows(S), H_x);

  ad::VarId pooled = tape.colwise_max(tape.hcat(H_tok, H_con));
  ad::VarId h_text = tape.add(tape.matmul(pooled, pv.mlp_W), pv.mlp_b);
  ad::VarId h_dist = tape.gather_rows(pv.W_d, {distance_row(d_c, pv.dims)});
  return tape.hcat(h_text, h_dist);
}

}  // namespace bkg
