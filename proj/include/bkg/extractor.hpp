#pragma once

#include <cmath>
#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <unordered_set>
#include <utility>
#include <vector>

#include "bkg/encoder.hpp"
#include "bkg/params.hpp"
#include "bkg/subgraph.hpp"

namespace bkg {

struct TrainConfig {
  double lambda1 = 1.0;
  double lambda2 = 1.0;
  std::uint32_t k1 = 30;
  std::uint32_t k2 = 3;
  double lr = 1e-3;
  std::uint32_t epochs = 3;
  std::uint32_t batch = 4;
  double warmup = 0.1;             // fraction of steps under linear warmup
  std::uint64_t seed = 42;
  bool downsample_negatives = false;
  std::uint32_t negative_cap = 256;  // per example, when downsampling

  void validate() const;
};

// Token ids resolved once per example so training epochs stay cheap.
struct PreparedExample {
  std::string id;
  std::string statement;
  std::vector<Eigen::Index> statement_ids;
  std::vector<std::vector<Eigen::Index>> node_tokens;  // parallel to sg.nodes
  Subgraph subgraph;
  SupervisionSet supervision;
};

// max_statement_tokens > 0 truncates statements to that many leading tokens
// (the encoder rejects anything longer than its position table).
std::vector<PreparedExample> prepare_examples(const KnowledgeGraph& graph,
                                              const TokenVocab& vocab,
                                              std::span<const CachedExample> cached,
                                              std::size_t max_statement_tokens = 0);

// Closed-form routing over the monotone DAG (edges with d_tail = d_head + 1):
// N(c) = Σ N(u), S(c) = Σ [S(u) + N(u)·p(u→c)], s(c) = S/(N·d_c); sources and
// monotonically unreachable nodes score 0. Always 64-bit.
std::vector<double> route_paths(const Subgraph& sg, std::span<const double> edge_prob);

// Top-k1 non-source node indices by (routing desc, ConceptId asc).
std::vector<std::size_t> deactivate(const Subgraph& sg, std::span<const double> routing,
                                    std::uint32_t k1);

// Top-k2 of the active nodes by (probability desc, ConceptId asc).
std::vector<std::pair<ConceptId, double>> select_concepts(
    const Subgraph& sg, std::span<const std::size_t> active,
    std::span<const double> active_prob, std::uint32_t k2);

// Highest-sum monotone path from any source to the target node, ties resolved
// toward the earliest edge; empty when the target is monotonically unreachable.
std::vector<Triple> best_monotone_path(const Subgraph& sg,
                                       std::span<const double> edge_prob,
                                       std::size_t target_index);

// Σ include·(−[I·log p + (1−I)·log(1−p)]) with logs clamped at 1e-12.
template <typename Scalar>
ad::VarId bce_sum(ad::Tape<Scalar>& tape, ad::VarId probs,
                  const std::vector<Scalar>& labels,
                  const std::vector<Scalar>* include = nullptr) {
  const ad::Mat<Scalar>& p = tape.value(probs);
  if (p.cols() != 1 || std::cmp_not_equal(labels.size(), p.rows()))
    throw NumericalError("bce_sum shape mismatch");
  ad::Mat<Scalar> w_pos(p.rows(), 1);
  ad::Mat<Scalar> w_neg(p.rows(), 1);
  for (Eigen::Index i = 0; i < p.rows(); ++i) {
    Scalar inc = include == nullptr ? Scalar(1) : (*include)[static_cast<std::size_t>(i)];
    w_pos(i, 0) = labels[static_cast<std::size_t>(i)] * inc;
    w_neg(i, 0) = (Scalar(1) - labels[static_cast<std::size_t>(i)]) * inc;
  }
  ad::VarId log_p = tape.log(tape.clamp_min(probs, Scalar(1e-12)));
  ad::VarId log_1p = tape.log(tape.clamp_min(tape.rsub_const(Scalar(1), probs), Scalar(1e-12)));
  ad::VarId pos = tape.sum_all(tape.mul(tape.constant(std::move(w_pos)), log_p));
  ad::VarId neg = tape.sum_all(tape.mul(tape.constant(std::move(w_neg)), log_1p));
  return tape.scale(tape.add(pos, neg), Scalar(-1));
}

template <typename Scalar>
struct ExampleForward {
  ad::VarId total;                                    // λ1·L_triple + λ2·L_concept
  double triple_loss = 0.0;
  double concept_loss = 0.0;
  std::vector<double> edge_prob;                      // parallel to sg.edges
  std::vector<double> routing;                        // parallel to sg.nodes
  std::vector<std::size_t> active;                    // ranked node indices
  std::vector<std::pair<ConceptId, double>> selected; // ≤ k2, ranked
  bool empty_subgraph = false;
  bool empty_active = false;
  std::size_t bridge_pruned = 0;  // gold bridges cut by the K1 gate
};

// Full per-example graph: encode, score every triple, BCE against the path
// positives, route (detached, 64-bit), gate to K1, score active concepts,
// BCE against the bridge set, select top K2. `with_labels` controls whether
// the losses see supervision (extraction passes false).
template <typename Scalar>
ExampleForward<Scalar> forward_example(ad::Tape<Scalar>& tape, const ParamVars<Scalar>& pv,
                                       const PreparedExample& ex, const TrainConfig& cfg,
                                       bool with_labels) {
  ExampleForward<Scalar> out;
  const Subgraph& sg = ex.subgraph;
  if (sg.size() == 0) {
    out.empty_subgraph = true;
    out.empty_active = true;
    ad::VarId z = tape.constant(ad::Mat<Scalar>::Zero(1, 1));
    out.total = tape.add(tape.scale(z, static_cast<Scalar>(cfg.lambda1)),
                         tape.scale(z, static_cast<Scalar>(cfg.lambda2)));
    return out;
  }
  auto enc = encode_statement(tape, pv, ex.statement_ids);

  std::vector<ad::VarId> node_repr(sg.size());
  for (std::size_t i = 0; i < sg.size(); ++i)
    node_repr[i] = encode_concept(tape, pv, ex.node_tokens[i], sg.distance[i], enc.H);
  ad::VarId H_nodes = tape.vstack(std::move(node_repr));  // N×2d

  ad::VarId loss_t;
  if (sg.edges.empty()) {
    out.empty_subgraph = true;
    loss_t = tape.constant(ad::Mat<Scalar>::Zero(1, 1));
  } else {
    std::vector<Eigen::Index> head_ix, rel_ix, tail_ix;
    head_ix.reserve(sg.edges.size());
    rel_ix.reserve(sg.edges.size());
    tail_ix.reserve(sg.edges.size());
    for (const Triple& e : sg.edges) {
      head_ix.push_back(static_cast<Eigen::Index>(*sg.index_of(e.head)));
      rel_ix.push_back(static_cast<Eigen::Index>(e.rel));
      tail_ix.push_back(static_cast<Eigen::Index>(*sg.index_of(e.tail)));
    }
    ad::VarId h_e = tape.hcat(tape.hcat(tape.gather_rows(H_nodes, head_ix),
                                        tape.gather_rows(pv.W_r, rel_ix)),
                              tape.gather_rows(H_nodes, tail_ix));
    ad::VarId probs = tape.sigmoid(tape.matmul_nt(tape.matmul(h_e, pv.W_2), enc.h));
    const ad::Mat<Scalar>& pval = tape.value(probs);
    out.edge_prob.resize(sg.edges.size());
    for (std::size_t i = 0; i < sg.edges.size(); ++i)
      out.edge_prob[i] = static_cast<double>(pval(static_cast<Eigen::Index>(i), 0));

    if (with_labels) {
      std::unordered_set<Triple, TripleHash> pos(ex.supervision.positives.begin(),
                                                 ex.supervision.positives.end());
      std::vector<Scalar> labels(sg.edges.size(), Scalar(0));
      for (std::size_t i = 0; i < sg.edges.size(); ++i)
        if (pos.count(sg.edges[i]) > 0) labels[i] = Scalar(1);

      std::vector<Scalar> include;
      if (cfg.downsample_negatives) {
        include.assign(sg.edges.size(), Scalar(1));
        std::size_t negatives = 0;
        for (Scalar l : labels) negatives += l == Scalar(0) ? 1 : 0;
        if (negatives > cfg.negative_cap) {
          Rng pick(cfg.seed ^ fnv1a64(ex.id));
          std::vector<std::size_t> neg_idx;
          neg_idx.reserve(negatives);
          for (std::size_t i = 0; i < labels.size(); ++i)
            if (labels[i] == Scalar(0)) neg_idx.push_back(i);
          pick.shuffle(neg_idx);
          for (std::size_t i = cfg.negative_cap; i < neg_idx.size(); ++i)
            include[neg_idx[i]] = Scalar(0);
        }
      }
      loss_t = bce_sum(tape, probs, labels, include.empty() ? nullptr : &include);
    } else {
      loss_t = tape.constant(ad::Mat<Scalar>::Zero(1, 1));
    }
  }
  out.routing = route_paths(sg, out.edge_prob);
  out.active = deactivate(sg, out.routing, cfg.k1);

  ad::VarId loss_c;
  if (out.active.empty()) {
    out.empty_active = true;
    loss_c = tape.constant(ad::Mat<Scalar>::Zero(1, 1));
  } else {
    std::vector<Eigen::Index> act_ix;
    act_ix.reserve(out.active.size());
    for (std::size_t idx : out.active) act_ix.push_back(static_cast<Eigen::Index>(idx));
    ad::VarId h_act = tape.gather_rows(H_nodes, act_ix);
    ad::VarId probs = tape.sigmoid(tape.matmul_nt(tape.matmul(h_act, pv.W_3), enc.h));
    const ad::Mat<Scalar>& pval = tape.value(probs);
    std::vector<double> active_prob(out.active.size());
    for (std::size_t i = 0; i < out.active.size(); ++i)
      active_prob[i] = static_cast<double>(pval(static_cast<Eigen::Index>(i), 0));
    out.selected = select_concepts(sg, out.active, active_prob, cfg.k2);

    if (with_labels) {
      std::unordered_set<ConceptId> bridge(ex.supervision.bridge.begin(),
                                           ex.supervision.bridge.end());
      std::vector<Scalar> labels(out.active.size(), Scalar(0));
      std::unordered_set<ConceptId> kept;
      for (std::size_t i = 0; i < out.active.size(); ++i) {
        ConceptId c = sg.nodes[out.active[i]];
        if (bridge.count(c) > 0) {
          labels[i] = Scalar(1);
          kept.insert(c);
        }
      }
      out.bridge_pruned = bridge.size() - kept.size();
      loss_c = bce_sum(tape, probs, labels);
    } else {
      loss_c = tape.constant(ad::Mat<Scalar>::Zero(1, 1));
    }
  }

  out.triple_loss = static_cast<double>(tape.value(loss_t)(0, 0));
  out.concept_loss = static_cast<double>(tape.value(loss_c)(0, 0));
  out.total = tape.add(tape.scale(loss_t, static_cast<Scalar>(cfg.lambda1)),
                       tape.scale(loss_c, static_cast<Scalar>(cfg.lambda2)));
  return out;
}

struct EpochReport {
  double mean_triple = 0.0;
  double mean_concept = 0.0;
  double mean_total = 0.0;
  double dev_recall = 0.0;        // Recall@k2 on dev examples with gold bridges
  std::size_t dev_examples = 0;
  std::uint64_t coverage_missed = 0;  // bridges pruned by the K1 gate
};

struct TrainReport {
  std::vector<EpochReport> epochs;
  std::uint64_t steps = 0;
};

// Adam (β1 0.9, β2 0.999, ε 1e-8, bias-corrected) with linear warmup to a
// constant rate. Deterministic for a fixed seed: shuffles, batching, and
// gradient reduction all follow one splitmix stream and tensors() order.
// Throws NumericalError on a non-finite loss or gradient; the caller's
// on_epoch snapshots are what "last good checkpoint" refers to.
template <typename Scalar = double>
TrainReport train_model(ModelParams& params, std::span<const PreparedExample> train,
                        std::span<const PreparedExample> dev, const TrainConfig& cfg,
                        const std::function<void(std::uint32_t, const EpochReport&)>&
                            on_epoch = {});

// Mean Recall@k2 of top-k2 selections against gold bridges over examples with
// nonempty bridge sets (their count in the second slot).
template <typename Scalar = double>
std::pair<double, std::size_t> recall_at_k(const ModelParams& params,
                                           std::span<const PreparedExample> examples,
                                           const TrainConfig& cfg);

struct Bundle {
  std::string id;
  std::string statement;
  std::vector<std::pair<std::string, double>> selected;  // concept surface, prob
  std::vector<std::vector<Triple>> paths;                // one per selection
};

template <typename Scalar = double>
Bundle extract_bundle(const KnowledgeGraph& graph, const ModelParams& params,
                      const PreparedExample& ex, const TrainConfig& cfg);

// One JSON object per line; parse_bundle reads selections back (paths are
// reported, not consumed).
std::string bundle_to_json(const KnowledgeGraph& graph, const Bundle& bundle);
struct ParsedBundle {
  std::string id;
  std::string statement;
  std::vector<std::pair<std::string, double>> selected;
};
ParsedBundle parse_bundle(const std::string& json_line, std::size_t lineno);

}  // namespace bkg
