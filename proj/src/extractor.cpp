#include "bkg/extractor.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "bkg/text.hpp"
#include "json.hpp"

namespace bkg {

namespace {

// index_of(tail) per edge, cached for the routing and path passes
std::vector<std::size_t> tail_indices(const Subgraph& sg) {
  std::vector<std::size_t> out(sg.edges.size());
  for (std::size_t e = 0; e < sg.edges.size(); ++e)
    out[e] = *sg.index_of(sg.edges[e].tail);
  return out;
}

// node indices ordered by (distance asc, index asc), unreachable dropped
std::vector<std::size_t> distance_order(const Subgraph& sg) {
  std::vector<std::size_t> order;
  order.reserve(sg.size());
  for (std::size_t i = 0; i < sg.size(); ++i)
    if (sg.distance[i] != kUnreachableDist) order.push_back(i);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return sg.distance[a] < sg.distance[b];
  });
  return order;
}

}  // namespace

void TrainConfig::validate() const {
  if (lambda1 < 0 || lambda2 < 0) throw ConfigError("loss weights must be nonnegative");
  if (k1 == 0 || k2 == 0) throw ConfigError("selection thresholds must be positive");
  if (k2 > k1) throw ConfigError("k2 must not exceed k1");
  if (!(lr >= 0) || !std::isfinite(lr)) throw ConfigError("learning rate out of range");
  if (epochs == 0 || batch == 0) throw ConfigError("epochs and batch size must be positive");
  if (!(warmup >= 0.0 && warmup <= 1.0)) throw ConfigError("warmup fraction must be in [0,1]");
}

std::vector<PreparedExample> prepare_examples(const KnowledgeGraph& graph,
                                              const TokenVocab& vocab,
                                              std::span<const CachedExample> cached,
                                              std::size_t max_statement_tokens) {
  std::vector<PreparedExample> out;
  out.reserve(cached.size());
  for (const CachedExample& ce : cached) {
    PreparedExample pe;
    pe.id = ce.id;
    for (std::size_t i = 0; i < ce.statement_tokens.size(); ++i) {
      if (i > 0) pe.statement += ' ';
      pe.statement += ce.statement_tokens[i];
    }
    pe.statement_ids = vocab.ids(ce.statement_tokens);
    if (max_statement_tokens > 0 && pe.statement_ids.size() > max_statement_tokens)
      pe.statement_ids.resize(max_statement_tokens);
    pe.subgraph = ce.subgraph;
    pe.supervision = ce.supervision;
    pe.node_tokens.reserve(pe.subgraph.size());
    for (ConceptId c : pe.subgraph.nodes) {
      auto ids = vocab.ids(tokenize(graph.surface(c)));
      if (ids.empty()) ids.push_back(0);  // punctuation-only surface → <unk>
      pe.node_tokens.push_back(std::move(ids));
    }
    out.push_back(std::move(pe));
  }
  return out;
}

std::vector<double> route_paths(const Subgraph& sg, std::span<const double> edge_prob) {
  if (edge_prob.size() != sg.edges.size())
    throw NumericalError("routing needs one probability per subgraph edge");
  std::vector<double> n_paths(sg.size(), 0.0);
  std::vector<double> sum_scores(sg.size(), 0.0);
  for (std::size_t i = 0; i < sg.size(); ++i)
    if (sg.distance[i] == 0) n_paths[i] = 1.0;

  auto tails = tail_indices(sg);
  for (std::size_t u : distance_order(sg)) {
    if (n_paths[u] == 0.0) continue;  // not monotonically reachable
    for (std::uint64_t e = sg.edge_offsets[u]; e < sg.edge_offsets[u + 1]; ++e) {
      std::size_t v = tails[e];
      if (sg.distance[v] != sg.distance[u] + 1) continue;
      n_paths[v] += n_paths[u];
      sum_scores[v] += sum_scores[u] + n_paths[u] * edge_prob[e];
    }
  }

  std::vector<double> s(sg.size(), 0.0);
  for (std::size_t i = 0; i < sg.size(); ++i) {
    std::uint32_t d = sg.distance[i];
    if (d == 0 || d == kUnreachableDist || n_paths[i] == 0.0) continue;
    s[i] = sum_scores[i] / (n_paths[i] * static_cast<double>(d));
  }
  return s;
}

std::vector<std::size_t> deactivate(const Subgraph& sg, std::span<const double> routing,
                                    std::uint32_t k1) {
  if (routing.size() != sg.size())
    throw NumericalError("deactivation needs one routing score per node");
  std::vector<std::size_t> ranked;
  ranked.reserve(sg.size());
  for (std::size_t i = 0; i < sg.size(); ++i)
    if (!std::binary_search(sg.sources.begin(), sg.sources.end(), sg.nodes[i]))
      ranked.push_back(i);
  std::sort(ranked.begin(), ranked.end(), [&](std::size_t a, std::size_t b) {
    if (routing[a] != routing[b]) return routing[a] > routing[b];
    return a < b;  // nodes ascend, so index order is ConceptId order
  });
  if (ranked.size() > k1) ranked.resize(k1);
  return ranked;
}

std::vector<std::pair<ConceptId, double>> select_concepts(
    const Subgraph& sg, std::span<const std::size_t> active,
    std::span<const double> active_prob, std::uint32_t k2) {
  if (active_prob.size() != active.size())
    throw NumericalError("selection needs one probability per active node");
  std::vector<std::size_t> order(active.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    if (active_prob[a] != active_prob[b]) return active_prob[a] > active_prob[b];
    return sg.nodes[active[a]] < sg.nodes[active[b]];
  });
  std::vector<std::pair<ConceptId, double>> out;
  out.reserve(std::min<std::size_t>(k2, order.size()));
  for (std::size_t i = 0; i < order.size() && i < k2; ++i)
    out.emplace_back(sg.nodes[active[order[i]]], active_prob[order[i]]);
  return out;
}

std::vector<Triple> best_monotone_path(const Subgraph& sg,
                                       std::span<const double> edge_prob,
                                       std::size_t target_index) {
  if (edge_prob.size() != sg.edges.size())
    throw NumericalError("path search needs one probability per subgraph edge");
  if (target_index >= sg.size()) throw DataError("path target outside subgraph");
  if (sg.distance[target_index] == 0 || sg.distance[target_index] == kUnreachableDist)
    return {};

  constexpr std::uint64_t kNoEdge = std::numeric_limits<std::uint64_t>::max();
  std::vector<double> best(sg.size(), -std::numeric_limits<double>::infinity());
  std::vector<std::uint64_t> back(sg.size(), kNoEdge);
  for (std::size_t i = 0; i < sg.size(); ++i)
    if (sg.distance[i] == 0) best[i] = 0.0;

  auto tails = tail_indices(sg);
  for (std::size_t u : distance_order(sg)) {
    if (best[u] == -std::numeric_limits<double>::infinity()) continue;
    for (std::uint64_t e = sg.edge_offsets[u]; e < sg.edge_offsets[u + 1]; ++e) {
      std::size_t v = tails[e];
      if (sg.distance[v] != sg.distance[u] + 1) continue;
      double cand = best[u] + edge_prob[e];
      if (cand > best[v]) {  // strict: ties keep the earliest edge
        best[v] = cand;
        back[v] = e;
      }
    }
  }
  if (back[target_index] == kNoEdge) return {};

  std::vector<Triple> path;
  std::size_t at = target_index;
  while (back[at] != kNoEdge) {
    const Triple& t = sg.edges[back[at]];
    path.push_back(t);
    at = *sg.index_of(t.head);
  }
  std::reverse(path.begin(), path.end());
  return path;
}

namespace {

struct AdamState {
  std::vector<DMat> m, v;
  std::uint64_t t = 0;
};

void adam_step(ModelParams& params, const std::vector<DMat>& grads, AdamState& st,
               double lr_t) {
  constexpr double b1 = 0.9, b2 = 0.999, eps = 1e-8;
  auto named = params.tensors();
  ++st.t;
  double c1 = 1.0 - std::pow(b1, static_cast<double>(st.t));
  double c2 = 1.0 - std::pow(b2, static_cast<double>(st.t));
  for (std::size_t i = 0; i < named.size(); ++i) {
    DMat& p = *named[i].second;
    const DMat& g = grads[i];
    st.m[i] = b1 * st.m[i] + (1.0 - b1) * g;
    st.v[i] = (b2 * st.v[i].array() + (1.0 - b2) * g.array().square()).matrix();
    p -= (lr_t * (st.m[i] / c1).array() /
          ((st.v[i] / c2).array().sqrt() + eps))
             .matrix();
  }
}

}  // namespace

template <typename Scalar>
TrainReport train_model(ModelParams& params, std::span<const PreparedExample> train,
                        std::span<const PreparedExample> dev, const TrainConfig& cfg,
                        const std::function<void(std::uint32_t, const EpochReport&)>&
                            on_epoch) {
  cfg.validate();
  if (train.empty()) throw DataError("training set is empty");

  auto named = params.tensors();
  AdamState st;
  for (auto& [name, mat] : named) {
    st.m.push_back(DMat::Zero(mat->rows(), mat->cols()));
    st.v.push_back(DMat::Zero(mat->rows(), mat->cols()));
  }

  std::size_t n = train.size();
  std::uint64_t batches_per_epoch = (n + cfg.batch - 1) / cfg.batch;
  std::uint64_t total_steps = batches_per_epoch * cfg.epochs;
  auto warmup_steps =
      static_cast<std::uint64_t>(std::ceil(cfg.warmup * static_cast<double>(total_steps)));

  Rng shuffle_rng(cfg.seed);
  TrainReport rep;
  std::uint64_t step = 0;
  std::vector<std::size_t> order(n);
  for (std::size_t i = 0; i < n; ++i) order[i] = i;
  std::vector<DMat> accum;
  for (auto& [name, mat] : named) accum.push_back(DMat::Zero(mat->rows(), mat->cols()));

  for (std::uint32_t epoch = 1; epoch <= cfg.epochs; ++epoch) {
    shuffle_rng.shuffle(order);
    EpochReport er;
    double sum_t = 0, sum_c = 0, sum_tot = 0;
    for (std::size_t start = 0; start < n; start += cfg.batch) {
      std::size_t m_batch = std::min<std::size_t>(cfg.batch, n - start);
      for (DMat& a : accum) a.setZero();
      for (std::size_t k = 0; k < m_batch; ++k) {
        const PreparedExample& ex = train[order[start + k]];
        ad::Tape<Scalar> tape;
        auto pv = lease_params(tape, params, true);
        auto fwd = forward_example(tape, pv, ex, cfg, true);
        double total = static_cast<double>(tape.value(fwd.total)(0, 0));
        if (!std::isfinite(total))
          throw NumericalError("non-finite loss on example " + ex.id);
        tape.backward(fwd.total);
        for (std::size_t i = 0; i < accum.size(); ++i)
          accum[i] += tape.grad(pv.ordered[i]).template cast<double>() /
                      static_cast<double>(m_batch);
        sum_t += fwd.triple_loss;
        sum_c += fwd.concept_loss;
        sum_tot += total;
        er.coverage_missed += fwd.bridge_pruned;
      }
      ++step;
      double lr_t = cfg.lr;
      if (warmup_steps > 0 && step <= warmup_steps)
        lr_t = cfg.lr * static_cast<double>(step) / static_cast<double>(warmup_steps);
      adam_step(params, accum, st, lr_t);
    }
    er.mean_triple = sum_t / static_cast<double>(n);
    er.mean_concept = sum_c / static_cast<double>(n);
    er.mean_total = sum_tot / static_cast<double>(n);
    auto [recall, counted] = recall_at_k<Scalar>(params, dev, cfg);
    er.dev_recall = recall;
    er.dev_examples = counted;
    rep.epochs.push_back(er);
    if (on_epoch) on_epoch(epoch, er);
  }
  rep.steps = step;
  return rep;
}

template <typename Scalar>
std::pair<double, std::size_t> recall_at_k(const ModelParams& params,
                                           std::span<const PreparedExample> examples,
                                           const TrainConfig& cfg) {
  double sum = 0.0;
  std::size_t counted = 0;
  for (const PreparedExample& ex : examples) {
    if (ex.supervision.bridge.empty()) continue;
    ad::Tape<Scalar> tape;
    auto pv = lease_params(tape, params, false);
    auto fwd = forward_example(tape, pv, ex, cfg, false);
    std::size_t hit = 0;
    for (const auto& [c, prob] : fwd.selected)
      if (std::binary_search(ex.supervision.bridge.begin(), ex.supervision.bridge.end(), c))
        ++hit;
    sum += static_cast<double>(hit) / static_cast<double>(ex.supervision.bridge.size());
    ++counted;
  }
  return {counted == 0 ? 0.0 : sum / static_cast<double>(counted), counted};
}

template <typename Scalar>
Bundle extract_bundle(const KnowledgeGraph& graph, const ModelParams& params,
                      const PreparedExample& ex, const TrainConfig& cfg) {
  ad::Tape<Scalar> tape;
  auto pv = lease_params(tape, params, false);
  auto fwd = forward_example(tape, pv, ex, cfg, false);
  Bundle b;
  b.id = ex.id;
  b.statement = ex.statement;
  for (const auto& [c, prob] : fwd.selected) {
    b.selected.emplace_back(graph.surface(c), prob);
    b.paths.push_back(best_monotone_path(ex.subgraph, fwd.edge_prob,
                                         *ex.subgraph.index_of(c)));
  }
  return b;
}

template TrainReport train_model<double>(
    ModelParams&, std::span<const PreparedExample>, std::span<const PreparedExample>,
    const TrainConfig&, const std::function<void(std::uint32_t, const EpochReport&)>&);
template TrainReport train_model<float>(
    ModelParams&, std::span<const PreparedExample>, std::span<const PreparedExample>,
    const TrainConfig&, const std::function<void(std::uint32_t, const EpochReport&)>&);
template std::pair<double, std::size_t> recall_at_k<double>(
    const ModelParams&, std::span<const PreparedExample>, const TrainConfig&);
template std::pair<double, std::size_t> recall_at_k<float>(
    const ModelParams&, std::span<const PreparedExample>, const TrainConfig&);
template Bundle extract_bundle<double>(const KnowledgeGraph&, const ModelParams&,
                                       const PreparedExample&, const TrainConfig&);
template Bundle extract_bundle<float>(const KnowledgeGraph&, const ModelParams&,
                                      const PreparedExample&, const TrainConfig&);

std::string bundle_to_json(const KnowledgeGraph& graph, const Bundle& bundle) {
  nlohmann::json j;
  j["id"] = bundle.id;
  j["statement"] = bundle.statement;
  j["selected"] = nlohmann::json::array();
  for (const auto& [surf, prob] : bundle.selected)
    j["selected"].push_back({{"concept", surf}, {"prob", prob}});
  j["paths"] = nlohmann::json::array();
  for (const auto& path : bundle.paths) {
    nlohmann::json jp = nlohmann::json::array();
    for (const Triple& t : path)
      jp.push_back({graph.surface(t.head), graph.relation_name(t.rel),
                    graph.surface(t.tail)});
    j["paths"].push_back(std::move(jp));
  }
  return j.dump();
}

ParsedBundle parse_bundle(const std::string& json_line, std::size_t lineno) {
  nlohmann::json j = nlohmann::json::parse(json_line, nullptr, false);
  auto fail = [&](const std::string& why) {
    throw DataError("bundle line " + std::to_string(lineno) + ": " + why);
  };
  if (j.is_discarded() || !j.is_object()) fail("not a JSON object");
  if (!j.contains("id") || !j["id"].is_string()) fail("missing string id");
  if (!j.contains("statement") || !j["statement"].is_string())
    fail("missing string statement");
  if (!j.contains("selected") || !j["selected"].is_array()) fail("missing selected array");
  ParsedBundle out;
  out.id = j["id"].get<std::string>();
  out.statement = j["statement"].get<std::string>();
  for (const auto& s : j["selected"]) {
    if (!s.is_object() || !s.contains("concept") || !s["concept"].is_string() ||
        !s.contains("prob") || !s["prob"].is_number())
      fail("malformed selection entry");
    out.selected.emplace_back(s["concept"].get<std::string>(), s["prob"].get<double>());
  }
  return out;
}

}  // namespace bkg
