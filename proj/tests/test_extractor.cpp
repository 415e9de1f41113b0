#include "bkg/extractor.hpp"

#include <cmath>
#include <map>

#include "doctest.h"
#include "support/gradcheck.hpp"
#include "support/oracles.hpp"

using namespace bkg;
using ad::Tape;
using ad::VarId;

namespace {

KnowledgeGraph make_graph(std::size_t n_nodes,
                          const std::vector<std::tuple<ConceptId, RelId, ConceptId>>& edges,
                          std::size_t n_rels = 3) {
  std::vector<std::string> rel_names;
  for (std::size_t r = 0; r < n_rels; ++r) rel_names.push_back("r" + std::to_string(r));
  static const PorterStemmer stemmer;
  KnowledgeGraph::Builder builder(rel_names, stemmer);
  for (std::size_t i = 0; i < n_nodes; ++i) builder.intern_concept("c" + std::to_string(i));
  for (const auto& [h, r, t] : edges) builder.add_triple(h, r, t);
  return std::move(builder).build();
}

ModelParams toy_params(const KnowledgeGraph& g, Eigen::Index d, std::uint64_t seed,
                       std::size_t vocab_size) {
  Dims dims;
  dims.vocab = static_cast<Eigen::Index>(vocab_size);
  dims.d = d;
  dims.L = 1;
  dims.max_len = 16;
  dims.max_dist = 4;
  dims.n_relations = static_cast<Eigen::Index>(g.relation_id_count());
  ModelParams p(dims);
  Rng rng(seed);
  p.init(rng);
  return p;
}

PreparedExample prep(const KnowledgeGraph& g, const TokenVocab& vocab, std::string id,
                     std::vector<std::string> stmt, std::vector<ConceptId> sources,
                     std::vector<ConceptId> targets) {
  CachedExample ce;
  ce.id = std::move(id);
  ce.statement_tokens = std::move(stmt);
  ce.subgraph = retrieve_subgraph(g, sources, 3, 300);
  auto bridge = label_bridge_concepts(ce.subgraph, targets);
  ce.supervision = extract_supervision_paths(ce.subgraph, bridge);
  std::vector<CachedExample> one{std::move(ce)};
  return prepare_examples(g, vocab, one).front();
}

// probability per subgraph edge, keyed (head, tail); unlisted edges get dflt
std::vector<double> probs_for(const Subgraph& sg,
                              const std::map<std::pair<ConceptId, ConceptId>, double>& want,
                              double dflt = 0.0) {
  std::vector<double> p(sg.edges.size(), dflt);
  for (std::size_t i = 0; i < sg.edges.size(); ++i) {
    auto it = want.find({sg.edges[i].head, sg.edges[i].tail});
    if (it != want.end()) p[i] = it->second;
  }
  return p;
}

}  // namespace

TEST_CASE("train config validation rejects bad settings") {
  TrainConfig cfg;
  CHECK_NOTHROW(cfg.validate());
  auto bad = [&](auto&& mutate) {
    TrainConfig c = cfg;
    mutate(c);
    CHECK_THROWS_AS(c.validate(), ConfigError);
  };
  bad([](TrainConfig& c) { c.lambda1 = -0.5; });
  bad([](TrainConfig& c) { c.lambda2 = -1.0; });
  bad([](TrainConfig& c) { c.k1 = 0; });
  bad([](TrainConfig& c) { c.k2 = 0; });
  bad([](TrainConfig& c) { c.k2 = c.k1 + 1; });
  bad([](TrainConfig& c) { c.lr = -1e-3; });
  bad([](TrainConfig& c) { c.epochs = 0; });
  bad([](TrainConfig& c) { c.batch = 0; });
  bad([](TrainConfig& c) { c.warmup = 1.5; });
  bad([](TrainConfig& c) { c.warmup = -0.1; });
}

TEST_CASE("prepare_examples joins statements and falls back to <unk> tokens") {
  std::vector<std::string> rels{"r0"};
  static const PorterStemmer stemmer;
  KnowledgeGraph::Builder b(rels, stemmer);
  ConceptId cat = b.intern_concept("cat");
  ConceptId punct = b.intern_concept("!!!");  // tokenizes to nothing
  b.add_triple(cat, 0, punct);
  KnowledgeGraph g = std::move(b).build();
  TokenVocab vocab = TokenVocab::from_graph(g);

  CachedExample ce;
  ce.id = "ex0";
  ce.statement_tokens = {"the", "cat", "sat"};
  ce.subgraph = retrieve_subgraph(g, std::vector<ConceptId>{cat}, 1, 10);
  std::vector<CachedExample> one{ce};
  auto pe = prepare_examples(g, vocab, one).front();

  CHECK(pe.statement == "the cat sat");
  REQUIRE(pe.statement_ids.size() == 3);
  CHECK(pe.statement_ids[0] == 0);  // "the" not in the concept vocab
  CHECK(pe.statement_ids[1] == vocab.index.at("cat"));
  REQUIRE(pe.node_tokens.size() == 2);
  std::size_t punct_ix = *pe.subgraph.index_of(punct);
  CHECK(pe.node_tokens[punct_ix] == std::vector<Eigen::Index>{0});
}

TEST_CASE("routing: hand-traced chain and single edge") {
  // 0 -> 1 (0.8) -> 2 (0.4)
  KnowledgeGraph g = make_graph(3, {{0, 0, 1}, {1, 0, 2}});
  Subgraph sg = retrieve_subgraph(g, std::vector<ConceptId>{0}, 3, 300);
  auto p = probs_for(sg, {{{0, 1}, 0.8}, {{1, 2}, 0.4}});
  auto s = route_paths(sg, p);
  CHECK(s[*sg.index_of(0)] == 0.0);  // source
  CHECK(s[*sg.index_of(1)] == doctest::Approx(0.8).epsilon(1e-12));
  CHECK(s[*sg.index_of(2)] == doctest::Approx(0.6).epsilon(1e-12));  // (0.8+0.4)/2
}

TEST_CASE("routing: diamond averages per-path means") {
  // 0 -> {1, 2} -> 3 with distinct path means 0.4 and 0.3
  KnowledgeGraph g = make_graph(4, {{0, 0, 1}, {0, 0, 2}, {1, 0, 3}, {2, 0, 3}});
  Subgraph sg = retrieve_subgraph(g, std::vector<ConceptId>{0}, 3, 300);
  auto p = probs_for(sg, {{{0, 1}, 0.2}, {{0, 2}, 0.4}, {{1, 3}, 0.6}, {{2, 3}, 0.2}});
  auto s = route_paths(sg, p);
  CHECK(s[*sg.index_of(1)] == doctest::Approx(0.2).epsilon(1e-12));
  CHECK(s[*sg.index_of(2)] == doctest::Approx(0.4).epsilon(1e-12));
  CHECK(s[*sg.index_of(3)] == doctest::Approx(0.35).epsilon(1e-12));
  CHECK_THROWS_AS(route_paths(sg, std::vector<double>(2, 0.5)), NumericalError);
}

TEST_CASE("routing: non-monotone edges carry nothing") {
  // 3 -> 0 gives source 0 an incoming edge; 1 <-> 2 sit at equal distance
  KnowledgeGraph g = make_graph(4, {{0, 0, 1}, {0, 0, 2}, {1, 0, 2}, {3, 0, 0}});
  Subgraph sg = retrieve_subgraph(g, std::vector<ConceptId>{0}, 3, 300);
  auto s = route_paths(sg, std::vector<double>(sg.edges.size(), 0.9));
  CHECK(s[*sg.index_of(0)] == 0.0);
  CHECK(s[*sg.index_of(1)] == doctest::Approx(0.9).epsilon(1e-12));
  CHECK(s[*sg.index_of(2)] == doctest::Approx(0.9).epsilon(1e-12));  // only 0->2 counts
  CHECK(s[*sg.index_of(3)] == doctest::Approx(0.9).epsilon(1e-12));  // via reverse edge 0->3
}

TEST_CASE("routing matches the path-enumeration oracle on random graphs") {
  Rng rng(404);
  for (int trial = 0; trial < 60; ++trial) {
    std::size_t n = 4 + rng.next_below(9);
    std::set<std::tuple<ConceptId, RelId, ConceptId>> edge_set;
    std::size_t m = 4 + rng.next_below(2 * n);
    for (std::size_t e = 0; e < m; ++e) {
      auto h = static_cast<ConceptId>(rng.next_below(n));
      auto t = static_cast<ConceptId>(rng.next_below(n));
      if (h == t) continue;
      edge_set.insert({h, static_cast<RelId>(rng.next_below(3)), t});
    }
    KnowledgeGraph g = make_graph(
        n, std::vector<std::tuple<ConceptId, RelId, ConceptId>>(edge_set.begin(),
                                                                edge_set.end()));
    std::vector<ConceptId> sources{static_cast<ConceptId>(rng.next_below(n))};
    if (rng.next_below(2) == 0) {
      auto s2 = static_cast<ConceptId>(rng.next_below(n));
      if (s2 != sources[0]) sources.push_back(s2);
    }
    std::sort(sources.begin(), sources.end());
    Subgraph sg = retrieve_subgraph(g, sources, 3, 300);

    std::vector<double> p(sg.edges.size());
    std::map<Triple, double> by_triple;
    for (std::size_t i = 0; i < sg.edges.size(); ++i) {
      p[i] = rng.next_double();
      by_triple[sg.edges[i]] = p[i];
    }
    auto got = route_paths(sg, p);
    auto want = bkgtest::brute_routing(sg, by_triple);
    for (std::size_t i = 0; i < sg.size(); ++i)
      CHECK(got[i] == doctest::Approx(want.at(sg.nodes[i])).epsilon(1e-12));
  }
}

TEST_CASE("deactivation drops sources, ranks by score then id, and truncates") {
  KnowledgeGraph g = make_graph(5, {{0, 0, 1}, {0, 0, 2}, {0, 0, 3}, {0, 0, 4}});
  Subgraph sg = retrieve_subgraph(g, std::vector<ConceptId>{0}, 1, 300);
  REQUIRE(sg.nodes == std::vector<ConceptId>{0, 1, 2, 3, 4});

  std::vector<double> routing{0.0, 0.3, 0.7, 0.3, 0.1};
  auto ranked = deactivate(sg, routing, 3);
  CHECK(ranked == std::vector<std::size_t>{2, 1, 3});  // 0.7, then tie 0.3 by index

  auto all = deactivate(sg, routing, 30);  // underfull keeps every non-source
  CHECK(all == std::vector<std::size_t>{2, 1, 3, 4});
  CHECK_THROWS_AS(deactivate(sg, std::vector<double>(2, 0.0), 3), NumericalError);
}

TEST_CASE("selection ranks by probability then concept id") {
  KnowledgeGraph g = make_graph(5, {{0, 0, 1}, {0, 0, 2}, {0, 0, 3}, {0, 0, 4}});
  Subgraph sg = retrieve_subgraph(g, std::vector<ConceptId>{0}, 1, 300);
  std::vector<std::size_t> active{1, 2, 3, 4};
  std::vector<double> prob{0.4, 0.9, 0.4, 0.2};
  auto sel = select_concepts(sg, active, prob, 3);
  REQUIRE(sel.size() == 3);
  CHECK(sel[0] == std::pair<ConceptId, double>{2, 0.9});
  CHECK(sel[1] == std::pair<ConceptId, double>{1, 0.4});  // tie: lower id first
  CHECK(sel[2] == std::pair<ConceptId, double>{3, 0.4});
  CHECK(select_concepts(sg, active, prob, 10).size() == 4);
  CHECK_THROWS_AS(select_concepts(sg, active, std::vector<double>(2, 0.0), 3),
                  NumericalError);
}

TEST_CASE("best monotone path maximizes the probability sum") {
  KnowledgeGraph g = make_graph(4, {{0, 0, 1}, {0, 1, 2}, {1, 0, 3}, {2, 1, 3}});
  Subgraph sg = retrieve_subgraph(g, std::vector<ConceptId>{0}, 3, 300);
  auto p = probs_for(sg, {{{0, 1}, 0.2}, {{0, 2}, 0.4}, {{1, 3}, 0.6}, {{2, 3}, 0.2}});

  auto path = best_monotone_path(sg, p, *sg.index_of(3));
  REQUIRE(path.size() == 2);  // 0.2+0.6 beats 0.4+0.2
  CHECK(path[0] == Triple{0, 0, 1});
  CHECK(path[1] == Triple{1, 0, 3});

  CHECK(best_monotone_path(sg, p, *sg.index_of(0)).empty());  // source target
  CHECK_THROWS_AS(best_monotone_path(sg, p, 99), DataError);

  SUBCASE("ties keep the earliest edge") {
    auto even = std::vector<double>(sg.edges.size(), 0.5);
    auto tied = best_monotone_path(sg, even, *sg.index_of(3));
    REQUIRE(tied.size() == 2);
    CHECK(tied[0] == Triple{0, 0, 1});  // head 0's edge to 1 precedes 2's route
    CHECK(tied[1] == Triple{1, 0, 3});
  }
}

TEST_CASE("unreachable nodes route to zero and have no path") {
  Subgraph sg;
  sg.nodes = {4, 9};
  sg.distance = {0, kUnreachableDist};
  sg.sources = {4};
  sg.rebuild_edge_offsets();
  auto s = route_paths(sg, {});
  CHECK(s == std::vector<double>{0.0, 0.0});
  CHECK(best_monotone_path(sg, {}, 1).empty());
}

TEST_CASE("bce_sum closed forms") {
  Tape<double> tape;
  SUBCASE("uniform half probabilities cost n*ln2") {
    ad::Mat<double> p(4, 1);
    p << 0.5, 0.5, 0.5, 0.5;
    VarId probs = tape.constant(p);
    VarId loss = bce_sum(tape, probs, std::vector<double>{1, 0, 1, 0});
    CHECK(tape.value(loss)(0, 0) == doctest::Approx(4 * std::log(2.0)).epsilon(1e-12));
  }
  SUBCASE("a positive at 1/e costs exactly one nat") {
    ad::Mat<double> p(1, 1);
    p << std::exp(-1.0);
    VarId loss = bce_sum(tape, tape.constant(p), std::vector<double>{1});
    CHECK(tape.value(loss)(0, 0) == doctest::Approx(1.0).epsilon(1e-12));
  }
  SUBCASE("the include mask removes terms") {
    ad::Mat<double> p(2, 1);
    p << 0.5, 0.9;
    std::vector<double> include{1, 0};
    VarId loss = bce_sum(tape, tape.constant(p), std::vector<double>{0, 0}, &include);
    CHECK(tape.value(loss)(0, 0) == doctest::Approx(std::log(2.0)).epsilon(1e-12));
  }
  SUBCASE("clamping keeps degenerate probabilities finite") {
    ad::Mat<double> p(1, 1);
    p << 0.0;
    VarId loss = bce_sum(tape, tape.constant(p), std::vector<double>{1});
    CHECK(tape.value(loss)(0, 0) == doctest::Approx(-std::log(1e-12)).epsilon(1e-9));
  }
  SUBCASE("shape mismatch throws") {
    ad::Mat<double> p(2, 1);
    p << 0.5, 0.5;
    VarId probs = tape.constant(p);
    CHECK_THROWS_AS(bce_sum(tape, probs, std::vector<double>{1}), NumericalError);
  }
}

TEST_CASE("zeroed weights give sigmoid(0)=1/2 and ln2-per-term losses") {
  KnowledgeGraph g = make_graph(4, {{0, 0, 1}, {0, 0, 2}, {1, 0, 3}});
  TokenVocab vocab = TokenVocab::from_graph(g);
  auto ex = prep(g, vocab, "z", {"c0"}, {0}, {3});
  Dims dims;
  dims.vocab = static_cast<Eigen::Index>(vocab.tokens.size());
  dims.d = 8;
  dims.L = 1;
  dims.max_len = 16;
  dims.n_relations = static_cast<Eigen::Index>(g.relation_id_count());
  ModelParams p(dims);  // all tensors zero

  TrainConfig cfg;
  Tape<double> tape;
  auto pv = lease_params(tape, p, false);
  auto fwd = forward_example(tape, pv, ex, cfg, true);
  double ln2 = std::log(2.0);
  auto e_count = static_cast<double>(ex.subgraph.edges.size());
  auto a_count = static_cast<double>(fwd.active.size());
  CHECK(fwd.triple_loss == doctest::Approx(e_count * ln2).epsilon(1e-9));
  CHECK(fwd.concept_loss == doctest::Approx(a_count * ln2).epsilon(1e-9));
  CHECK(tape.value(fwd.total)(0, 0) ==
        doctest::Approx((e_count + a_count) * ln2).epsilon(1e-9));
  for (double q : fwd.edge_prob) CHECK(q == doctest::Approx(0.5).epsilon(1e-12));
}

TEST_CASE("forward_example wires supervision through both losses") {
  KnowledgeGraph g = make_graph(5, {{0, 0, 1}, {1, 0, 2}, {0, 1, 3}, {3, 1, 4}});
  TokenVocab vocab = TokenVocab::from_graph(g);
  auto ex = prep(g, vocab, "w", {"c0", "c9"}, {0}, {2});
  REQUIRE(ex.supervision.bridge == std::vector<ConceptId>{2});
  REQUIRE(ex.supervision.positives.size() == 2);  // 0->1, 1->2

  ModelParams p = toy_params(g, 8, 31, vocab.tokens.size());
  TrainConfig cfg;
  Tape<double> tape;
  auto pv = lease_params(tape, p, true);
  auto fwd = forward_example(tape, pv, ex, cfg, true);
  CHECK(fwd.edge_prob.size() == ex.subgraph.edges.size());
  CHECK(fwd.routing.size() == ex.subgraph.size());
  CHECK(fwd.active.size() == 4);  // every non-source survives k1=30
  CHECK(fwd.selected.size() == 3);
  CHECK(fwd.bridge_pruned == 0);
  CHECK(fwd.triple_loss > 0.0);
  CHECK(fwd.concept_loss > 0.0);

  SUBCASE("with_labels=false zeroes the losses but keeps the pipeline") {
    Tape<double> t2;
    auto pv2 = lease_params(t2, p, false);
    auto bare = forward_example(t2, pv2, ex, cfg, false);
    CHECK(bare.triple_loss == 0.0);
    CHECK(bare.concept_loss == 0.0);
    CHECK(bare.edge_prob == fwd.edge_prob);
    CHECK(bare.selected == fwd.selected);
  }

  SUBCASE("a tight k1 gate prunes gold bridges and reports it") {
    TrainConfig tight = cfg;
    tight.k1 = 1;
    tight.k2 = 1;
    Tape<double> t3;
    auto pv3 = lease_params(t3, p, false);
    auto cut = forward_example(t3, pv3, ex, tight, true);
    CHECK(cut.active.size() == 1);
    CHECK(cut.bridge_pruned + (cut.active[0] == *ex.subgraph.index_of(2) ? 1 : 0) == 1);
  }

  SUBCASE("lambda weights compose the total") {
    TrainConfig only2 = cfg;
    only2.lambda1 = 0.0;
    only2.lambda2 = 2.5;
    Tape<double> t4;
    auto pv4 = lease_params(t4, p, false);
    auto f4 = forward_example(t4, pv4, ex, only2, true);
    CHECK(t4.value(f4.total)(0, 0) ==
          doctest::Approx(2.5 * f4.concept_loss).epsilon(1e-12));
  }
}

TEST_CASE("gradients of both losses sum to the combined gradient") {
  KnowledgeGraph g = make_graph(5, {{0, 0, 1}, {1, 0, 2}, {0, 1, 3}, {3, 1, 4}});
  TokenVocab vocab = TokenVocab::from_graph(g);
  auto ex = prep(g, vocab, "ga", {"c0", "c3"}, {0}, {2});
  ModelParams p = toy_params(g, 6, 77, vocab.tokens.size());

  auto grads_with = [&](double l1, double l2) {
    TrainConfig cfg;
    cfg.lambda1 = l1;
    cfg.lambda2 = l2;
    Tape<double> tape;
    auto pv = lease_params(tape, p, true);
    auto fwd = forward_example(tape, pv, ex, cfg, true);
    tape.backward(fwd.total);
    std::vector<DMat> gs;
    for (VarId v : pv.ordered) gs.push_back(tape.grad(v));
    return gs;
  };
  auto g1 = grads_with(1.0, 0.0);
  auto g2 = grads_with(0.0, 1.0);
  auto g12 = grads_with(1.0, 1.0);
  for (std::size_t i = 0; i < g12.size(); ++i)
    CHECK((g12[i] - g1[i] - g2[i]).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("example losses agree with finite differences") {
  KnowledgeGraph g = make_graph(5, {{0, 0, 1}, {1, 0, 2}, {0, 1, 3}, {3, 1, 4}});
  TokenVocab vocab = TokenVocab::from_graph(g);
  auto ex = prep(g, vocab, "fd", {"c0", "c1"}, {0}, {2});

  Dims dims;
  dims.vocab = static_cast<Eigen::Index>(vocab.tokens.size());
  dims.d = 4;
  dims.L = 1;
  dims.max_len = 16;
  dims.n_relations = static_cast<Eigen::Index>(g.relation_id_count());
  ModelParams p(dims);
  Rng rng(55);
  p.init(rng);

  auto check_cfg = [&](double l1, double l2) {
    auto named = p.tensors();
    std::vector<bkgtest::AdMat> leaves;
    for (auto& [name, mat] : named) leaves.push_back(*mat);
    auto build = [&](Tape<double>& t, const std::vector<VarId>& ids) {
      ParamVars<double> pv;
      pv.dims = p.dims;
      std::size_t at = 0;
      auto take = [&]() { return ids[at++]; };
      pv.W_e = take();
      pv.W_p = take();
      typename ParamVars<double>::Block blk;
      blk.Wq = take();
      blk.Wk = take();
      blk.Wv = take();
      blk.Wff1 = take();
      blk.bff1 = take();
      blk.Wff2 = take();
      blk.bff2 = take();
      pv.blocks.push_back(blk);
      pv.bi_w1 = take();
      pv.bi_w2 = take();
      pv.bi_w3 = take();
      pv.mlp_W = take();
      pv.mlp_b = take();
      pv.W_d = take();
      pv.W_r = take();
      pv.W_2 = take();
      pv.W_3 = take();
      TrainConfig cfg;
      cfg.lambda1 = l1;
      cfg.lambda2 = l2;
      return forward_example(t, pv, ex, cfg, true).total;
    };
    auto res = bkgtest::finite_difference_check(leaves, build);
    CHECK(res.entries > 200);
    CHECK(res.max_rel_err < 1e-4);
  };
  SUBCASE("triple loss alone") { check_cfg(1.0, 0.0); }
  SUBCASE("concept loss alone") { check_cfg(0.0, 1.0); }
  SUBCASE("combined loss") { check_cfg(1.0, 1.0); }
}

TEST_CASE("negative downsampling is deterministic and caps the negatives") {
  std::vector<std::tuple<ConceptId, RelId, ConceptId>> edges;
  for (ConceptId i = 1; i <= 10; ++i) edges.push_back({0, 0, i});
  KnowledgeGraph g = make_graph(11, edges);
  TokenVocab vocab = TokenVocab::from_graph(g);
  auto ex = prep(g, vocab, "ds", {"c0"}, {0}, {1});
  REQUIRE(ex.subgraph.edges.size() == 20);  // 10 spokes, both directions

  ModelParams p = toy_params(g, 6, 91, vocab.tokens.size());
  auto loss_with = [&](bool down, std::uint32_t cap) {
    TrainConfig cfg;
    cfg.downsample_negatives = down;
    cfg.negative_cap = cap;
    Tape<double> tape;
    auto pv = lease_params(tape, p, false);
    return forward_example(tape, pv, ex, cfg, true).triple_loss;
  };
  double full = loss_with(false, 0);
  double capped = loss_with(true, 4);
  CHECK(capped < full);                     // dropped negatives all cost > 0
  CHECK(capped == loss_with(true, 4));      // same seed, same subset
  CHECK(loss_with(true, 100) == full);      // cap above the count is a no-op
}

TEST_CASE("selection order is invariant to scaling the concept scorer") {
  KnowledgeGraph g = make_graph(6, {{0, 0, 1}, {0, 0, 2}, {1, 0, 3}, {2, 0, 4}, {4, 0, 5}});
  TokenVocab vocab = TokenVocab::from_graph(g);
  auto ex = prep(g, vocab, "sc", {"c1", "c4"}, {0}, {5});
  ModelParams p = toy_params(g, 8, 13, vocab.tokens.size());
  ModelParams scaled = p;
  scaled.W_3 *= 7.0;

  TrainConfig cfg;
  Tape<double> t1, t2;
  auto f1 = forward_example(t1, lease_params(t1, p, false), ex, cfg, false);
  auto f2 = forward_example(t2, lease_params(t2, scaled, false), ex, cfg, false);
  REQUIRE(f1.selected.size() == f2.selected.size());
  for (std::size_t i = 0; i < f1.selected.size(); ++i)
    CHECK(f1.selected[i].first == f2.selected[i].first);
  CHECK(f1.active == f2.active);  // routing never saw W_3
}

TEST_CASE("training runs, reports epochs, and reduces the loss") {
  KnowledgeGraph g = make_graph(
      8, {{0, 0, 2}, {2, 0, 4}, {1, 0, 3}, {3, 0, 5}, {0, 1, 6}, {1, 1, 7}});
  TokenVocab vocab = TokenVocab::from_graph(g);
  std::vector<PreparedExample> train{
      prep(g, vocab, "t0", {"c0", "red"}, {0}, {4}),
      prep(g, vocab, "t1", {"c1", "blue"}, {1}, {5}),
      prep(g, vocab, "t2", {"c0", "c1"}, {0, 1}, {4, 5}),
  };
  std::vector<PreparedExample> dev{prep(g, vocab, "d0", {"c0"}, {0}, {4})};

  ModelParams p = toy_params(g, 8, 7, vocab.tokens.size());
  TrainConfig cfg;
  cfg.epochs = 4;
  cfg.batch = 2;
  cfg.lr = 5e-3;
  cfg.warmup = 0.25;

  std::vector<std::uint32_t> seen;
  auto rep = train_model<double>(p, train, dev, cfg,
                                 [&](std::uint32_t e, const EpochReport&) {
                                   seen.push_back(e);
                                 });
  REQUIRE(rep.epochs.size() == 4);
  CHECK(seen == std::vector<std::uint32_t>{1, 2, 3, 4});
  CHECK(rep.steps == 8);  // ceil(3/2) = 2 batches x 4 epochs
  CHECK(rep.epochs.back().mean_total < rep.epochs.front().mean_total);
  for (const auto& er : rep.epochs) {
    CHECK(er.dev_examples == 1);
    CHECK(er.mean_total ==
          doctest::Approx(er.mean_triple + er.mean_concept).epsilon(1e-9));
  }
}

TEST_CASE("zero learning rate leaves every tensor untouched") {
  KnowledgeGraph g = make_graph(4, {{0, 0, 1}, {1, 0, 2}, {0, 0, 3}});
  TokenVocab vocab = TokenVocab::from_graph(g);
  std::vector<PreparedExample> train{prep(g, vocab, "f0", {"c0"}, {0}, {2})};

  ModelParams p = toy_params(g, 6, 3, vocab.tokens.size());
  ModelParams before = p;
  TrainConfig cfg;
  cfg.lr = 0.0;
  cfg.epochs = 2;
  train_model<double>(p, train, train, cfg);

  auto now = p.tensors();
  auto was = before.tensors();
  for (std::size_t i = 0; i < now.size(); ++i) CHECK(*now[i].second == *was[i].second);
}

TEST_CASE("training rejects an empty train set and bad configs") {
  KnowledgeGraph g = make_graph(3, {{0, 0, 1}});
  TokenVocab vocab = TokenVocab::from_graph(g);
  ModelParams p = toy_params(g, 6, 5, vocab.tokens.size());
  TrainConfig cfg;
  CHECK_THROWS_AS(train_model<double>(p, {}, {}, cfg), DataError);
  cfg.k2 = cfg.k1 + 1;
  std::vector<PreparedExample> train{prep(g, vocab, "e0", {"c0"}, {0}, {1})};
  CHECK_THROWS_AS(train_model<double>(p, train, {}, cfg), ConfigError);
}

TEST_CASE("recall@k counts only examples with gold bridges") {
  // one non-source node, and it is the bridge: recall must be 1
  KnowledgeGraph g = make_graph(3, {{0, 0, 1}, {1, 0, 2}});
  TokenVocab vocab = TokenVocab::from_graph(g);
  auto hit = prep(g, vocab, "r0", {"c0"}, {0, 2}, {1});
  REQUIRE(hit.supervision.bridge == std::vector<ConceptId>{1});
  auto blank = prep(g, vocab, "r1", {"c0"}, {0}, {});  // no gold

  ModelParams p = toy_params(g, 6, 11, vocab.tokens.size());
  TrainConfig cfg;
  std::vector<PreparedExample> exs{hit, blank};
  auto [recall, counted] = recall_at_k<double>(p, exs, cfg);
  CHECK(counted == 1);
  CHECK(recall == 1.0);

  auto [r0, c0] = recall_at_k<double>(p, std::vector<PreparedExample>{blank}, cfg);
  CHECK(c0 == 0);
  CHECK(r0 == 0.0);
}

TEST_CASE("bundles serialize to one-line JSON and parse back") {
  KnowledgeGraph g = make_graph(4, {{0, 0, 1}, {1, 1, 2}});
  TokenVocab vocab = TokenVocab::from_graph(g);
  auto ex = prep(g, vocab, "b0", {"c0", "likes", "c2"}, {0}, {2});
  ModelParams p = toy_params(g, 6, 23, vocab.tokens.size());
  TrainConfig cfg;

  Bundle b = extract_bundle<double>(g, p, ex, cfg);
  CHECK(b.id == "b0");
  CHECK(b.statement == "c0 likes c2");
  REQUIRE(!b.selected.empty());
  REQUIRE(b.paths.size() == b.selected.size());
  for (std::size_t i = 0; i < b.paths.size(); ++i) {
    REQUIRE(!b.paths[i].empty());  // every selected concept is reachable here
    CHECK(g.surface(b.paths[i].back().tail) == b.selected[i].first);
    CHECK(std::binary_search(ex.subgraph.sources.begin(), ex.subgraph.sources.end(),
                             b.paths[i].front().head));
  }

  std::string line = bundle_to_json(g, b);
  CHECK(line.find('\n') == std::string::npos);
  ParsedBundle back = parse_bundle(line, 1);
  CHECK(back.id == b.id);
  CHECK(back.statement == b.statement);
  REQUIRE(back.selected.size() == b.selected.size());
  for (std::size_t i = 0; i < b.selected.size(); ++i) {
    CHECK(back.selected[i].first == b.selected[i].first);
    CHECK(back.selected[i].second == doctest::Approx(b.selected[i].second));
  }
}

TEST_CASE("malformed bundle lines fail with the line number") {
  auto fails = [](const std::string& line) {
    try {
      parse_bundle(line, 7);
      return std::string{};
    } catch (const DataError& e) {
      return std::string(e.what());
    }
  };
  CHECK(fails("not json").find("line 7") != std::string::npos);
  CHECK(fails("[1,2]").find("not a JSON object") != std::string::npos);
  CHECK(fails(R"({"statement":"s","selected":[]})").find("id") != std::string::npos);
  CHECK(fails(R"({"id":"x","statement":"s"})").find("selected") != std::string::npos);
  CHECK(fails(R"({"id":"x","statement":"s","selected":[{"concept":"c"}]})")
            .find("malformed") != std::string::npos);
  CHECK(fails(R"({"id":"x","statement":"s","selected":[]})").empty());
}
