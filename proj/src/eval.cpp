#include "bkg/eval.hpp"

#include <algorithm>
#include <set>
#include <unordered_set>

#include "json.hpp"

namespace bkg {

namespace {

std::set<ConceptId> minus_sources(std::span<const ConceptId> ids,
                                  const std::unordered_set<ConceptId>& drop) {
  std::set<ConceptId> out;
  for (ConceptId c : ids)
    if (drop.count(c) == 0) out.insert(c);
  return out;
}

std::size_t overlap(const std::set<ConceptId>& a, const std::set<ConceptId>& b) {
  std::size_t n = 0;
  for (ConceptId c : a) n += b.count(c);
  return n;
}

}  // namespace

F1Stats concept_f1(std::span<const F1Example> examples) {
  F1Stats stats;
  for (const F1Example& ex : examples) {
    std::unordered_set<ConceptId> drop(ex.sources.begin(), ex.sources.end());
    std::set<ConceptId> predicted = minus_sources(ex.predicted, drop);

    double best_p = 0, best_r = 0, best_f = 0;
    bool usable = false;
    for (const auto& ref : ex.references) {
      std::set<ConceptId> gold = minus_sources(ref, drop);
      if (gold.empty()) continue;
      double p = 0, r = 0, f = 0;
      if (!predicted.empty()) {
        auto hit = static_cast<double>(overlap(predicted, gold));
        p = hit / static_cast<double>(predicted.size());
        r = hit / static_cast<double>(gold.size());
        if (p + r > 0) f = 2 * p * r / (p + r);
      }
      if (!usable || f > best_f) {
        best_p = p;
        best_r = r;
        best_f = f;
      }
      usable = true;
    }
    if (!usable) {
      ++stats.skipped;
      continue;
    }
    ++stats.counted;
    stats.precision += best_p;
    stats.recall += best_r;
    stats.f1 += best_f;
  }
  if (stats.counted > 0) {
    auto n = static_cast<double>(stats.counted);
    stats.precision /= n;
    stats.recall /= n;
    stats.f1 /= n;
  }
  return stats;
}

PrAtN pr_at_n(std::span<const RankedExample> examples, std::size_t n) {
  PrAtN stats;
  for (const RankedExample& ex : examples) {
    if (ex.gold.empty()) {
      ++stats.skipped;
      continue;
    }
    std::unordered_set<ConceptId> gold(ex.gold.begin(), ex.gold.end());
    std::unordered_set<ConceptId> hit;
    std::size_t take = std::min(n, ex.ranked.size());
    for (std::size_t i = 0; i < take; ++i)
      if (gold.count(ex.ranked[i]) > 0) hit.insert(ex.ranked[i]);
    ++stats.counted;
    if (take > 0)
      stats.precision += static_cast<double>(hit.size()) / static_cast<double>(take);
    stats.recall += static_cast<double>(hit.size()) / static_cast<double>(gold.size());
  }
  if (stats.counted > 0) {
    stats.precision /= static_cast<double>(stats.counted);
    stats.recall /= static_cast<double>(stats.counted);
  }
  return stats;
}

CorpusStats corpus_stats(const KnowledgeGraph& graph, std::span<const Example> examples) {
  CorpusStats s;
  s.concepts = graph.concept_count();
  s.triples = graph.triple_count();
  s.relations = graph.merged_relation_count();
  s.examples = examples.size();
  s.hops = hop_requirements(graph, examples);
  return s;
}

std::string corpus_stats_json(const CorpusStats& stats) {
  nlohmann::json j;
  j["concepts"] = stats.concepts;
  j["triples"] = stats.triples;
  j["relations"] = stats.relations;
  j["examples"] = stats.examples;
  j["hops"] = {
      {"concept_hist", stats.hops.concept_hist},
      {"concept_unreachable", stats.hops.concept_unreachable},
      {"example_hist", stats.hops.example_hist},
      {"example_unreachable", stats.hops.example_unreachable},
      {"examples_with_targets", stats.hops.examples_with_targets},
      {"examples_skipped", stats.hops.examples_skipped},
      {"mean_ball_size", stats.hops.mean_ball_size},
      {"reachable_within_2", stats.hops.reachable_within(2)},
      {"reachable_within_3", stats.hops.reachable_within(3)},
  };
  return j.dump();
}

}  // namespace bkg
