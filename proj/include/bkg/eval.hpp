#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "bkg/dataset.hpp"
#include "bkg/kg.hpp"
#include "bkg/subgraph.hpp"

namespace bkg {

// One scored example: predicted concepts, per-reference gold alignments, and
// the statement concepts C_x both sides must ignore.
struct F1Example {
  std::vector<ConceptId> predicted;
  std::vector<std::vector<ConceptId>> references;
  std::vector<ConceptId> sources;
};

struct F1Stats {
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
  std::size_t counted = 0;  // examples with at least one usable reference
  std::size_t skipped = 0;  // every reference empty once C_x is removed
};

// Set-overlap F1 on bridge concepts (prediction and reference both minus
// C_x); each example keeps its best reference, means run over counted ones.
F1Stats concept_f1(std::span<const F1Example> examples);

struct RankedExample {
  std::vector<ConceptId> ranked;  // best first
  std::vector<ConceptId> gold;
};

struct PrAtN {
  double precision = 0.0;
  double recall = 0.0;
  std::size_t counted = 0;
  std::size_t skipped = 0;  // empty gold
};

// P@N = hits / min(N, |ranked|), R@N = hits / |gold|, averaged over examples
// with nonempty gold. Duplicate ranked entries count once.
PrAtN pr_at_n(std::span<const RankedExample> examples, std::size_t n);

struct CorpusStats {
  std::size_t concepts = 0;
  std::size_t triples = 0;    // directed, reverse twins included
  std::size_t relations = 0;  // merged forward relations
  std::size_t examples = 0;
  HopStats hops;
};

CorpusStats corpus_stats(const KnowledgeGraph& graph, std::span<const Example> examples);
std::string corpus_stats_json(const CorpusStats& stats);

}  // namespace bkg
