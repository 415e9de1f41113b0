#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "bkg/common.hpp"
#include "bkg/kg.hpp"
#include "bkg/text.hpp"

namespace bkg {

// One dataset record as stored on disk (JSON object per line:
// {"id", "statement", "explanations": [..]}).
struct RawExample {
  std::string id;
  std::string statement;
  std::vector<std::string> explanations;

  bool operator==(const RawExample&) const = default;
};

struct DatasetReadReport {
  std::uint64_t lines_total = 0;
  std::vector<std::pair<std::uint64_t, std::string>> malformed;  // (line, reason)
};

// With a report, malformed lines are recorded and skipped; without one the
// first malformed line raises DataError.
std::vector<RawExample> load_dataset(const std::string& path,
                                     DatasetReadReport* report = nullptr);
void save_dataset(const std::string& path, std::span<const RawExample> examples);

struct SplitRatios {
  double train = 0.85;
  double dev = 0.05;
  double test = 0.10;
};

struct DatasetSplit {
  std::vector<RawExample> train;  // exploded: one record per reference
  std::vector<RawExample> dev;
  std::vector<RawExample> test;
};

// Seeded per-record assignment against cumulative ratios, deterministic in
// file order. Train records are exploded into one single-reference record per
// explanation (ids suffixed "#<ref>"); dev/test keep all references.
DatasetSplit split_dataset(std::span<const RawExample> raws, const SplitRatios& ratios,
                           std::uint64_t seed);

// Dataset record with statement tokens and graph alignment resolved.
struct Example {
  std::string id;
  std::string statement;
  std::vector<std::string> statement_tokens;
  std::vector<std::string> explanations;
  std::vector<ConceptId> source_concepts;  // C_x, first-match order
  std::vector<ConceptId> target_concepts;  // C_y, union over references
};

Example resolve_example(const RawExample& raw, const KnowledgeGraph& graph,
                        const StopwordSet& stopwords, const Stemmer& stemmer, int max_ngram);
std::vector<Example> resolve_examples(std::span<const RawExample> raws,
                                      const KnowledgeGraph& graph, const StopwordSet& stopwords,
                                      const Stemmer& stemmer, int max_ngram);

}  // namespace bkg
