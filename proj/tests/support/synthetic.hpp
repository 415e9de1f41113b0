#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "bkg/dataset.hpp"

namespace bkgtest {

struct SyntheticSpec {
  std::size_t n_sources = 140;
  std::size_t n_bridges = 50;
  std::size_t n_fillers = 110;
  std::size_t n_examples = 250;
  std::uint64_t seed = 20240915;
};

struct SyntheticCorpus {
  std::string assertions;  // ConceptNet-style TSV path
  std::string stopwords;   // one word per line
  std::string dataset;     // JSONL path
  std::vector<bkg::RawExample> examples;
  std::vector<std::string> bridge_words;  // gold bridge surfaces, index = bridge id
};

// Planted-bridge corpus: every statement names two source concepts wired to
// one shared bridge concept by a designated relation (atlocation/usedfor);
// the explanation names that bridge. Distractor edges (relatedto) never
// point into the bridge pool, so the pattern is recoverable exactly.
SyntheticCorpus write_synthetic(const SyntheticSpec& spec, const std::string& dir);

}  // namespace bkgtest
