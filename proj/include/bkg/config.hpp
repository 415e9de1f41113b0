#pragma once

#include <cstdint>
#include <map>
#include <string>

#include "bkg/extractor.hpp"

namespace bkg {

// Every tunable across the pipeline with its default. File values override
// the defaults, command-line flags override the file.
struct PipelineConfig {
  // inputs and artifacts
  std::string assertions;  // ConceptNet-style TSV
  std::string relations;   // relation merge table (raw uri -> merged name)
  std::string stopwords;
  std::string dataset;     // JSONL examples
  std::string index;       // BKG1 graph index
  std::string cache;       // BKGC retrieval cache
  std::string dev_cache;   // optional dev-split cache for training reports
  std::string checkpoint;  // BKGM model weights
  std::string bundles;     // JSONL concept bundles
  std::string out;         // subcommand-specific output path

  std::string lang = "en";

  // retrieval and supervision
  std::uint64_t budget = 300;
  std::uint32_t hop_bound = 3;
  std::uint64_t path_cap = 10000;
  int max_ngram = 3;

  // model shape
  std::uint32_t d = 64;
  std::uint32_t layers = 1;
  std::uint32_t max_len = 64;
  std::uint32_t max_dist = 4;

  // dataset split
  double train_ratio = 0.85;
  double dev_ratio = 0.05;

  bool float32 = false;  // train in 32-bit instead of 64-bit
  TrainConfig train;     // shares `seed` via set()/file application

  void validate() const;                                  // throws ConfigError
  void set(const std::string& key, const std::string& value);  // one assignment
  std::map<std::string, std::string> resolved() const;    // every key, as text
};

// Flat "key = value" lines; '#' starts a comment, blank lines are skipped.
// Unknown keys and unparsable values raise ConfigError with the line number.
void apply_config_file(PipelineConfig& cfg, const std::string& path);

}  // namespace bkg
