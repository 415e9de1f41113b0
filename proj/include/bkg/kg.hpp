#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "bkg/common.hpp"
#include "bkg/relation_vocab.hpp"
#include "bkg/text.hpp"

namespace bkg {

struct Triple {
  ConceptId head = kNoConcept;
  RelId rel = 0;
  ConceptId tail = kNoConcept;

  bool operator==(const Triple&) const = default;
  auto operator<=>(const Triple&) const = default;
};

struct TripleHash {
  std::size_t operator()(const Triple& t) const {
    std::uint64_t k = (static_cast<std::uint64_t>(t.head) << 32) | t.tail;
    k ^= static_cast<std::uint64_t>(t.rel) << 51;
    k *= 0x9e3779b97f4a7c15ull;
    return static_cast<std::size_t>(k ^ (k >> 32));
  }
};

struct IngestReport {
  std::uint64_t rows_total = 0;
  std::uint64_t rows_malformed = 0;
  std::uint64_t rows_lang_filtered = 0;
  std::uint64_t rows_unknown_relation = 0;
  std::uint64_t rows_self_loop = 0;
  std::uint64_t rows_duplicate = 0;
  std::uint64_t triples_stored = 0;  // forward + reverse
  std::uint64_t concepts = 0;
  // First malformed rows, capped; the counter above is exact.
  std::vector<std::pair<std::uint64_t, std::string>> malformed_samples;

  bool empty() const { return rows_total == 0; }
};

enum class UnknownRelationPolicy { skip, map_to_relatedto };

struct IngestOptions {
  std::string lang = "en";
  UnknownRelationPolicy unknown_relation = UnknownRelationPolicy::skip;
};

// Immutable concept/relation/triple store. Triples are grouped by head
// concept in a CSR layout; for every stored triple (h, r, t) the reverse
// triple (t, reverse_of(r), h) is stored as well. Safe for unrestricted
// concurrent reads once built.
class KnowledgeGraph {
 public:
  std::size_t concept_count() const { return surfaces_.size(); }
  std::size_t triple_count() const { return triples_.size(); }

  const std::string& surface(ConceptId id) const { return surfaces_.at(id); }
  const std::string& stem(ConceptId id) const { return stems_.at(id); }
  std::optional<ConceptId> find_surface(std::string_view surface) const;

  std::span<const Triple> triples() const { return triples_; }
  std::span<const Triple> neighbors(ConceptId id) const;  // out-edge slice, stored order

  // ConceptIds whose stem equals `stem`, ascending; nullptr when none.
  const std::vector<ConceptId>* stem_lookup(std::string_view stem) const;

  std::size_t merged_relation_count() const { return relation_names_.size(); }
  std::size_t relation_id_count() const { return relation_names_.size() * 2; }
  const std::vector<std::string>& relation_names() const { return relation_names_; }
  std::string relation_name(RelId id) const;
  RelId reverse_of(RelId id) const;

  // FNV-1a over relation names and concept surfaces/stems; persisted in the
  // index file and echoed into checkpoints to tie artifacts together.
  std::uint64_t vocab_checksum() const;

  class Builder;

 private:
  std::vector<std::string> surfaces_;
  std::vector<std::string> stems_;
  std::vector<Triple> triples_;           // grouped by head
  std::vector<std::uint64_t> offsets_;    // concept_count() + 1 entries
  std::vector<std::string> relation_names_;
  std::unordered_map<std::string, ConceptId> surface_to_id_;
  std::unordered_map<std::string, std::vector<ConceptId>> stem_to_ids_;

  void rebuild_lookup_tables();
  friend KnowledgeGraph load_index(const std::string&);
  friend void save_index(const KnowledgeGraph&, const std::string&);
};

// Incremental construction with dedup and automatic reverse closure.
class KnowledgeGraph::Builder {
 public:
  Builder(std::vector<std::string> relation_names, const Stemmer& stemmer);

  ConceptId intern_concept(std::string_view normalized_surface);
  // Returns false when the (deduplicated) triple was already present.
  bool add_triple(ConceptId head, RelId forward_rel, ConceptId tail);

  KnowledgeGraph build() &&;

 private:
  const Stemmer& stemmer_;
  KnowledgeGraph graph_;
  std::vector<Triple> pending_;  // insertion order, forward and reverse interleaved
  std::unordered_map<std::uint64_t, std::uint64_t> seen_;  // (head,tail) -> rel bitmask
};

// Strips the "/c/<lang>/" prefix and any trailing sense segments, maps
// underscores to spaces and lowercases. Returns nullopt when the uri does
// not carry the requested language.
std::optional<std::string> normalize_concept_uri(std::string_view uri, std::string_view lang);

KnowledgeGraph load_conceptnet(const std::string& assertions_path, const RelationVocab& vocab,
                               const IngestOptions& options, IngestReport* report);

// Binary index, magic "BKG1". Layout (all integers little-endian):
//   magic[4], u32 version, u64 vocab_checksum,
//   u32 relation_count, relation names (u32 len + bytes each),
//   u32 concept_count, per concept: surface, stem,
//   u64 triple_count, per triple: u32 head, u16 rel, u32 tail,
//   (concept_count + 1) x u64 adjacency offsets.
void save_index(const KnowledgeGraph& graph, const std::string& path);
KnowledgeGraph load_index(const std::string& path);

// Concepts whose stemmed surface matches a stemmed n-gram of `tokens`
// (n <= max_ngram), longest match first, consuming matched tokens; stopword
// unigrams are skipped. Ordered by first match position, then ConceptId.
std::vector<ConceptId> align_concepts(std::span<const std::string> tokens,
                                      const KnowledgeGraph& graph, const StopwordSet& stopwords,
                                      const Stemmer& stemmer, int max_ngram);

}  // namespace bkg
