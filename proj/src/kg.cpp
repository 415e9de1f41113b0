#include "bkg/kg.hpp"

#include <algorithm>
#include <array>
#include <cctype>
#include <cstring>
#include <fstream>
#include <sstream>
#include <unordered_set>

#include "bkg/bytes.hpp"

namespace bkg {

namespace {

constexpr char kIndexMagic[4] = {'B', 'K', 'G', '1'};
constexpr std::uint32_t kIndexVersion = 1;
constexpr std::size_t kMalformedSampleCap = 50;

std::uint64_t pack_pair(ConceptId head, ConceptId tail) {
  return (static_cast<std::uint64_t>(head) << 32) | tail;
}

std::uint64_t fold_string(std::string_view s, std::uint64_t state) {
  state = fnv1a64(s, state);
  const char sep = '\0';
  return fnv1a64(std::string_view(&sep, 1), state);
}

}  // namespace

std::optional<ConceptId> KnowledgeGraph::find_surface(std::string_view surface) const {
  auto it = surface_to_id_.find(std::string(surface));
  if (it == surface_to_id_.end()) return std::nullopt;
  return it->second;
}

std::span<const Triple> KnowledgeGraph::neighbors(ConceptId id) const {
  if (id >= concept_count()) throw DataError("concept id out of range: " + std::to_string(id));
  std::uint64_t begin = offsets_[id], end = offsets_[id + 1];
  return {triples_.data() + begin, triples_.data() + end};
}

const std::vector<ConceptId>* KnowledgeGraph::stem_lookup(std::string_view stem) const {
  auto it = stem_to_ids_.find(std::string(stem));
  if (it == stem_to_ids_.end()) return nullptr;
  return &it->second;
}

std::string KnowledgeGraph::relation_name(RelId id) const {
  if (id >= relation_id_count()) throw DataError("relation id out of range");
  std::size_t n = relation_names_.size();
  if (id >= n) return relation_names_[id - n] + "_rev";
  return relation_names_[id];
}

RelId KnowledgeGraph::reverse_of(RelId id) const {
  if (id >= relation_id_count()) throw DataError("relation id out of range");
  std::size_t n = relation_names_.size();
  return static_cast<RelId>(id < n ? id + n : id - n);
}

std::uint64_t KnowledgeGraph::vocab_checksum() const {
  std::uint64_t state = 0xcbf29ce484222325ull;
  for (const auto& name : relation_names_) state = fold_string(name, state);
  for (std::size_t i = 0; i < surfaces_.size(); ++i) {
    state = fold_string(surfaces_[i], state);
    state = fold_string(stems_[i], state);
  }
  return state;
}

void KnowledgeGraph::rebuild_lookup_tables() {
  surface_to_id_.clear();
  stem_to_ids_.clear();
  surface_to_id_.reserve(surfaces_.size());
  for (ConceptId id = 0; id < surfaces_.size(); ++id) {
    surface_to_id_.emplace(surfaces_[id], id);
    stem_to_ids_[stems_[id]].push_back(id);  // ids ascend, buckets stay sorted
  }
}

KnowledgeGraph::Builder::Builder(std::vector<std::string> relation_names, const Stemmer& stemmer)
    : stemmer_(stemmer) {
  if (relation_names.empty()) throw DataError("relation vocabulary is empty");
  if (relation_names.size() > 64)
    throw DataError("relation vocabulary too large for dedup mask (max 64 merged names)");
  graph_.relation_names_ = std::move(relation_names);
}

ConceptId KnowledgeGraph::Builder::intern_concept(std::string_view normalized_surface) {
  std::string key(normalized_surface);
  auto it = graph_.surface_to_id_.find(key);
  if (it != graph_.surface_to_id_.end()) return it->second;
  ConceptId id = static_cast<ConceptId>(graph_.surfaces_.size());
  graph_.surface_to_id_.emplace(key, id);
  graph_.surfaces_.push_back(key);
  graph_.stems_.push_back(stemmer_.stem_phrase(key));
  return id;
}

bool KnowledgeGraph::Builder::add_triple(ConceptId head, RelId forward_rel, ConceptId tail) {
  std::size_t n = graph_.relation_names_.size();
  if (forward_rel >= n) throw DataError("forward relation id out of range");
  if (head >= graph_.surfaces_.size() || tail >= graph_.surfaces_.size())
    throw DataError("triple endpoint out of range");
  if (head == tail) throw DataError("self-loops are rejected at ingestion");
  std::uint64_t& mask = seen_[pack_pair(head, tail)];
  std::uint64_t bit = 1ull << forward_rel;
  if (mask & bit) return false;
  mask |= bit;
  pending_.push_back({head, forward_rel, tail});
  pending_.push_back({tail, static_cast<RelId>(forward_rel + n), head});
  return true;
}

KnowledgeGraph KnowledgeGraph::Builder::build() && {
  std::size_t v = graph_.surfaces_.size();
  std::vector<std::uint64_t> counts(v + 1, 0);
  for (const Triple& t : pending_) ++counts[t.head + 1];
  for (std::size_t i = 1; i <= v; ++i) counts[i] += counts[i - 1];
  graph_.offsets_ = counts;
  graph_.triples_.resize(pending_.size());
  std::vector<std::uint64_t> cursor(counts.begin(), counts.end() - 1);
  for (const Triple& t : pending_) graph_.triples_[cursor[t.head]++] = t;
  pending_.clear();
  seen_.clear();
  std::unordered_map<std::string, std::vector<ConceptId>> stems;
  for (ConceptId id = 0; id < v; ++id) stems[graph_.stems_[id]].push_back(id);
  graph_.stem_to_ids_ = std::move(stems);
  return std::move(graph_);
}

std::optional<std::string> normalize_concept_uri(std::string_view uri, std::string_view lang) {
  std::string prefix = "/c/" + std::string(lang) + "/";
  if (uri.size() < prefix.size() || uri.substr(0, prefix.size()) != prefix) return std::nullopt;
  std::string out;
  for (std::size_t i = prefix.size(); i < uri.size(); ++i) {
    char c = uri[i];
    if (c == '/') break;  // drop part-of-speech / sense segments
    if (c == '_')
      out.push_back(' ');
    else
      out.push_back(static_cast<char>(std::tolower(static_cast<unsigned char>(c))));
  }
  return out;
}

KnowledgeGraph load_conceptnet(const std::string& assertions_path, const RelationVocab& vocab,
                               const IngestOptions& options, IngestReport* report) {
  std::ifstream in(assertions_path);
  if (!in) throw IoError("cannot open assertions file: " + assertions_path);

  std::optional<RelId> catch_all;
  if (options.unknown_relation == UnknownRelationPolicy::map_to_relatedto) {
    catch_all = vocab.id_of_merged("relatedto");
    if (!catch_all)
      throw ConfigError("unknown-relation policy needs a 'relatedto' merged relation");
  }

  PorterStemmer stemmer;
  KnowledgeGraph::Builder builder(vocab.merged_names(), stemmer);
  IngestReport local;
  IngestReport& rep = report ? *report : local;

  std::string line;
  std::uint64_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    ++rep.rows_total;

    // fields: assertion uri, relation uri, start uri, end uri, metadata
    std::array<std::string_view, 4> fields;
    std::string_view rest = line;
    bool malformed = false;
    for (int f = 0; f < 4; ++f) {
      std::size_t tab = rest.find('\t');
      if (tab == std::string_view::npos) {
        malformed = true;
        break;
      }
      fields[f] = rest.substr(0, tab);
      rest = rest.substr(tab + 1);
    }
    if (malformed) {
      ++rep.rows_malformed;
      if (rep.malformed_samples.size() < kMalformedSampleCap)
        rep.malformed_samples.emplace_back(lineno, line.substr(0, 120));
      continue;
    }

    auto head_surface = normalize_concept_uri(fields[2], options.lang);
    auto tail_surface = normalize_concept_uri(fields[3], options.lang);
    if (!head_surface || !tail_surface) {
      ++rep.rows_lang_filtered;
      continue;
    }
    if (head_surface->empty() || tail_surface->empty()) {
      ++rep.rows_malformed;
      if (rep.malformed_samples.size() < kMalformedSampleCap)
        rep.malformed_samples.emplace_back(lineno, line.substr(0, 120));
      continue;
    }

    std::optional<RelId> rel = vocab.id_of(fields[1]);
    if (!rel) {
      if (catch_all) {
        rel = catch_all;
      } else {
        ++rep.rows_unknown_relation;
        continue;
      }
    }

    if (*head_surface == *tail_surface) {
      ++rep.rows_self_loop;
      continue;
    }
    ConceptId head = builder.intern_concept(*head_surface);
    ConceptId tail = builder.intern_concept(*tail_surface);
    if (!builder.add_triple(head, *rel, tail)) ++rep.rows_duplicate;
  }
  if (in.bad()) throw IoError("read failed: " + assertions_path);

  KnowledgeGraph graph = std::move(builder).build();
  rep.triples_stored = graph.triple_count();
  rep.concepts = graph.concept_count();
  return graph;
}

void save_index(const KnowledgeGraph& graph, const std::string& path) {
  std::ostringstream buf(std::ios::binary);
  BinWriter w(buf);
  w.bytes(kIndexMagic, 4);
  w.u32(kIndexVersion);
  w.u64(graph.vocab_checksum());
  w.u32(static_cast<std::uint32_t>(graph.relation_names_.size()));
  for (const auto& name : graph.relation_names_) w.str(name);
  w.u32(static_cast<std::uint32_t>(graph.surfaces_.size()));
  for (std::size_t i = 0; i < graph.surfaces_.size(); ++i) {
    w.str(graph.surfaces_[i]);
    w.str(graph.stems_[i]);
  }
  w.u64(graph.triples_.size());
  for (const Triple& t : graph.triples_) {
    w.u32(t.head);
    w.u16(t.rel);
    w.u32(t.tail);
  }
  for (std::uint64_t off : graph.offsets_) w.u64(off);
  write_file_atomic(path, buf.str());
}

KnowledgeGraph load_index(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open index file: " + path);
  BinReader r(in);

  char magic[4];
  r.bytes(magic, 4);
  if (std::memcmp(magic, kIndexMagic, 4) != 0)
    throw FormatError(FormatError::Kind::bad_magic, "not a graph index file: " + path);
  std::uint32_t version = r.u32();
  if (version != kIndexVersion)
    throw FormatError(FormatError::Kind::version_mismatch,
                      "index version " + std::to_string(version) + ", expected " +
                          std::to_string(kIndexVersion));
  std::uint64_t stored_checksum = r.u64();

  KnowledgeGraph graph;
  std::uint32_t n_rel = r.u32();
  if (n_rel == 0 || n_rel > 64)
    throw FormatError(FormatError::Kind::corrupt, "relation count out of range");
  graph.relation_names_.reserve(n_rel);
  for (std::uint32_t i = 0; i < n_rel; ++i) graph.relation_names_.push_back(r.str());

  std::uint32_t n_concepts = r.u32();
  graph.surfaces_.reserve(n_concepts);
  graph.stems_.reserve(n_concepts);
  for (std::uint32_t i = 0; i < n_concepts; ++i) {
    graph.surfaces_.push_back(r.str());
    graph.stems_.push_back(r.str());
  }

  std::uint64_t n_triples = r.u64();
  if (n_triples > (1ull << 40))
    throw FormatError(FormatError::Kind::corrupt, "triple count out of range");
  graph.triples_.reserve(n_triples);
  for (std::uint64_t i = 0; i < n_triples; ++i) {
    Triple t;
    t.head = r.u32();
    t.rel = r.u16();
    t.tail = r.u32();
    if (t.head >= n_concepts || t.tail >= n_concepts || t.rel >= 2 * n_rel)
      throw FormatError(FormatError::Kind::corrupt, "triple id out of range");
    graph.triples_.push_back(t);
  }

  graph.offsets_.resize(n_concepts + 1);
  for (std::size_t i = 0; i <= n_concepts; ++i) graph.offsets_[i] = r.u64();
  if (graph.offsets_.front() != 0 || graph.offsets_.back() != n_triples ||
      !std::is_sorted(graph.offsets_.begin(), graph.offsets_.end()))
    throw FormatError(FormatError::Kind::corrupt, "adjacency offsets are inconsistent");

  if (graph.vocab_checksum() != stored_checksum)
    throw FormatError(FormatError::Kind::checksum_mismatch, "vocabulary checksum mismatch");

  graph.rebuild_lookup_tables();
  return graph;
}

std::vector<ConceptId> align_concepts(std::span<const std::string> tokens,
                                      const KnowledgeGraph& graph, const StopwordSet& stopwords,
                                      const Stemmer& stemmer, int max_ngram) {
  std::vector<ConceptId> result;
  std::unordered_set<ConceptId> seen;
  if (max_ngram < 1) max_ngram = 1;

  std::vector<std::string> stemmed;
  stemmed.reserve(tokens.size());
  for (const auto& t : tokens) stemmed.push_back(stemmer.stem(t));

  std::size_t i = 0;
  while (i < tokens.size()) {
    std::size_t matched = 0;
    std::size_t longest = std::min<std::size_t>(max_ngram, tokens.size() - i);
    for (std::size_t len = longest; len >= 1; --len) {
      if (len == 1 && stopwords.contains(tokens[i])) continue;
      std::string key = stemmed[i];
      for (std::size_t k = 1; k < len; ++k) {
        key.push_back(' ');
        key += stemmed[i + k];
      }
      const std::vector<ConceptId>* bucket = graph.stem_lookup(key);
      if (bucket != nullptr && !bucket->empty()) {
        for (ConceptId id : *bucket)
          if (seen.insert(id).second) result.push_back(id);
        matched = len;
        break;
      }
    }
    i += matched > 0 ? matched : 1;
  }
  return result;
}

}  // namespace bkg
