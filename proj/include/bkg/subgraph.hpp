#pragma once

#include <cstdint>
#include <limits>
#include <optional>
#include <span>
#include <string>
#include <unordered_set>
#include <vector>

#include "bkg/common.hpp"
#include "bkg/dataset.hpp"
#include "bkg/kg.hpp"

namespace bkg {

inline constexpr std::uint32_t kUnreachableDist = 0xffffffffu;
inline constexpr std::uint64_t kUnlimitedBudget = std::numeric_limits<std::uint64_t>::max();

// Per-statement pruned neighborhood. Nodes ascend; edges are all graph
// triples among the nodes, grouped by head. Distances are BFS hop counts
// from the nearest source over the induced edges.
struct Subgraph {
  std::vector<ConceptId> nodes;
  std::vector<std::uint32_t> distance;       // parallel to nodes
  std::vector<Triple> edges;                 // grouped by ascending head
  std::vector<std::uint64_t> edge_offsets;   // nodes.size() + 1 entries
  std::vector<ConceptId> sources;            // ascending, deduplicated
  std::uint32_t hop_bound = 0;
  std::uint64_t budget = 0;

  std::size_t size() const { return nodes.size(); }
  std::optional<std::size_t> index_of(ConceptId id) const;  // binary search
  std::span<const Triple> out_edges(std::size_t node_index) const;
  void rebuild_edge_offsets();

  bool operator==(const Subgraph&) const = default;
};

// Bounded expansion: candidates are admitted one at a time under (distinct
// current-node visit count desc, ConceptId asc), restricted to provisional
// depth <= hop_bound, for at most hop_bound rounds of `budget` admissions
// each. Admitting one node at a time keeps the admission order independent
// of the budget, so a larger budget can only extend the node set. Candidates
// outside node_filter (when given) are never admitted; sources are always
// kept.
Subgraph retrieve_subgraph(const KnowledgeGraph& graph, std::span<const ConceptId> sources,
                           std::uint32_t hop_bound = 3, std::uint64_t budget = 300,
                           const std::unordered_set<ConceptId>* node_filter = nullptr);

// (C_y − C_x) ∩ V_x, ascending.
std::vector<ConceptId> label_bridge_concepts(const Subgraph& subgraph,
                                             std::span<const ConceptId> target_concepts);

struct SupervisionSet {
  std::vector<ConceptId> bridge;  // ascending
  std::vector<Triple> positives;  // sorted, unique; union over all shortest paths
  std::uint64_t paths_enumerated = 0;
  bool truncated = false;  // some (bridge, source) pairs hit the enumeration cap

  bool operator==(const SupervisionSet&) const = default;
};

// Enumerates, per bridge concept and per source, every shortest path over
// the subgraph edges (per-source shortest length), unioning the triples.
// At most path_cap paths are enumerated per bridge concept.
SupervisionSet extract_supervision_paths(const Subgraph& subgraph,
                                         std::span<const ConceptId> bridge,
                                         std::uint64_t path_cap = 10000);

struct HopStats {
  // concept_hist[h] counts target concepts whose min full-graph distance
  // from any source is h (h >= 1).
  std::vector<std::uint64_t> concept_hist;
  std::uint64_t concept_unreachable = 0;
  // example_hist[h] counts examples whose farthest reachable target sits at h.
  std::vector<std::uint64_t> example_hist;
  std::uint64_t example_unreachable = 0;  // has targets, none reachable
  std::uint64_t examples_with_targets = 0;
  std::uint64_t examples_skipped = 0;  // no sources or no targets outside C_x
  std::vector<double> mean_ball_size;  // mean unpruned |{v : d(v) <= h}|, h = 1..3

  double reachable_within(std::size_t max_hops) const;  // fraction of reachable concepts
};

HopStats hop_requirements(const KnowledgeGraph& graph, std::span<const Example> examples);

// Retrieve-once/train-many cache, magic "BKGC": header (magic, u32 version,
// u64 graph vocab checksum, u64 record count), then one length-prefixed
// record per example (u64 byte length, then id, statement tokens, subgraph,
// supervision).
struct CachedExample {
  std::string id;
  std::vector<std::string> statement_tokens;
  Subgraph subgraph;
  SupervisionSet supervision;

  bool operator==(const CachedExample&) const = default;
};

void save_cache(const std::string& path, std::uint64_t vocab_checksum,
                std::span<const CachedExample> examples);
std::vector<CachedExample> load_cache(const std::string& path,
                                      std::optional<std::uint64_t> expected_checksum);

}  // namespace bkg
