#include "bkg/subgraph.hpp"

#include <algorithm>
#include <cstring>
#include <fstream>
#include <queue>
#include <sstream>
#include <unordered_map>

#include "bkg/bytes.hpp"

namespace bkg {

namespace {

constexpr char kCacheMagic[4] = {'B', 'K', 'G', 'C'};
constexpr std::uint32_t kCacheVersion = 1;

// BFS over induced edges in node-index space; edge_target[e] caches
// index_of(edges[e].tail) so repeated searches stay cheap.
std::vector<std::uint32_t> bfs_indices(const Subgraph& sg,
                                       const std::vector<std::size_t>& edge_target,
                                       std::span<const std::size_t> seeds) {
  std::vector<std::uint32_t> dist(sg.size(), kUnreachableDist);
  std::vector<std::size_t> queue;
  queue.reserve(sg.size());
  for (std::size_t s : seeds) {
    if (dist[s] != 0) {
      dist[s] = 0;
      queue.push_back(s);
    }
  }
  for (std::size_t qi = 0; qi < queue.size(); ++qi) {
    std::size_t u = queue[qi];
    for (std::uint64_t e = sg.edge_offsets[u]; e < sg.edge_offsets[u + 1]; ++e) {
      std::size_t v = edge_target[e];
      if (dist[v] == kUnreachableDist) {
        dist[v] = dist[u] + 1;
        queue.push_back(v);
      }
    }
  }
  return dist;
}

std::vector<std::size_t> edge_targets(const Subgraph& sg) {
  std::vector<std::size_t> out(sg.edges.size());
  for (std::size_t e = 0; e < sg.edges.size(); ++e) {
    auto idx = sg.index_of(sg.edges[e].tail);
    if (!idx) throw DataError("subgraph edge tail outside node set");
    out[e] = *idx;
  }
  return out;
}

}  // namespace

std::optional<std::size_t> Subgraph::index_of(ConceptId id) const {
  auto it = std::lower_bound(nodes.begin(), nodes.end(), id);
  if (it == nodes.end() || *it != id) return std::nullopt;
  return static_cast<std::size_t>(it - nodes.begin());
}

std::span<const Triple> Subgraph::out_edges(std::size_t node_index) const {
  return {edges.data() + edge_offsets[node_index],
          edges.data() + edge_offsets[node_index + 1]};
}

void Subgraph::rebuild_edge_offsets() {
  edge_offsets.assign(nodes.size() + 1, 0);
  ConceptId prev_head = 0;
  for (std::size_t e = 0; e < edges.size(); ++e) {
    if (e > 0 && edges[e].head < prev_head)
      throw FormatError(FormatError::Kind::corrupt, "subgraph edges not grouped by head");
    prev_head = edges[e].head;
    auto idx = index_of(edges[e].head);
    if (!idx) throw FormatError(FormatError::Kind::corrupt, "subgraph edge head outside nodes");
    ++edge_offsets[*idx + 1];
  }
  for (std::size_t i = 1; i <= nodes.size(); ++i) edge_offsets[i] += edge_offsets[i - 1];
}

Subgraph retrieve_subgraph(const KnowledgeGraph& graph, std::span<const ConceptId> sources,
                           std::uint32_t hop_bound, std::uint64_t budget,
                           const std::unordered_set<ConceptId>* node_filter) {
  if (sources.empty()) throw DataError("subgraph retrieval needs at least one source concept");
  if (budget == 0) throw ConfigError("expansion budget must be positive");
  std::vector<ConceptId> srcs(sources.begin(), sources.end());
  std::sort(srcs.begin(), srcs.end());
  srcs.erase(std::unique(srcs.begin(), srcs.end()), srcs.end());
  for (ConceptId s : srcs)
    if (s >= graph.concept_count())
      throw DataError("source concept not in graph: " + std::to_string(s));

  std::unordered_set<ConceptId> members(srcs.begin(), srcs.end());
  std::vector<ConceptId> all(srcs);

  // One admission at a time under (visit count desc, id asc), so the order
  // nodes enter is independent of the budget and a larger budget strictly
  // extends the set. Counts update incrementally; the heap is lazy — every
  // count bump pushes a fresh entry and stale ones are dropped on pop.
  struct Cand {
    std::uint32_t count = 0;
    std::uint32_t depth = kUnreachableDist;  // 1 + min admitted-neighbor depth
  };
  std::unordered_map<ConceptId, Cand> cands;
  std::unordered_map<ConceptId, std::uint32_t> depth_of;
  using Entry = std::pair<std::uint32_t, ConceptId>;
  auto below = [](const Entry& a, const Entry& b) {
    if (a.first != b.first) return a.first < b.first;
    return a.second > b.second;
  };
  std::priority_queue<Entry, std::vector<Entry>, decltype(below)> heap(below);

  std::unordered_set<ConceptId> tails_of_v;
  auto relax = [&](ConceptId u) {
    std::uint32_t du = depth_of[u];
    tails_of_v.clear();
    for (const Triple& t : graph.neighbors(u)) {
      if (members.count(t.tail) > 0) continue;
      if (node_filter != nullptr && node_filter->count(t.tail) == 0) continue;
      if (!tails_of_v.insert(t.tail).second) continue;  // parallel edges: one visit
      Cand& c = cands[t.tail];
      ++c.count;
      if (du + 1 < c.depth) c.depth = du + 1;
      if (c.depth <= hop_bound) heap.emplace(c.count, t.tail);
    }
  };
  for (ConceptId s : srcs) depth_of[s] = 0;
  for (ConceptId s : srcs) relax(s);

  std::uint64_t cap = 0;  // hop_bound rounds of at most `budget` admissions
  if (hop_bound > 0)
    cap = budget > kUnlimitedBudget / hop_bound ? kUnlimitedBudget : budget * hop_bound;

  for (std::uint64_t added = 0; added < cap && !heap.empty();) {
    auto [count, v] = heap.top();
    heap.pop();
    if (members.count(v) > 0) continue;
    auto it = cands.find(v);
    if (count != it->second.count) continue;  // stale entry
    members.insert(v);
    all.push_back(v);
    depth_of[v] = it->second.depth;
    cands.erase(it);
    ++added;
    relax(v);
  }

  Subgraph sg;
  std::sort(all.begin(), all.end());
  sg.nodes = std::move(all);
  sg.sources = std::move(srcs);
  sg.hop_bound = hop_bound;
  sg.budget = budget;

  sg.edge_offsets.assign(sg.nodes.size() + 1, 0);
  for (std::size_t i = 0; i < sg.nodes.size(); ++i) {
    for (const Triple& t : graph.neighbors(sg.nodes[i]))
      if (members.count(t.tail) > 0) sg.edges.push_back(t);
    sg.edge_offsets[i + 1] = sg.edges.size();
  }

  auto targets = edge_targets(sg);
  std::vector<std::size_t> seeds;
  seeds.reserve(sg.sources.size());
  for (ConceptId s : sg.sources) seeds.push_back(*sg.index_of(s));
  sg.distance = bfs_indices(sg, targets, seeds);
  return sg;
}

std::vector<ConceptId> label_bridge_concepts(const Subgraph& subgraph,
                                             std::span<const ConceptId> target_concepts) {
  std::unordered_set<ConceptId> cx(subgraph.sources.begin(), subgraph.sources.end());
  std::vector<ConceptId> out;
  for (ConceptId c : target_concepts)
    if (cx.count(c) == 0 && subgraph.index_of(c).has_value()) out.push_back(c);
  std::sort(out.begin(), out.end());
  out.erase(std::unique(out.begin(), out.end()), out.end());
  return out;
}

SupervisionSet extract_supervision_paths(const Subgraph& subgraph,
                                         std::span<const ConceptId> bridge,
                                         std::uint64_t path_cap) {
  SupervisionSet out;
  out.bridge.assign(bridge.begin(), bridge.end());
  std::sort(out.bridge.begin(), out.bridge.end());
  out.bridge.erase(std::unique(out.bridge.begin(), out.bridge.end()), out.bridge.end());
  for (ConceptId c : out.bridge)
    if (!subgraph.index_of(c))
      throw DataError("bridge concept outside subgraph: " + std::to_string(c));
  if (path_cap == 0) throw ConfigError("path cap must be positive");

  auto targets = edge_targets(subgraph);

  std::vector<std::size_t> source_indices;
  source_indices.reserve(subgraph.sources.size());
  for (ConceptId s : subgraph.sources) source_indices.push_back(*subgraph.index_of(s));
  std::vector<std::vector<std::uint32_t>> dist_from_source;
  dist_from_source.reserve(source_indices.size());
  for (std::size_t si : source_indices)
    dist_from_source.push_back(bfs_indices(subgraph, targets, std::span(&si, 1)));

  std::unordered_set<Triple, TripleHash> positives;
  std::vector<const Triple*> path;  // edges of the DFS branch under construction

  for (ConceptId c : out.bridge) {
    std::size_t cidx = *subgraph.index_of(c);
    auto dist_to_c = bfs_indices(subgraph, targets, std::span(&cidx, 1));
    std::uint64_t paths_for_c = 0;
    bool capped = false;

    for (std::size_t si = 0; si < source_indices.size() && !capped; ++si) {
      const auto& ds = dist_from_source[si];
      std::uint32_t len = ds[cidx];
      if (len == kUnreachableDist || len == 0) continue;

      // Every branch satisfying ds[u] + 1 + dist_to_c[v] == len completes,
      // so the DFS only ever walks edges of shortest paths.
      path.clear();
      auto dfs = [&](auto&& self, std::size_t u) -> void {
        if (capped) return;
        if (u == cidx) {
          ++paths_for_c;
          ++out.paths_enumerated;
          for (const Triple* t : path) positives.insert(*t);
          if (paths_for_c >= path_cap) capped = true;
          return;
        }
        for (std::uint64_t e = subgraph.edge_offsets[u]; e < subgraph.edge_offsets[u + 1];
             ++e) {
          std::size_t v = targets[e];
          if (ds[v] != ds[u] + 1) continue;
          if (ds[u] + 1 + dist_to_c[v] != len) continue;
          path.push_back(&subgraph.edges[e]);
          self(self, v);
          path.pop_back();
          if (capped) return;
        }
      };
      dfs(dfs, source_indices[si]);
    }
    if (capped) out.truncated = true;
  }

  out.positives.assign(positives.begin(), positives.end());
  std::sort(out.positives.begin(), out.positives.end());
  return out;
}

double HopStats::reachable_within(std::size_t max_hops) const {
  std::uint64_t total = 0, within = 0;
  for (std::size_t h = 0; h < concept_hist.size(); ++h) {
    total += concept_hist[h];
    if (h <= max_hops) within += concept_hist[h];
  }
  if (total == 0) return 0.0;
  return static_cast<double>(within) / static_cast<double>(total);
}

HopStats hop_requirements(const KnowledgeGraph& graph, std::span<const Example> examples) {
  HopStats stats;
  stats.mean_ball_size.assign(3, 0.0);
  std::uint64_t ball_examples = 0;

  std::vector<std::uint32_t> dist;
  std::vector<ConceptId> queue;
  auto grow = [](std::vector<std::uint64_t>& hist, std::size_t h) {
    if (hist.size() <= h) hist.resize(h + 1, 0);
    ++hist[h];
  };

  for (const Example& ex : examples) {
    if (ex.source_concepts.empty()) {
      ++stats.examples_skipped;
      continue;
    }
    dist.assign(graph.concept_count(), kUnreachableDist);
    queue.clear();
    for (ConceptId s : ex.source_concepts) {
      if (s >= graph.concept_count()) throw DataError("source concept not in graph");
      if (dist[s] != 0) {
        dist[s] = 0;
        queue.push_back(s);
      }
    }
    std::uint64_t ball[4] = {0, 0, 0, 0};  // |{v : d(v) <= h}| for h = 0..3
    for (std::size_t qi = 0; qi < queue.size(); ++qi) {
      ConceptId u = queue[qi];
      if (dist[u] <= 3) ++ball[dist[u]];
      for (const Triple& t : graph.neighbors(u)) {
        if (dist[t.tail] == kUnreachableDist) {
          dist[t.tail] = dist[u] + 1;
          queue.push_back(t.tail);
        }
      }
    }
    ++ball_examples;
    for (int h = 1; h <= 3; ++h) {
      ball[h] += ball[h - 1];
      stats.mean_ball_size[static_cast<std::size_t>(h) - 1] += static_cast<double>(ball[h]);
    }

    std::unordered_set<ConceptId> cx(ex.source_concepts.begin(), ex.source_concepts.end());
    bool any_target = false, any_reachable = false;
    std::uint32_t max_hop = 0;
    for (ConceptId c : ex.target_concepts) {
      if (cx.count(c) > 0) continue;
      any_target = true;
      if (dist[c] == kUnreachableDist) {
        ++stats.concept_unreachable;
      } else {
        grow(stats.concept_hist, dist[c]);
        any_reachable = true;
        max_hop = std::max(max_hop, dist[c]);
      }
    }
    if (!any_target) {
      ++stats.examples_skipped;
    } else {
      ++stats.examples_with_targets;
      if (any_reachable)
        grow(stats.example_hist, max_hop);
      else
        ++stats.example_unreachable;
    }
  }
  if (ball_examples > 0)
    for (double& v : stats.mean_ball_size) v /= static_cast<double>(ball_examples);
  return stats;
}

namespace {

void write_subgraph(BinWriter& w, const Subgraph& sg) {
  w.u32(static_cast<std::uint32_t>(sg.nodes.size()));
  for (ConceptId id : sg.nodes) w.u32(id);
  for (std::uint32_t d : sg.distance) w.u32(d);
  w.u64(sg.edges.size());
  for (const Triple& t : sg.edges) {
    w.u32(t.head);
    w.u16(t.rel);
    w.u32(t.tail);
  }
  w.u32(static_cast<std::uint32_t>(sg.sources.size()));
  for (ConceptId id : sg.sources) w.u32(id);
  w.u32(sg.hop_bound);
  w.u64(sg.budget);
}

Subgraph read_subgraph(BinReader& r) {
  Subgraph sg;
  std::uint32_t n = r.u32();
  sg.nodes.reserve(n);
  for (std::uint32_t i = 0; i < n; ++i) sg.nodes.push_back(r.u32());
  if (!std::is_sorted(sg.nodes.begin(), sg.nodes.end()) ||
      std::adjacent_find(sg.nodes.begin(), sg.nodes.end()) != sg.nodes.end())
    throw FormatError(FormatError::Kind::corrupt, "subgraph nodes not strictly ascending");
  sg.distance.reserve(n);
  for (std::uint32_t i = 0; i < n; ++i) sg.distance.push_back(r.u32());
  std::uint64_t n_edges = r.u64();
  if (n_edges > (1ull << 32))
    throw FormatError(FormatError::Kind::corrupt, "edge count out of range");
  sg.edges.reserve(n_edges);
  for (std::uint64_t i = 0; i < n_edges; ++i) {
    Triple t;
    t.head = r.u32();
    t.rel = r.u16();
    t.tail = r.u32();
    if (!sg.index_of(t.head) || !sg.index_of(t.tail))
      throw FormatError(FormatError::Kind::corrupt, "subgraph edge endpoint outside nodes");
    sg.edges.push_back(t);
  }
  std::uint32_t n_sources = r.u32();
  sg.sources.reserve(n_sources);
  for (std::uint32_t i = 0; i < n_sources; ++i) {
    sg.sources.push_back(r.u32());
    if (!sg.index_of(sg.sources.back()))
      throw FormatError(FormatError::Kind::corrupt, "subgraph source outside nodes");
  }
  sg.hop_bound = r.u32();
  sg.budget = r.u64();
  sg.rebuild_edge_offsets();
  return sg;
}

void write_supervision(BinWriter& w, const SupervisionSet& sv) {
  w.u32(static_cast<std::uint32_t>(sv.bridge.size()));
  for (ConceptId id : sv.bridge) w.u32(id);
  w.u64(sv.positives.size());
  for (const Triple& t : sv.positives) {
    w.u32(t.head);
    w.u16(t.rel);
    w.u32(t.tail);
  }
  w.u64(sv.paths_enumerated);
  w.u8(sv.truncated ? 1 : 0);
}

SupervisionSet read_supervision(BinReader& r) {
  SupervisionSet sv;
  std::uint32_t n_bridge = r.u32();
  sv.bridge.reserve(n_bridge);
  for (std::uint32_t i = 0; i < n_bridge; ++i) sv.bridge.push_back(r.u32());
  std::uint64_t n_pos = r.u64();
  if (n_pos > (1ull << 32))
    throw FormatError(FormatError::Kind::corrupt, "positive count out of range");
  sv.positives.reserve(n_pos);
  for (std::uint64_t i = 0; i < n_pos; ++i) {
    Triple t;
    t.head = r.u32();
    t.rel = r.u16();
    t.tail = r.u32();
    sv.positives.push_back(t);
  }
  sv.paths_enumerated = r.u64();
  sv.truncated = r.u8() != 0;
  return sv;
}

}  // namespace

void save_cache(const std::string& path, std::uint64_t vocab_checksum,
                std::span<const CachedExample> examples) {
  std::ostringstream buf(std::ios::binary);
  BinWriter w(buf);
  w.bytes(kCacheMagic, 4);
  w.u32(kCacheVersion);
  w.u64(vocab_checksum);
  w.u64(examples.size());
  for (const CachedExample& ex : examples) {
    std::ostringstream rec(std::ios::binary);
    BinWriter rw(rec);
    rw.str(ex.id);
    rw.u32(static_cast<std::uint32_t>(ex.statement_tokens.size()));
    for (const std::string& t : ex.statement_tokens) rw.str(t);
    write_subgraph(rw, ex.subgraph);
    write_supervision(rw, ex.supervision);
    std::string bytes = rec.str();
    w.u64(bytes.size());
    w.bytes(bytes.data(), bytes.size());
  }
  write_file_atomic(path, buf.str());
}

std::vector<CachedExample> load_cache(const std::string& path,
                                      std::optional<std::uint64_t> expected_checksum) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open subgraph cache: " + path);
  BinReader r(in);
  char magic[4];
  r.bytes(magic, 4);
  if (std::memcmp(magic, kCacheMagic, 4) != 0)
    throw FormatError(FormatError::Kind::bad_magic, "not a subgraph cache: " + path);
  std::uint32_t version = r.u32();
  if (version != kCacheVersion)
    throw FormatError(FormatError::Kind::version_mismatch,
                      "cache version " + std::to_string(version) + ", expected " +
                          std::to_string(kCacheVersion));
  std::uint64_t checksum = r.u64();
  if (expected_checksum.has_value() && checksum != *expected_checksum)
    throw FormatError(FormatError::Kind::checksum_mismatch,
                      "cache was built against a different graph vocabulary");
  std::uint64_t count = r.u64();
  if (count > (1ull << 32))
    throw FormatError(FormatError::Kind::corrupt, "record count out of range");
  std::vector<CachedExample> out;
  out.reserve(count);
  for (std::uint64_t i = 0; i < count; ++i) {
    std::uint64_t len = r.u64();
    if (len > (1ull << 32))
      throw FormatError(FormatError::Kind::corrupt, "record length out of range");
    std::string bytes(len, '\0');
    r.bytes(bytes.data(), len);
    std::istringstream rec(bytes, std::ios::binary);
    BinReader rr(rec);
    CachedExample ex;
    ex.id = rr.str();
    std::uint32_t n_tokens = rr.u32();
    ex.statement_tokens.reserve(n_tokens);
    for (std::uint32_t k = 0; k < n_tokens; ++k) ex.statement_tokens.push_back(rr.str());
    ex.subgraph = read_subgraph(rr);
    ex.supervision = read_supervision(rr);
    out.push_back(std::move(ex));
  }
  if (in.peek() != std::char_traits<char>::eof())
    throw FormatError(FormatError::Kind::corrupt, "trailing bytes after final record");
  return out;
}

}  // namespace bkg
