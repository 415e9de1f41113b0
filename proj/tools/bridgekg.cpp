#include <cstdio>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <unordered_map>
#include <vector>

#include "CLI11.hpp"
#include "bkg/config.hpp"
#include "bkg/eval.hpp"
#include "bkg/extractor.hpp"
#include "bkg/relation_vocab.hpp"
#include "json.hpp"

using namespace bkg;

namespace {

const std::string& need(const std::string& value, const char* key) {
  if (value.empty())
    throw ConfigError(std::string("this subcommand requires --") + key);
  return value;
}

// every input is hashed so a run can be tied to exact file contents
void log_input(const std::string& path) {
  std::string bytes = read_file(path);
  std::fprintf(stderr, "input %s bytes=%zu fnv1a64=%016llx\n", path.c_str(), bytes.size(),
               static_cast<unsigned long long>(fnv1a64(bytes)));
}

void log_config(const PipelineConfig& cfg) {
  for (const auto& [k, v] : cfg.resolved())
    std::fprintf(stderr, "config %s=%s\n", k.c_str(), v.c_str());
}

void emit(const nlohmann::json& j) { std::printf("%s\n", j.dump().c_str()); }

StopwordSet load_stopwords(const PipelineConfig& cfg) {
  if (cfg.stopwords.empty()) {
    std::fprintf(stderr, "stopwords: none\n");
    return {};
  }
  log_input(cfg.stopwords);
  return StopwordSet::load(cfg.stopwords);
}

KnowledgeGraph load_graph(const PipelineConfig& cfg) {
  log_input(need(cfg.index, "index"));
  return load_index(cfg.index);
}

std::vector<Example> load_resolved(const PipelineConfig& cfg, const KnowledgeGraph& g,
                                   DatasetReadReport* report) {
  log_input(need(cfg.dataset, "dataset"));
  auto raws = load_dataset(cfg.dataset, report);
  auto stopwords = load_stopwords(cfg);
  PorterStemmer stemmer;
  return resolve_examples(raws, g, stopwords, stemmer, cfg.max_ngram);
}

void cmd_ingest(const PipelineConfig& cfg) {
  log_input(need(cfg.assertions, "assertions"));
  log_input(need(cfg.relations, "relations"));
  need(cfg.index, "index");
  auto vocab = RelationVocab::load(cfg.relations);
  IngestOptions opt;
  opt.lang = cfg.lang;
  IngestReport rep;
  KnowledgeGraph g = load_conceptnet(cfg.assertions, vocab, opt, &rep);
  if (rep.rows_total > 0 && g.concept_count() == 0)
    throw DataError("no usable assertion rows in " + cfg.assertions);
  save_index(g, cfg.index);
  char checksum[20];
  std::snprintf(checksum, sizeof checksum, "%016llx",
                static_cast<unsigned long long>(g.vocab_checksum()));
  emit({{"concepts", g.concept_count()},
        {"triples", g.triple_count()},
        {"relations", g.merged_relation_count()},
        {"rows_total", rep.rows_total},
        {"rows_malformed", rep.rows_malformed},
        {"rows_lang_filtered", rep.rows_lang_filtered},
        {"rows_unknown_relation", rep.rows_unknown_relation},
        {"rows_self_loop", rep.rows_self_loop},
        {"rows_duplicate", rep.rows_duplicate},
        {"vocab_checksum", checksum}});
}

void cmd_split(const PipelineConfig& cfg) {
  log_input(need(cfg.dataset, "dataset"));
  need(cfg.out, "out");
  DatasetReadReport report;
  auto raws = load_dataset(cfg.dataset, &report);
  SplitRatios ratios;
  ratios.train = cfg.train_ratio;
  ratios.dev = cfg.dev_ratio;
  ratios.test = std::max(0.0, 1.0 - cfg.train_ratio - cfg.dev_ratio);
  auto split = split_dataset(raws, ratios, cfg.train.seed);
  std::filesystem::create_directories(cfg.out);
  auto at = [&](const char* name) {
    return (std::filesystem::path(cfg.out) / name).string();
  };
  save_dataset(at("train.jsonl"), split.train);
  save_dataset(at("dev.jsonl"), split.dev);
  save_dataset(at("test.jsonl"), split.test);
  emit({{"train", split.train.size()},
        {"dev", split.dev.size()},
        {"test", split.test.size()},
        {"malformed", report.malformed.size()}});
}

void cmd_retrieve(const PipelineConfig& cfg) {
  KnowledgeGraph g = load_graph(cfg);
  need(cfg.cache, "cache");
  auto examples = load_resolved(cfg, g, nullptr);
  std::vector<CachedExample> cached;
  std::size_t skipped = 0, with_bridge = 0, truncated = 0;
  std::uint64_t nodes = 0, edges = 0;
  for (const Example& ex : examples) {
    if (ex.source_concepts.empty()) {
      ++skipped;
      continue;
    }
    CachedExample ce;
    ce.id = ex.id;
    ce.statement_tokens = ex.statement_tokens;
    ce.subgraph = retrieve_subgraph(g, ex.source_concepts, cfg.hop_bound, cfg.budget);
    auto bridge = label_bridge_concepts(ce.subgraph, ex.target_concepts);
    ce.supervision = extract_supervision_paths(ce.subgraph, bridge, cfg.path_cap);
    nodes += ce.subgraph.size();
    edges += ce.subgraph.edges.size();
    with_bridge += ce.supervision.bridge.empty() ? 0 : 1;
    truncated += ce.supervision.truncated ? 1 : 0;
    cached.push_back(std::move(ce));
  }
  save_cache(cfg.cache, g.vocab_checksum(), cached);
  double n = cached.empty() ? 1.0 : static_cast<double>(cached.size());
  emit({{"examples", cached.size()},
        {"skipped_no_sources", skipped},
        {"with_bridge", with_bridge},
        {"supervision_truncated", truncated},
        {"mean_nodes", static_cast<double>(nodes) / n},
        {"mean_edges", static_cast<double>(edges) / n}});
}

void cmd_stats(const PipelineConfig& cfg) {
  KnowledgeGraph g = load_graph(cfg);
  auto examples = load_resolved(cfg, g, nullptr);
  auto stats = corpus_stats(g, examples);
  std::string line = corpus_stats_json(stats);
  std::printf("%s\n", line.c_str());
  if (!cfg.out.empty()) write_file_atomic(cfg.out, line + "\n");
}

Dims dims_for(const PipelineConfig& cfg, const TokenVocab& vocab,
              const KnowledgeGraph& g) {
  Dims dims;
  dims.vocab = static_cast<Eigen::Index>(vocab.tokens.size());
  dims.d = static_cast<Eigen::Index>(cfg.d);
  dims.L = static_cast<Eigen::Index>(cfg.layers);
  dims.max_len = static_cast<Eigen::Index>(cfg.max_len);
  dims.max_dist = static_cast<Eigen::Index>(cfg.max_dist);
  dims.n_relations = static_cast<Eigen::Index>(g.relation_id_count());
  return dims;
}

template <typename Scalar>
void run_train(const PipelineConfig& cfg, const KnowledgeGraph& g,
               std::span<const PreparedExample> train,
               std::span<const PreparedExample> dev, ModelParams& params) {
  auto rep = train_model<Scalar>(
      params, train, dev, cfg.train,
      [&](std::uint32_t epoch, const EpochReport& er) {
        save_checkpoint(cfg.checkpoint, params, g.vocab_checksum());
        emit({{"epoch", epoch},
              {"mean_triple", er.mean_triple},
              {"mean_concept", er.mean_concept},
              {"mean_total", er.mean_total},
              {"dev_recall", er.dev_recall},
              {"dev_examples", er.dev_examples},
              {"coverage_missed", er.coverage_missed}});
        std::fflush(stdout);
      });
  emit({{"epochs", rep.epochs.size()},
        {"steps", rep.steps},
        {"final_dev_recall", rep.epochs.empty() ? 0.0 : rep.epochs.back().dev_recall}});
}

void cmd_train(const PipelineConfig& cfg) {
  KnowledgeGraph g = load_graph(cfg);
  log_input(need(cfg.cache, "cache"));
  need(cfg.checkpoint, "checkpoint");
  auto train_cache = load_cache(cfg.cache, g.vocab_checksum());
  std::vector<CachedExample> dev_cache;
  if (!cfg.dev_cache.empty()) {
    log_input(cfg.dev_cache);
    dev_cache = load_cache(cfg.dev_cache, g.vocab_checksum());
  }
  TokenVocab vocab = TokenVocab::from_graph(g);
  auto train_ex = prepare_examples(g, vocab, train_cache, cfg.max_len);
  auto dev_ex = prepare_examples(g, vocab, dev_cache, cfg.max_len);

  ModelParams params(dims_for(cfg, vocab, g));
  Rng rng(cfg.train.seed);
  params.init(rng);
  save_checkpoint(cfg.checkpoint, params, g.vocab_checksum());  // pre-epoch fallback
  if (cfg.float32)
    run_train<float>(cfg, g, train_ex, dev_ex, params);
  else
    run_train<double>(cfg, g, train_ex, dev_ex, params);
}

void cmd_extract(const PipelineConfig& cfg) {
  KnowledgeGraph g = load_graph(cfg);
  log_input(need(cfg.cache, "cache"));
  log_input(need(cfg.checkpoint, "checkpoint"));
  need(cfg.bundles, "bundles");
  auto loaded = load_checkpoint(cfg.checkpoint, g.vocab_checksum());
  auto cached = load_cache(cfg.cache, g.vocab_checksum());
  TokenVocab vocab = TokenVocab::from_graph(g);
  auto examples =
      prepare_examples(g, vocab, cached,
                       static_cast<std::size_t>(loaded.params.dims.max_len));
  std::string lines;
  for (const PreparedExample& ex : examples) {
    Bundle b = cfg.float32 ? extract_bundle<float>(g, loaded.params, ex, cfg.train)
                           : extract_bundle<double>(g, loaded.params, ex, cfg.train);
    lines += bundle_to_json(g, b);
    lines += '\n';
  }
  write_file_atomic(cfg.bundles, lines);
  emit({{"bundles", examples.size()}});
}

void cmd_eval(const PipelineConfig& cfg) {
  KnowledgeGraph g = load_graph(cfg);
  log_input(need(cfg.bundles, "bundles"));
  log_input(need(cfg.cache, "cache"));
  auto cached = load_cache(cfg.cache, g.vocab_checksum());
  std::unordered_map<std::string, const CachedExample*> by_id;
  for (const auto& ce : cached) by_id[ce.id] = &ce;

  log_input(need(cfg.dataset, "dataset"));
  auto raws = load_dataset(cfg.dataset);
  std::unordered_map<std::string, const RawExample*> raw_by_id;
  for (const auto& r : raws) raw_by_id[r.id] = &r;

  auto stopwords = load_stopwords(cfg);
  PorterStemmer stemmer;

  std::string text = read_file(cfg.bundles);
  std::vector<F1Example> f1_in;
  std::vector<RankedExample> ranked_in;
  ConceptId unseen = static_cast<ConceptId>(g.concept_count());
  std::size_t lineno = 0, at = 0;
  while (at < text.size()) {
    std::size_t end = text.find('\n', at);
    if (end == std::string::npos) end = text.size();
    std::string line = text.substr(at, end - at);
    at = end + 1;
    ++lineno;
    if (line.empty()) continue;
    ParsedBundle b = parse_bundle(line, lineno);
    auto ce_it = by_id.find(b.id);
    if (ce_it == by_id.end())
      throw DataError("bundle line " + std::to_string(lineno) + ": id '" + b.id +
                      "' not present in the cache");
    auto raw_it = raw_by_id.find(b.id);
    if (raw_it == raw_by_id.end())
      throw DataError("bundle line " + std::to_string(lineno) + ": id '" + b.id +
                      "' not present in the dataset");
    const CachedExample& ce = *ce_it->second;

    F1Example fe;
    RankedExample re;
    for (const auto& [surface, prob] : b.selected) {
      auto id = g.find_surface(surface);
      ConceptId c = id ? *id : unseen++;  // foreign surfaces can never match gold
      fe.predicted.push_back(c);
      re.ranked.push_back(c);
    }
    fe.sources = ce.subgraph.sources;
    for (const std::string& ref : raw_it->second->explanations)
      fe.references.push_back(
          align_concepts(tokenize(ref), g, stopwords, stemmer, cfg.max_ngram));
    re.gold = ce.supervision.bridge;
    f1_in.push_back(std::move(fe));
    ranked_in.push_back(std::move(re));
  }

  auto f1 = concept_f1(f1_in);
  auto at1 = pr_at_n(ranked_in, 1);
  auto atk = pr_at_n(ranked_in, cfg.train.k2);
  auto block = [](const char* p, const char* r, auto&& s) {
    return nlohmann::json{{p, s.precision}, {r, s.recall},
                          {"counted", s.counted}, {"skipped", s.skipped}};
  };
  nlohmann::json j{{"examples", ranked_in.size()},
                   {"concept_f1",
                    {{"precision", f1.precision},
                     {"recall", f1.recall},
                     {"f1", f1.f1},
                     {"counted", f1.counted},
                     {"skipped", f1.skipped}}},
                   {"pr_at_1", block("precision", "recall", at1)},
                   {"pr_at_k", block("precision", "recall", atk)},
                   {"k", cfg.train.k2}};
  std::string line = j.dump();
  std::printf("%s\n", line.c_str());
  std::fprintf(stderr, "metric             P       R      F1   counted skipped\n");
  std::fprintf(stderr, "concept_f1   %7.4f %7.4f %7.4f %7zu %7zu\n", f1.precision,
               f1.recall, f1.f1, f1.counted, f1.skipped);
  std::fprintf(stderr, "pr@1         %7.4f %7.4f       - %7zu %7zu\n", at1.precision,
               at1.recall, at1.counted, at1.skipped);
  std::fprintf(stderr, "pr@%-2u        %7.4f %7.4f       - %7zu %7zu\n", cfg.train.k2,
               atk.precision, atk.recall, atk.counted, atk.skipped);
  if (!cfg.out.empty()) write_file_atomic(cfg.out, line + "\n");
}

void cmd_export_templates(const PipelineConfig& cfg) {
  log_input(need(cfg.bundles, "bundles"));
  need(cfg.out, "out");
  auto stopwords = load_stopwords(cfg);
  std::string text = read_file(cfg.bundles);
  std::string rendered;
  std::size_t lineno = 0, at = 0, count = 0;
  while (at < text.size()) {
    std::size_t end = text.find('\n', at);
    if (end == std::string::npos) end = text.size();
    std::string line = text.substr(at, end - at);
    at = end + 1;
    ++lineno;
    if (line.empty()) continue;
    ParsedBundle b = parse_bundle(line, lineno);
    std::string keywords;
    for (const std::string& tok : tokenize(b.statement)) {
      if (stopwords.contains(tok)) continue;
      if (!keywords.empty()) keywords += ' ';
      keywords += tok;
    }
    for (const auto& [surface, prob] : b.selected) {
      rendered += b.id + "\t" + surface + " relates to " + keywords + "\n";
      ++count;
    }
  }
  write_file_atomic(cfg.out, rendered);
  emit({{"templates", count}});
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"bridge-concept retrieval, training, and extraction pipeline"};
  app.require_subcommand(1);

  std::string config_path;
  std::vector<std::pair<std::string, std::string>> overrides;
  PipelineConfig defaults;
  auto add_common = [&](CLI::App* sub) {
    sub->add_option("--config", config_path, "flat key = value settings file");
    for (const auto& [key, value] : defaults.resolved()) {
      std::string k = key;
      sub->add_option_function<std::string>(
          "--" + k,
          [k, &overrides](const std::string& v) { overrides.emplace_back(k, v); },
          "override '" + k + "' (default: " + (value.empty() ? "unset" : value) + ")");
    }
  };

  std::map<std::string, void (*)(const PipelineConfig&)> commands{
      {"ingest", &cmd_ingest},       {"split", &cmd_split},
      {"retrieve", &cmd_retrieve},   {"stats", &cmd_stats},
      {"train", &cmd_train},         {"extract", &cmd_extract},
      {"eval", &cmd_eval},           {"export-templates", &cmd_export_templates}};
  std::map<std::string, const char*> help{
      {"ingest", "build the binary graph index from an assertions TSV"},
      {"split", "split a JSONL dataset into train/dev/test files"},
      {"retrieve", "retrieve subgraphs and supervision into a cache"},
      {"stats", "corpus hop-requirement and size statistics"},
      {"train", "train the extraction model from a cache"},
      {"extract", "write concept bundles for every cached example"},
      {"eval", "score bundles against gold bridges and references"},
      {"export-templates", "render plain-text explanation stubs from bundles"}};
  for (auto& [name, fn] : commands) add_common(app.add_subcommand(name, help[name]));

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    int rc = app.exit(e);
    return rc == 0 ? 0 : 2;
  }

  try {
    PipelineConfig cfg;
    if (!config_path.empty()) apply_config_file(cfg, config_path);
    for (const auto& [k, v] : overrides) cfg.set(k, v);
    cfg.validate();
    log_config(cfg);
    commands.at(app.get_subcommands().front()->get_name())(cfg);
    return 0;
  } catch (const ConfigError& e) {
    std::fprintf(stderr, "config error: %s\n", e.what());
    return 2;
  } catch (const IoError& e) {
    std::fprintf(stderr, "io error: %s\n", e.what());
    return 3;
  } catch (const NumericalError& e) {
    std::fprintf(stderr, "numerical error: %s\n", e.what());
    return 5;
  } catch (const DataError& e) {
    std::fprintf(stderr, "data error: %s\n", e.what());
    return 4;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
}
