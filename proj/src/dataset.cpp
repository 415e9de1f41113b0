#include "bkg/dataset.hpp"

#include <fstream>
#include <sstream>
#include <unordered_set>

#include "json.hpp"

namespace bkg {

namespace {

using nlohmann::json;

RawExample parse_record(const std::string& line) {
  json j = json::parse(line);  // throws json::parse_error
  if (!j.is_object()) throw DataError("record is not a JSON object");
  RawExample ex;
  if (!j.contains("id") || !j["id"].is_string()) throw DataError("missing string field 'id'");
  ex.id = j["id"].get<std::string>();
  if (!j.contains("statement") || !j["statement"].is_string())
    throw DataError("missing string field 'statement'");
  ex.statement = j["statement"].get<std::string>();
  if (j.contains("explanations")) {
    if (!j["explanations"].is_array()) throw DataError("'explanations' is not an array");
    for (const auto& e : j["explanations"]) {
      if (!e.is_string()) throw DataError("'explanations' entry is not a string");
      ex.explanations.push_back(e.get<std::string>());
    }
  }
  if (ex.id.empty()) throw DataError("empty 'id'");
  return ex;
}

}  // namespace

std::vector<RawExample> load_dataset(const std::string& path, DatasetReadReport* report) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open dataset: " + path);
  std::vector<RawExample> out;
  std::string line;
  std::uint64_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (report != nullptr) ++report->lines_total;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      out.push_back(parse_record(line));
    } catch (const std::exception& e) {
      if (report == nullptr)
        throw DataError("dataset line " + std::to_string(lineno) + ": " + e.what());
      report->malformed.emplace_back(lineno, e.what());
    }
  }
  if (in.bad()) throw IoError("read failed: " + path);
  return out;
}

void save_dataset(const std::string& path, std::span<const RawExample> examples) {
  std::ostringstream buf;
  for (const RawExample& ex : examples) {
    json j;
    j["id"] = ex.id;
    j["statement"] = ex.statement;
    j["explanations"] = ex.explanations;
    buf << j.dump() << '\n';
  }
  write_file_atomic(path, buf.str());
}

DatasetSplit split_dataset(std::span<const RawExample> raws, const SplitRatios& ratios,
                           std::uint64_t seed) {
  if (ratios.train < 0 || ratios.dev < 0 || ratios.test < 0)
    throw ConfigError("split ratios must be nonnegative");
  double sum = ratios.train + ratios.dev + ratios.test;
  if (sum <= 0) throw ConfigError("split ratios must not all be zero");
  double cut_train = ratios.train / sum;
  double cut_dev = cut_train + ratios.dev / sum;

  DatasetSplit split;
  Rng rng(seed);
  for (const RawExample& raw : raws) {
    double u = rng.next_double();
    if (u < cut_train) {
      if (raw.explanations.empty()) {
        split.train.push_back(raw);
        continue;
      }
      for (std::size_t i = 0; i < raw.explanations.size(); ++i) {
        RawExample pair;
        pair.id = raw.id + "#" + std::to_string(i);
        pair.statement = raw.statement;
        pair.explanations = {raw.explanations[i]};
        split.train.push_back(std::move(pair));
      }
    } else if (u < cut_dev) {
      split.dev.push_back(raw);
    } else {
      split.test.push_back(raw);
    }
  }
  return split;
}

Example resolve_example(const RawExample& raw, const KnowledgeGraph& graph,
                        const StopwordSet& stopwords, const Stemmer& stemmer, int max_ngram) {
  Example ex;
  ex.id = raw.id;
  ex.statement = raw.statement;
  ex.statement_tokens = tokenize(raw.statement);
  ex.explanations = raw.explanations;
  ex.source_concepts =
      align_concepts(ex.statement_tokens, graph, stopwords, stemmer, max_ngram);

  std::unordered_set<ConceptId> seen;
  for (const std::string& text : raw.explanations) {
    auto tokens = tokenize(text);
    for (ConceptId id : align_concepts(tokens, graph, stopwords, stemmer, max_ngram))
      if (seen.insert(id).second) ex.target_concepts.push_back(id);
  }
  return ex;
}

std::vector<Example> resolve_examples(std::span<const RawExample> raws,
                                      const KnowledgeGraph& graph, const StopwordSet& stopwords,
                                      const Stemmer& stemmer, int max_ngram) {
  std::vector<Example> out;
  out.reserve(raws.size());
  for (const RawExample& raw : raws)
    out.push_back(resolve_example(raw, graph, stopwords, stemmer, max_ngram));
  return out;
}

}  // namespace bkg
