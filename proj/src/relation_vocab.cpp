#include "bkg/relation_vocab.hpp"

#include <algorithm>
#include <cctype>
#include <fstream>

namespace bkg {

namespace {

std::string lower(std::string_view s) {
  std::string out(s);
  std::transform(out.begin(), out.end(), out.begin(),
                 [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  return out;
}

}  // namespace

RelationVocab RelationVocab::load(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open relation mapping: " + path);
  std::vector<std::pair<std::string, std::string>> pairs;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty() || line[0] == '#') continue;
    std::size_t tab = line.find('\t');
    if (tab == std::string::npos)
      throw DataError("relation mapping line " + std::to_string(lineno) + ": missing tab");
    pairs.emplace_back(line.substr(0, tab), line.substr(tab + 1));
  }
  return from_pairs(pairs);
}

RelationVocab RelationVocab::from_pairs(
    const std::vector<std::pair<std::string, std::string>>& pairs) {
  RelationVocab vocab;
  for (const auto& [raw, merged] : pairs) {
    std::string raw_key = lower(raw);
    std::string merged_key = lower(merged);
    if (raw_key.empty() || merged_key.empty())
      throw DataError("relation mapping: empty field for raw uri '" + raw + "'");
    RelId id;
    auto it = vocab.name_to_id_.find(merged_key);
    if (it == vocab.name_to_id_.end()) {
      id = static_cast<RelId>(vocab.merged_names_.size());
      vocab.merged_names_.push_back(merged_key);
      vocab.name_to_id_.emplace(merged_key, id);
    } else {
      id = it->second;
    }
    auto [pos, inserted] = vocab.raw_to_merged_.emplace(raw_key, id);
    if (!inserted && pos->second != id)
      throw DataError("relation mapping: raw uri '" + raw + "' maps to two merged names");
  }
  if (vocab.merged_names_.empty()) throw DataError("relation mapping: no entries");
  return vocab;
}

std::string RelationVocab::name(RelId id) const {
  if (id >= id_count()) throw DataError("relation id out of range");
  if (is_reverse(id)) return merged_names_[id - merged_count()] + "_rev";
  return merged_names_[id];
}

std::optional<RelId> RelationVocab::id_of(std::string_view raw_uri) const {
  auto it = raw_to_merged_.find(lower(raw_uri));
  if (it == raw_to_merged_.end()) return std::nullopt;
  return it->second;
}

std::optional<RelId> RelationVocab::id_of_merged(std::string_view merged_name) const {
  auto it = name_to_id_.find(lower(merged_name));
  if (it == name_to_id_.end()) return std::nullopt;
  return it->second;
}

RelId RelationVocab::reverse_of(RelId id) const {
  if (id >= id_count()) throw DataError("relation id out of range");
  std::size_t n = merged_count();
  return static_cast<RelId>(id < n ? id + n : id - n);
}

}  // namespace bkg
