#pragma once

#include <optional>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "bkg/common.hpp"

namespace bkg {

// Merged relation vocabulary. Forward ids are [0, merged_count); each forward
// id r has the reverse id r + merged_count, so reverse_of is a fixed-point-free
// involution over all 2 * merged_count ids.
class RelationVocab {
 public:
  // File format: one "raw_uri<TAB>merged_name" pair per line, '#' comments.
  static RelationVocab load(const std::string& path);
  static RelationVocab from_pairs(
      const std::vector<std::pair<std::string, std::string>>& pairs);

  std::size_t merged_count() const { return merged_names_.size(); }
  std::size_t id_count() const { return merged_names_.size() * 2; }

  // Merged name for a forward id; reverse ids carry a "_rev" suffix.
  std::string name(RelId id) const;
  const std::vector<std::string>& merged_names() const { return merged_names_; }

  std::optional<RelId> id_of(std::string_view raw_uri) const;
  std::optional<RelId> id_of_merged(std::string_view merged_name) const;

  RelId reverse_of(RelId id) const;
  bool is_reverse(RelId id) const { return id >= merged_names_.size(); }

 private:
  std::vector<std::string> merged_names_;                 // forward, in file order
  std::unordered_map<std::string, RelId> raw_to_merged_;  // lowercase raw uri -> forward id
  std::unordered_map<std::string, RelId> name_to_id_;
};

}  // namespace bkg
