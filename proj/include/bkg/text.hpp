#pragma once

#include <memory>
#include <string>
#include <string_view>
#include <unordered_set>
#include <vector>

namespace bkg {

// Lowercases, splits on whitespace, strips leading/trailing punctuation per token.
std::vector<std::string> tokenize(std::string_view text);

class Stemmer {
 public:
  virtual ~Stemmer() = default;
  virtual std::string stem(std::string_view word) const = 0;

  // Stems each space-separated word independently.
  std::string stem_phrase(std::string_view phrase) const;
};

// Classic Porter suffix-stripping algorithm over ASCII words; words of
// length <= 2 and tokens with non-alphabetic characters pass through unchanged.
class PorterStemmer final : public Stemmer {
 public:
  std::string stem(std::string_view word) const override;
};

class StopwordSet {
 public:
  StopwordSet() = default;
  static StopwordSet load(const std::string& path);  // one word per line, '#' comments
  static StopwordSet from_words(std::vector<std::string> words);

  bool contains(std::string_view word) const;
  std::size_t size() const { return words_.size(); }

 private:
  std::unordered_set<std::string> words_;
};

}  // namespace bkg
