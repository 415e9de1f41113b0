#include "bkg/text.hpp"

#include <algorithm>
#include <cctype>
#include <fstream>
#include <sstream>

#include "bkg/common.hpp"

namespace bkg {

std::vector<std::string> tokenize(std::string_view text) {
  std::vector<std::string> out;
  std::size_t i = 0;
  while (i < text.size()) {
    while (i < text.size() && std::isspace(static_cast<unsigned char>(text[i]))) ++i;
    std::size_t j = i;
    while (j < text.size() && !std::isspace(static_cast<unsigned char>(text[j]))) ++j;
    if (j > i) {
      std::size_t a = i, b = j;
      while (a < b && std::ispunct(static_cast<unsigned char>(text[a]))) ++a;
      while (b > a && std::ispunct(static_cast<unsigned char>(text[b - 1]))) --b;
      if (b > a) {
        std::string tok;
        tok.reserve(b - a);
        for (std::size_t k = a; k < b; ++k)
          tok.push_back(static_cast<char>(std::tolower(static_cast<unsigned char>(text[k]))));
        out.push_back(std::move(tok));
      }
    }
    i = j;
  }
  return out;
}

std::string Stemmer::stem_phrase(std::string_view phrase) const {
  std::string out;
  std::size_t i = 0;
  while (i < phrase.size()) {
    while (i < phrase.size() && phrase[i] == ' ') ++i;
    std::size_t j = i;
    while (j < phrase.size() && phrase[j] != ' ') ++j;
    if (j > i) {
      if (!out.empty()) out.push_back(' ');
      out += stem(phrase.substr(i, j - i));
    }
    i = j;
  }
  return out;
}

namespace {

// w[i] is a consonant unless it is a/e/i/o/u, or a 'y' preceded by a consonant.
bool is_consonant(const std::string& w, std::size_t i) {
  char c = w[i];
  if (c == 'a' || c == 'e' || c == 'i' || c == 'o' || c == 'u') return false;
  if (c == 'y') return i == 0 ? true : !is_consonant(w, i - 1);
  return true;
}

// Number of VC sequences in w[0..len).
int measure(const std::string& w, std::size_t len) {
  int m = 0;
  for (std::size_t i = 0; i + 1 < len; ++i)
    if (!is_consonant(w, i) && is_consonant(w, i + 1)) ++m;
  return m;
}

bool has_vowel(const std::string& w, std::size_t len) {
  for (std::size_t i = 0; i < len; ++i)
    if (!is_consonant(w, i)) return true;
  return false;
}

bool ends_double_consonant(const std::string& w, std::size_t len) {
  return len >= 2 && w[len - 1] == w[len - 2] && is_consonant(w, len - 1);
}

// cvc at the end, where the final c is not w, x or y.
bool ends_cvc(const std::string& w, std::size_t len) {
  if (len < 3) return false;
  if (!is_consonant(w, len - 3) || is_consonant(w, len - 2) || !is_consonant(w, len - 1))
    return false;
  char c = w[len - 1];
  return c != 'w' && c != 'x' && c != 'y';
}

bool ends_with(const std::string& w, std::string_view suf) {
  return w.size() >= suf.size() && std::equal(suf.rbegin(), suf.rend(), w.rbegin());
}

struct Rule {
  std::string_view suffix;
  std::string_view replacement;
};

// Replaces the longest matching suffix whose stem passes min_measure.
bool apply_rules(std::string& w, std::initializer_list<Rule> rules, int min_measure) {
  const Rule* best = nullptr;
  for (const Rule& r : rules) {
    if (!ends_with(w, r.suffix)) continue;
    if (best == nullptr || r.suffix.size() > best->suffix.size()) best = &r;
  }
  if (best == nullptr) return false;
  std::size_t stem_len = w.size() - best->suffix.size();
  if (measure(w, stem_len) <= min_measure) return false;
  w.resize(stem_len);
  w += best->replacement;
  return true;
}

void step1a(std::string& w) {
  if (ends_with(w, "sses")) {
    w.resize(w.size() - 2);
  } else if (ends_with(w, "ies")) {
    w.resize(w.size() - 2);
  } else if (ends_with(w, "ss")) {
    // keep
  } else if (ends_with(w, "s")) {
    w.resize(w.size() - 1);
  }
}

void step1b(std::string& w) {
  if (ends_with(w, "eed")) {
    if (measure(w, w.size() - 3) > 0) w.resize(w.size() - 1);
    return;
  }
  bool stripped = false;
  if (ends_with(w, "ed") && has_vowel(w, w.size() - 2)) {
    w.resize(w.size() - 2);
    stripped = true;
  } else if (ends_with(w, "ing") && has_vowel(w, w.size() - 3)) {
    w.resize(w.size() - 3);
    stripped = true;
  }
  if (!stripped) return;
  if (ends_with(w, "at") || ends_with(w, "bl") || ends_with(w, "iz")) {
    w.push_back('e');
  } else if (ends_double_consonant(w, w.size())) {
    char c = w.back();
    if (c != 'l' && c != 's' && c != 'z') w.resize(w.size() - 1);
  } else if (measure(w, w.size()) == 1 && ends_cvc(w, w.size())) {
    w.push_back('e');
  }
}

void step1c(std::string& w) {
  if (ends_with(w, "y") && has_vowel(w, w.size() - 1)) w.back() = 'i';
}

void step2(std::string& w) {
  apply_rules(w,
              {{"ational", "ate"}, {"tional", "tion"}, {"enci", "ence"},   {"anci", "ance"},
               {"izer", "ize"},    {"abli", "able"},   {"alli", "al"},     {"entli", "ent"},
               {"eli", "e"},       {"ousli", "ous"},   {"ization", "ize"}, {"ation", "ate"},
               {"ator", "ate"},    {"alism", "al"},    {"iveness", "ive"}, {"fulness", "ful"},
               {"ousness", "ous"}, {"aliti", "al"},    {"iviti", "ive"},   {"biliti", "ble"}},
              0);
}

void step3(std::string& w) {
  apply_rules(w,
              {{"icate", "ic"},
               {"ative", ""},
               {"alize", "al"},
               {"iciti", "ic"},
               {"ical", "ic"},
               {"ful", ""},
               {"ness", ""}},
              0);
}

void step4(std::string& w) {
  // "ion" only counts after s or t; handled before the generic table.
  if (ends_with(w, "ion") && w.size() >= 4) {
    char c = w[w.size() - 4];
    if ((c == 's' || c == 't') && measure(w, w.size() - 3) > 1) {
      w.resize(w.size() - 3);
      return;
    }
  }
  apply_rules(w,
              {{"al", ""},  {"ance", ""}, {"ence", ""}, {"er", ""},  {"ic", ""},  {"able", ""},
               {"ible", ""}, {"ant", ""},  {"ement", ""}, {"ment", ""}, {"ent", ""}, {"ou", ""},
               {"ism", ""}, {"ate", ""},  {"iti", ""},  {"ous", ""}, {"ive", ""}, {"ize", ""}},
              1);
}

void step5a(std::string& w) {
  if (!ends_with(w, "e")) return;
  int m = measure(w, w.size() - 1);
  if (m > 1 || (m == 1 && !ends_cvc(w, w.size() - 1))) w.resize(w.size() - 1);
}

void step5b(std::string& w) {
  if (w.size() >= 2 && w.back() == 'l' && ends_double_consonant(w, w.size()) &&
      measure(w, w.size()) > 1)
    w.resize(w.size() - 1);
}

}  // namespace

std::string PorterStemmer::stem(std::string_view word) const {
  std::string w(word);
  if (w.size() <= 2) return w;
  for (char c : w)
    if (c < 'a' || c > 'z') return w;
  step1a(w);
  step1b(w);
  step1c(w);
  step2(w);
  step3(w);
  step4(w);
  step5a(w);
  step5b(w);
  return w;
}

StopwordSet StopwordSet::load(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open stopword list: " + path);
  StopwordSet set;
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty() || line[0] == '#') continue;
    std::transform(line.begin(), line.end(), line.begin(),
                   [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
    set.words_.insert(line);
  }
  return set;
}

StopwordSet StopwordSet::from_words(std::vector<std::string> words) {
  StopwordSet set;
  for (auto& w : words) set.words_.insert(std::move(w));
  return set;
}

bool StopwordSet::contains(std::string_view word) const {
  return words_.count(std::string(word)) > 0;
}

}  // namespace bkg
