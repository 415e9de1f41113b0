#include "bkg/config.hpp"

#include <charconv>
#include <cmath>
#include <cstdio>
#include <string_view>

namespace bkg {

namespace {

std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t' || s.front() == '\r'))
    s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r'))
    s.remove_suffix(1);
  return s;
}

std::uint64_t to_u64(const std::string& key, const std::string& v) {
  std::uint64_t out = 0;
  auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc{} || p != v.data() + v.size())
    throw ConfigError("key '" + key + "': expected a nonnegative integer, got '" + v + "'");
  return out;
}

std::uint32_t to_u32(const std::string& key, const std::string& v) {
  std::uint64_t wide = to_u64(key, v);
  if (wide > 0xffffffffull)
    throw ConfigError("key '" + key + "': value '" + v + "' does not fit 32 bits");
  return static_cast<std::uint32_t>(wide);
}

double to_f64(const std::string& key, const std::string& v) {
  try {
    std::size_t used = 0;
    double out = std::stod(v, &used);
    if (used != v.size() || !std::isfinite(out)) throw std::invalid_argument(v);
    return out;
  } catch (const std::exception&) {
    throw ConfigError("key '" + key + "': expected a finite number, got '" + v + "'");
  }
}

bool to_bool(const std::string& key, const std::string& v) {
  if (v == "true" || v == "1" || v == "yes" || v == "on") return true;
  if (v == "false" || v == "0" || v == "no" || v == "off") return false;
  throw ConfigError("key '" + key + "': expected a boolean, got '" + v + "'");
}

std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

std::string fmt(bool v) { return v ? "true" : "false"; }

}  // namespace

void PipelineConfig::validate() const {
  train.validate();
  if (lang.empty()) throw ConfigError("lang must not be empty");
  if (hop_bound == 0) throw ConfigError("hop_bound must be positive");
  if (max_ngram < 1) throw ConfigError("max_ngram must be positive");
  if (d == 0) throw ConfigError("d must be positive");
  if (max_len == 0) throw ConfigError("max_len must be positive");
  if (max_dist == 0) throw ConfigError("max_dist must be positive");
  if (!(train_ratio > 0.0) || dev_ratio < 0.0 || train_ratio + dev_ratio > 1.0)
    throw ConfigError("split ratios must satisfy 0 < train, 0 <= dev, train + dev <= 1");
}

void PipelineConfig::set(const std::string& key, const std::string& value) {
  if (key == "assertions") assertions = value;
  else if (key == "relations") relations = value;
  else if (key == "stopwords") stopwords = value;
  else if (key == "dataset") dataset = value;
  else if (key == "index") index = value;
  else if (key == "cache") cache = value;
  else if (key == "dev_cache") dev_cache = value;
  else if (key == "checkpoint") checkpoint = value;
  else if (key == "bundles") bundles = value;
  else if (key == "out") out = value;
  else if (key == "lang") lang = value;
  else if (key == "budget") budget = to_u64(key, value);
  else if (key == "hop_bound") hop_bound = to_u32(key, value);
  else if (key == "path_cap") path_cap = to_u64(key, value);
  else if (key == "max_ngram") max_ngram = static_cast<int>(to_u32(key, value));
  else if (key == "d") d = to_u32(key, value);
  else if (key == "layers") layers = to_u32(key, value);
  else if (key == "max_len") max_len = to_u32(key, value);
  else if (key == "max_dist") max_dist = to_u32(key, value);
  else if (key == "train_ratio") train_ratio = to_f64(key, value);
  else if (key == "dev_ratio") dev_ratio = to_f64(key, value);
  else if (key == "float32") float32 = to_bool(key, value);
  else if (key == "lambda1") train.lambda1 = to_f64(key, value);
  else if (key == "lambda2") train.lambda2 = to_f64(key, value);
  else if (key == "k1") train.k1 = to_u32(key, value);
  else if (key == "k2") train.k2 = to_u32(key, value);
  else if (key == "lr") train.lr = to_f64(key, value);
  else if (key == "epochs") train.epochs = to_u32(key, value);
  else if (key == "batch") train.batch = to_u32(key, value);
  else if (key == "warmup") train.warmup = to_f64(key, value);
  else if (key == "seed") train.seed = to_u64(key, value);
  else if (key == "downsample_negatives") train.downsample_negatives = to_bool(key, value);
  else if (key == "negative_cap") train.negative_cap = to_u32(key, value);
  else throw ConfigError("unknown config key '" + key + "'");
}

std::map<std::string, std::string> PipelineConfig::resolved() const {
  return {
      {"assertions", assertions},
      {"relations", relations},
      {"stopwords", stopwords},
      {"dataset", dataset},
      {"index", index},
      {"cache", cache},
      {"dev_cache", dev_cache},
      {"checkpoint", checkpoint},
      {"bundles", bundles},
      {"out", out},
      {"lang", lang},
      {"budget", std::to_string(budget)},
      {"hop_bound", std::to_string(hop_bound)},
      {"path_cap", std::to_string(path_cap)},
      {"max_ngram", std::to_string(max_ngram)},
      {"d", std::to_string(d)},
      {"layers", std::to_string(layers)},
      {"max_len", std::to_string(max_len)},
      {"max_dist", std::to_string(max_dist)},
      {"train_ratio", fmt(train_ratio)},
      {"dev_ratio", fmt(dev_ratio)},
      {"float32", fmt(float32)},
      {"lambda1", fmt(train.lambda1)},
      {"lambda2", fmt(train.lambda2)},
      {"k1", std::to_string(train.k1)},
      {"k2", std::to_string(train.k2)},
      {"lr", fmt(train.lr)},
      {"epochs", std::to_string(train.epochs)},
      {"batch", std::to_string(train.batch)},
      {"warmup", fmt(train.warmup)},
      {"seed", std::to_string(train.seed)},
      {"downsample_negatives", fmt(train.downsample_negatives)},
      {"negative_cap", std::to_string(train.negative_cap)},
  };
}

void apply_config_file(PipelineConfig& cfg, const std::string& path) {
  std::string text = read_file(path);
  std::size_t lineno = 0;
  std::size_t at = 0;
  while (at <= text.size()) {
    std::size_t end = text.find('\n', at);
    if (end == std::string::npos) end = text.size();
    std::string_view line(text.data() + at, end - at);
    at = end + 1;
    ++lineno;
    if (auto hash = line.find('#'); hash != std::string_view::npos)
      line = line.substr(0, hash);
    line = trim(line);
    if (line.empty()) continue;
    std::size_t eq = line.find('=');
    if (eq == std::string_view::npos)
      throw ConfigError(path + ":" + std::to_string(lineno) + ": expected key = value");
    std::string key(trim(line.substr(0, eq)));
    std::string value(trim(line.substr(eq + 1)));
    try {
      cfg.set(key, value);
    } catch (const ConfigError& e) {
      throw ConfigError(path + ":" + std::to_string(lineno) + ": " + e.what());
    }
  }
}

}  // namespace bkg
