#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace bkg {

using ConceptId = std::uint32_t;
using RelId = std::uint16_t;

inline constexpr ConceptId kNoConcept = 0xffffffffu;

// Failure classes; the CLI maps each to its own exit code.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};
class ConfigError : public Error {
 public:
  using Error::Error;
};
class IoError : public Error {
 public:
  using Error::Error;
};
class DataError : public Error {
 public:
  using Error::Error;
};
class NumericalError : public Error {
 public:
  using Error::Error;
};

// Binary container failures (index, subgraph cache, checkpoint).
class FormatError : public DataError {
 public:
  enum class Kind { bad_magic, version_mismatch, checksum_mismatch, truncated, corrupt };
  FormatError(Kind kind, const std::string& msg) : DataError(msg), kind_(kind) {}
  Kind kind() const { return kind_; }

 private:
  Kind kind_;
};

std::uint64_t fnv1a64(std::string_view bytes, std::uint64_t state = 0xcbf29ce484222325ull);

// Deterministic splitmix64 stream; bit-identical on every platform.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : state_(seed) {}

  std::uint64_t next_u64();
  double next_double();                       // uniform [0,1)
  std::uint64_t next_below(std::uint64_t n);  // uniform [0,n), n > 0
  double next_uniform(double lo, double hi);

  template <typename T>
  void shuffle(std::vector<T>& v) {
    for (std::size_t i = v.size(); i > 1; --i) {
      std::size_t j = static_cast<std::size_t>(next_below(i));
      std::swap(v[i - 1], v[j]);
    }
  }

 private:
  std::uint64_t state_;
};

std::string read_file(const std::string& path);

// Writes to a sibling temp file and renames, so readers never see partial output.
void write_file_atomic(const std::string& path, std::string_view bytes);

}  // namespace bkg
