#pragma once

#include <cstddef>
#include <cstdint>
#include <initializer_list>
#include <random>
#include <stdexcept>
#include <string>

namespace astrosnn {

/// Process exit codes used by the command-line front end.
enum class ExitCode : int {
  kSuccess = 0,
  kValidation = 2,
  kDataParse = 3,
  kNumericalFault = 4,
};

/// Base class of every error raised by the library. Carries the exit code the
/// CLI maps it to.
class Error : public std::runtime_error {
 public:
  Error(ExitCode code, const std::string& what) : std::runtime_error(what), code_(code) {}
  ExitCode code() const noexcept { return code_; }

 private:
  ExitCode code_;
};

/// Caller broke a precondition (dimension mismatch, empty input, ...).
class ContractViolation : public Error {
 public:
  explicit ContractViolation(const std::string& what) : Error(ExitCode::kValidation, what) {}
};

/// A named configuration field failed validation.
class ValidationError : public Error {
 public:
  explicit ValidationError(const std::string& what) : Error(ExitCode::kValidation, what) {}
};

/// A workflow step was invoked out of order (e.g. repair without faults).
class ProtocolError : public Error {
 public:
  explicit ProtocolError(const std::string& what) : Error(ExitCode::kValidation, what) {}
};

/// Malformed input file. `offset` is a byte offset or a 1-based line number,
/// depending on the format.
class ParseError : public Error {
 public:
  ParseError(const std::string& what, std::size_t offset)
      : Error(ExitCode::kDataParse, what), offset_(offset) {}
  std::size_t offset() const noexcept { return offset_; }

 private:
  std::size_t offset_;
};

/// A state variable became NaN or infinite.
class NumericalFault : public Error {
 public:
  NumericalFault(const std::string& what, std::size_t index)
      : Error(ExitCode::kNumericalFault, what), index_(index) {}
  std::size_t index() const noexcept { return index_; }

 private:
  std::size_t index_;
};

inline void require(bool cond, const std::string& msg) {
  if (!cond) throw ContractViolation(msg);
}

// ---------------------------------------------------------------------------
// Random streams
//
// All randomness flows through std::mt19937_64, whose output sequence is fixed
// by the standard. Distributions from <random> are implementation-defined, so
// the few we need are written against raw engine output to keep results
// bit-identical across standard libraries.

using Rng = std::mt19937_64;

inline std::uint64_t splitmix64(std::uint64_t x) noexcept {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

/// Derives an independent stream seed from a base seed and a tag path, e.g.
/// derive_seed(seed, {kTrainStream, epoch, sample}).
inline std::uint64_t derive_seed(std::uint64_t base, std::initializer_list<std::uint64_t> tags) noexcept {
  std::uint64_t h = splitmix64(base);
  for (auto t : tags) h = splitmix64(h ^ splitmix64(t + 0x632be59bd9b4e019ULL));
  return h;
}

/// Uniform double in [0, 1) with 53 random bits.
inline double uniform01(Rng& rng) noexcept {
  return static_cast<double>(rng() >> 11) * 0x1.0p-53;
}

/// Unbiased integer in [0, n) by rejection.
inline std::uint64_t uniform_index(Rng& rng, std::uint64_t n) noexcept {
  const std::uint64_t limit = UINT64_MAX - UINT64_MAX % n;
  std::uint64_t x;
  do {
    x = rng();
  } while (x >= limit);
  return x % n;
}

/// Fisher-Yates shuffle driven by uniform_index.
template <typename It>
void shuffle(It first, It last, Rng& rng) {
  const auto n = static_cast<std::uint64_t>(last - first);
  for (std::uint64_t i = n; i > 1; --i) {
    const auto j = uniform_index(rng, i);
    std::swap(first[i - 1], first[j]);
  }
}

// Stream tags.
inline constexpr std::uint64_t kStreamInit = 1;
inline constexpr std::uint64_t kStreamShuffle = 2;
inline constexpr std::uint64_t kStreamTrain = 3;
inline constexpr std::uint64_t kStreamEval = 4;
inline constexpr std::uint64_t kStreamAssign = 5;
inline constexpr std::uint64_t kStreamFault = 6;
inline constexpr std::uint64_t kStreamRepair = 7;
inline constexpr std::uint64_t kStreamMicro = 8;

}  // namespace astrosnn
