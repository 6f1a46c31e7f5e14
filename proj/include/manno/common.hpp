#pragma once

#include <cmath>
#include <cstdint>
#include <limits>
#include <random>
#include <stdexcept>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

namespace manno {

// Error taxonomy. The CLI maps ValidationError/ParseError/ArgumentError to
// exit code 1 and everything else to exit code 2.
struct ParseError : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct ConflictError : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct ArgumentError : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};
struct MissingDataError : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct NumericError : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct UnsupportedOperationError : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct EmptyResultError : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct UndefinedCorrelationError : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct TrainingError : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct ValidationError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// splitmix64; used to derive independent sub-seeds from one master seed so
// that every randomized stage (init, shuffling, dropout, sampling) gets its
// own stream and stays reproducible under any execution order.
inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

inline std::uint64_t derive_seed(std::uint64_t base, std::string_view tag,
                                 std::uint64_t index = 0) {
  std::uint64_t h = splitmix64(base);
  for (unsigned char c : tag) h = splitmix64(h ^ c);
  return splitmix64(h ^ index);
}

inline constexpr double kPi = 3.14159265358979323846;

// Portable replacements for std::shuffle / std::uniform_*_distribution, whose
// outputs are implementation-defined. mt19937_64 itself is fully specified by
// the standard, so everything below is bit-reproducible across platforms.

inline std::uint64_t rand_below(std::mt19937_64& g, std::uint64_t n) {
  // unbiased via rejection
  const std::uint64_t limit = std::numeric_limits<std::uint64_t>::max() -
                              std::numeric_limits<std::uint64_t>::max() % n;
  std::uint64_t x;
  do {
    x = g();
  } while (x >= limit);
  return x % n;
}

inline double rand_unit(std::mt19937_64& g) {
  return static_cast<double>(g() >> 11) * 0x1.0p-53;  // [0, 1)
}

inline double rand_normal(std::mt19937_64& g) {
  // Box-Muller; one draw per call keeps the stream layout simple.
  double u1 = rand_unit(g);
  while (u1 <= 0.0) u1 = rand_unit(g);
  const double u2 = rand_unit(g);
  return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * kPi * u2);
}

template <typename T>
void deterministic_shuffle(std::vector<T>& v, std::mt19937_64& g) {
  for (std::size_t i = v.size(); i > 1; --i) {
    const std::size_t j = static_cast<std::size_t>(rand_below(g, i));
    std::swap(v[i - 1], v[j]);
  }
}

}  // namespace manno
