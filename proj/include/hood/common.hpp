#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace hood {

// Error taxonomy. Everything thrown by the library derives from Error so the
// CLI can map failures onto exit codes in one place.
struct Error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Bad wiring: incompatible shapes between layers, invalid hyperparameters.
struct ConfigError : Error {
  using Error::Error;
};

// Bad data handed to an operation (labels out of range, dim mismatch on user
// inputs, empty datasets).
struct InputError : Error {
  using Error::Error;
};

// API misuse: backward on a consumed tape, optimizer step without gradients.
struct UsageError : Error {
  using Error::Error;
};

// Malformed file contents. Carries the byte offset where parsing failed.
struct FormatError : Error {
  FormatError(const std::string& what, std::uint64_t offset)
      : Error(what + " (byte offset " + std::to_string(offset) + ")"),
        byte_offset(offset) {}
  explicit FormatError(const std::string& what) : Error(what), byte_offset(0) {}
  std::uint64_t byte_offset;
};

// A constrained search came up empty (e.g. no bank entry of a class).
struct LookupError : Error {
  using Error::Error;
};

struct IoError : Error {
  using Error::Error;
};

// 64-bit FNV-1a. Used for artifact digests and weight freeze checks.
inline std::uint64_t fnv1a64(const void* data, std::size_t n,
                             std::uint64_t seed = 0xcbf29ce484222325ull) {
  const auto* p = static_cast<const unsigned char*>(data);
  std::uint64_t h = seed;
  for (std::size_t i = 0; i < n; ++i) {
    h ^= p[i];
    h *= 0x100000001b3ull;
  }
  return h;
}

inline std::uint64_t fnv1a64(std::string_view s) {
  return fnv1a64(s.data(), s.size());
}

// Deterministic RNG. mt19937_64 gives a portable bit sequence; the
// distribution transforms are implemented here because the std:: ones are
// implementation-defined and would break bitwise reproducibility of runs.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : gen_(seed) {}

  std::uint64_t next_u64() { return gen_(); }

  // [0, 1)
  double uniform() { return static_cast<double>(gen_() >> 11) * 0x1.0p-53; }

  float uniform(float lo, float hi) {
    return lo + static_cast<float>(uniform()) * (hi - lo);
  }

  // Box-Muller; the spare value is cached.
  float normal(float mean = 0.0f, float stddev = 1.0f) {
    if (have_spare_) {
      have_spare_ = false;
      return mean + stddev * spare_;
    }
    double u1 = uniform();
    double u2 = uniform();
    while (u1 <= 1e-300) u1 = uniform();
    double r = std::sqrt(-2.0 * std::log(u1));
    double a = 6.283185307179586 * u2;
    spare_ = static_cast<float>(r * std::sin(a));
    have_spare_ = true;
    return mean + stddev * static_cast<float>(r * std::cos(a));
  }

  // [0, n)
  int uniform_int(int n) {
    return static_cast<int>(uniform() * static_cast<double>(n));
  }

  template <typename T>
  void shuffle(std::vector<T>& v) {
    for (std::size_t i = v.size(); i > 1; --i) {
      std::size_t j = static_cast<std::size_t>(uniform_int(static_cast<int>(i)));
      std::swap(v[i - 1], v[j]);
    }
  }

  // Independent stream for a named stage, so adding a consumer to one stage
  // does not shift the draws of another.
  static std::uint64_t derive(std::uint64_t seed, std::string_view tag) {
    std::uint64_t x = seed ^ fnv1a64(tag);
    // splitmix64 finalizer
    x += 0x9e3779b97f4a7c15ull;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ull;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebull;
    return x ^ (x >> 31);
  }

 private:
  std::mt19937_64 gen_;
  bool have_spare_ = false;
  float spare_ = 0.0f;
};

}  // namespace hood
