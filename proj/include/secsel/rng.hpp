#pragma once

#include <algorithm>
#include <cstdint>
#include <random>
#include <string_view>
#include <vector>

#include "secsel/common.hpp"

namespace secsel {

inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

// Derive an independent stream seed from a master seed, a role tag, and an
// optional index. Keeps sub-streams (scenario gen, training, validation)
// decoupled so adding draws to one does not shift another.
inline std::uint64_t derive_seed(std::uint64_t master, std::string_view tag, std::uint64_t n = 0) {
  std::uint64_t h = 1469598103934665603ULL;  // FNV-1a
  for (char c : tag) {
    h ^= static_cast<unsigned char>(c);
    h *= 1099511628211ULL;
  }
  return splitmix64(master ^ splitmix64(h ^ (n * 0x9e3779b97f4a7c15ULL)));
}

// Seeded generator with self-contained draw helpers. All randomness in the
// library flows through this type so results do not depend on the standard
// library's distribution implementations.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : eng_(seed) {}

  std::uint64_t next() { return eng_(); }

  // Uniform in [0, 1), 53-bit resolution.
  double u01() { return static_cast<double>(next() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * u01(); }

  // Uniform integer in [lo, hi], inclusive.
  std::int64_t uniform_int(std::int64_t lo, std::int64_t hi) {
    if (lo > hi) throw contract_error("uniform_int: empty range");
    const std::uint64_t span = static_cast<std::uint64_t>(hi - lo) + 1;
    if (span == 0) return static_cast<std::int64_t>(next());  // full 64-bit range
    const auto m = static_cast<unsigned __int128>(next()) * span;
    return lo + static_cast<std::int64_t>(static_cast<std::uint64_t>(m >> 64));
  }

  bool bernoulli(double p) { return u01() < p; }

  template <class It>
  void shuffle(It first, It last) {
    const auto n = static_cast<std::int64_t>(std::distance(first, last));
    for (std::int64_t i = n - 1; i > 0; --i) {
      std::swap(first[i], first[uniform_int(0, i)]);
    }
  }

  // k distinct indices from [0, n), in ascending order (Floyd's algorithm).
  std::vector<std::size_t> sample_indices(std::size_t n, std::size_t k) {
    if (k > n) throw contract_error("sample_indices: k > n");
    std::vector<std::size_t> out;
    out.reserve(k);
    for (std::size_t j = n - k; j < n; ++j) {
      const auto t = static_cast<std::size_t>(uniform_int(0, static_cast<std::int64_t>(j)));
      if (std::find(out.begin(), out.end(), t) == out.end()) {
        out.push_back(t);
      } else {
        out.push_back(j);
      }
    }
    std::sort(out.begin(), out.end());
    return out;
  }

 private:
  std::mt19937_64 eng_;
};

}  // namespace secsel
