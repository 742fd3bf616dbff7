#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <initializer_list>
#include <numbers>
#include <random>
#include <stdexcept>
#include <vector>

namespace fedbcd {

// Purpose tags for derived random streams. The numeric values are part of
// the reproducibility contract: changing one reshuffles every run.
enum class StreamTag : std::uint64_t {
  dataset = 1,
  init = 2,
  activation = 3,
  arrival = 4,
  process = 5,
  epochs = 6,
  batch = 7,
  trial = 8,
};

namespace rng_detail {

// splitmix64 finalizer; stateless.
inline std::uint64_t mix64(std::uint64_t z) {
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

inline std::uint64_t combine(std::uint64_t h, std::uint64_t k) {
  return mix64(h ^ (k + 0x9e3779b97f4a7c15ULL + (h << 6) + (h >> 2)));
}

}  // namespace rng_detail

/// Hashes a root seed plus a key tuple into the seed of an independent stream.
inline std::uint64_t derive_seed(std::uint64_t root,
                                 std::initializer_list<std::uint64_t> keys) {
  std::uint64_t h = rng_detail::mix64(root + 0x9e3779b97f4a7c15ULL);
  for (std::uint64_t k : keys) h = rng_detail::combine(h, k);
  return h;
}

// Deterministic generator with hand-rolled transforms. mt19937_64 output is
// fully specified by the standard, so streams reproduce across platforms;
// std::*_distribution would not.
class RngStream {
 public:
  explicit RngStream(std::uint64_t seed) : gen_(seed) {}

  std::uint64_t next_u64() { return gen_(); }

  /// 53-bit draw in [0, 1).
  double uniform01() {
    return static_cast<double>(gen_() >> 11) * 0x1.0p-53;
  }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform01(); }

  /// Draw in [0, n); n > 0.
  std::uint64_t below(std::uint64_t n) {
    return static_cast<std::uint64_t>(
        (static_cast<unsigned __int128>(gen_()) * n) >> 64);
  }

  /// Inclusive bounds.
  int uniform_int(int lo, int hi) {
    if (hi < lo) throw std::invalid_argument("uniform_int: empty range");
    return lo + static_cast<int>(below(static_cast<std::uint64_t>(hi) - lo + 1));
  }

  double exponential(double mean) { return -mean * std::log1p(-uniform01()); }

  double weibull(double shape, double scale) {
    return scale * std::pow(-std::log1p(-uniform01()), 1.0 / shape);
  }

  /// Standard normal; consumes exactly two draws.
  double normal() {
    double u1 = 1.0 - uniform01();  // (0, 1]
    double u2 = uniform01();
    return std::sqrt(-2.0 * std::log(u1)) *
           std::cos(2.0 * std::numbers::pi * u2);
  }

  template <class T>
  void shuffle(std::vector<T>& v) {
    for (std::size_t i = v.size(); i > 1; --i)
      std::swap(v[i - 1], v[below(i)]);
  }

  /// `count` distinct indices from [0, n), ascending.
  std::vector<int> sample_without_replacement(int n, int count) {
    if (count < 0 || count > n)
      throw std::invalid_argument("sample_without_replacement: bad count");
    std::vector<int> idx(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i) idx[static_cast<std::size_t>(i)] = i;
    for (int i = 0; i < count; ++i) {
      int j = i + static_cast<int>(below(static_cast<std::uint64_t>(n - i)));
      std::swap(idx[static_cast<std::size_t>(i)], idx[static_cast<std::size_t>(j)]);
    }
    idx.resize(static_cast<std::size_t>(count));
    std::sort(idx.begin(), idx.end());
    return idx;
  }

 private:
  std::mt19937_64 gen_;
};

inline RngStream substream(std::uint64_t root, StreamTag tag,
                           std::uint64_t a = 0, std::uint64_t b = 0) {
  return RngStream(derive_seed(root, {static_cast<std::uint64_t>(tag), a, b}));
}

}  // namespace fedbcd
