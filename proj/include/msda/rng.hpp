#pragma once

#include <cmath>
#include <cstdint>
#include <numeric>
#include <string_view>
#include <vector>

namespace msda {

// splitmix64 finalizer; bijective on 64-bit ints.
inline std::uint64_t mix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

inline std::uint64_t hash_tag(std::string_view s) {
  std::uint64_t h = 0xcbf29ce484222325ULL;  // FNV-1a
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

// Counter-based random stream. A stream is identified by a key; draws are
// pure functions of (key, counter), so forked substreams never interact and
// results are reproducible independent of evaluation order across streams.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : key_(mix64(seed)) {}

  Rng fork(std::uint64_t tag) const {
    Rng r(0);
    r.key_ = mix64(key_ ^ mix64(tag ^ 0xa5a5a5a5deadbeefULL));
    r.counter_ = 0;
    return r;
  }
  Rng fork(std::string_view tag) const { return fork(hash_tag(tag)); }
  Rng fork(std::uint64_t a, std::uint64_t b) const { return fork(a).fork(b); }
  Rng fork(std::string_view tag, std::uint64_t b) const { return fork(tag).fork(b); }

  std::uint64_t next_u64() { return mix64(key_ ^ mix64(counter_++)); }

  // uniform on (0,1); never returns 0 or 1 exactly
  double uniform() {
    return (static_cast<double>(next_u64() >> 11) + 0.5) * 0x1.0p-53;
  }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  // Box-Muller; consumes two counter steps per draw
  double normal() {
    const double u1 = uniform();
    const double u2 = uniform();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * M_PI * u2);
  }

  double gumbel() { return -std::log(-std::log(uniform())); }

  // integer in [0, n)
  int below(int n) { return static_cast<int>(next_u64() % static_cast<std::uint64_t>(n)); }

  std::vector<int> permutation(int n) {
    std::vector<int> p(n);
    std::iota(p.begin(), p.end(), 0);
    for (int i = n - 1; i > 0; --i) std::swap(p[i], p[below(i + 1)]);
    return p;
  }

  // k indices drawn without replacement from [0, n)
  std::vector<int> sample_without_replacement(int n, int k) {
    std::vector<int> p = permutation(n);
    p.resize(k < n ? k : n);
    return p;
  }

 private:
  std::uint64_t key_;
  std::uint64_t counter_ = 0;
};

}  // namespace msda
