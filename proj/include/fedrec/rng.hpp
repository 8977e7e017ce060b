#pragma once

#include <cstdint>
#include <random>
#include <string_view>
#include <vector>

namespace fedrec {

// splitmix64 finalizer, used to whiten derived seeds.
inline std::uint64_t mix64(std::uint64_t z) {
  z += 0x9e3779b97f4a7c15ULL;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

inline std::uint64_t hash_tag(std::string_view tag) {
  std::uint64_t h = 0xcbf29ce484222325ULL;  // FNV-1a
  for (char c : tag) {
    h ^= static_cast<unsigned char>(c);
    h *= 0x100000001b3ULL;
  }
  return h;
}

// Named substream derivation: the master seed fans out to independent
// streams keyed by a tag plus optional integer path components
// (e.g. "client", round, user_id). Every subsystem draws from its own
// stream so runs are reproducible regardless of scheduling.
inline std::uint64_t derive_seed(std::uint64_t master, std::string_view tag,
                                 std::uint64_t a = 0, std::uint64_t b = 0) {
  std::uint64_t s = mix64(master ^ hash_tag(tag));
  s = mix64(s ^ mix64(a + 0x9e3779b97f4a7c15ULL));
  s = mix64(s ^ mix64(b + 0x7f4a7c159e3779b9ULL));
  return s;
}

class Rng {
 public:
  explicit Rng(std::uint64_t seed) : gen_(seed) {}

  double uniform() { return unit_(gen_); }  // [0,1)
  double uniform(double lo, double hi) {
    return lo + (hi - lo) * unit_(gen_);
  }
  double gauss(double mean = 0.0, double stddev = 1.0) {
    return mean + stddev * normal_(gen_);
  }
  // index in [0, n)
  std::size_t index(std::size_t n) {
    std::uniform_int_distribution<std::size_t> d(0, n - 1);
    return d(gen_);
  }

  template <typename T>
  void shuffle(std::vector<T>& v) {
    for (std::size_t i = v.size(); i > 1; --i) {
      std::swap(v[i - 1], v[index(i)]);
    }
  }

  std::mt19937_64& engine() { return gen_; }

 private:
  std::mt19937_64 gen_;
  std::uniform_real_distribution<double> unit_{0.0, 1.0};
  std::normal_distribution<double> normal_{0.0, 1.0};
};

}  // namespace fedrec
