#ifndef DIVLAB_RNG_HPP
#define DIVLAB_RNG_HPP

#include <cstdint>
#include <string_view>
#include <utility>
#include <vector>

namespace divlab {

// splitmix64 generator. Streams for individual passes are split off with
// Derive so that enabling one pass does not perturb the draws of another.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : state_(seed) {}

  static std::uint64_t Mix(std::uint64_t z) {
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
    return z ^ (z >> 31);
  }

  static std::uint64_t Fnv1a(std::string_view s) {
    std::uint64_t h = 0xCBF29CE484222325ull;
    for (char c : s) {
      h ^= static_cast<std::uint8_t>(c);
      h *= 0x100000001B3ull;
    }
    return h;
  }

  static std::uint64_t DeriveSeed(std::uint64_t seed, std::string_view stream,
                                  std::uint64_t index) {
    return Mix(Mix(seed ^ Fnv1a(stream)) + index * 0x9E3779B97F4A7C15ull);
  }

  static Rng Derive(std::uint64_t seed, std::string_view stream, std::uint64_t index) {
    return Rng(DeriveSeed(seed, stream, index));
  }

  std::uint64_t Next() {
    state_ += 0x9E3779B97F4A7C15ull;
    return Mix(state_);
  }

  // Uniform in [0, n); n > 0.
  std::uint64_t Below(std::uint64_t n) {
    const std::uint64_t limit = -n % n;  // 2^64 mod n
    while (true) {
      const std::uint64_t x = Next();
      if (x >= limit) return x % n;
    }
  }

  // Uniform in [lo, hi].
  std::int64_t Range(std::int64_t lo, std::int64_t hi) {
    return lo + static_cast<std::int64_t>(Below(static_cast<std::uint64_t>(hi - lo) + 1));
  }

  double Unit() { return static_cast<double>(Next() >> 11) * 0x1.0p-53; }

  bool Bernoulli(double p) {
    if (p <= 0.0) return false;
    if (p >= 1.0) return true;
    return Unit() < p;
  }

  template <typename T>
  void Shuffle(std::vector<T>& v) {
    for (std::size_t i = v.size(); i > 1; --i) {
      std::swap(v[i - 1], v[Below(i)]);
    }
  }

 private:
  std::uint64_t state_;
};

}  // namespace divlab

#endif  // DIVLAB_RNG_HPP
