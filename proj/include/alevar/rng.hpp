#ifndef ALEVAR_RNG_HPP
#define ALEVAR_RNG_HPP

#include <cmath>
#include <cstdint>

namespace alevar {

// Counter-based splittable generator. Each draw hashes (key, counter), so a
// stream is a pure function of its key and streams derived via split() are
// independent of draw order and worker scheduling.
class SplitRng {
 public:
  explicit SplitRng(std::uint64_t key) : key_(mix(key ^ 0x9e3779b97f4a7c15ull)) {}

  // Child stream s; children of distinct (key, s) pairs do not collide.
  SplitRng split(std::uint64_t s) const {
    return SplitRng(mix(key_ + 0xbf58476d1ce4e5b9ull * (s + 1)));
  }

  std::uint64_t next_u64() { return mix(key_ + 0x9e3779b97f4a7c15ull * (++counter_)); }

  // Uniform on (0,1); never returns 0 or 1.
  double uniform() {
    return (static_cast<double>(next_u64() >> 11) + 0.5) * 0x1.0p-53;
  }

  // Box-Muller on two uniforms; consumes exactly two counter steps per pair.
  double normal() {
    if (have_spare_) {
      have_spare_ = false;
      return spare_;
    }
    double u1 = uniform();
    double u2 = uniform();
    double r = std::sqrt(-2.0 * std::log(u1));
    double theta = 6.283185307179586476925286766559 * u2;
    spare_ = r * std::sin(theta);
    have_spare_ = true;
    return r * std::cos(theta);
  }

  bool bernoulli(double p) { return uniform() < p; }

  // Integer in [0, n).
  std::uint64_t below(std::uint64_t n) { return next_u64() % n; }

 private:
  static std::uint64_t mix(std::uint64_t z) {
    z ^= z >> 30;
    z *= 0xbf58476d1ce4e5b9ull;
    z ^= z >> 27;
    z *= 0x94d049bb133111ebull;
    z ^= z >> 31;
    return z;
  }

  std::uint64_t key_;
  std::uint64_t counter_ = 0;
  double spare_ = 0.0;
  bool have_spare_ = false;
};

}  // namespace alevar

#endif
