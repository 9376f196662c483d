#pragma once

#include <cmath>
#include <cstdint>
#include <cstdlib>
#include <stdexcept>
#include <string>

namespace graphfm {

using i64 = std::int64_t;
using u64 = std::uint64_t;

// Exit code 2.
struct ConfigError : std::runtime_error {
  explicit ConfigError(const std::string& msg) : std::runtime_error(msg) {}
};

// Exit code 3.
struct DataError : std::runtime_error {
  explicit DataError(const std::string& msg) : std::runtime_error(msg) {}
};

// Exit code 4 (non-finite loss and friends).
struct NumericError : std::runtime_error {
  explicit NumericError(const std::string& msg) : std::runtime_error(msg) {}
};

// GRAPHFM_F64=1 selects the 64-bit oracle mode. Arithmetic is always done in
// double; the flag controls the bytes-per-element used by the activation
// accounting so benchmark numbers mirror a 32-bit deployment.
inline int scalar_bytes() {
  static const int bytes = [] {
    const char* v = std::getenv("GRAPHFM_F64");
    return (v != nullptr && std::string(v) == "1") ? 8 : 4;
  }();
  return bytes;
}

// splitmix64, used for seed derivation and hashing.
inline u64 splitmix64(u64 x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

// Deterministic xoshiro-style generator. All randomness in the framework goes
// through this class so trajectories are reproducible bit-for-bit.
class Rng {
 public:
  explicit Rng(u64 seed) {
    s_[0] = splitmix64(seed);
    s_[1] = splitmix64(s_[0]);
    s_[2] = splitmix64(s_[1]);
    s_[3] = splitmix64(s_[2]);
  }

  u64 next_u64() {
    const u64 result = rotl(s_[1] * 5, 7) * 9;
    const u64 t = s_[1] << 17;
    s_[2] ^= s_[0];
    s_[3] ^= s_[1];
    s_[1] ^= s_[2];
    s_[0] ^= s_[3];
    s_[2] ^= t;
    s_[3] = rotl(s_[3], 45);
    return result;
  }

  // Uniform in [0, 1).
  double uniform() { return double(next_u64() >> 11) * 0x1.0p-53; }

  // Uniform integer in [0, n).
  i64 uniform_int(i64 n) { return i64(next_u64() % u64(n)); }

  bool bernoulli(double p) { return uniform() < p; }

  double normal() {
    if (have_spare_) {
      have_spare_ = false;
      return spare_;
    }
    double u1 = uniform();
    double u2 = uniform();
    while (u1 <= 1e-300) u1 = uniform();
    const double r = std::sqrt(-2.0 * std::log(u1));
    const double theta = 6.283185307179586476925286766559 * u2;
    spare_ = r * std::sin(theta);
    have_spare_ = true;
    return r * std::cos(theta);
  }

  // Derive an independent substream.
  Rng split(u64 salt) { return Rng(splitmix64(next_u64() ^ splitmix64(salt))); }

 private:
  static u64 rotl(u64 x, int k) { return (x << k) | (x >> (64 - k)); }
  u64 s_[4];
  bool have_spare_ = false;
  double spare_ = 0.0;
};

}  // namespace graphfm
