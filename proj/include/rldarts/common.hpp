#pragma once

#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <string_view>

namespace rldarts {

// Raised on malformed configuration files, unknown names, bad shapes in
// user-provided settings. CLI maps this to exit code 1.
struct ConfigError : std::runtime_error {
  explicit ConfigError(const std::string& msg) : std::runtime_error(msg) {}
};

// Raised on API misuse (stepping a finished episode, non-scalar loss, ...).
struct UsageError : std::logic_error {
  explicit UsageError(const std::string& msg) : std::logic_error(msg) {}
};

// Raised when a training loss or architecture logit goes non-finite.
// Carries a diagnostic dump of the last alpha snapshot. CLI maps this to
// exit code 2; the pipeline records the run as failed instead of hiding it.
struct NanAbortError : std::runtime_error {
  std::string diagnostic;
  NanAbortError(const std::string& msg, std::string diag)
      : std::runtime_error(msg), diagnostic(std::move(diag)) {}
};

inline uint64_t splitmix64(uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

inline uint64_t fnv1a64(std::string_view s) {
  uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

// Deterministic RNG used everywhere. Wraps a fully specified engine and
// derives all distributions itself so that streams are stable for a given
// seed on a given platform.
class Rng {
 public:
  explicit Rng(uint64_t seed) : state_(splitmix64(seed ^ 0x5bf03635ffa5f0c5ULL)) {
    // warm up so that close seeds do not produce close first draws
    next_u64();
    next_u64();
  }

  uint64_t next_u64() {
    // xoshiro-style single-word generator (splitmix64 chain); period 2^64
    state_ += 0x9e3779b97f4a7c15ULL;
    uint64_t z = state_;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
  }

  // uniform in [0, 1)
  double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

  // uniform in (0, 1]
  double uniform_pos() {
    return static_cast<double>((next_u64() >> 11) + 1) * 0x1.0p-53;
  }

  // uniform integer in [0, n), unbiased via rejection
  int uniform_int(int n) {
    if (n <= 0) throw UsageError("Rng::uniform_int: n must be positive");
    const uint64_t un = static_cast<uint64_t>(n);
    const uint64_t limit = UINT64_MAX - UINT64_MAX % un;
    uint64_t v;
    do {
      v = next_u64();
    } while (v >= limit);
    return static_cast<int>(v % un);
  }

  // standard normal, Box-Muller (two draws per call, no cached spare)
  double normal() {
    const double u1 = uniform_pos();
    const double u2 = uniform();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(6.283185307179586477 * u2);
  }

  // normal truncated to +-2 sigma (weight init convention)
  double truncated_normal() {
    double z;
    do {
      z = normal();
    } while (std::fabs(z) > 2.0);
    return z;
  }

  // derive an independent stream for a named purpose
  Rng derive(uint64_t stream) const {
    return Rng(splitmix64(state_ ^ splitmix64(stream)));
  }

  // raw state for checkpointing; from_state resumes the exact stream
  uint64_t state() const { return state_; }
  static Rng from_state(uint64_t raw) {
    Rng r(0);
    r.state_ = raw;
    return r;
  }

 private:
  uint64_t state_;
};

inline uint64_t derive_seed(uint64_t seed, uint64_t stream) {
  return splitmix64(seed ^ splitmix64(stream));
}

}  // namespace rldarts
