#pragma once

// Shared vocabulary: vector aliases, the error type, seeded random streams and
// stable hashing. Everything else in the library builds on these.

#include <Eigen/Dense>

#include <array>
#include <cmath>
#include <cstdint>
#include <random>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace hitspace {

using Vec3 = Eigen::Vector3d;
using Mat3 = Eigen::Matrix3d;

enum class ErrorKind {
  InvalidInput,
  SimulationDiverged,
  Projection,
  Estimation,
  RecoveryInfeasible,
  Config,
  Data,
  Numeric,
  Io,
};

inline const char* to_string(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::InvalidInput: return "invalid-input";
    case ErrorKind::SimulationDiverged: return "simulation-diverged";
    case ErrorKind::Projection: return "projection";
    case ErrorKind::Estimation: return "estimation";
    case ErrorKind::RecoveryInfeasible: return "recovery-infeasible";
    case ErrorKind::Config: return "config";
    case ErrorKind::Data: return "data";
    case ErrorKind::Numeric: return "numeric";
    case ErrorKind::Io: return "io";
  }
  return "unknown";
}

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what)
      : std::runtime_error(std::string(to_string(kind)) + ": " + what), kind_(kind) {}
  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

inline bool all_finite(const Vec3& v) { return v.allFinite(); }

// FNV-1a, used for config hashes and stage-name substreams. Stable across
// platforms, unlike std::hash.
inline std::uint64_t fnv1a(std::string_view bytes, std::uint64_t h = 0xcbf29ce484222325ULL) {
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

using Rng = std::mt19937_64;

/// Derive an independent generator for a named stage. All randomness in the
/// library flows from one global seed through these substreams, so changing
/// how many draws one stage makes never perturbs another.
inline std::uint64_t substream_seed(std::uint64_t seed, std::string_view stage,
                                    std::uint64_t index = 0) {
  return splitmix64(splitmix64(seed ^ fnv1a(stage)) ^ splitmix64(index + 0x51ed2701ULL));
}

inline Rng substream(std::uint64_t seed, std::string_view stage, std::uint64_t index = 0) {
  return Rng(substream_seed(seed, stage, index));
}

inline double uniform(Rng& rng, double lo, double hi) {
  return std::uniform_real_distribution<double>(lo, hi)(rng);
}

inline double gaussian(Rng& rng, double sigma = 1.0) {
  return std::normal_distribution<double>(0.0, sigma)(rng);
}

inline bool bernoulli(Rng& rng, double p) {
  if (p <= 0.0) return false;
  if (p >= 1.0) return true;
  return std::uniform_real_distribution<double>(0.0, 1.0)(rng) < p;
}

inline std::string hex64(std::uint64_t v) {
  static constexpr char digits[] = "0123456789abcdef";
  std::string out(16, '0');
  for (int i = 15; i >= 0; --i) {
    out[static_cast<std::size_t>(i)] = digits[v & 0xF];
    v >>= 4;
  }
  return out;
}

}  // namespace hitspace
