#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>

#include <Eigen/Dense>

namespace modalgraph {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;
using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

// Error hierarchy. The C API maps each type onto a status code.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Caller supplied something that violates a documented precondition.
class InvalidArgument : public Error {
 public:
  using Error::Error;
};

// A numerical routine could not produce a valid result (singular system,
// mechanism, divergence, NaN).
class NumericalError : public Error {
 public:
  using Error::Error;
};

// A persisted artifact is malformed, truncated or from another schema version.
class FormatError : public Error {
 public:
  using Error::Error;
};

// Configuration file or stage chain is invalid.
class ConfigError : public Error {
 public:
  using Error::Error;
};

inline void require(bool ok, const std::string& what) {
  if (!ok) throw InvalidArgument(what);
}

// SplitMix64 step; used to derive independent per-stage / per-item seeds from a
// single global seed.
inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ULL;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
  return x ^ (x >> 31);
}

inline std::uint64_t fnv1a64(const std::string& s) {
  std::uint64_t h = 0xCBF29CE484222325ULL;
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001B3ULL;
  }
  return h;
}

// seed_for(global, "train") == splitmix64(global ^ fnv1a64("train"))
inline std::uint64_t derive_seed(std::uint64_t global, const std::string& stage) {
  return splitmix64(global ^ fnv1a64(stage));
}

inline std::uint64_t derive_seed(std::uint64_t base, std::uint64_t index) {
  return splitmix64(base + 0x632BE59BD9B4E019ULL * (index + 1));
}

constexpr double kPi = 3.14159265358979323846;

}  // namespace modalgraph
