#pragma once

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <stdexcept>
#include <string>

#include <Eigen/Dense>

namespace reweight {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

// Error kinds surfaced by the library. The CLI maps each to a stable tag.
class InvalidArgument : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

class NumericUnderflow : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class Diverged : public std::runtime_error {
 public:
  Diverged(const std::string& what, long step)
      : std::runtime_error(what + " (step " + std::to_string(step) + ")"), step_(step) {}
  long step() const noexcept { return step_; }

 private:
  long step_;
};

inline void require(bool condition, const std::string& message) {
  if (!condition) throw InvalidArgument(message);
}

// splitmix64 finalizer; used to derive independent child seeds.
inline std::uint64_t mix_seed(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

inline std::uint64_t derive_seed(std::uint64_t master, std::uint64_t index) {
  return mix_seed(mix_seed(master) ^ (index * 0xd1b54a32d192ed03ULL + 1));
}

// Stream tags so that unrelated consumers of one run seed never share a stream.
enum class SeedStream : std::uint64_t {
  model_init = 1,
  shuffle = 2,
  projections = 3,
  pairs = 4,
  saliency = 5,
};

inline std::uint64_t stream_seed(std::uint64_t master, SeedStream stream) {
  return derive_seed(master, static_cast<std::uint64_t>(stream) << 32);
}

inline bool all_finite(const Matrix& m) { return m.allFinite(); }

}  // namespace reweight
