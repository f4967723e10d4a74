#pragma once

// Random Fourier feature maps h(x) = sqrt(2) cos(omega x + phi) for scalar
// inputs, omega ~ N(0, 1), phi ~ U[0, 2 pi).

#include <numbers>
#include <random>
#include <utility>
#include <vector>

#include "reweight/common.hpp"

namespace reweight::rff {

inline constexpr std::size_t kDefaultFunctions = 5;
inline constexpr double kTwoPi = 2.0 * std::numbers::pi;

struct RffFunction {
  double omega = 0.0;
  double phi = 0.0;

  double operator()(double x) const { return std::numbers::sqrt2 * std::cos(omega * x + phi); }
};

class RffProjection {
 public:
  RffProjection(std::vector<RffFunction> functions, std::uint64_t seed)
      : functions_(std::move(functions)), seed_(seed) {
    require(!functions_.empty(), "RffProjection: needs at least one function");
    for (const auto& f : functions_) {
      require(std::isfinite(f.omega), "RffProjection: omega must be finite");
      require(f.phi >= 0.0 && f.phi < kTwoPi, "RffProjection: phi must lie in [0, 2pi)");
    }
  }

  std::size_t size() const noexcept { return functions_.size(); }
  std::uint64_t seed() const noexcept { return seed_; }
  const std::vector<RffFunction>& functions() const noexcept { return functions_; }
  const RffFunction& operator[](std::size_t j) const { return functions_[j]; }

  friend bool operator==(const RffProjection& a, const RffProjection& b) {
    if (a.seed_ != b.seed_ || a.functions_.size() != b.functions_.size()) return false;
    for (std::size_t j = 0; j < a.functions_.size(); ++j) {
      if (a.functions_[j].omega != b.functions_[j].omega || a.functions_[j].phi != b.functions_[j].phi)
        return false;
    }
    return true;
  }

 private:
  std::vector<RffFunction> functions_;
  std::uint64_t seed_;
};

inline RffProjection sample_projection(std::size_t n_functions, std::uint64_t seed) {
  require(n_functions >= 1, "sample_projection: n_f must be >= 1");
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  std::uniform_real_distribution<double> uniform(0.0, kTwoPi);
  std::vector<RffFunction> functions(n_functions);
  for (auto& f : functions) {
    f.omega = normal(rng);
    // uniform_real_distribution can round up to its upper bound.
    do {
      f.phi = uniform(rng);
    } while (f.phi >= kTwoPi);
  }
  return RffProjection(std::move(functions), seed);
}

/// Entry (i, j) is sqrt(2) cos(omega_j * values_i + phi_j).
inline Matrix apply_projection(const RffProjection& proj, const Eigen::Ref<const Vector>& values) {
  require(values.allFinite(), "apply_projection: non-finite input");
  const Eigen::Index n = values.size();
  const auto nf = static_cast<Eigen::Index>(proj.size());
  Matrix out(n, nf);
  for (Eigen::Index j = 0; j < nf; ++j) {
    const auto& f = proj[static_cast<std::size_t>(j)];
    for (Eigen::Index i = 0; i < n; ++i) out(i, j) = f(values(i));
  }
  return out;
}

/// One projection per feature column, seeded from (master seed, column index).
inline std::vector<RffProjection> sample_feature_projections(std::size_t n_features, std::size_t n_functions,
                                                             std::uint64_t master_seed) {
  std::vector<RffProjection> out;
  out.reserve(n_features);
  for (std::size_t i = 0; i < n_features; ++i)
    out.push_back(sample_projection(n_functions, derive_seed(master_seed, i)));
  return out;
}

}  // namespace reweight::rff
