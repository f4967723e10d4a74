#pragma once

// Conversions between library types and the oracle's plain containers, plus
// flat parameter views used by finite-difference checks.

#include <random>
#include <vector>

#include "oracles.hpp"
#include "reweight/independence.hpp"
#include "reweight/model.hpp"

namespace bridge {

using namespace reweight;

inline std::vector<oracle::Projection> to_oracle(const std::vector<rff::RffProjection>& ps) {
  std::vector<oracle::Projection> out;
  for (const auto& p : ps) {
    oracle::Projection o;
    for (const auto& f : p.functions()) {
      o.omega.push_back(f.omega);
      o.phi.push_back(f.phi);
    }
    out.push_back(o);
  }
  return out;
}

inline std::vector<double> to_std(const Vector& v) { return {v.data(), v.data() + v.size()}; }

inline std::vector<std::pair<int, int>> to_int_pairs(const std::vector<FeaturePair>& ps) {
  std::vector<std::pair<int, int>> out;
  for (auto [i, j] : ps) out.emplace_back(static_cast<int>(i), static_cast<int>(j));
  return out;
}


inline Batch random_batch(std::mt19937_64& rng, Eigen::Index n, Eigen::Index in, int classes) {
  Batch b{oracle::random_matrix(rng, n, in), std::vector<int>(static_cast<std::size_t>(n))};
  std::uniform_int_distribution<int> c(0, classes - 1);
  for (auto& y : b.labels) y = c(rng);
  return b;
}

// Flattened view of every parameter, for finite differences.
inline Vector flatten(const Mlp& m) {
  std::vector<double> v;
  for (std::size_t l = 0; l < m.layers(); ++l) {
    v.insert(v.end(), m.weight(l).data(), m.weight(l).data() + m.weight(l).size());
    v.insert(v.end(), m.bias(l).data(), m.bias(l).data() + m.bias(l).size());
  }
  return Eigen::Map<Vector>(v.data(), static_cast<Eigen::Index>(v.size()));
}

inline void unflatten(Mlp& m, const Vector& v) {
  Eigen::Index k = 0;
  for (std::size_t l = 0; l < m.layers(); ++l) {
    std::copy(v.data() + k, v.data() + k + m.weight(l).size(), m.weight(l).data());
    k += m.weight(l).size();
    std::copy(v.data() + k, v.data() + k + m.bias(l).size(), m.bias(l).data());
    k += m.bias(l).size();
  }
}

inline Vector flatten(const Gradients& g) {
  std::vector<double> v;
  for (std::size_t l = 0; l < g.weights.size(); ++l) {
    v.insert(v.end(), g.weights[l].data(), g.weights[l].data() + g.weights[l].size());
    v.insert(v.end(), g.biases[l].data(), g.biases[l].data() + g.biases[l].size());
  }
  return Eigen::Map<Vector>(v.data(), static_cast<Eigen::Index>(v.size()));
}

}  // namespace bridge
