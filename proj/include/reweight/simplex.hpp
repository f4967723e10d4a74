#pragma once

// Parameterization of the scaled simplex {w > 0, sum w = B} through
// w = B * softmax(theta), plus the weight-decay regularizer used while
// optimizing the weights.

#include <algorithm>
#include <limits>

#include "reweight/common.hpp"

namespace reweight {

struct SampleWeights {
  Vector theta;
  Vector w;

  Eigen::Index size() const noexcept { return w.size(); }
};

/// w_i = B exp(theta_i) / sum_j exp(theta_j), computed with a max shift.
inline Vector derive_weights(const Vector& theta) {
  const Eigen::Index b = theta.size();
  require(b >= 1, "derive_weights: empty theta");
  const bool all_neg_inf = (theta.array() == -std::numeric_limits<double>::infinity()).all();
  if (all_neg_inf) throw NumericUnderflow("derive_weights: every theta saturated at -inf");
  require(theta.allFinite(), "derive_weights: theta must be finite");

  const double top = theta.maxCoeff();
  Vector e = (theta.array() - top).unaryExpr([](double t) { return std::exp(t); }).matrix();
  const double total = e.sum();
  Vector w = e * (static_cast<double>(b) / total);
  if ((w.array() < std::numeric_limits<double>::min()).any()) throw NumericUnderflow("derive_weights: a weight underflowed to zero");
  return w;
}

inline SampleWeights weights_from_theta(Vector theta) {
  SampleWeights out;
  out.w = derive_weights(theta);
  out.theta = std::move(theta);
  return out;
}

inline SampleWeights init_weights(Eigen::Index batch) {
  require(batch >= 1, "init_weights: batch size must be >= 1");
  SampleWeights out;
  out.theta = Vector::Zero(batch);
  out.w = Vector::Ones(batch);
  return out;
}

/// Chain rule through the softmax map: given dJ/dw, return dJ/dtheta.
inline Vector pullback_to_theta(const Vector& w, const Vector& grad_w) {
  const double b = static_cast<double>(w.size());
  const double mean_term = w.dot(grad_w) / b;
  return (w.array() * (grad_w.array() - mean_term)).matrix();
}

enum class RegularizerKind {
  weight_deviation,  // c/B * sum (w_i - 1)^2
  theta_decay,       // c/B * sum theta_i^2
};

struct Regularizer {
  RegularizerKind kind = RegularizerKind::weight_deviation;
  double coeff = 0.3;

  double value(const SampleWeights& sw) const {
    const double b = static_cast<double>(sw.size());
    if (kind == RegularizerKind::weight_deviation)
      return coeff * (sw.w.array() - 1.0).square().sum() / b;
    return coeff * sw.theta.squaredNorm() / b;
  }

  /// Gradient with respect to theta.
  Vector gradient(const SampleWeights& sw) const {
    const double b = static_cast<double>(sw.size());
    if (kind == RegularizerKind::weight_deviation)
      return pullback_to_theta(sw.w, (2.0 * coeff / b) * (sw.w.array() - 1.0).matrix());
    return (2.0 * coeff / b) * sw.theta;
  }
};

}  // namespace reweight
