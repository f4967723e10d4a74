#pragma once

// Weighted partial cross-covariance of mapped scalar features, the pairwise
// independence statistic ||Sigma_AB;w||_F^2 and the decorrelation objective
// summed over feature pairs, with its gradient with respect to the weights.

#include <algorithm>
#include <random>
#include <string>
#include <utility>
#include <vector>

#include "reweight/common.hpp"
#include "reweight/rff.hpp"
#include "reweight/simplex.hpp"

namespace reweight {

/// n x m batch of representations; rows are samples.
class FeatureMatrix {
 public:
  explicit FeatureMatrix(Matrix data) : data_(std::move(data)) {
    require(data_.rows() >= 2, "FeatureMatrix: need at least two samples");
    require(data_.allFinite(), "FeatureMatrix: entries must be finite");
  }

  const Matrix& data() const noexcept { return data_; }
  Eigen::Index samples() const noexcept { return data_.rows(); }
  Eigen::Index features() const noexcept { return data_.cols(); }
  auto column(Eigen::Index i) const { return data_.col(i); }

 private:
  Matrix data_;
};

struct CrossCovariance {
  Matrix matrix;

  double frobenius_squared() const { return matrix.squaredNorm(); }
};

using FeaturePair = std::pair<Eigen::Index, Eigen::Index>;

/// How sample weights enter the cross-covariance (ubar = (1/n) sum_j w_j U_j):
///  scaled_features: (1/(n-1)) sum_i (w_i U_i - ubar)^T (w_i V_i - vbar)
///  weighted_mean:   (1/(n-1)) sum_i w_i (U_i - ubar)^T (V_i - vbar)
/// Both reduce to the unweighted estimator at w = 1.
enum class WeightingForm { scaled_features, weighted_mean };

inline std::string to_string(WeightingForm f) {
  return f == WeightingForm::scaled_features ? "scaled_features" : "weighted_mean";
}

inline WeightingForm parse_weighting_form(const std::string& s) {
  if (s == "scaled_features") return WeightingForm::scaled_features;
  if (s == "weighted_mean") return WeightingForm::weighted_mean;
  throw InvalidArgument("unknown weighting form '" + s + "'");
}

inline constexpr WeightingForm kDefaultWeightingForm = WeightingForm::scaled_features;

/// Accumulates over samples in row order.
inline CrossCovariance weighted_cross_covariance(const Matrix& u, const Matrix& v, const Vector& w,
                                                 WeightingForm form = kDefaultWeightingForm) {
  require(u.rows() == v.rows() && u.rows() == w.size(), "weighted_cross_covariance: dimension mismatch");
  const Eigen::Index n = u.rows();
  require(n >= 2, "weighted_cross_covariance: need n >= 2");
  require((w.array() > 0.0).all(), "weighted_cross_covariance: weights must be positive");

  const Eigen::Index na = u.cols();
  const Eigen::Index nb = v.cols();
  Eigen::RowVectorXd ubar = Eigen::RowVectorXd::Zero(na);
  Eigen::RowVectorXd vbar = Eigen::RowVectorXd::Zero(nb);
  for (Eigen::Index i = 0; i < n; ++i) {
    ubar += w(i) * u.row(i);
    vbar += w(i) * v.row(i);
  }
  ubar /= static_cast<double>(n);
  vbar /= static_cast<double>(n);

  Matrix sigma = Matrix::Zero(na, nb);
  for (Eigen::Index i = 0; i < n; ++i) {
    if (form == WeightingForm::scaled_features) {
      const Eigen::RowVectorXd a = w(i) * u.row(i) - ubar;
      const Eigen::RowVectorXd b = w(i) * v.row(i) - vbar;
      sigma.noalias() += a.transpose() * b;
    } else {
      const Eigen::RowVectorXd a = u.row(i) - ubar;
      const Eigen::RowVectorXd b = v.row(i) - vbar;
      sigma.noalias() += w(i) * (a.transpose() * b);
    }
  }
  sigma /= static_cast<double>(n - 1);
  return {std::move(sigma)};
}

inline double independence_statistic(const Vector& a, const Vector& b, const Vector& w,
                                     const rff::RffProjection& proj_a, const rff::RffProjection& proj_b,
                                     WeightingForm form = kDefaultWeightingForm) {
  require(a.size() == b.size() && a.size() == w.size(), "independence_statistic: length mismatch");
  return weighted_cross_covariance(rff::apply_projection(proj_a, a), rff::apply_projection(proj_b, b), w, form)
      .frobenius_squared();
}

enum class PairMode { all, sampled };

struct PairSelector {
  PairMode mode = PairMode::all;
  double sample_ratio = 1.0;
  std::uint64_t seed = 0;
};

/// Pairs (i, j) with i < j in lexicographic order. In sampled mode a fixed
/// subset of round(ratio * m(m-1)/2) pairs (at least one) is drawn from the seed.
inline std::vector<FeaturePair> select_pairs(const PairSelector& selector, Eigen::Index m) {
  std::vector<FeaturePair> pairs;
  for (Eigen::Index i = 0; i < m; ++i)
    for (Eigen::Index j = i + 1; j < m; ++j) pairs.emplace_back(i, j);
  require(!pairs.empty(), "select_pairs: no feature pairs (need m >= 2)");
  if (selector.mode == PairMode::sampled) {
    require(selector.sample_ratio > 0.0 && selector.sample_ratio <= 1.0,
            "select_pairs: sample_ratio must lie in (0, 1]");
    auto keep = static_cast<std::size_t>(std::llround(selector.sample_ratio * static_cast<double>(pairs.size())));
    keep = std::clamp<std::size_t>(keep, 1, pairs.size());
    std::mt19937_64 rng(selector.seed);
    std::shuffle(pairs.begin(), pairs.end(), rng);
    pairs.resize(keep);
    std::sort(pairs.begin(), pairs.end());
  }
  return pairs;
}

/// Per-column maps: RFF matrices (n x n_f), or the raw column when linear_only.
inline std::vector<Matrix> map_columns(const Matrix& z, const std::vector<rff::RffProjection>& projections,
                                       bool linear_only) {
  require(z.allFinite(), "map_columns: non-finite features");
  if (!linear_only)
    require(static_cast<Eigen::Index>(projections.size()) == z.cols(),
            "map_columns: need one projection per feature column");
  std::vector<Matrix> maps;
  maps.reserve(static_cast<std::size_t>(z.cols()));
  for (Eigen::Index c = 0; c < z.cols(); ++c) {
    if (linear_only)
      maps.emplace_back(z.col(c));
    else
      maps.push_back(rff::apply_projection(projections[static_cast<std::size_t>(c)], z.col(c)));
  }
  return maps;
}

/// Sum over selected pairs of ||Sigma_{Z_i Z_j; w}||_F^2 with the column maps
/// precomputed once, so repeated evaluations at different weights only redo
/// the centering.
class DecorrelationObjective {
 public:
  DecorrelationObjective(const Matrix& z, const std::vector<rff::RffProjection>& projections,
                         std::vector<FeaturePair> pairs, bool linear_only,
                         WeightingForm form = kDefaultWeightingForm)
      : maps_(map_columns(z, projections, linear_only)), pairs_(std::move(pairs)), rows_(z.rows()), form_(form) {
    require(rows_ >= 2, "DecorrelationObjective: need at least two samples");
    require(!pairs_.empty(), "DecorrelationObjective: empty pair set");
    for (const auto& [i, j] : pairs_)
      require(i >= 0 && i < j && j < z.cols(), "DecorrelationObjective: invalid pair");
  }

  Eigen::Index rows() const noexcept { return rows_; }
  const std::vector<FeaturePair>& pairs() const noexcept { return pairs_; }
  WeightingForm form() const noexcept { return form_; }

  double value(const Vector& w) const { return evaluate(w, rows_, nullptr); }

  /// Value, and dI/dw for rows [first_row, n) written to *grad (length n - first_row).
  double value_and_gradient(const Vector& w, Eigen::Index first_row, Vector* grad) const {
    require(first_row >= 0 && first_row <= rows_, "value_and_gradient: bad first_row");
    return evaluate(w, first_row, grad);
  }

 private:
  double evaluate(const Vector& w, Eigen::Index first_row, Vector* grad) const {
    require(w.size() == rows_, "DecorrelationObjective: weight length mismatch");
    require((w.array() > 0.0).all(), "DecorrelationObjective: weights must be positive");
    const double n = static_cast<double>(rows_);
    const double norm = 1.0 / (n - 1.0);
    const bool scaled = form_ == WeightingForm::scaled_features;

    // scaled_features: left = right = w*U - ubar.
    // weighted_mean:   right = U - ubar, left = w * right.
    std::vector<Matrix> left(maps_.size()), right(maps_.size());
    std::vector<bool> used(maps_.size(), false);
    for (const auto& [i, j] : pairs_) used[static_cast<std::size_t>(i)] = used[static_cast<std::size_t>(j)] = true;
    for (std::size_t c = 0; c < maps_.size(); ++c) {
      if (!used[c]) continue;
      const Matrix& u = maps_[c];
      Eigen::RowVectorXd mean = Eigen::RowVectorXd::Zero(u.cols());
      for (Eigen::Index r = 0; r < rows_; ++r) mean += w(r) * u.row(r);
      mean /= n;
      if (scaled) {
        right[c] = (u.array().colwise() * w.array()).matrix();
        right[c].rowwise() -= mean;
      } else {
        right[c] = u.rowwise() - mean;
        left[c] = (right[c].array().colwise() * w.array()).matrix();
      }
    }
    auto lhs = [&](std::size_t c) -> const Matrix& { return scaled ? right[c] : left[c]; };

    const Eigen::Index tail = rows_ - first_row;
    if (grad) *grad = Vector::Zero(tail);
    double total = 0.0;
    for (const auto& [i, j] : pairs_) {
      const auto a = static_cast<std::size_t>(i);
      const auto b = static_cast<std::size_t>(j);
      const Matrix sigma = norm * (lhs(a).transpose() * right[b]);
      total += sigma.squaredNorm();
      if (!grad || tail == 0) continue;
      const auto u_tail = maps_[a].bottomRows(tail);
      const auto v_tail = maps_[b].bottomRows(tail);
      const auto uc_tail = right[a].bottomRows(tail);
      const auto vc_tail = right[b].bottomRows(tail);
      if (scaled) {
        // dI/dw_k = 2/(n-1) [U_k S Vc_k^T + Uc_k S V_k^T]
        const Matrix us = u_tail * sigma;
        const Matrix ucs = uc_tail * sigma;
        *grad += (2.0 * norm) *
                 ((us.array() * vc_tail.array()).rowwise().sum() + (ucs.array() * v_tail.array()).rowwise().sum())
                     .matrix();
      } else {
        // dI/dw_k = 2/(n-1) [Uc_k S Vc_k^T - (1/n)(U_k S rv^T + ru S V_k^T)], r = sum_i w_i (X_i - xbar)
        const Eigen::RowVectorXd ru = left[a].colwise().sum();
        const Eigen::RowVectorXd rv = left[b].colwise().sum();
        const Matrix ucs = uc_tail * sigma;
        const Vector s_rv = sigma * rv.transpose();
        const Eigen::RowVectorXd ru_s = ru * sigma;
        *grad += (2.0 * norm) * ((ucs.array() * vc_tail.array()).rowwise().sum().matrix() -
                                 (u_tail * s_rv + v_tail * ru_s.transpose()) / n);
      }
    }
    return total;
  }

  std::vector<Matrix> maps_;
  std::vector<FeaturePair> pairs_;
  Eigen::Index rows_;
  WeightingForm form_;
};

inline double decorrelation_objective(const FeatureMatrix& z, const Vector& w,
                                      const std::vector<rff::RffProjection>& projections,
                                      const PairSelector& selector, bool linear_only,
                                      WeightingForm form = kDefaultWeightingForm) {
  return DecorrelationObjective(z.data(), projections, select_pairs(selector, z.features()), linear_only, form)
      .value(w);
}

struct ObjectiveEvaluation {
  double decorrelation = 0.0;
  double regularization = 0.0;
  Vector gradient;  // with respect to the learnable theta

  double total() const { return decorrelation + regularization; }
};

/// Objective plus regularizer at w_O = (fixed_prefix, B softmax(theta)), and its
/// gradient with respect to theta. The prefix is held constant.
inline ObjectiveEvaluation evaluate_objective(const DecorrelationObjective& objective, const Vector& fixed_prefix,
                                              const SampleWeights& local, const Regularizer& regularizer) {
  require(fixed_prefix.size() + local.size() == objective.rows(), "evaluate_objective: weight length mismatch");
  Vector w_all(objective.rows());
  w_all << fixed_prefix, local.w;
  Vector grad_w;
  ObjectiveEvaluation out;
  out.decorrelation = objective.value_and_gradient(w_all, fixed_prefix.size(), &grad_w);
  out.regularization = regularizer.value(local);
  out.gradient = pullback_to_theta(local.w, grad_w) + regularizer.gradient(local);
  return out;
}

inline ObjectiveEvaluation objective_gradient(const FeatureMatrix& z, const Vector& fixed_prefix, const Vector& theta,
                                              const std::vector<rff::RffProjection>& projections,
                                              const PairSelector& selector, bool linear_only,
                                              const Regularizer& regularizer,
                                              WeightingForm form = kDefaultWeightingForm) {
  const DecorrelationObjective objective(z.data(), projections, select_pairs(selector, z.features()), linear_only,
                                         form);
  return evaluate_objective(objective, fixed_prefix, weights_from_theta(theta), regularizer);
}

}  // namespace reweight
