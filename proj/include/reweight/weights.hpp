#pragma once

// Local sample-weight optimization and the global save/reload buffer that
// stands in for whole-dataset statistics at O(kB) storage.

#include <vector>

#include "reweight/common.hpp"
#include "reweight/independence.hpp"
#include "reweight/simplex.hpp"

namespace reweight {

struct BufferSlot {
  Matrix features;  // B x m
  Vector weights;   // B
  double alpha = 0.0;
};

class GlobalBuffer {
 public:
  /// Long-term slot first, then progressively shorter memories.
  static std::vector<double> default_alphas(std::size_t k) {
    if (k == 0) return {};
    if (k == 1) return {0.9};
    if (k == 2) return {0.9, 0.5};
    std::vector<double> out(k);
    for (std::size_t i = 0; i < k; ++i) out[i] = 0.9 - 0.4 * static_cast<double>(i) / static_cast<double>(k - 1);
    return out;
  }

  GlobalBuffer(Eigen::Index batch, Eigen::Index features, std::vector<BufferSlot> slots)
      : batch_(batch), features_(features), slots_(std::move(slots)) {
    require(batch_ >= 1 && features_ >= 1, "GlobalBuffer: empty geometry");
    for (const auto& s : slots_) {
      require(s.features.rows() == batch_ && s.features.cols() == features_, "GlobalBuffer: slot shape mismatch");
      require(s.weights.size() == batch_, "GlobalBuffer: slot weight length mismatch");
      require(s.alpha >= 0.0 && s.alpha <= 1.0, "GlobalBuffer: alpha must lie in [0, 1]");
      require((s.weights.array() > 0.0).all(), "GlobalBuffer: stored weights must be positive");
    }
  }

  /// Every slot starts as a copy of the first batch with uniform weights.
  static GlobalBuffer seeded(const Matrix& first_batch, const std::vector<double>& alphas) {
    std::vector<BufferSlot> slots;
    slots.reserve(alphas.size());
    for (double a : alphas) slots.push_back({first_batch, Vector::Ones(first_batch.rows()), a});
    return GlobalBuffer(first_batch.rows(), first_batch.cols(), std::move(slots));
  }

  Eigen::Index batch() const noexcept { return batch_; }
  Eigen::Index features() const noexcept { return features_; }
  std::size_t k() const noexcept { return slots_.size(); }
  const std::vector<BufferSlot>& slots() const noexcept { return slots_; }
  Eigen::Index stored_rows() const noexcept { return static_cast<Eigen::Index>(slots_.size()) * batch_; }

  void check_batch(const Matrix& z_local, const Vector& w_local, const char* who) const {
    require(z_local.rows() == batch_ && z_local.cols() == features_, std::string(who) + ": feature shape mismatch");
    require(w_local.size() == batch_, std::string(who) + ": weight length mismatch");
  }

 private:
  Eigen::Index batch_;
  Eigen::Index features_;
  std::vector<BufferSlot> slots_;
};

struct ReloadedBatch {
  Matrix features;  // (k+1)B x m: slots in order, then the local batch
  Vector weights;   // (k+1)B
};

inline ReloadedBatch reload(const GlobalBuffer& buffer, const Matrix& z_local, const Vector& w_local) {
  buffer.check_batch(z_local, w_local, "reload");
  const Eigen::Index b = buffer.batch();
  const Eigen::Index rows = buffer.stored_rows() + b;
  ReloadedBatch out{Matrix(rows, buffer.features()), Vector(rows)};
  Eigen::Index offset = 0;
  for (const auto& slot : buffer.slots()) {
    out.features.middleRows(offset, b) = slot.features;
    out.weights.segment(offset, b) = slot.weights;
    offset += b;
  }
  out.features.middleRows(offset, b) = z_local;
  out.weights.segment(offset, b) = w_local;
  return out;
}

/// Z_Gi' = a_i Z_Gi + (1 - a_i) Z_L and w_Gi' = a_i w_Gi + (1 - a_i) w_L for every slot.
inline GlobalBuffer save(const GlobalBuffer& buffer, const Matrix& z_local, const Vector& w_local) {
  buffer.check_batch(z_local, w_local, "save");
  std::vector<BufferSlot> slots;
  slots.reserve(buffer.k());
  for (const auto& s : buffer.slots()) {
    const double a = s.alpha;
    slots.push_back({a * s.features + (1.0 - a) * z_local, a * s.weights + (1.0 - a) * w_local, a});
  }
  return GlobalBuffer(buffer.batch(), buffer.features(), std::move(slots));
}

inline constexpr int kDefaultBalancingEpochs = 20;

struct WeightOptimizerConfig {
  int epochs = kDefaultBalancingEpochs;
  double lr = 3.0;
  Regularizer regularizer{};
};

struct LocalWeightResult {
  SampleWeights weights;
  /// Objective plus regularizer at the start and after every accepted step.
  std::vector<double> trace;
  double final_decorrelation = 0.0;
  int rejected_steps = 0;
};

/// Gradient descent on theta_local; the global prefix of the weights stays
/// fixed and only the last B rows of the objective are learnable. A step that
/// would increase the objective is rejected and the step size halved for the
/// rest of the loop, so the trace is non-increasing.
inline LocalWeightResult optimize_local_weights(const DecorrelationObjective& objective, const Vector& global_weights,
                                                const Vector& theta_local, const WeightOptimizerConfig& config) {
  require(config.epochs >= 0, "optimize_local_weights: epochs must be >= 0");
  require(config.lr >= 0.0, "optimize_local_weights: lr must be >= 0");
  require(global_weights.size() + theta_local.size() == objective.rows(),
          "optimize_local_weights: theta length does not match the local block");
  LocalWeightResult out;
  out.weights = weights_from_theta(theta_local);
  ObjectiveEvaluation eval = evaluate_objective(objective, global_weights, out.weights, config.regularizer);
  auto check = [](const ObjectiveEvaluation& e, int step) {
    if (!std::isfinite(e.total()) || !e.gradient.allFinite())
      throw Diverged("optimize_local_weights: non-finite objective", step);
  };
  check(eval, 0);
  out.trace.reserve(static_cast<std::size_t>(config.epochs) + 1);
  out.trace.push_back(eval.total());
  out.final_decorrelation = eval.decorrelation;
  double lr = config.lr;
  for (int step = 1; step <= config.epochs && lr > 0.0; ++step) {
    SampleWeights candidate;
    try {
      candidate = weights_from_theta(out.weights.theta - lr * eval.gradient);
    } catch (const NumericUnderflow&) {
      lr *= 0.5;
      continue;
    }
    ObjectiveEvaluation next = evaluate_objective(objective, global_weights, candidate, config.regularizer);
    check(next, step);
    if (next.total() > eval.total()) {
      lr *= 0.5;
      ++out.rejected_steps;
      continue;
    }
    out.weights = std::move(candidate);
    eval = std::move(next);
    out.trace.push_back(eval.total());
    out.final_decorrelation = eval.decorrelation;
  }
  return out;
}

inline LocalWeightResult optimize_local_weights(const Matrix& z_reloaded, const Vector& global_weights,
                                                const Vector& theta_local, const WeightOptimizerConfig& config,
                                                const std::vector<rff::RffProjection>& projections,
                                                const std::vector<FeaturePair>& pairs, bool linear_only,
                                                WeightingForm form = kDefaultWeightingForm) {
  const DecorrelationObjective objective(z_reloaded, projections, pairs, linear_only, form);
  return optimize_local_weights(objective, global_weights, theta_local, config);
}

}  // namespace reweight
