#pragma once

// Fully connected ReLU classifier with manual backpropagation. The last
// hidden layer's activations are the representation fed to decorrelation.

#include <random>
#include <vector>

#include "reweight/common.hpp"

namespace reweight {

struct Batch {
  Matrix inputs;            // B x m_X
  std::vector<int> labels;  // B entries in [0, C)

  Eigen::Index size() const noexcept { return inputs.rows(); }
};

class Mlp {
 public:
  using Dims = std::vector<Eigen::Index>;

  Mlp(Dims dims, std::vector<Matrix> weights, std::vector<Vector> biases)
      : dims_(std::move(dims)), weights_(std::move(weights)), biases_(std::move(biases)) {
    require(dims_.size() >= 2, "Mlp: need at least input and output dims");
    for (auto d : dims_) require(d >= 1, "Mlp: layer dims must be positive");
    require(weights_.size() == dims_.size() - 1 && biases_.size() == weights_.size(), "Mlp: layer count mismatch");
    for (std::size_t l = 0; l < weights_.size(); ++l) {
      require(weights_[l].rows() == dims_[l + 1] && weights_[l].cols() == dims_[l], "Mlp: weight shape mismatch");
      require(biases_[l].size() == dims_[l + 1], "Mlp: bias shape mismatch");
    }
    reset_velocity();
  }

  static Mlp zeros(const Dims& dims) {
    std::vector<Matrix> w;
    std::vector<Vector> b;
    for (std::size_t l = 0; l + 1 < dims.size(); ++l) {
      w.push_back(Matrix::Zero(dims[l + 1], dims[l]));
      b.push_back(Vector::Zero(dims[l + 1]));
    }
    return Mlp(dims, std::move(w), std::move(b));
  }

  /// Uniform(-1/sqrt(fan_in), 1/sqrt(fan_in)) for weights and biases.
  static Mlp random(const Dims& dims, std::uint64_t seed) {
    require(dims.size() >= 2, "Mlp: need at least input and output dims");
    std::mt19937_64 rng(seed);
    std::vector<Matrix> w;
    std::vector<Vector> b;
    for (std::size_t l = 0; l + 1 < dims.size(); ++l) {
      const double bound = 1.0 / std::sqrt(static_cast<double>(dims[l]));
      std::uniform_real_distribution<double> u(-bound, bound);
      Matrix wl(dims[l + 1], dims[l]);
      for (Eigen::Index r = 0; r < wl.rows(); ++r)
        for (Eigen::Index c = 0; c < wl.cols(); ++c) wl(r, c) = u(rng);
      Vector bl(dims[l + 1]);
      for (Eigen::Index r = 0; r < bl.size(); ++r) bl(r) = u(rng);
      w.push_back(std::move(wl));
      b.push_back(std::move(bl));
    }
    return Mlp(dims, std::move(w), std::move(b));
  }

  const Dims& dims() const noexcept { return dims_; }
  std::size_t layers() const noexcept { return weights_.size(); }
  Eigen::Index input_dim() const noexcept { return dims_.front(); }
  Eigen::Index classes() const noexcept { return dims_.back(); }
  Eigen::Index feature_dim() const noexcept { return dims_[dims_.size() - 2]; }

  Matrix& weight(std::size_t l) { return weights_[l]; }
  const Matrix& weight(std::size_t l) const { return weights_[l]; }
  Vector& bias(std::size_t l) { return biases_[l]; }
  const Vector& bias(std::size_t l) const { return biases_[l]; }
  Matrix& weight_velocity(std::size_t l) { return weight_velocity_[l]; }
  const Matrix& weight_velocity(std::size_t l) const { return weight_velocity_[l]; }
  Vector& bias_velocity(std::size_t l) { return bias_velocity_[l]; }
  const Vector& bias_velocity(std::size_t l) const { return bias_velocity_[l]; }

  void reset_velocity() {
    weight_velocity_.clear();
    bias_velocity_.clear();
    for (std::size_t l = 0; l < weights_.size(); ++l) {
      weight_velocity_.push_back(Matrix::Zero(weights_[l].rows(), weights_[l].cols()));
      bias_velocity_.push_back(Vector::Zero(biases_[l].size()));
    }
  }

 private:
  Dims dims_;
  std::vector<Matrix> weights_;
  std::vector<Vector> biases_;
  std::vector<Matrix> weight_velocity_;
  std::vector<Vector> bias_velocity_;
};

struct ForwardPass {
  std::vector<Matrix> activations;  // [0] = inputs, then each hidden layer after ReLU
  Matrix logits;

  const Matrix& features() const { return activations.back(); }
};

inline ForwardPass forward(const Mlp& model, const Matrix& inputs) {
  require(inputs.cols() == model.input_dim(), "forward: input width does not match the model");
  ForwardPass pass;
  pass.activations.reserve(model.layers());
  pass.activations.push_back(inputs);
  for (std::size_t l = 0; l + 1 < model.layers(); ++l) {
    Matrix pre = pass.activations.back() * model.weight(l).transpose();
    pre.rowwise() += model.bias(l).transpose();
    pass.activations.push_back(pre.cwiseMax(0.0));
  }
  pass.logits = pass.activations.back() * model.weight(model.layers() - 1).transpose();
  pass.logits.rowwise() += model.bias(model.layers() - 1).transpose();
  return pass;
}

inline Matrix softmax_rows(const Matrix& logits) {
  Matrix out(logits.rows(), logits.cols());
  for (Eigen::Index i = 0; i < logits.rows(); ++i) {
    const double top = logits.row(i).maxCoeff();
    const Eigen::RowVectorXd e = (logits.row(i).array() - top).exp().matrix();
    out.row(i) = e / e.sum();
  }
  return out;
}

inline void check_labels(const std::vector<int>& labels, Eigen::Index rows, Eigen::Index classes) {
  require(static_cast<Eigen::Index>(labels.size()) == rows, "labels: length mismatch");
  for (int y : labels) require(y >= 0 && y < classes, "labels: label out of range");
}

/// (1/B) sum_i w_i CE(softmax(logits_i), y_i), via log-sum-exp.
inline double weighted_cross_entropy(const Matrix& logits, const std::vector<int>& labels, const Vector& w) {
  check_labels(labels, logits.rows(), logits.cols());
  require(w.size() == logits.rows(), "weighted_cross_entropy: weight length mismatch");
  double total = 0.0;
  for (Eigen::Index i = 0; i < logits.rows(); ++i) {
    const double top = logits.row(i).maxCoeff();
    const double lse = top + std::log((logits.row(i).array() - top).exp().sum());
    total += w(i) * (lse - logits(i, labels[static_cast<std::size_t>(i)]));
  }
  return total / static_cast<double>(logits.rows());
}

struct Gradients {
  std::vector<Matrix> weights;
  std::vector<Vector> biases;
};

struct LossAndGradients {
  double loss = 0.0;
  Gradients grads;
};

/// Weighted loss and its parameter gradients; w is a constant here.
inline LossAndGradients compute_gradients(const Mlp& model, const Batch& batch, const Vector& w) {
  const ForwardPass pass = forward(model, batch.inputs);
  LossAndGradients out;
  out.loss = weighted_cross_entropy(pass.logits, batch.labels, w);

  const double inv_b = 1.0 / static_cast<double>(batch.size());
  Matrix delta = softmax_rows(pass.logits);
  for (Eigen::Index i = 0; i < delta.rows(); ++i) {
    delta(i, batch.labels[static_cast<std::size_t>(i)]) -= 1.0;
    delta.row(i) *= w(i) * inv_b;
  }

  const std::size_t layers = model.layers();
  out.grads.weights.resize(layers);
  out.grads.biases.resize(layers);
  for (std::size_t l = layers; l-- > 0;) {
    const Matrix& a = pass.activations[l];
    out.grads.weights[l] = delta.transpose() * a;
    out.grads.biases[l] = delta.colwise().sum().transpose();
    if (l > 0) delta = ((delta * model.weight(l)).array() * (a.array() > 0.0).cast<double>()).matrix();
  }
  return out;
}

/// One SGD step with momentum (v = mu v + g; p -= lr v). Returns the pre-step loss.
inline double backward_and_step(Mlp& model, const Batch& batch, const Vector& w, double lr, double momentum) {
  const LossAndGradients lg = compute_gradients(model, batch, w);
  if (!std::isfinite(lg.loss)) throw Diverged("backward_and_step: non-finite loss", 0);
  for (std::size_t l = 0; l < model.layers(); ++l) {
    model.weight_velocity(l) = momentum * model.weight_velocity(l) + lg.grads.weights[l];
    model.bias_velocity(l) = momentum * model.bias_velocity(l) + lg.grads.biases[l];
    if (lr != 0.0) {
      model.weight(l) -= lr * model.weight_velocity(l);
      model.bias(l) -= lr * model.bias_velocity(l);
    }
  }
  return lg.loss;
}

/// d logits(target) / d input at a single input point.
inline Vector input_gradient(const Mlp& model, const Vector& input, Eigen::Index target) {
  require(target >= 0 && target < model.classes(), "input_gradient: target class out of range");
  const ForwardPass pass = forward(model, input.transpose());
  Eigen::RowVectorXd delta = Eigen::RowVectorXd::Zero(model.classes());
  delta(target) = 1.0;
  for (std::size_t l = model.layers(); l-- > 0;) {
    delta = delta * model.weight(l);
    if (l > 0) delta = (delta.array() * (pass.activations[l].row(0).array() > 0.0).cast<double>()).matrix();
  }
  return delta.transpose();
}

/// Mean over n_draws of |d score_target / d x| at x + N(0, sigma^2 I).
inline Vector smoothgrad_saliency(const Mlp& model, const Vector& input, Eigen::Index target, double noise_sigma,
                                  int n_draws, std::mt19937_64& rng) {
  require(n_draws >= 1, "smoothgrad_saliency: n_draws must be >= 1");
  require(noise_sigma >= 0.0, "smoothgrad_saliency: noise_sigma must be >= 0");
  require(input.size() == model.input_dim(), "smoothgrad_saliency: input width mismatch");
  std::normal_distribution<double> normal(0.0, 1.0);
  Vector acc = Vector::Zero(input.size());
  for (int d = 0; d < n_draws; ++d) {
    Vector x = input;
    if (noise_sigma > 0.0)
      for (Eigen::Index i = 0; i < x.size(); ++i) x(i) += noise_sigma * normal(rng);
    acc += input_gradient(model, x, target).cwiseAbs();
  }
  return acc / static_cast<double>(n_draws);
}

inline std::vector<int> predict(const Mlp& model, const Matrix& inputs) {
  const ForwardPass pass = forward(model, inputs);
  std::vector<int> out(static_cast<std::size_t>(inputs.rows()));
  for (Eigen::Index i = 0; i < inputs.rows(); ++i) {
    Eigen::Index best = 0;
    pass.logits.row(i).maxCoeff(&best);
    out[static_cast<std::size_t>(i)] = static_cast<int>(best);
  }
  return out;
}

}  // namespace reweight
