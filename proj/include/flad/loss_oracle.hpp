#pragma once

#include "flad/kernels.hpp"
#include "flad/model.hpp"
#include "flad/param_vector.hpp"

#include <Eigen/Dense>

#include <atomic>
#include <memory>
#include <optional>

namespace flad {

/// Call counts of an instrumented oracle.
struct EvalCounter {
  std::atomic<long> losses{0};
  std::atomic<long> grads{0};
  std::atomic<long> hvps{0};

  void reset() {
    losses = 0;
    grads = 0;
    hvps = 0;
  }
};

struct LossAndGrad {
  double loss = 0.0;
  ParamVector grad;
};

/// L(w) over a batch together with exact first and second derivatives.
///
/// Two families are supported:
///   * cross-entropy of an MLP, softmax over the first `active_classes` outputs;
///   * quadratic 0.5 w'Aw - (b + xi)'w, A symmetric PSD, where xi is the mean of
///     the batch rows when their width equals dim() (stochastic gradients) and
///     zero when the batch rows are empty.
///
/// An optional anchor adds 0.5 * strength * |w - anchor|^2.
///
/// All evaluation methods are pure and thread-safe; the only side effect is the
/// optional call counter.
class LossOracle {
 public:
  enum class Kind { cross_entropy_mlp, quadratic };

  static LossOracle mlp(ModelSpec spec, std::size_t active_classes = 0,
                        kernels::Backend backend = kernels::Backend::parallel);
  /// Throws ConfigError unless A is square, symmetric and PSD to 1e-10.
  static LossOracle quadratic(Eigen::MatrixXd a, Eigen::VectorXd b = {});

  LossOracle with_anchor(ParamVector anchor, double strength) const;
  LossOracle with_active_classes(std::size_t active) const;
  LossOracle with_backend(kernels::Backend backend) const;
  LossOracle instrumented(std::shared_ptr<EvalCounter> counter) const;

  Kind kind() const noexcept { return kind_; }
  std::size_t dim() const noexcept { return dim_; }
  const ModelSpec& model() const { return spec_; }
  std::size_t active_classes() const noexcept { return active_; }
  const Eigen::MatrixXd& quadratic_matrix() const { return a_; }

  /// Parameter vector with this oracle's layout.
  ParamVector make_params(const Eigen::VectorXd& values) const;

  double loss(const ParamVector& w, const Batch& batch) const;
  ParamVector grad(const ParamVector& w, const Batch& batch) const;
  /// One gradient evaluation; the loss comes from the same forward pass.
  LossAndGrad loss_and_grad(const ParamVector& w, const Batch& batch) const;
  ParamVector hvp(const ParamVector& w, const Batch& batch, const ParamVector& v) const;
  /// H(w) * g / (|g| + c), g = grad(w). One HVP evaluation (the gradient comes
  /// from the same pass). A zero gradient gives a zero result.
  ParamVector grad_norm_grad(const ParamVector& w, const Batch& batch, double c) const;

 private:
  LossOracle() = default;

  void check_params(const ParamVector& w) const;
  Eigen::VectorXd quadratic_shift(const Batch& batch) const;
  kernels::MlpProblem problem(const ParamVector& w, const Batch& batch) const;
  void count(std::atomic<long> EvalCounter::*field) const;

  Kind kind_ = Kind::quadratic;
  std::size_t dim_ = 0;
  ModelSpec spec_;
  std::size_t active_ = 0;
  kernels::Backend backend_ = kernels::Backend::parallel;
  Eigen::MatrixXd a_;
  Eigen::VectorXd b_;
  std::optional<ParamVector> anchor_;
  double anchor_strength_ = 0.0;
  std::shared_ptr<EvalCounter> counter_;
};

/// Central-difference HVP, (grad(w + eps v) - grad(w - eps v)) / (2 eps).
/// Test oracle only; never used on the training path.
ParamVector fd_hvp_oracle(const LossOracle& oracle, const ParamVector& w, const Batch& batch,
                          const ParamVector& v, double eps);

}  // namespace flad
