#pragma once

// MLP cross-entropy kernels: loss, gradient and exact Hessian-vector products
// (forward-over-reverse R-operator). Two backends with the same contract:
//
//   serial   - per-example scalar loops; the reference implementation.
//   parallel - fixed-size example chunks evaluated with Eigen under OpenMP and
//              reduced in chunk order, so results are bitwise independent of
//              the thread count.
//
// The softmax runs over the first `active_classes` logits only; rows of the
// head beyond that receive zero gradient and zero curvature.

#include "flad/model.hpp"

#include <Eigen/Dense>

#include <vector>

namespace flad::kernels {

struct MlpProblem {
  const ModelSpec& spec;
  std::size_t active_classes;
  const Eigen::VectorXd& w;
  const Eigen::MatrixXd& x;
  const std::vector<int>& labels;
};

struct LossGrad {
  double loss = 0.0;
  Eigen::VectorXd grad;
};

struct GradHvp {
  double loss = 0.0;
  Eigen::VectorXd grad;
  Eigen::VectorXd hvp;
};

enum class Backend { serial, parallel };

namespace serial {
double loss(const MlpProblem& p);
LossGrad loss_grad(const MlpProblem& p);
Eigen::VectorXd hvp(const MlpProblem& p, const Eigen::VectorXd& v);
/// Gradient g, then H * g / (|g| + c) at the same point.
GradHvp normalized_grad_hvp(const MlpProblem& p, double c);
Eigen::MatrixXd logits(const ModelSpec& spec, const Eigen::VectorXd& w, const Eigen::MatrixXd& x);
}  // namespace serial

namespace parallel {
inline constexpr Eigen::Index kChunk = 32;

double loss(const MlpProblem& p);
LossGrad loss_grad(const MlpProblem& p);
Eigen::VectorXd hvp(const MlpProblem& p, const Eigen::VectorXd& v);
GradHvp normalized_grad_hvp(const MlpProblem& p, double c);
Eigen::MatrixXd logits(const ModelSpec& spec, const Eigen::VectorXd& w, const Eigen::MatrixXd& x);
}  // namespace parallel

/// Argmax over the first `active_classes` logits of each row.
std::vector<int> predict(const ModelSpec& spec, const Eigen::VectorXd& w, const Eigen::MatrixXd& x,
                         std::size_t active_classes);

}  // namespace flad::kernels
