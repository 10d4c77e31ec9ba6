#include "flad/loss_oracle.hpp"

#include "flad/errors.hpp"

#include <cmath>

namespace flad {

LossOracle LossOracle::mlp(ModelSpec spec, std::size_t active_classes, kernels::Backend backend) {
  spec.validate();
  LossOracle o;
  o.kind_ = Kind::cross_entropy_mlp;
  o.dim_ = spec.param_count();
  o.active_ = active_classes == 0 ? spec.classes : active_classes;
  if (o.active_ > spec.classes) throw ConfigError("active classes exceed model outputs");
  o.spec_ = std::move(spec);
  o.backend_ = backend;
  return o;
}

LossOracle LossOracle::quadratic(Eigen::MatrixXd a, Eigen::VectorXd b) {
  if (a.rows() != a.cols() || a.rows() == 0) throw ConfigError("quadratic: A must be square and non-empty");
  if (b.size() == 0) b = Eigen::VectorXd::Zero(a.rows());
  if (b.size() != a.rows()) throw DimensionError("quadratic: b length does not match A");
  const double scale = std::max(1.0, a.cwiseAbs().maxCoeff());
  if ((a - a.transpose()).cwiseAbs().maxCoeff() > 1e-10 * scale) throw ConfigError("quadratic: A is not symmetric");
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(a, Eigen::EigenvaluesOnly);
  if (eig.eigenvalues().minCoeff() < -1e-10 * scale) throw ConfigError("quadratic: A is not positive semi-definite");
  LossOracle o;
  o.kind_ = Kind::quadratic;
  o.dim_ = static_cast<std::size_t>(a.rows());
  o.a_ = std::move(a);
  o.b_ = std::move(b);
  return o;
}

LossOracle LossOracle::with_anchor(ParamVector anchor, double strength) const {
  if (anchor.size() != dim_) throw DimensionError("anchor length does not match oracle");
  if (!(strength >= 0.0)) throw ConfigError("anchor strength must be >= 0");
  LossOracle o = *this;
  o.anchor_ = std::move(anchor);
  o.anchor_strength_ = strength;
  return o;
}

LossOracle LossOracle::with_active_classes(std::size_t active) const {
  if (kind_ != Kind::cross_entropy_mlp) throw ConfigError("active classes only apply to MLP oracles");
  if (active < 1 || active > spec_.classes) throw ConfigError("active classes out of range");
  LossOracle o = *this;
  o.active_ = active;
  return o;
}

LossOracle LossOracle::with_backend(kernels::Backend backend) const {
  LossOracle o = *this;
  o.backend_ = backend;
  return o;
}

LossOracle LossOracle::instrumented(std::shared_ptr<EvalCounter> counter) const {
  LossOracle o = *this;
  o.counter_ = std::move(counter);
  return o;
}

ParamVector LossOracle::make_params(const Eigen::VectorXd& values) const {
  if (static_cast<std::size_t>(values.size()) != dim_) throw DimensionError("make_params: wrong length");
  if (kind_ == Kind::cross_entropy_mlp) return ParamVector(values, spec_.layout());
  return ParamVector::from_values(values);
}

void LossOracle::check_params(const ParamVector& w) const {
  if (w.size() != dim_) {
    throw DimensionError("parameter length " + std::to_string(w.size()) + " does not match oracle dimension " +
                         std::to_string(dim_));
  }
}

Eigen::VectorXd LossOracle::quadratic_shift(const Batch& batch) const {
  if (batch.inputs.cols() == 0) return b_;
  if (static_cast<std::size_t>(batch.inputs.cols()) != dim_ || batch.inputs.rows() == 0) {
    throw DimensionError("quadratic batch rows must be empty or have the parameter width");
  }
  return b_ + batch.inputs.colwise().mean().transpose();
}

kernels::MlpProblem LossOracle::problem(const ParamVector& w, const Batch& batch) const {
  return kernels::MlpProblem{spec_, active_, w.values(), batch.inputs, batch.labels};
}

void LossOracle::count(std::atomic<long> EvalCounter::*field) const {
  if (counter_) ((*counter_).*field)++;
}

double LossOracle::loss(const ParamVector& w, const Batch& batch) const {
  check_params(w);
  count(&EvalCounter::losses);
  double value = 0.0;
  if (kind_ == Kind::quadratic) {
    const Eigen::VectorXd& x = w.values();
    value = 0.5 * x.dot(a_ * x) - quadratic_shift(batch).dot(x);
  } else {
    value = backend_ == kernels::Backend::serial ? kernels::serial::loss(problem(w, batch))
                                                 : kernels::parallel::loss(problem(w, batch));
  }
  if (anchor_) value += 0.5 * anchor_strength_ * (w.values() - anchor_->values()).squaredNorm();
  return value;
}

LossAndGrad LossOracle::loss_and_grad(const ParamVector& w, const Batch& batch) const {
  check_params(w);
  count(&EvalCounter::grads);
  LossAndGrad out;
  Eigen::VectorXd g;
  if (kind_ == Kind::quadratic) {
    const Eigen::VectorXd& x = w.values();
    const Eigen::VectorXd shift = quadratic_shift(batch);
    const Eigen::VectorXd ax = a_ * x;
    out.loss = 0.5 * x.dot(ax) - shift.dot(x);
    g = ax - shift;
  } else {
    auto lg = backend_ == kernels::Backend::serial ? kernels::serial::loss_grad(problem(w, batch))
                                                   : kernels::parallel::loss_grad(problem(w, batch));
    out.loss = lg.loss;
    g = std::move(lg.grad);
  }
  if (anchor_) {
    const Eigen::VectorXd diff = w.values() - anchor_->values();
    out.loss += 0.5 * anchor_strength_ * diff.squaredNorm();
    g += anchor_strength_ * diff;
  }
  out.grad = ParamVector::with_layout(w, std::move(g));
  return out;
}

ParamVector LossOracle::grad(const ParamVector& w, const Batch& batch) const { return loss_and_grad(w, batch).grad; }

ParamVector LossOracle::hvp(const ParamVector& w, const Batch& batch, const ParamVector& v) const {
  check_params(w);
  require_same_size(w, v, "hvp");
  count(&EvalCounter::hvps);
  Eigen::VectorXd hv;
  if (kind_ == Kind::quadratic) {
    quadratic_shift(batch);  // validates the batch shape
    hv = a_ * v.values();
  } else {
    hv = backend_ == kernels::Backend::serial ? kernels::serial::hvp(problem(w, batch), v.values())
                                              : kernels::parallel::hvp(problem(w, batch), v.values());
  }
  if (anchor_) hv += anchor_strength_ * v.values();
  return ParamVector::with_layout(w, std::move(hv));
}

ParamVector LossOracle::grad_norm_grad(const ParamVector& w, const Batch& batch, double c) const {
  if (!(c >= 0.0)) throw ConfigError("grad_norm_grad: guard constant c must be >= 0");
  check_params(w);
  count(&EvalCounter::hvps);
  if (kind_ == Kind::quadratic || anchor_) {
    // Composite path: uncounted gradient + HVP with the normalized direction.
    LossOracle plain = *this;
    plain.counter_.reset();
    const ParamVector g = plain.grad(w, batch);
    const double denom = norm(g) + c;
    if (denom == 0.0) return ParamVector::zeros_like(w);
    return plain.hvp(w, batch, ParamVector::with_layout(g, g.values() / denom));
  }
  auto gh = backend_ == kernels::Backend::serial ? kernels::serial::normalized_grad_hvp(problem(w, batch), c)
                                                 : kernels::parallel::normalized_grad_hvp(problem(w, batch), c);
  return ParamVector::with_layout(w, std::move(gh.hvp));
}

ParamVector fd_hvp_oracle(const LossOracle& oracle, const ParamVector& w, const Batch& batch, const ParamVector& v,
                          double eps) {
  if (!std::isfinite(eps) || !(eps > 0.0)) throw ConfigError("fd_hvp_oracle: eps must be finite and > 0");
  require_same_size(w, v, "fd_hvp_oracle");
  const ParamVector plus = oracle.grad(w + eps * v, batch);
  const ParamVector minus = oracle.grad(w - eps * v, batch);
  return (1.0 / (2.0 * eps)) * (plus - minus);
}

}  // namespace flad
