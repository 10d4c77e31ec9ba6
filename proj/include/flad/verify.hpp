#pragma once

#include "flad/loss_oracle.hpp"
#include "flad/param_vector.hpp"

#include <Eigen/Dense>
#include <cstdint>
#include <string>
#include <vector>

namespace flad {

struct CheckResult {
  std::string name;
  bool passed = false;
  double value = 0.0;      // observed error or statistic
  double tolerance = 0.0;  // pass threshold for `value`
  std::string detail;
};

/// Central-difference gradient from loss evaluations only.
ParamVector fd_gradient(const LossOracle& oracle, const ParamVector& w, const Batch& batch, double eps = 1e-6);

/// Dense Hessian assembled column by column from HVPs with the unit vectors,
/// then symmetrized.
Eigen::MatrixXd dense_hessian(const LossOracle& oracle, const ParamVector& w, const Batch& batch);

/// FD gradient, FD HVP, HVP symmetry and linearity, dense-Hessian spectrum and
/// trace, EMA closed form, and the hand-evaluated optimizer/metric examples.
std::vector<CheckResult> run_oracle_suite(std::uint64_t seed = 0);

bool all_passed(const std::vector<CheckResult>& checks);

}  // namespace flad
