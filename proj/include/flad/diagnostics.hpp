#pragma once

#include "flad/loss_oracle.hpp"
#include "flad/param_vector.hpp"

#include <cstdint>
#include <limits>
#include <optional>
#include <string>
#include <vector>

namespace flad {

struct SpectrumReport {
  std::vector<double> top_eigenvalues;  // descending
  std::vector<ParamVector> top_eigenvectors;
  std::vector<double> residuals;  // |Hv - lambda v| at exit
  std::vector<int> iterations;
  std::vector<bool> converged;
  double trace_estimate = std::numeric_limits<double>::quiet_NaN();
  double trace_stderr = std::numeric_limits<double>::quiet_NaN();
  int hutchinson_samples = 0;
  double tr_h_sigma = std::numeric_limits<double>::quiet_NaN();
};

struct PowerIterationOptions {
  std::size_t k = 5;
  int iters = 100;
  double tol = 1e-6;
  std::uint64_t seed = 0;
};

/// Power iteration with deflation over the HVP operator, finished by a
/// Rayleigh-Ritz pass over the k vectors found. A pair counts as converged when
/// |Hv - lambda v| < tol * (|lambda| + 1) for the undeflated Hessian. Pairs come
/// back sorted by eigenvalue, descending.
SpectrumReport top_eigenpairs(const LossOracle& oracle, const ParamVector& w, const Batch& batch,
                              const PowerIterationOptions& opts);

struct TraceEstimate {
  double mean = 0.0;
  double std_error = 0.0;
  int samples = 0;
};

/// Mean of z'Hz over Rademacher probes z, with its standard error.
TraceEstimate hutchinson_trace(const LossOracle& oracle, const ParamVector& w, const Batch& batch, int samples,
                               std::uint64_t seed);

/// sum_j lambda_j * Var_b(<g_b, v_j>) with the unbiased sample variance over
/// the supplied per-batch gradients.
double tr_h_sigma_projected(const std::vector<double>& eigenvalues, const std::vector<ParamVector>& eigenvectors,
                            const std::vector<ParamVector>& gradients);

/// Top-k eigenpairs of the Hessian over the pooled batches, projected
/// per-batch gradients at w. Needs k >= 1 and at least two batches.
double tr_h_sigma(const LossOracle& oracle, const ParamVector& w, const std::vector<Batch>& batches, std::size_t k,
                  std::uint64_t seed, int iters = 100, double tol = 1e-6);

/// Concatenates batches row-wise.
Batch pool_batches(const std::vector<Batch>& batches);

struct LandscapeSlice {
  std::vector<ParamVector> directions;  // 1 or 2
  std::vector<double> alphas;
  std::vector<double> betas;                   // empty for 1-D slices
  std::vector<std::optional<double>> losses;   // row-major [alpha][beta]; nullopt = non-finite
  double scale = 1.0;
  std::size_t missing = 0;

  bool two_d() const { return directions.size() == 2; }
  std::optional<double> at(std::size_t i, std::size_t j = 0) const {
    return losses[two_d() ? i * betas.size() + j : i];
  }
};

/// losses(i, j) = loss(w + a_i * scale * d1 + b_j * scale * d2); the grid
/// point with all coefficients zero evaluates w itself. Directions must be
/// unit vectors.
LandscapeSlice landscape_slice(const LossOracle& oracle, const ParamVector& w,
                               const std::vector<ParamVector>& directions, const std::vector<double>& grid,
                               double scale, const Batch& batch);

std::vector<double> linspace(double lo, double hi, std::size_t points);

/// Gaussian direction; with per_span_normalize each span is rescaled to the
/// norm of the matching span of w (filter-style) before the whole vector is
/// normalized to unit length.
ParamVector random_direction(const ParamVector& w, std::uint64_t seed, bool per_span_normalize);

void write_spectrum_csv(const SpectrumReport& report, const std::string& path);
void write_slice_csv(const LandscapeSlice& slice, const std::string& path);
void write_slice_svg(const LandscapeSlice& slice, const std::string& path, const std::string& title);

}  // namespace flad
