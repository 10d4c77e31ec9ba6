#pragma once

#include "flad/dataset.hpp"
#include "flad/loss_oracle.hpp"
#include "flad/model.hpp"
#include "flad/rng.hpp"

#include <Eigen/Dense>
#include <cmath>
#include <vector>

namespace flad::test {

inline ModelSpec small_spec(Activation act = Activation::tanh, std::vector<std::size_t> hidden = {7, 5},
                            std::size_t input = 4, std::size_t classes = 3, std::uint64_t seed = 11) {
  ModelSpec s;
  s.input_dim = input;
  s.hidden = std::move(hidden);
  s.classes = classes;
  s.activation = act;
  s.seed = seed;
  return s;
}

inline Batch random_batch(std::size_t rows, std::size_t dim, std::size_t classes, std::uint64_t seed) {
  auto rng = make_rng(seed, "test-batch");
  Eigen::MatrixXd x(static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(dim));
  for (Eigen::Index i = 0; i < x.size(); ++i) x.data()[i] = std::normal_distribution<double>(0, 1)(rng);
  std::vector<int> y(rows);
  for (auto& l : y) l = static_cast<int>(rng() % classes);
  return make_batch(std::move(x), std::move(y), classes);
}

/// Parameters with nonzero biases so every coordinate matters.
inline ParamVector jittered_params(const ModelSpec& spec, std::uint64_t seed, double scale = 0.1) {
  ParamVector w = init_params(spec);
  auto rng = make_rng(seed, "test-jitter");
  w += ParamVector::with_layout(w, gaussian_vector(rng, static_cast<Eigen::Index>(w.size()), scale));
  return w;
}

/// Straight-line forward pass written from the definition: row-major weights,
/// activation on hidden layers, mean cross-entropy over the first `active`
/// logits. Shares no code with the library kernels.
inline double naive_loss(const ModelSpec& spec, const ParamVector& w, const Batch& batch, std::size_t active) {
  const std::size_t layers = spec.hidden.size() + 1;
  double total = 0.0;
  for (Eigen::Index r = 0; r < batch.inputs.rows(); ++r) {
    std::vector<double> a(batch.inputs.cols());
    for (Eigen::Index j = 0; j < batch.inputs.cols(); ++j) a[static_cast<std::size_t>(j)] = batch.inputs(r, j);
    std::size_t offset = 0;
    for (std::size_t l = 0; l < layers; ++l) {
      const std::size_t in = a.size();
      const std::size_t out = l + 1 < layers ? spec.hidden[l] : spec.classes;
      std::vector<double> z(out);
      for (std::size_t o = 0; o < out; ++o) {
        double acc = 0.0;
        for (std::size_t i = 0; i < in; ++i) acc += w[offset + o * in + i] * a[i];
        z[o] = acc;
      }
      offset += out * in;
      for (std::size_t o = 0; o < out; ++o) z[o] += w[offset + o];
      offset += out;
      if (l + 1 < layers) {
        for (auto& v : z) v = spec.activation == Activation::relu ? std::max(0.0, v) : std::tanh(v);
      }
      a = std::move(z);
    }
    double mx = a[0];
    for (std::size_t k = 1; k < active; ++k) mx = std::max(mx, a[k]);
    double se = 0.0;
    for (std::size_t k = 0; k < active; ++k) se += std::exp(a[k] - mx);
    total += std::log(se) + mx - a[static_cast<std::size_t>(batch.labels[static_cast<std::size_t>(r)])];
  }
  return total / static_cast<double>(batch.inputs.rows());
}

inline double max_abs_diff(const Eigen::VectorXd& a, const Eigen::VectorXd& b) {
  return (a - b).cwiseAbs().maxCoeff();
}

}  // namespace flad::test
