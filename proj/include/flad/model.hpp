#pragma once

#include "flad/param_vector.hpp"

#include <Eigen/Dense>

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

namespace flad {

enum class Activation { relu, tanh };

std::string to_string(Activation a);
Activation parse_activation(const std::string& name);

/// Fully connected classifier: input -> hidden... -> classes logits.
struct ModelSpec {
  std::size_t input_dim = 0;
  std::vector<std::size_t> hidden;
  std::size_t classes = 2;
  Activation activation = Activation::relu;
  std::uint64_t seed = 0;

  std::size_t num_layers() const { return hidden.size() + 1; }
  std::size_t fan_in(std::size_t layer) const;
  std::size_t fan_out(std::size_t layer) const;
  std::size_t param_count() const;
  /// Spans "W0","b0","W1","b1",...; W is stored row-major (out x in).
  std::vector<Span> layout() const;
  /// Throws ConfigError on zero widths or fewer than two classes.
  void validate() const;

  bool operator==(const ModelSpec&) const = default;
};

/// Deterministic given spec.seed. Weights ~ N(0, s^2) with s = sqrt(2/fan_in)
/// for relu (He) and s = sqrt(2/(fan_in+fan_out)) for tanh (Xavier); biases 0.
ParamVector init_params(const ModelSpec& spec);

/// Standard deviation init_params uses for layer `layer`.
double init_stddev(const ModelSpec& spec, std::size_t layer);

/// Zeroes output rows [first, last) of the classifier head (weights and bias).
void zero_head_rows(const ModelSpec& spec, ParamVector& w, std::size_t first, std::size_t last);

/// Minibatch: one example per row of `inputs`.
///
/// For quadratic losses the rows, when their width equals the parameter
/// count, act as linear-term noise samples and labels are ignored.
struct Batch {
  Eigen::MatrixXd inputs;
  std::vector<int> labels;

  std::size_t size() const { return labels.size(); }
};

/// Validates b >= 1, matching row/label counts and labels < classes.
Batch make_batch(Eigen::MatrixXd inputs, std::vector<int> labels, std::size_t classes);

/// A single-row placeholder batch for noise-free quadratic problems.
Batch noiseless_batch();

}  // namespace flad
