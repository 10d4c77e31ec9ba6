#pragma once

#include "flad/model.hpp"

#include <Eigen/Dense>

#include <cstdint>
#include <string>
#include <vector>

namespace flad {

/// Labeled examples, one per row; labels in [0, num_classes).
struct Dataset {
  Eigen::MatrixXd x;
  std::vector<int> y;
  std::size_t num_classes = 0;

  std::size_t size() const { return y.size(); }
  std::size_t dim() const { return static_cast<std::size_t>(x.cols()); }
  Dataset subset(const std::vector<std::size_t>& rows) const;
  Batch batch(const std::vector<std::size_t>& rows) const;
  Batch all() const;

  bool operator==(const Dataset& o) const { return num_classes == o.num_classes && y == o.y && x == o.x; }
};

struct DatasetSplit {
  Dataset train;
  Dataset test;
};

struct BlobParams {
  std::size_t classes = 10;
  std::size_t dim = 16;
  /// Distance of each class centre from the origin along a random unit direction.
  double separation = 3.0;
  std::size_t samples_per_class = 250;

  bool operator==(const BlobParams&) const = default;
};

struct SpiralParams {
  std::size_t classes = 3;
  double noise = 0.2;
  std::size_t samples_per_class = 200;

  bool operator==(const SpiralParams&) const = default;
};

/// Isotropic unit-variance Gaussian clusters; stratified 80/20 split.
DatasetSplit gaussian_blobs(const BlobParams& params, std::uint64_t seed);
/// Interleaved 2-D spiral arms with angular noise; stratified 80/20 split.
DatasetSplit spirals(const SpiralParams& params, std::uint64_t seed);

/// Per-class shuffle, first `train_fraction` of each class to train.
DatasetSplit stratified_split(const Dataset& data, double train_fraction, std::uint64_t seed);

/// Header-free CSV rows `f_0,...,f_{d-1},label`. When num_classes is 0 it is
/// inferred as max label + 1. Throws IoError / ConfigError with line numbers.
Dataset load_csv(const std::string& path, std::size_t num_classes = 0);
void save_csv(const Dataset& data, const std::string& path);

}  // namespace flad
