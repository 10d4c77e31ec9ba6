#include "flad/dataset.hpp"

#include "flad/errors.hpp"
#include "flad/format.hpp"
#include "flad/rng.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numbers>
#include <sstream>

namespace flad {

Dataset Dataset::subset(const std::vector<std::size_t>& rows) const {
  Dataset out;
  out.num_classes = num_classes;
  out.x.resize(static_cast<Eigen::Index>(rows.size()), x.cols());
  out.y.reserve(rows.size());
  for (std::size_t i = 0; i < rows.size(); ++i) {
    out.x.row(static_cast<Eigen::Index>(i)) = x.row(static_cast<Eigen::Index>(rows[i]));
    out.y.push_back(y[rows[i]]);
  }
  return out;
}

Batch Dataset::batch(const std::vector<std::size_t>& rows) const {
  Dataset s = subset(rows);
  return make_batch(std::move(s.x), std::move(s.y), num_classes);
}

Batch Dataset::all() const { return make_batch(x, y, num_classes); }

DatasetSplit stratified_split(const Dataset& data, double train_fraction, std::uint64_t seed) {
  if (!(train_fraction > 0.0 && train_fraction < 1.0)) throw ConfigError("train fraction must lie in (0, 1)");
  std::vector<std::size_t> train_rows, test_rows;
  for (std::size_t k = 0; k < data.num_classes; ++k) {
    std::vector<std::size_t> rows;
    for (std::size_t i = 0; i < data.size(); ++i) {
      if (static_cast<std::size_t>(data.y[i]) == k) rows.push_back(i);
    }
    auto rng = make_rng(seed, "split", k);
    std::shuffle(rows.begin(), rows.end(), rng);
    const auto n_train = static_cast<std::size_t>(std::llround(train_fraction * static_cast<double>(rows.size())));
    train_rows.insert(train_rows.end(), rows.begin(), rows.begin() + static_cast<std::ptrdiff_t>(n_train));
    test_rows.insert(test_rows.end(), rows.begin() + static_cast<std::ptrdiff_t>(n_train), rows.end());
  }
  std::sort(train_rows.begin(), train_rows.end());
  std::sort(test_rows.begin(), test_rows.end());
  return {data.subset(train_rows), data.subset(test_rows)};
}

DatasetSplit gaussian_blobs(const BlobParams& p, std::uint64_t seed) {
  if (p.classes < 2) throw ConfigError("dataset.classes: need at least 2 classes");
  if (p.dim == 0) throw ConfigError("dataset.dim: must be positive");
  if (p.samples_per_class < 2) throw ConfigError("dataset.samples_per_class: need at least 2");
  if (!(p.separation >= 0.0) || !std::isfinite(p.separation)) throw ConfigError("dataset.separation: must be >= 0");
  const auto dim = static_cast<Eigen::Index>(p.dim);
  Dataset all;
  all.num_classes = p.classes;
  all.x.resize(static_cast<Eigen::Index>(p.classes * p.samples_per_class), dim);
  all.y.reserve(p.classes * p.samples_per_class);
  Eigen::Index row = 0;
  for (std::size_t k = 0; k < p.classes; ++k) {
    auto center_rng = make_rng(seed, "blob-center", k);
    Eigen::VectorXd dir = gaussian_vector(center_rng, dim);
    const Eigen::VectorXd center = p.separation * dir / dir.norm();
    auto rng = make_rng(seed, "blob-sample", k);
    for (std::size_t i = 0; i < p.samples_per_class; ++i) {
      all.x.row(row++) = (center + gaussian_vector(rng, dim)).transpose();
      all.y.push_back(static_cast<int>(k));
    }
  }
  return stratified_split(all, 0.8, seed);
}

DatasetSplit spirals(const SpiralParams& p, std::uint64_t seed) {
  if (p.classes < 2) throw ConfigError("dataset.classes: need at least 2 classes");
  if (p.samples_per_class < 2) throw ConfigError("dataset.samples_per_class: need at least 2");
  if (!(p.noise >= 0.0)) throw ConfigError("dataset.noise: must be >= 0");
  Dataset all;
  all.num_classes = p.classes;
  all.x.resize(static_cast<Eigen::Index>(p.classes * p.samples_per_class), 2);
  Eigen::Index row = 0;
  for (std::size_t k = 0; k < p.classes; ++k) {
    auto rng = make_rng(seed, "spiral", k);
    std::normal_distribution<double> jitter(0.0, p.noise);
    for (std::size_t i = 0; i < p.samples_per_class; ++i) {
      const double t = static_cast<double>(i) / static_cast<double>(p.samples_per_class - 1);
      const double theta = 2.0 * std::numbers::pi * static_cast<double>(k) / static_cast<double>(p.classes) +
                           4.0 * t + jitter(rng);
      all.x(row, 0) = t * std::sin(theta);
      all.x(row, 1) = t * std::cos(theta);
      ++row;
      all.y.push_back(static_cast<int>(k));
    }
  }
  return stratified_split(all, 0.8, seed);
}

Dataset load_csv(const std::string& path, std::size_t num_classes) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open dataset", path);
  std::vector<std::vector<double>> rows;
  std::vector<int> labels;
  std::string line;
  std::size_t line_no = 0;
  std::size_t width = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    std::vector<std::string> cells;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) cells.push_back(cell);
    const auto where = path + ":" + std::to_string(line_no);
    if (cells.size() < 2) throw ConfigError(where + ": need at least one feature and a label");
    if (width == 0) width = cells.size();
    if (cells.size() != width) throw ConfigError(where + ": expected " + std::to_string(width) + " columns");
    std::vector<double> feats;
    for (std::size_t j = 0; j + 1 < cells.size(); ++j) {
      char* end = nullptr;
      const double v = std::strtod(cells[j].c_str(), &end);
      if (end == cells[j].c_str() || !std::isfinite(v)) throw ConfigError(where + ": bad number '" + cells[j] + "'");
      feats.push_back(v);
    }
    char* end = nullptr;
    const long label = std::strtol(cells.back().c_str(), &end, 10);
    if (end == cells.back().c_str() || *end != '\0' || label < 0) {
      throw ConfigError(where + ": label must be a non-negative integer");
    }
    rows.push_back(std::move(feats));
    labels.push_back(static_cast<int>(label));
  }
  if (rows.empty()) throw ConfigError(path + ": no rows");
  Dataset d;
  const int max_label = *std::max_element(labels.begin(), labels.end());
  d.num_classes = num_classes == 0 ? static_cast<std::size_t>(max_label) + 1 : num_classes;
  if (static_cast<std::size_t>(max_label) >= d.num_classes) {
    throw ConfigError(path + ": label " + std::to_string(max_label) + " outside [0, " +
                      std::to_string(d.num_classes) + ")");
  }
  d.x.resize(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(width - 1));
  for (std::size_t i = 0; i < rows.size(); ++i) {
    for (std::size_t j = 0; j < width - 1; ++j) d.x(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = rows[i][j];
  }
  d.y = std::move(labels);
  return d;
}

void save_csv(const Dataset& data, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write dataset", path);
  for (std::size_t i = 0; i < data.size(); ++i) {
    for (Eigen::Index j = 0; j < data.x.cols(); ++j) out << format_double(data.x(static_cast<Eigen::Index>(i), j)) << ',';
    out << data.y[i] << '\n';
  }
  if (!out) throw IoError("write failed", path);
}

}  // namespace flad
