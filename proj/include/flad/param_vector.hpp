#pragma once

#include <Eigen/Dense>

#include <cstddef>
#include <initializer_list>
#include <string>
#include <vector>

namespace flad {

/// Named contiguous block of a flat parameter vector.
struct Span {
  std::string name;
  std::vector<std::size_t> shape;
  std::size_t offset = 0;
  std::size_t size = 0;

  bool operator==(const Span&) const = default;
};

/// Flat parameter vector with layer-shape metadata.
///
/// All optimizer math operates on this type. The layout partitions the value
/// vector exactly: spans are contiguous, in order, and their sizes sum to the
/// vector length.
class ParamVector {
 public:
  ParamVector() = default;

  /// Builds a vector over an explicit layout. Throws DimensionError when the
  /// layout does not partition `values`.
  ParamVector(Eigen::VectorXd values, std::vector<Span> layout);

  /// Single-span vector named "w"; handy for quadratic problems.
  static ParamVector from_values(std::initializer_list<double> values);
  static ParamVector from_values(const Eigen::VectorXd& values);
  static ParamVector zeros_like(const ParamVector& other);
  /// Same layout as `like`, new values.
  static ParamVector with_layout(const ParamVector& like, Eigen::VectorXd values);

  std::size_t size() const noexcept { return static_cast<std::size_t>(values_.size()); }
  const Eigen::VectorXd& values() const noexcept { return values_; }
  Eigen::VectorXd& values() noexcept { return values_; }
  const std::vector<Span>& layout() const noexcept { return layout_; }

  double operator[](std::size_t i) const { return values_[static_cast<Eigen::Index>(i)]; }
  double& operator[](std::size_t i) { return values_[static_cast<Eigen::Index>(i)]; }

  const Span& span(const std::string& name) const;
  Eigen::Map<const Eigen::VectorXd> segment(const Span& s) const;
  Eigen::Map<Eigen::VectorXd> segment(const Span& s);

  bool all_finite() const;
  bool same_layout(const ParamVector& other) const { return layout_ == other.layout_; }

  ParamVector& operator+=(const ParamVector& rhs);
  ParamVector& operator-=(const ParamVector& rhs);
  ParamVector& operator*=(double s);

  /// Bitwise equality of values and layout.
  bool operator==(const ParamVector& rhs) const;

 private:
  Eigen::VectorXd values_;
  std::vector<Span> layout_;
};

ParamVector operator+(ParamVector lhs, const ParamVector& rhs);
ParamVector operator-(ParamVector lhs, const ParamVector& rhs);
ParamVector operator*(double s, ParamVector v);

double dot(const ParamVector& a, const ParamVector& b);
double norm(const ParamVector& v);

/// Throws DimensionError naming `what` when lengths differ.
void require_same_size(const ParamVector& a, const ParamVector& b, const char* what);

}  // namespace flad
