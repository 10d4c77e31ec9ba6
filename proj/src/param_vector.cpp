#include "flad/param_vector.hpp"

#include "flad/errors.hpp"

#include <cstring>
#include <string>

namespace flad {

ParamVector::ParamVector(Eigen::VectorXd values, std::vector<Span> layout)
    : values_(std::move(values)), layout_(std::move(layout)) {
  std::size_t offset = 0;
  for (const auto& s : layout_) {
    std::size_t count = 1;
    for (auto d : s.shape) count *= d;
    if (s.offset != offset || s.size != count) {
      throw DimensionError("span '" + s.name + "' does not tile the parameter vector");
    }
    offset += s.size;
  }
  if (offset != size()) {
    throw DimensionError("layout covers " + std::to_string(offset) + " entries, vector has " +
                         std::to_string(size()));
  }
}

ParamVector ParamVector::from_values(std::initializer_list<double> values) {
  Eigen::VectorXd v(static_cast<Eigen::Index>(values.size()));
  Eigen::Index i = 0;
  for (double x : values) v[i++] = x;
  return from_values(v);
}

ParamVector ParamVector::from_values(const Eigen::VectorXd& values) {
  const auto n = static_cast<std::size_t>(values.size());
  return ParamVector(values, {Span{"w", {n}, 0, n}});
}

ParamVector ParamVector::zeros_like(const ParamVector& other) {
  ParamVector out;
  out.values_ = Eigen::VectorXd::Zero(other.values_.size());
  out.layout_ = other.layout_;
  return out;
}

ParamVector ParamVector::with_layout(const ParamVector& like, Eigen::VectorXd values) {
  if (values.size() != like.values_.size()) {
    throw DimensionError("with_layout: expected " + std::to_string(like.size()) + " values, got " +
                         std::to_string(values.size()));
  }
  ParamVector out;
  out.values_ = std::move(values);
  out.layout_ = like.layout_;
  return out;
}

const Span& ParamVector::span(const std::string& name) const {
  for (const auto& s : layout_) {
    if (s.name == name) return s;
  }
  throw DimensionError("no span named '" + name + "'");
}

Eigen::Map<const Eigen::VectorXd> ParamVector::segment(const Span& s) const {
  return {values_.data() + s.offset, static_cast<Eigen::Index>(s.size)};
}

Eigen::Map<Eigen::VectorXd> ParamVector::segment(const Span& s) {
  return {values_.data() + s.offset, static_cast<Eigen::Index>(s.size)};
}

bool ParamVector::all_finite() const { return values_.allFinite(); }

ParamVector& ParamVector::operator+=(const ParamVector& rhs) {
  require_same_size(*this, rhs, "operator+=");
  values_ += rhs.values_;
  return *this;
}

ParamVector& ParamVector::operator-=(const ParamVector& rhs) {
  require_same_size(*this, rhs, "operator-=");
  values_ -= rhs.values_;
  return *this;
}

ParamVector& ParamVector::operator*=(double s) {
  values_ *= s;
  return *this;
}

bool ParamVector::operator==(const ParamVector& rhs) const {
  if (layout_ != rhs.layout_ || values_.size() != rhs.values_.size()) return false;
  for (Eigen::Index i = 0; i < values_.size(); ++i) {
    // compare bit patterns so that -0.0 != 0.0 and NaN == NaN with equal payload
    if (std::memcmp(&values_[i], &rhs.values_[i], sizeof(double)) != 0) return false;
  }
  return true;
}

ParamVector operator+(ParamVector lhs, const ParamVector& rhs) { return lhs += rhs; }
ParamVector operator-(ParamVector lhs, const ParamVector& rhs) { return lhs -= rhs; }
ParamVector operator*(double s, ParamVector v) { return v *= s; }

double dot(const ParamVector& a, const ParamVector& b) {
  require_same_size(a, b, "dot");
  return a.values().dot(b.values());
}

double norm(const ParamVector& v) { return v.values().norm(); }

void require_same_size(const ParamVector& a, const ParamVector& b, const char* what) {
  if (a.size() != b.size()) {
    throw DimensionError(std::string(what) + ": length " + std::to_string(a.size()) + " vs " +
                         std::to_string(b.size()));
  }
}

}  // namespace flad
