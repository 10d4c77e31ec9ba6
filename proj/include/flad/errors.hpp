#pragma once

#include <stdexcept>
#include <string>

namespace flad {

/// Invalid user-facing configuration (bad ranges, unknown keys, zero widths).
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Vector/matrix shapes that do not agree.
class DimensionError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// A loss, gradient or curvature quantity became NaN/Inf.
class NumericalError : public std::runtime_error {
 public:
  NumericalError(std::string quantity, const std::string& context)
      : std::runtime_error("non-finite " + quantity + (context.empty() ? "" : " (" + context + ")")),
        quantity_(std::move(quantity)) {}

  const std::string& quantity() const noexcept { return quantity_; }

 private:
  std::string quantity_;
};

class IoError : public std::runtime_error {
 public:
  IoError(const std::string& what, std::string path)
      : std::runtime_error(what + ": " + path), path_(std::move(path)) {}

  const std::string& path() const noexcept { return path_; }

 private:
  std::string path_;
};

}  // namespace flad
