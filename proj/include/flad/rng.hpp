#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <random>
#include <string_view>

namespace flad {

/// Counter-based seed splitting: every (seed, stream, index) triple maps to an
/// independent 64-bit seed, so layer init, shuffles and noise draws can be
/// reproduced in isolation.
std::uint64_t derive_seed(std::uint64_t seed, std::string_view stream, std::uint64_t index = 0);

using Rng = std::mt19937_64;

inline Rng make_rng(std::uint64_t seed, std::string_view stream, std::uint64_t index = 0) {
  return Rng(derive_seed(seed, stream, index));
}

Eigen::VectorXd gaussian_vector(Rng& rng, Eigen::Index n, double stddev = 1.0);
Eigen::VectorXd rademacher_vector(Rng& rng, Eigen::Index n);

}  // namespace flad
