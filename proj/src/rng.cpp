#include "flad/rng.hpp"

namespace flad {
namespace {

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

// FNV-1a; stream names are short literals.
std::uint64_t hash_name(std::string_view name) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (char c : name) {
    h ^= static_cast<unsigned char>(c);
    h *= 0x100000001b3ULL;
  }
  return h;
}

}  // namespace

std::uint64_t derive_seed(std::uint64_t seed, std::string_view stream, std::uint64_t index) {
  return splitmix64(splitmix64(seed ^ hash_name(stream)) + index);
}

Eigen::VectorXd gaussian_vector(Rng& rng, Eigen::Index n, double stddev) {
  std::normal_distribution<double> dist(0.0, stddev);
  Eigen::VectorXd v(n);
  for (Eigen::Index i = 0; i < n; ++i) v[i] = dist(rng);
  return v;
}

Eigen::VectorXd rademacher_vector(Rng& rng, Eigen::Index n) {
  Eigen::VectorXd v(n);
  std::uint64_t bits = 0;
  int left = 0;
  for (Eigen::Index i = 0; i < n; ++i) {
    if (left == 0) {
      bits = rng();
      left = 64;
    }
    v[i] = (bits & 1U) ? 1.0 : -1.0;
    bits >>= 1;
    --left;
  }
  return v;
}

}  // namespace flad
