#include "flad/dataset.hpp"
#include "flad/errors.hpp"

#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <map>

using namespace flad;

namespace {

std::string temp_path(const std::string& name) {
  const auto dir = std::filesystem::temp_directory_path() / "flad_tests";
  std::filesystem::create_directories(dir);
  return (dir / name).string();
}

std::map<int, std::size_t> label_counts(const Dataset& d) {
  std::map<int, std::size_t> c;
  for (int y : d.y) ++c[y];
  return c;
}

}  // namespace

TEST_CASE("blobs are deterministic and stratified") {
  BlobParams p;
  p.classes = 4;
  p.samples_per_class = 50;
  const auto a = gaussian_blobs(p, 3);
  const auto b = gaussian_blobs(p, 3);
  CHECK(a.train == b.train);
  CHECK(a.test == b.test);
  CHECK_FALSE(a.train == gaussian_blobs(p, 4).train);
  CHECK(a.train.size() == 160);
  CHECK(a.test.size() == 40);
  for (const auto& [label, n] : label_counts(a.train)) CHECK(n == 40);
  for (const auto& [label, n] : label_counts(a.test)) CHECK(n == 10);
  CHECK(a.train.num_classes == 4);
  CHECK(a.train.dim() == 16);
}

TEST_CASE("blobs in the separable limit are solved by a nearest-centroid probe") {
  BlobParams p;
  p.classes = 10;
  p.separation = 1e4;
  p.samples_per_class = 30;
  const auto d = gaussian_blobs(p, 1);
  std::vector<Eigen::VectorXd> centroid(10, Eigen::VectorXd::Zero(16));
  std::vector<double> count(10, 0.0);
  for (std::size_t i = 0; i < d.train.size(); ++i) {
    centroid[static_cast<std::size_t>(d.train.y[i])] += d.train.x.row(static_cast<Eigen::Index>(i)).transpose();
    count[static_cast<std::size_t>(d.train.y[i])] += 1;
  }
  for (std::size_t k = 0; k < 10; ++k) centroid[k] /= count[k];
  std::size_t correct = 0;
  for (std::size_t i = 0; i < d.test.size(); ++i) {
    const Eigen::VectorXd x = d.test.x.row(static_cast<Eigen::Index>(i)).transpose();
    int best = 0;
    for (int k = 1; k < 10; ++k) {
      if ((x - centroid[static_cast<std::size_t>(k)]).norm() < (x - centroid[static_cast<std::size_t>(best)]).norm()) {
        best = k;
      }
    }
    correct += best == d.test.y[i];
  }
  CHECK(correct == d.test.size());
}

TEST_CASE("spirals") {
  SpiralParams p;
  const auto a = spirals(p, 5);
  CHECK(a.train == spirals(p, 5).train);
  CHECK(a.train.dim() == 2);
  CHECK(a.train.size() + a.test.size() == 600);
  CHECK(a.train.x.allFinite());
}

TEST_CASE("generator parameters are validated") {
  BlobParams p;
  p.classes = 1;
  CHECK_THROWS_AS(gaussian_blobs(p, 0), ConfigError);
  SpiralParams s;
  s.noise = -1;
  CHECK_THROWS_AS(spirals(s, 0), ConfigError);
}

TEST_CASE("CSV round trip is exact") {
  BlobParams p;
  p.classes = 3;
  p.samples_per_class = 10;
  const auto d = gaussian_blobs(p, 2).train;
  const auto path = temp_path("roundtrip.csv");
  save_csv(d, path);
  CHECK(load_csv(path) == d);
  CHECK(load_csv(path, 5).num_classes == 5);
}

TEST_CASE("CSV errors carry the line") {
  const auto path = temp_path("bad.csv");
  {
    std::ofstream f(path);
    f << "1.0,2.0,0\n1.0,abc,1\n";
  }
  try {
    load_csv(path);
    FAIL("expected ConfigError");
  } catch (const ConfigError& e) {
    CHECK(std::string(e.what()).find("2") != std::string::npos);
  }
  {
    std::ofstream f(path);
    f << "1.0,2.0,0\n1.0,1\n";
  }
  CHECK_THROWS_AS(load_csv(path), ConfigError);
  {
    std::ofstream f(path);
    f << "1.0,2.0,3\n";
  }
  CHECK_THROWS_AS(load_csv(path, 2), ConfigError);
  CHECK_THROWS_AS(load_csv(temp_path("does_not_exist.csv")), IoError);
}

TEST_CASE("stratified split keeps every class in both halves") {
  BlobParams p;
  p.classes = 5;
  p.samples_per_class = 20;
  const auto d = gaussian_blobs(p, 9);
  Dataset joined = d.train;
  const auto s = stratified_split(joined, 0.5, 4);
  for (const auto& [label, n] : label_counts(s.train)) CHECK(n == 8);
  CHECK(label_counts(s.test).size() == 5);
  CHECK(s.train == stratified_split(joined, 0.5, 4).train);
}
