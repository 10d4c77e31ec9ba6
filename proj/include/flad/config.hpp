#pragma once

#include "flad/continual.hpp"
#include "flad/dataset.hpp"
#include "flad/model.hpp"
#include "flad/optimizer.hpp"
#include "flad/toml_reader.hpp"

#include <cstdint>
#include <string>
#include <vector>

namespace flad {

enum class Generator { blobs, spirals, csv };
std::string to_string(Generator g);
Generator parse_generator(const std::string& name);

struct DatasetConfig {
  Generator generator = Generator::blobs;
  BlobParams blobs;
  SpiralParams spirals;
  std::string train_path;
  std::string test_path;
  /// 0 infers the class count from the CSV labels.
  std::size_t num_classes = 0;
  /// Seed for the generators, independent of the training seeds so that every
  /// seed of a run sees the same data.
  std::uint64_t seed = 0;

  bool operator==(const DatasetConfig&) const = default;
};

struct StreamConfig {
  std::size_t phases = 5;
  std::size_t classes_per_phase = 2;
  ClassOrder class_order = ClassOrder::ascending;
  std::size_t replay_capacity = 200;
  double anchor_strength = 0.0;

  bool operator==(const StreamConfig&) const = default;
};

struct ModelConfig {
  std::vector<std::size_t> hidden{64};
  Activation activation = Activation::relu;

  bool operator==(const ModelConfig&) const = default;
};

struct DiagnosticsConfig {
  /// Spectrum + trace + Tr(H Sigma) at the end of every phase.
  bool spectrum = false;
  /// Also record Tr(H Sigma) after every `trhs_every` epochs (0 = off).
  int trhs_every = 0;
  std::size_t k = 5;
  int iters = 100;
  double tol = 1e-6;
  int hutchinson_samples = 64;
  std::size_t trhs_batches = 32;
  /// Examples scored for the spectrum; 0 uses the whole phase training set.
  std::size_t spectrum_examples = 0;
  /// Landscape slice: "eigen" (top-2 Hessian eigenvectors) or "random".
  std::string slice_directions = "eigen";
  std::size_t slice_points = 41;
  double slice_radius = 1.0;
  double slice_scale = 1.0;
  bool slice_2d = true;

  bool operator==(const DiagnosticsConfig&) const = default;
};

struct RunSettings {
  std::size_t epochs = 50;
  std::size_t batch_size = 128;
  std::vector<std::uint64_t> seeds{0};
  std::string output_dir = "runs/default";

  bool operator==(const RunSettings&) const = default;
};

struct RunConfig {
  DatasetConfig dataset;
  StreamConfig stream;
  ModelConfig model;
  OptimizerConfig optimizer;
  Schedule schedule;
  RunSettings run;
  DiagnosticsConfig diagnostics;

  /// Range checks across every section; errors name the dotted field path.
  void validate() const;
  TrainConfig train_config() const;

  bool operator==(const RunConfig&) const = default;
};

/// Builds a config from parsed TOML. Omitted fields take their defaults;
/// unknown sections or keys are rejected with their location.
RunConfig config_from_toml(const TomlDocument& doc, const std::string& origin = "<config>");
RunConfig parse_config(std::string_view text, const std::string& origin = "<config>");
RunConfig load_config(const std::string& path);

TomlDocument config_to_toml(const RunConfig& cfg);
std::string config_to_string(const RunConfig& cfg);
void save_config(const RunConfig& cfg, const std::string& path);

/// Applies `section.key=value` overrides (value in TOML syntax; bare words are
/// taken as strings) and revalidates.
RunConfig apply_overrides(const RunConfig& cfg, const std::vector<std::string>& overrides);

}  // namespace flad
