#pragma once

#include "flad/config.hpp"
#include "flad/continual.hpp"

#include <json.hpp>

#include <cstdint>
#include <string>
#include <vector>

namespace flad {

/// Curvature summary of the model at the end of one phase.
struct SpectrumRecord {
  std::size_t phase = 0;
  std::vector<double> eigenvalues;
  std::vector<double> residuals;
  std::vector<bool> converged;
  double trace = 0.0;
  double trace_stderr = 0.0;
  int hutchinson_samples = 0;
  double tr_h_sigma = 0.0;

  bool operator==(const SpectrumRecord&) const = default;
};

struct TrhsPoint {
  std::size_t phase = 0;
  int epoch = 0;
  double value = 0.0;

  bool operator==(const TrhsPoint&) const = default;
};

struct PhaseStats {
  std::size_t steps = 0;
  std::size_t sharpness_steps = 0;
  double wall_seconds = 0.0;

  bool operator==(const PhaseStats&) const = default;
};

struct RunRecord {
  RunConfig config;
  std::uint64_t seed = 0;
  std::string version;
  MetricsLedger ledger;
  double acc = 0.0;
  double aaa = 0.0;
  std::vector<std::vector<EpochLog>> epochs;  // [phase][epoch]
  std::vector<PhaseStats> phases;
  std::vector<SpectrumRecord> spectra;
  std::vector<TrhsPoint> trhs;

  bool operator==(const RunRecord&) const = default;
};

nlohmann::json to_json(const RunRecord& record);
RunRecord record_from_json(const nlohmann::json& j);
RunRecord load_record(const std::string& path);

nlohmann::json config_to_json(const RunConfig& cfg);
RunConfig config_from_json(const nlohmann::json& j);

/// Holds `<dir>/run.lock` for its lifetime; a second holder fails with IoError.
class DirLock {
 public:
  explicit DirLock(const std::string& dir);
  ~DirLock();
  DirLock(const DirLock&) = delete;
  DirLock& operator=(const DirLock&) = delete;

 private:
  std::string path_;
};

/// Writes run.json, config.toml, metrics.csv, epochs.csv and, when present,
/// spectrum_phase{p}.csv and trhs.csv under `dir` (created if missing).
/// Returns the manifest path.
std::string persist_run(const RunRecord& record, const std::string& dir);

/// Metric table: accuracy rows `accuracy,phase,task,value`, then Acc and AAA.
std::string metrics_csv(const RunRecord& record);
std::string epochs_csv(const RunRecord& record);

}  // namespace flad
