#pragma once

#include "flad/dataset.hpp"
#include "flad/model.hpp"
#include "flad/optimizer.hpp"

#include <cstdint>
#include <functional>
#include <map>
#include <stdexcept>
#include <string>
#include <vector>

namespace flad {

enum class ClassOrder { ascending, shuffled };

std::string to_string(ClassOrder o);
ClassOrder parse_class_order(const std::string& name);

/// Class-incremental phases. Original dataset labels are remapped to
/// incremental indices so that phase p owns indices [p*cpp, (p+1)*cpp) and the
/// classifier head only ever grows by appending rows.
struct TaskStream {
  std::vector<std::vector<int>> phases;  // original labels per phase
  std::vector<int> class_order;          // incremental index -> original label
  std::vector<int> label_to_index;       // original label -> incremental index, -1 if unused
  std::size_t classes_per_phase = 0;
  std::string dataset_id;

  std::size_t num_phases() const { return phases.size(); }
  std::size_t num_classes() const { return class_order.size(); }
  std::size_t classes_through(std::size_t phase) const { return (phase + 1) * classes_per_phase; }
  std::size_t phase_of(int index) const { return static_cast<std::size_t>(index) / classes_per_phase; }

  /// Relabels to incremental indices and drops classes outside the stream.
  Dataset remap(const Dataset& data) const;
  /// Rows of a remapped dataset that belong to `phase`.
  std::vector<std::size_t> rows_of_phase(const Dataset& remapped, std::size_t phase) const;
};

/// Throws ConfigError when N * cpp exceeds the class count.
TaskStream build_stream(std::size_t total_classes, std::size_t num_phases, std::size_t classes_per_phase,
                        ClassOrder order = ClassOrder::ascending, std::uint64_t seed = 0,
                        std::string dataset_id = {});

struct Exemplar {
  Eigen::VectorXd x;
  int label = 0;
  std::size_t phase = 0;

  bool operator==(const Exemplar&) const = default;
};

/// Class-balanced reservoir buffer: after each update every stored class holds
/// capacity / classes (+1 for the lowest-indexed remainder classes) exemplars.
class ReplayBuffer {
 public:
  ReplayBuffer(std::size_t capacity, std::uint64_t seed);

  /// Adds the classes present in `phase_data` (remapped labels) and rebalances.
  void update(const Dataset& phase_data, std::size_t phase);

  std::size_t capacity() const { return capacity_; }
  std::size_t size() const;
  std::map<int, std::size_t> per_class_counts() const;
  /// Exemplars in class order, reservoir order within a class.
  std::vector<Exemplar> entries() const;
  Dataset as_dataset(std::size_t num_classes, std::size_t dim) const;

  bool operator==(const ReplayBuffer&) const = default;

 private:
  std::size_t capacity_;
  std::uint64_t seed_;
  std::map<int, std::vector<Exemplar>> by_class_;
};

class LedgerError : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

/// Lower-triangular accuracy matrix: row p holds accuracy on tasks 0..p after
/// training phase p.
class MetricsLedger {
 public:
  explicit MetricsLedger(std::size_t phases = 0) : phases_(phases) {}

  /// Rows must arrive in phase order, have p + 1 entries in [0, 1].
  void record(std::size_t phase, std::vector<double> row);

  std::size_t phases() const { return phases_; }
  const std::vector<std::vector<double>>& rows() const { return rows_; }
  bool complete() const { return rows_.size() == phases_; }

  bool operator==(const MetricsLedger&) const = default;

 private:
  std::size_t phases_;
  std::vector<std::vector<double>> rows_;
};

/// Mean of the final row.
double acc_final(const MetricsLedger& ledger);
/// Mean over phases of the row means.
double aaa(const MetricsLedger& ledger);

struct TrainConfig {
  OptimizerConfig optimizer;
  Schedule schedule;
  std::size_t epochs = 50;
  std::size_t batch_size = 128;
  /// Strength of the 0.5*a*|w - w_prev|^2 anchor to the previous phase's
  /// parameters; 0 disables it.
  double anchor_strength = 0.0;
};

struct EpochLog {
  double train_loss = 0.0;
  double train_accuracy = 0.0;
  double lr = 0.0;
  double rho = 0.0;
  bool sharpness_active = false;

  bool operator==(const EpochLog&) const = default;
};

struct PhaseResult {
  ParamVector w;
  OptimizerState state;
  std::vector<EpochLog> epochs;
  std::size_t steps = 0;
  std::size_t sharpness_steps = 0;
  double wall_seconds = 0.0;
};

/// Called after every epoch with the current parameters and the training
/// data of the phase (current classes plus replay).
using EpochHook = std::function<void(std::size_t phase, int epoch, const ParamVector& w, const Dataset& data,
                                     const LossOracle& oracle)>;

/// Trains one phase on its classes plus the replay exemplars, then adds the
/// phase's classes to the buffer. `train` must be remapped by the stream.
PhaseResult run_phase(const TaskStream& stream, std::size_t phase, const ModelSpec& spec, const Dataset& train,
                      ParamVector w, OptimizerState state, const TrainConfig& cfg, ReplayBuffer& replay,
                      std::uint64_t seed, const EpochHook& hook = {});

/// Accuracy on each task 0..up_to_phase, predicting over every class seen so
/// far. Throws LedgerError when a task has no test rows.
std::vector<double> evaluate(const ModelSpec& spec, const ParamVector& w, const TaskStream& stream,
                             const Dataset& test, std::size_t up_to_phase);

double accuracy(const ModelSpec& spec, const ParamVector& w, const Dataset& data, std::size_t active_classes);

}  // namespace flad
