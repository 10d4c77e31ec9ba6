#include "flad/continual.hpp"

#include "flad/errors.hpp"
#include "flad/kernels.hpp"
#include "flad/rng.hpp"

#include <algorithm>
#include <chrono>
#include <numeric>
#include <set>

namespace flad {

std::string to_string(ClassOrder o) { return o == ClassOrder::ascending ? "ascending" : "shuffled"; }

ClassOrder parse_class_order(const std::string& name) {
  if (name == "ascending") return ClassOrder::ascending;
  if (name == "shuffled") return ClassOrder::shuffled;
  throw ConfigError("stream.class_order: expected 'ascending' or 'shuffled', got '" + name + "'");
}

Dataset TaskStream::remap(const Dataset& data) const {
  std::vector<std::size_t> keep;
  for (std::size_t i = 0; i < data.size(); ++i) {
    const int y = data.y[i];
    if (y >= 0 && static_cast<std::size_t>(y) < label_to_index.size() && label_to_index[static_cast<std::size_t>(y)] >= 0) {
      keep.push_back(i);
    }
  }
  Dataset out = data.subset(keep);
  for (int& y : out.y) y = label_to_index[static_cast<std::size_t>(y)];
  out.num_classes = num_classes();
  return out;
}

std::vector<std::size_t> TaskStream::rows_of_phase(const Dataset& remapped, std::size_t phase) const {
  std::vector<std::size_t> rows;
  for (std::size_t i = 0; i < remapped.size(); ++i) {
    if (phase_of(remapped.y[i]) == phase) rows.push_back(i);
  }
  return rows;
}

TaskStream build_stream(std::size_t total_classes, std::size_t num_phases, std::size_t classes_per_phase,
                        ClassOrder order, std::uint64_t seed, std::string dataset_id) {
  if (num_phases == 0) throw ConfigError("stream.phases: must be positive");
  if (classes_per_phase == 0) throw ConfigError("stream.classes_per_phase: must be positive");
  if (num_phases * classes_per_phase > total_classes) {
    throw ConfigError("stream: " + std::to_string(num_phases) + " phases x " + std::to_string(classes_per_phase) +
                      " classes need more than the " + std::to_string(total_classes) + " available");
  }
  std::vector<int> labels(total_classes);
  std::iota(labels.begin(), labels.end(), 0);
  if (order == ClassOrder::shuffled) {
    auto rng = make_rng(seed, "class-order");
    std::shuffle(labels.begin(), labels.end(), rng);
  }
  TaskStream s;
  s.classes_per_phase = classes_per_phase;
  s.dataset_id = std::move(dataset_id);
  s.label_to_index.assign(total_classes, -1);
  for (std::size_t p = 0; p < num_phases; ++p) {
    std::vector<int> phase;
    for (std::size_t j = 0; j < classes_per_phase; ++j) {
      const int label = labels[p * classes_per_phase + j];
      s.label_to_index[static_cast<std::size_t>(label)] = static_cast<int>(s.class_order.size());
      s.class_order.push_back(label);
      phase.push_back(label);
    }
    s.phases.push_back(std::move(phase));
  }
  return s;
}

ReplayBuffer::ReplayBuffer(std::size_t capacity, std::uint64_t seed) : capacity_(capacity), seed_(seed) {}

void ReplayBuffer::update(const Dataset& phase_data, std::size_t phase) {
  std::set<int> fresh;
  for (int y : phase_data.y) {
    if (!by_class_.count(y)) fresh.insert(y);
  }
  std::vector<int> classes;
  for (const auto& [k, _] : by_class_) classes.push_back(k);
  classes.insert(classes.end(), fresh.begin(), fresh.end());
  std::sort(classes.begin(), classes.end());
  if (classes.empty()) return;

  const std::size_t base = capacity_ / classes.size();
  const std::size_t extra = capacity_ % classes.size();
  for (std::size_t rank = 0; rank < classes.size(); ++rank) {
    const int k = classes[rank];
    const std::size_t quota = base + (rank < extra ? 1 : 0);
    if (!fresh.count(k)) {
      auto& kept = by_class_[k];
      if (kept.size() > quota) kept.resize(quota);
      continue;
    }
    // Algorithm R over this class's rows in dataset order.
    auto rng = make_rng(seed_, "reservoir", static_cast<std::uint64_t>(k));
    std::vector<std::size_t> reservoir;
    std::size_t seen = 0;
    for (std::size_t i = 0; i < phase_data.size(); ++i) {
      if (phase_data.y[i] != k) continue;
      if (reservoir.size() < quota) {
        reservoir.push_back(i);
      } else if (quota > 0) {
        std::uniform_int_distribution<std::size_t> pick(0, seen);
        const std::size_t j = pick(rng);
        if (j < quota) reservoir[j] = i;
      }
      ++seen;
    }
    auto& store = by_class_[k];
    for (std::size_t i : reservoir) {
      store.push_back(Exemplar{phase_data.x.row(static_cast<Eigen::Index>(i)).transpose(), k, phase});
    }
  }
}

std::size_t ReplayBuffer::size() const {
  std::size_t n = 0;
  for (const auto& [_, v] : by_class_) n += v.size();
  return n;
}

std::map<int, std::size_t> ReplayBuffer::per_class_counts() const {
  std::map<int, std::size_t> out;
  for (const auto& [k, v] : by_class_) out[k] = v.size();
  return out;
}

std::vector<Exemplar> ReplayBuffer::entries() const {
  std::vector<Exemplar> out;
  for (const auto& [_, v] : by_class_) out.insert(out.end(), v.begin(), v.end());
  return out;
}

Dataset ReplayBuffer::as_dataset(std::size_t num_classes, std::size_t dim) const {
  Dataset d;
  d.num_classes = num_classes;
  const auto all = entries();
  d.x.resize(static_cast<Eigen::Index>(all.size()), static_cast<Eigen::Index>(dim));
  for (std::size_t i = 0; i < all.size(); ++i) {
    d.x.row(static_cast<Eigen::Index>(i)) = all[i].x.transpose();
    d.y.push_back(all[i].label);
  }
  return d;
}

void MetricsLedger::record(std::size_t phase, std::vector<double> row) {
  if (phase != rows_.size()) throw LedgerError("ledger rows must be recorded in phase order");
  if (phase >= phases_) throw LedgerError("ledger already holds every phase");
  if (row.size() != phase + 1) throw LedgerError("ledger row for phase " + std::to_string(phase) + " needs " +
                                                 std::to_string(phase + 1) + " entries");
  for (double a : row) {
    if (!(a >= 0.0 && a <= 1.0)) throw LedgerError("accuracy outside [0, 1]");
  }
  rows_.push_back(std::move(row));
}

namespace {

double mean(const std::vector<double>& v) { return std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size()); }

void require_complete(const MetricsLedger& ledger) {
  if (ledger.phases() == 0 || !ledger.complete()) {
    throw LedgerError("ledger incomplete: " + std::to_string(ledger.rows().size()) + " of " +
                      std::to_string(ledger.phases()) + " phases recorded");
  }
}

}  // namespace

double acc_final(const MetricsLedger& ledger) {
  require_complete(ledger);
  return mean(ledger.rows().back());
}

double aaa(const MetricsLedger& ledger) {
  require_complete(ledger);
  double total = 0.0;
  for (const auto& row : ledger.rows()) total += mean(row);
  return total / static_cast<double>(ledger.rows().size());
}

double accuracy(const ModelSpec& spec, const ParamVector& w, const Dataset& data, std::size_t active_classes) {
  if (data.size() == 0) return 0.0;
  const auto pred = kernels::predict(spec, w.values(), data.x, active_classes);
  std::size_t hits = 0;
  for (std::size_t i = 0; i < pred.size(); ++i) hits += pred[i] == data.y[i] ? 1 : 0;
  return static_cast<double>(hits) / static_cast<double>(pred.size());
}

std::vector<double> evaluate(const ModelSpec& spec, const ParamVector& w, const TaskStream& stream,
                             const Dataset& test, std::size_t up_to_phase) {
  if (up_to_phase >= stream.num_phases()) throw LedgerError("evaluate: phase out of range");
  std::vector<double> row;
  for (std::size_t t = 0; t <= up_to_phase; ++t) {
    const auto rows = stream.rows_of_phase(test, t);
    if (rows.empty()) throw LedgerError("missing test split for task " + std::to_string(t));
    row.push_back(accuracy(spec, w, test.subset(rows), stream.classes_through(up_to_phase)));
  }
  return row;
}

PhaseResult run_phase(const TaskStream& stream, std::size_t phase, const ModelSpec& spec, const Dataset& train,
                      ParamVector w, OptimizerState state, const TrainConfig& cfg, ReplayBuffer& replay,
                      std::uint64_t seed, const EpochHook& hook) {
  if (phase >= stream.num_phases()) throw ConfigError("run_phase: phase out of range");
  if (cfg.epochs == 0) throw ConfigError("run.epochs: must be positive");
  if (cfg.batch_size == 0) throw ConfigError("run.batch_size: must be positive");
  const auto start = std::chrono::steady_clock::now();

  const std::size_t seen = stream.classes_through(phase);
  zero_head_rows(spec, w, phase * stream.classes_per_phase, seen);

  LossOracle oracle = LossOracle::mlp(spec, seen);
  if (cfg.anchor_strength > 0.0 && phase > 0) oracle = oracle.with_anchor(w, cfg.anchor_strength);

  state.start_task();
  const Dataset current = train.subset(stream.rows_of_phase(train, phase));
  Dataset data = current;
  if (replay.size() > 0) {
    const Dataset old = replay.as_dataset(train.num_classes, train.dim());
    data.x.conservativeResize(current.x.rows() + old.x.rows(), Eigen::NoChange);
    data.x.bottomRows(old.x.rows()) = old.x;
    data.y.insert(data.y.end(), old.y.begin(), old.y.end());
  }

  PhaseResult out;
  double hook_seconds = 0.0;
  std::vector<std::size_t> order(data.size());
  const int total = static_cast<int>(cfg.epochs);
  for (int epoch = 1; epoch <= total; ++epoch) {
    const ScheduleValues sv = schedule_at(cfg.schedule, epoch, total, cfg.optimizer.hp.lr, cfg.optimizer.hp.rho);
    OptimizerConfig step_cfg = cfg.optimizer;
    step_cfg.hp.lr = sv.lr;
    step_cfg.hp.rho = sv.rho;
    if (!sv.sharpness_active) step_cfg.kind = OptimizerKind::sgd;
    state.epoch_in_task = epoch;

    std::iota(order.begin(), order.end(), 0);
    auto rng = make_rng(seed, "shuffle", phase * 100003 + static_cast<std::uint64_t>(epoch));
    std::shuffle(order.begin(), order.end(), rng);

    double loss_sum = 0.0;
    for (std::size_t begin = 0; begin < order.size(); begin += cfg.batch_size) {
      const std::size_t end = std::min(order.size(), begin + cfg.batch_size);
      const std::vector<std::size_t> rows(order.begin() + static_cast<std::ptrdiff_t>(begin),
                                          order.begin() + static_cast<std::ptrdiff_t>(end));
      const Batch batch = data.batch(rows);
      StepResult r;
      try {
        r = optimizer_step(step_cfg, oracle, w, batch, std::move(state));
      } catch (const NumericalError& e) {
        throw NumericalError(e.quantity(), "phase " + std::to_string(phase) + ", epoch " + std::to_string(epoch) +
                                               ", step " + std::to_string(out.steps));
      }
      w = std::move(r.w);
      state = std::move(r.state);
      loss_sum += r.stats.loss * static_cast<double>(rows.size());
      ++out.steps;
      if (step_cfg.kind != OptimizerKind::sgd) ++out.sharpness_steps;
    }
    EpochLog log;
    log.train_loss = loss_sum / static_cast<double>(data.size());
    log.train_accuracy = accuracy(spec, w, data, seen);
    log.lr = sv.lr;
    log.rho = sv.rho;
    log.sharpness_active = sv.sharpness_active;
    out.epochs.push_back(log);
    if (hook) {
      const auto hook_start = std::chrono::steady_clock::now();
      hook(phase, epoch, w, data, oracle);
      hook_seconds += std::chrono::duration<double>(std::chrono::steady_clock::now() - hook_start).count();
    }
  }

  replay.update(current, phase);
  out.w = std::move(w);
  out.state = std::move(state);
  out.wall_seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count() - hook_seconds;
  return out;
}

}  // namespace flad
