#pragma once

#include "flad/loss_oracle.hpp"
#include "flad/param_vector.hpp"
#include "flad/rng.hpp"

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

namespace flad {

struct HyperParams {
  double lr = 0.1;
  double rho = 0.2;
  double gamma = 0.5;
  double sigma = 0.5;
  double lambda0 = 0.9;
  double lambda1 = 0.9;
  /// Division guard; every normalization uses |x| + c.
  double c = 1e-12;
  double momentum = 0.9;
  double weight_decay = 5e-4;

  /// Throws ConfigError naming the offending field.
  void validate() const;

  bool operator==(const HyperParams&) const = default;
};

enum class OptimizerKind { sgd, zeroth, first, combined, flad, flad_zeroth, flad_first };

/// Source of the first-order ascent direction.
enum class PerturbationVariant { standard, pre_batch, random, full_component, noise_component };

std::string to_string(OptimizerKind k);
std::string to_string(PerturbationVariant v);
OptimizerKind parse_optimizer_kind(const std::string& name);
PerturbationVariant parse_variant(const std::string& name);

struct OptimizerConfig {
  OptimizerKind kind = OptimizerKind::flad;
  PerturbationVariant variant = PerturbationVariant::standard;
  HyperParams hp;

  /// The flad kinds always perturb along the noise component.
  PerturbationVariant effective_variant() const;
  void validate() const;

  bool operator==(const OptimizerConfig&) const = default;
};

struct OptimizerState {
  ParamVector m;         // EMA of batch gradients
  ParamVector n;         // EMA of gradient-norm gradients
  ParamVector velocity;  // momentum buffer
  std::int64_t step = 0;
  int epoch_in_task = 0;
  std::optional<ParamVector> previous_sharpness;  // last step's s, for the pre-batch variant
  std::uint64_t noise_seed = 0;

  static OptimizerState init(const ParamVector& like, std::uint64_t noise_seed = 0);
  /// Task boundary: trackers and momentum back to zero.
  void start_task();
};

struct StepStats {
  double loss = 0.0;
  double grad_norm = 0.0;
  double delta0_norm = 0.0;
  double delta1_norm = 0.0;
  bool degenerate = false;
};

struct StepResult {
  ParamVector w;
  OptimizerState state;
  StepStats stats;
};

/// rho * g / (|g| + c). Zero input (or rho = 0) gives an exact zero vector.
ParamVector zeroth_perturbation(const ParamVector& direction, double rho, double c);

/// g_batch - sigma * tracker: the stochastic-noise component.
ParamVector decompose(const ParamVector& g_batch, const ParamVector& tracker, double sigma);

/// lambda * tracker + (1 - lambda) * g_new.
ParamVector update_ema(const ParamVector& tracker, const ParamVector& g_new, double lambda);

struct VariantContext {
  const ParamVector& sharpness;                 // s = grad_norm_grad at w for this batch
  const ParamVector* tracker = nullptr;         // n_t (full / noise)
  const ParamVector* previous = nullptr;        // previous batch's s (pre-batch)
  Rng* rng = nullptr;                           // random
  double sigma = 0.0;
};

/// First-order ascent direction before rho-scaling. The pre-batch variant falls
/// back to the standard direction when no previous batch exists.
ParamVector variant_perturbation(PerturbationVariant variant, const VariantContext& ctx);

/// One iteration of the decomposed zeroth+first order update: 2 gradient and
/// 2 HVP evaluations.
StepResult flad_step(const LossOracle& oracle, const ParamVector& w, const Batch& batch, OptimizerState state,
                     const HyperParams& hp);

/// SGD, SAM-style, GAM-style (with perturbation variant), combined, and the
/// decomposed single-order ablations.
StepResult baseline_step(OptimizerKind kind, PerturbationVariant variant, const LossOracle& oracle,
                         const ParamVector& w, const Batch& batch, OptimizerState state, const HyperParams& hp);

StepResult optimizer_step(const OptimizerConfig& cfg, const LossOracle& oracle, const ParamVector& w,
                          const Batch& batch, OptimizerState state);

/// Number of gradient and HVP evaluations one step of `kind` performs.
struct EvalBudget {
  int grads = 0;
  int hvps = 0;
};
EvalBudget step_budget(OptimizerKind kind);

struct Schedule {
  std::vector<double> decay_points{0.3, 0.6, 0.85};
  double decay_factor = 0.1;
  /// lr / sqrt(i) and rho / i^(1/4) for epoch i; decay points ignored.
  bool theorem_mode = false;
  /// Fraction of the epochs during which the sharpness machinery runs.
  double window_start = 0.0;
  double window_end = 1.0;

  void validate() const;

  bool operator==(const Schedule&) const = default;
};

struct ScheduleValues {
  double lr = 0.0;
  double rho = 0.0;
  bool sharpness_active = true;
};

/// Epochs are 1-based. An lr decay point p takes effect once a fraction p of
/// the epochs has completed; the window holds epochs whose completed fraction
/// (epoch - 1) / total lies in [start, end).
ScheduleValues schedule_at(const Schedule& sched, int epoch, int total_epochs, double base_lr, double base_rho);

}  // namespace flad
