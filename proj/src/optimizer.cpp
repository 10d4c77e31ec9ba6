#include "flad/optimizer.hpp"

#include "flad/errors.hpp"

#include <cmath>
#include <limits>

namespace flad {
namespace {

void require(bool ok, const std::string& field, const std::string& rule) {
  if (!ok) throw ConfigError("optimizer." + field + ": " + rule);
}

void require_finite(const ParamVector& v, const char* what, std::int64_t step) {
  if (!v.all_finite()) throw NumericalError(what, "step " + std::to_string(step));
}

// x / (|x| + c); zero when the denominator vanishes.
ParamVector normalized(const ParamVector& x, double c) {
  const double denom = norm(x) + c;
  if (denom == 0.0) return ParamVector::zeros_like(x);
  return ParamVector::with_layout(x, x.values() / denom);
}

ParamVector perturbed(const ParamVector& w, const ParamVector& delta, double rho) {
  if (rho == 0.0) return w;
  return w + delta;
}

void apply_update(ParamVector& w, ParamVector d, OptimizerState& state, const HyperParams& hp) {
  if (hp.weight_decay != 0.0) d.values() += hp.weight_decay * w.values();
  if (hp.momentum != 0.0) {
    state.velocity.values() = hp.momentum * state.velocity.values() + d.values();
  } else {
    state.velocity = std::move(d);
  }
  w.values() -= hp.lr * state.velocity.values();
  ++state.step;
}

struct Plan {
  bool zeroth = false;
  bool zeroth_decomposed = false;
  bool first = false;
  PerturbationVariant variant = PerturbationVariant::standard;
};

Plan plan_for(OptimizerKind kind, PerturbationVariant variant) {
  switch (kind) {
    case OptimizerKind::sgd: return {};
    case OptimizerKind::zeroth: return {true, false, false, variant};
    case OptimizerKind::flad_zeroth: return {true, true, false, variant};
    case OptimizerKind::first: return {false, false, true, variant};
    case OptimizerKind::flad_first: return {false, false, true, PerturbationVariant::noise_component};
    case OptimizerKind::combined: return {true, false, true, variant};
    case OptimizerKind::flad: return {true, true, true, PerturbationVariant::noise_component};
  }
  return {};
}

StepResult run_step(const Plan& plan, const LossOracle& oracle, const ParamVector& w, const Batch& batch,
                    OptimizerState state, const HyperParams& hp) {
  StepResult out;
  out.w = w;
  const std::int64_t step = state.step;

  auto [loss, g_hat] = oracle.loss_and_grad(w, batch);
  if (!std::isfinite(loss)) throw NumericalError("loss", "step " + std::to_string(step));
  require_finite(g_hat, "batch gradient", step);
  out.stats.loss = loss;
  out.stats.grad_norm = norm(g_hat);

  if (!plan.zeroth && !plan.first) {
    apply_update(out.w, std::move(g_hat), state, hp);
    out.state = std::move(state);
    return out;
  }

  // Ascent directions first so the degenerate case can short-circuit.
  std::optional<ParamVector> u0;
  if (plan.zeroth) {
    if (plan.zeroth_decomposed) {
      state.m = update_ema(state.m, g_hat, hp.lambda0);
      u0 = decompose(g_hat, state.m, hp.sigma);
    } else {
      u0 = g_hat;
    }
  }
  std::optional<ParamVector> u1;
  if (plan.first) {
    ParamVector s = oracle.hvp(w, batch, normalized(g_hat, hp.c));
    require_finite(s, "gradient-norm gradient", step);
    state.n = update_ema(state.n, s, hp.lambda1);
    Rng rng = make_rng(state.noise_seed, "perturb", static_cast<std::uint64_t>(step));
    VariantContext ctx{s, &state.n, state.previous_sharpness ? &*state.previous_sharpness : nullptr, &rng, hp.sigma};
    u1 = variant_perturbation(plan.variant, ctx);
    state.previous_sharpness = std::move(s);
  }

  const bool zero0 = !u0 || norm(*u0) == 0.0;
  const bool zero1 = !u1 || norm(*u1) == 0.0;
  if (plan.zeroth && plan.first && zero0 && zero1) {
    out.stats.degenerate = true;
    apply_update(out.w, std::move(g_hat), state, hp);
    out.state = std::move(state);
    return out;
  }

  std::optional<ParamVector> g0;
  if (u0) {
    const ParamVector delta0 = zeroth_perturbation(*u0, hp.rho, hp.c);
    out.stats.delta0_norm = norm(delta0);
    g0 = oracle.grad(perturbed(w, delta0, hp.rho), batch);
    require_finite(*g0, "perturbed gradient g0", step);
  }
  std::optional<ParamVector> g1;
  if (u1) {
    const ParamVector delta1 = zeroth_perturbation(*u1, hp.rho, hp.c);
    out.stats.delta1_norm = norm(delta1);
    g1 = oracle.grad_norm_grad(perturbed(w, delta1, hp.rho), batch, hp.c);
    require_finite(*g1, "first-order direction g1", step);
  }

  ParamVector d;
  if (g0 && g1) {
    d = hp.gamma == 0.0 ? std::move(*g0) : *g0 + hp.gamma * *g1;
  } else if (g0) {
    d = std::move(*g0);
  } else {
    d = std::move(*g1);
  }
  apply_update(out.w, std::move(d), state, hp);
  out.state = std::move(state);
  return out;
}

}  // namespace

void HyperParams::validate() const {
  require(std::isfinite(lr) && lr > 0.0, "lr", "must be > 0");
  require(std::isfinite(rho) && rho >= 0.0, "rho", "must be >= 0");
  require(std::isfinite(gamma) && gamma >= 0.0, "gamma", "must be >= 0");
  require(sigma >= 0.0 && sigma <= 1.0, "sigma", "must lie in [0, 1]");
  require(lambda0 > 0.0 && lambda0 < 1.0, "lambda0", "must lie in (0, 1)");
  require(lambda1 > 0.0 && lambda1 < 1.0, "lambda1", "must lie in (0, 1)");
  require(std::isfinite(c) && c >= 0.0, "c", "must be >= 0");
  require(momentum >= 0.0 && momentum < 1.0, "momentum", "must lie in [0, 1)");
  require(std::isfinite(weight_decay) && weight_decay >= 0.0, "weight_decay", "must be >= 0");
}

std::string to_string(OptimizerKind k) {
  switch (k) {
    case OptimizerKind::sgd: return "sgd";
    case OptimizerKind::zeroth: return "zeroth";
    case OptimizerKind::first: return "first";
    case OptimizerKind::combined: return "combined";
    case OptimizerKind::flad: return "flad";
    case OptimizerKind::flad_zeroth: return "flad-0th";
    case OptimizerKind::flad_first: return "flad-1st";
  }
  return "?";
}

std::string to_string(PerturbationVariant v) {
  switch (v) {
    case PerturbationVariant::standard: return "standard";
    case PerturbationVariant::pre_batch: return "pre";
    case PerturbationVariant::random: return "random";
    case PerturbationVariant::full_component: return "full";
    case PerturbationVariant::noise_component: return "noise";
  }
  return "?";
}

OptimizerKind parse_optimizer_kind(const std::string& name) {
  for (auto k : {OptimizerKind::sgd, OptimizerKind::zeroth, OptimizerKind::first, OptimizerKind::combined,
                 OptimizerKind::flad, OptimizerKind::flad_zeroth, OptimizerKind::flad_first}) {
    if (to_string(k) == name) return k;
  }
  if (name == "sam") return OptimizerKind::zeroth;
  if (name == "gam") return OptimizerKind::first;
  if (name == "c-flat") return OptimizerKind::combined;
  throw ConfigError("optimizer.kind: unknown optimizer '" + name + "'");
}

PerturbationVariant parse_variant(const std::string& name) {
  for (auto v : {PerturbationVariant::standard, PerturbationVariant::pre_batch, PerturbationVariant::random,
                 PerturbationVariant::full_component, PerturbationVariant::noise_component}) {
    if (to_string(v) == name) return v;
  }
  throw ConfigError("optimizer.variant: unknown perturbation variant '" + name + "'");
}

PerturbationVariant OptimizerConfig::effective_variant() const {
  if (kind == OptimizerKind::flad || kind == OptimizerKind::flad_first) return PerturbationVariant::noise_component;
  return variant;
}

void OptimizerConfig::validate() const {
  hp.validate();
  const bool flad_kind = kind == OptimizerKind::flad || kind == OptimizerKind::flad_first;
  if (flad_kind && variant != PerturbationVariant::standard && variant != PerturbationVariant::noise_component) {
    throw ConfigError("optimizer.variant: " + to_string(kind) + " always uses the noise component");
  }
}

OptimizerState OptimizerState::init(const ParamVector& like, std::uint64_t noise_seed) {
  OptimizerState s;
  s.m = ParamVector::zeros_like(like);
  s.n = ParamVector::zeros_like(like);
  s.velocity = ParamVector::zeros_like(like);
  s.noise_seed = noise_seed;
  return s;
}

void OptimizerState::start_task() {
  m.values().setZero();
  n.values().setZero();
  velocity.values().setZero();
  previous_sharpness.reset();
  epoch_in_task = 0;
}

ParamVector zeroth_perturbation(const ParamVector& direction, double rho, double c) {
  const double len = norm(direction);
  if (rho == 0.0 || len == 0.0) return ParamVector::zeros_like(direction);
  Eigen::VectorXd delta = rho * direction.values() / (len + c);
  // rounding can leave |delta| an ulp above rho
  while (delta.norm() > rho) delta *= 1.0 - std::numeric_limits<double>::epsilon();
  return ParamVector::with_layout(direction, std::move(delta));
}

ParamVector decompose(const ParamVector& g_batch, const ParamVector& tracker, double sigma) {
  require_same_size(g_batch, tracker, "decompose");
  if (sigma == 0.0) return g_batch;
  return ParamVector::with_layout(g_batch, g_batch.values() - sigma * tracker.values());
}

ParamVector update_ema(const ParamVector& tracker, const ParamVector& g_new, double lambda) {
  require_same_size(tracker, g_new, "update_ema");
  return ParamVector::with_layout(tracker, lambda * tracker.values() + (1.0 - lambda) * g_new.values());
}

ParamVector variant_perturbation(PerturbationVariant variant, const VariantContext& ctx) {
  switch (variant) {
    case PerturbationVariant::standard: return ctx.sharpness;
    case PerturbationVariant::pre_batch: return ctx.previous ? *ctx.previous : ctx.sharpness;
    case PerturbationVariant::random: {
      if (!ctx.rng) throw ConfigError("random perturbation variant needs an rng");
      Eigen::VectorXd z = gaussian_vector(*ctx.rng, static_cast<Eigen::Index>(ctx.sharpness.size()));
      return ParamVector::with_layout(ctx.sharpness, z / z.norm());
    }
    case PerturbationVariant::full_component:
      if (!ctx.tracker) throw ConfigError("full-component variant needs a tracker");
      return ParamVector::with_layout(ctx.sharpness, ctx.sigma * ctx.tracker->values());
    case PerturbationVariant::noise_component:
      if (!ctx.tracker) throw ConfigError("noise-component variant needs a tracker");
      return decompose(ctx.sharpness, *ctx.tracker, ctx.sigma);
  }
  return ctx.sharpness;
}

StepResult flad_step(const LossOracle& oracle, const ParamVector& w, const Batch& batch, OptimizerState state,
                     const HyperParams& hp) {
  return run_step(plan_for(OptimizerKind::flad, PerturbationVariant::noise_component), oracle, w, batch,
                  std::move(state), hp);
}

StepResult baseline_step(OptimizerKind kind, PerturbationVariant variant, const LossOracle& oracle,
                         const ParamVector& w, const Batch& batch, OptimizerState state, const HyperParams& hp) {
  if (kind == OptimizerKind::flad) throw ConfigError("baseline_step: use flad_step for the flad optimizer");
  return run_step(plan_for(kind, variant), oracle, w, batch, std::move(state), hp);
}

StepResult optimizer_step(const OptimizerConfig& cfg, const LossOracle& oracle, const ParamVector& w,
                          const Batch& batch, OptimizerState state) {
  if (cfg.kind == OptimizerKind::flad) return flad_step(oracle, w, batch, std::move(state), cfg.hp);
  return baseline_step(cfg.kind, cfg.variant, oracle, w, batch, std::move(state), cfg.hp);
}

EvalBudget step_budget(OptimizerKind kind) {
  const Plan p = plan_for(kind, PerturbationVariant::standard);
  return {1 + (p.zeroth ? 1 : 0), p.first ? 2 : 0};
}

void Schedule::validate() const {
  for (double p : decay_points) {
    if (!(p > 0.0 && p < 1.0)) throw ConfigError("schedule.decay_points: entries must lie in (0, 1)");
  }
  if (!(decay_factor > 0.0 && decay_factor <= 1.0)) throw ConfigError("schedule.decay_factor: must lie in (0, 1]");
  if (!(window_start >= 0.0 && window_start < window_end && window_end <= 1.0)) {
    throw ConfigError("schedule.window: need 0 <= start < end <= 1");
  }
}

ScheduleValues schedule_at(const Schedule& sched, int epoch, int total_epochs, double base_lr, double base_rho) {
  if (total_epochs < 1 || epoch < 1 || epoch > total_epochs) {
    throw ConfigError("schedule_at: epoch " + std::to_string(epoch) + " outside [1, " + std::to_string(total_epochs) +
                      "]");
  }
  ScheduleValues out{base_lr, base_rho, true};
  const double done = static_cast<double>(epoch - 1) / static_cast<double>(total_epochs);
  if (sched.theorem_mode) {
    const double i = static_cast<double>(epoch);
    out.lr = base_lr / std::sqrt(i);
    out.rho = base_rho / std::sqrt(std::sqrt(i));
  } else {
    for (double p : sched.decay_points) {
      if (done >= p) out.lr *= sched.decay_factor;
    }
  }
  out.sharpness_active = done >= sched.window_start && done < sched.window_end;
  return out;
}

}  // namespace flad
