// Acceptance run: one PASS/FAIL line per criterion, exit 3 on any failure.
#include "flad/config.hpp"
#include "flad/continual.hpp"
#include "flad/diagnostics.hpp"
#include "flad/experiment.hpp"
#include "flad/optimizer.hpp"
#include "flad/verify.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <iostream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

using namespace flad;

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t) { return std::chrono::duration<double>(Clock::now() - t).count(); }

struct Outcome {
  bool passed = false;
  std::string detail;
};

std::string fmt(double v, int digits = 4) {
  std::ostringstream ss;
  ss.precision(digits);
  ss << v;
  return ss.str();
}

RunConfig fixture() { return load_config(FLAD_FIXTURE_CONFIG); }

RunConfig with_kind(RunConfig cfg, OptimizerKind kind) {
  cfg.optimizer.kind = kind;
  return cfg;
}

// Model and batches of the fixture, for step-level checks.
struct FixtureMlp {
  ModelSpec spec;
  LossOracle oracle;
  ParamVector w;
  std::vector<Batch> batches;
};

FixtureMlp fixture_mlp(const RunConfig& cfg, std::size_t nbatches) {
  const auto data = generate_dataset(cfg.dataset).train;
  ModelSpec spec;
  spec.input_dim = data.dim();
  spec.hidden = cfg.model.hidden;
  spec.classes = data.num_classes;
  spec.activation = cfg.model.activation;
  spec.seed = 1;
  return FixtureMlp{spec, LossOracle::mlp(spec), init_params(spec),
                    sample_batches(data, nbatches, cfg.run.batch_size, 2)};
}

// --- 1 ---------------------------------------------------------------------

Outcome oracle_suite() {
  const auto t = Clock::now();
  const auto checks = run_oracle_suite(0);
  const double s = seconds_since(t);
  std::size_t failed = 0;
  for (const auto& c : checks) failed += !c.passed;
  return {failed == 0 && s < 60.0, std::to_string(checks.size() - failed) + "/" + std::to_string(checks.size()) +
                                       " checks, " + fmt(s, 3) + " s (< 60)"};
}

// --- 2 ---------------------------------------------------------------------

std::vector<ParamVector> trajectory(const OptimizerConfig& cfg, const FixtureMlp& f, int steps) {
  std::vector<ParamVector> out;
  ParamVector w = f.w;
  auto state = OptimizerState::init(w, 5);
  for (int i = 0; i < steps; ++i) {
    auto r = optimizer_step(cfg, f.oracle, w, f.batches[static_cast<std::size_t>(i) % f.batches.size()],
                            std::move(state));
    w = std::move(r.w);
    state = std::move(r.state);
    out.push_back(w);
  }
  return out;
}

Outcome reductions() {
  const auto t = Clock::now();
  const auto f = fixture_mlp(fixture(), 20);
  OptimizerConfig base;
  base.kind = OptimizerKind::flad;

  auto a = base;
  a.hp.sigma = 0.0;
  auto a_ref = a;
  a_ref.kind = OptimizerKind::combined;
  const bool sigma0 = trajectory(a, f, 200) == trajectory(a_ref, f, 200);

  auto b = base;
  b.hp.gamma = 0.0;
  auto b_ref = b;
  b_ref.kind = OptimizerKind::flad_zeroth;
  const bool gamma0 = trajectory(b, f, 200) == trajectory(b_ref, f, 200);

  auto c = base;
  c.hp.rho = 0.0;
  c.hp.gamma = 0.0;
  c.hp.momentum = 0.0;
  c.hp.weight_decay = 0.0;
  auto c_ref = c;
  c_ref.kind = OptimizerKind::sgd;
  const bool full = trajectory(c, f, 200) == trajectory(c_ref, f, 200);

  const double s = seconds_since(t);
  return {sigma0 && gamma0 && full && s < 30.0,
          std::string("sigma=0 ") + (sigma0 ? "==" : "!=") + " combined, gamma=0 " + (gamma0 ? "==" : "!=") +
              " flad-0th, rho=gamma=mu=wd=0 " + (full ? "==" : "!=") + " sgd; 200 steps, " + fmt(s, 3) + " s (< 30)"};
}

// --- 3 ---------------------------------------------------------------------

Outcome radius_contract() {
  auto f = fixture_mlp(fixture(), 16);
  auto rng = make_rng(3, "radius-contract");
  const OptimizerKind kinds[] = {OptimizerKind::zeroth,   OptimizerKind::first,      OptimizerKind::combined,
                                 OptimizerKind::flad,     OptimizerKind::flad_zeroth, OptimizerKind::flad_first};
  std::size_t steps = 0, over = 0, off = 0, equality_checks = 0;
  double worst_over = 0.0, worst_off = 0.0;
  ParamVector w = f.w;
  OptimizerState state = OptimizerState::init(w, 1);
  for (int i = 0; i < 1000; ++i) {
    OptimizerConfig cfg;
    cfg.kind = kinds[i % 6];
    cfg.hp.rho = std::pow(10.0, std::uniform_real_distribution<double>(-4, 0.5)(rng));
    cfg.hp.sigma = std::uniform_real_distribution<double>(0, 1)(rng);
    cfg.hp.c = i % 2 ? 0.0 : std::pow(10.0, std::uniform_real_distribution<double>(-12, -1)(rng));
    cfg.hp.lr = 0.05;
    if (i % 100 == 0) {
      w = f.w + ParamVector::with_layout(f.w, gaussian_vector(rng, static_cast<Eigen::Index>(f.w.size()), 0.05));
      state = OptimizerState::init(w, static_cast<std::uint64_t>(i));
    }
    auto r = optimizer_step(cfg, f.oracle, w, f.batches[static_cast<std::size_t>(i) % f.batches.size()],
                            std::move(state));
    const bool uses0 = cfg.kind != OptimizerKind::first && cfg.kind != OptimizerKind::flad_first;
    const bool uses1 = cfg.kind != OptimizerKind::zeroth && cfg.kind != OptimizerKind::flad_zeroth;
    const double rho = cfg.hp.rho;
    for (auto [used, n] : {std::pair{uses0, r.stats.delta0_norm}, std::pair{uses1, r.stats.delta1_norm}}) {
      if (!used) continue;
      if (n > rho) {
        ++over;
        worst_over = std::max(worst_over, (n - rho) / rho);
      }
      if (cfg.hp.c == 0.0 && !r.stats.degenerate) {
        ++equality_checks;
        const double rel = std::abs(n - rho) / rho;
        worst_off = std::max(worst_off, rel);
        off += rel > 1e-9;
      }
    }
    ++steps;
    w = std::move(r.w);
    state = std::move(r.state);
  }
  return {over == 0 && off == 0,
          std::to_string(steps) + " steps; " + std::to_string(over) + " radii > rho (worst +" + fmt(worst_over) +
              "), " + std::to_string(off) + "/" + std::to_string(equality_checks) +
              " c=0 radii off rho by > 1e-9 rho (worst " + fmt(worst_off) + ")"};
}

// --- 4 ---------------------------------------------------------------------

Outcome hand_arithmetic() {
  double worst = 0.0;
  auto track = [&](double got, double want) { worst = std::max(worst, std::abs(got - want)); };

  Eigen::MatrixXd a(2, 2);
  a << 2, 0, 0, 1;
  HyperParams hp;
  hp.lr = 0.1;
  hp.rho = 0.1;
  hp.gamma = 0.0;
  hp.sigma = 0.0;
  hp.c = 0.0;
  hp.momentum = 0.0;
  hp.weight_decay = 0.0;
  const auto w0 = ParamVector::from_values({1.0, 0.0});
  const auto r = flad_step(LossOracle::quadratic(a), w0, noiseless_batch(), OptimizerState::init(w0), hp);
  track(r.w[0], 0.78);
  track(r.w[1], 0.0);

  hp.rho = 0.5;
  const auto w1 = ParamVector::from_values({3.0, 4.0});
  const auto z = baseline_step(OptimizerKind::zeroth, PerturbationVariant::standard,
                               LossOracle::quadratic(Eigen::MatrixXd::Identity(2, 2)), w1, noiseless_batch(),
                               OptimizerState::init(w1), hp);
  track(z.w[0], 2.67);
  track(z.w[1], 3.56);

  auto m = ParamVector::from_values({0.0});
  const double ema[] = {0.5, 1.25, 2.125};
  for (int k = 0; k < 3; ++k) {
    m = update_ema(m, ParamVector::from_values({k + 1.0}), 0.5);
    track(m[0], ema[k]);
  }

  MetricsLedger ledger(2);
  ledger.record(0, {1.0});
  ledger.record(1, {0.8, 0.9});
  track(acc_final(ledger), 0.85);
  track(aaa(ledger), 0.925);

  Schedule th;
  th.theorem_mode = true;
  const auto v = schedule_at(th, 4, 100, 0.1, 0.2);
  track(v.lr, 0.05);
  track(v.rho, 0.2 / std::sqrt(2.0));
  return {worst <= 1e-12, "max deviation " + fmt(worst) + " (<= 1e-12)"};
}

// --- 5 ---------------------------------------------------------------------

Outcome convergence() {
  const auto t = Clock::now();
  const Eigen::Index d = 10;
  auto rng = make_rng(5, "theorem-quadratic");
  const Eigen::MatrixXd q = Eigen::HouseholderQR<Eigen::MatrixXd>(
                                Eigen::MatrixXd::NullaryExpr(d, d, [&] { return std::normal_distribution<>()(rng); }))
                                .householderQ();
  Eigen::VectorXd spectrum(d);
  for (Eigen::Index i = 0; i < d; ++i) spectrum[i] = 0.1 + 1.9 * static_cast<double>(i) / static_cast<double>(d - 1);
  const Eigen::MatrixXd a = q * spectrum.asDiagonal() * q.transpose();
  const Eigen::VectorXd b = gaussian_vector(rng, d);
  const auto oracle = LossOracle::quadratic(0.5 * (a + a.transpose()), b);
  const int total = 10000;
  std::vector<Batch> noise;
  for (int i = 0; i < 64; ++i) {
    Eigen::MatrixXd rows(8, d);
    for (Eigen::Index k = 0; k < rows.size(); ++k) rows.data()[k] = 0.5 * std::normal_distribution<>()(rng);
    noise.push_back(make_batch(rows, std::vector<int>(8, 0), 1));
  }

  Schedule th;
  th.theorem_mode = true;
  std::map<OptimizerKind, std::pair<double, double>> mins;
  bool all_drop = true;
  std::string detail;
  for (auto kind : {OptimizerKind::sgd, OptimizerKind::zeroth, OptimizerKind::first, OptimizerKind::combined,
                    OptimizerKind::flad}) {
    OptimizerConfig cfg;
    cfg.kind = kind;
    cfg.hp.momentum = 0.0;
    cfg.hp.weight_decay = 0.0;
    const double lr = 0.1, rho = 0.05;
    ParamVector w = ParamVector::from_values(Eigen::VectorXd::Zero(d));
    auto state = OptimizerState::init(w, 9);
    double running = std::numeric_limits<double>::infinity(), at100 = 0.0;
    for (int i = 1; i <= total; ++i) {
      const auto s = schedule_at(th, i, total, lr, rho);
      cfg.hp.lr = s.lr;
      cfg.hp.rho = s.rho;
      auto r = optimizer_step(cfg, oracle, w, noise[static_cast<std::size_t>(i) % noise.size()], std::move(state));
      w = std::move(r.w);
      state = std::move(r.state);
      running = std::min(running, oracle.grad(w, noiseless_batch()).values().squaredNorm());
      if (i == 100) at100 = running;
    }
    mins[kind] = {at100, running};
    all_drop = all_drop && running < at100;
    detail += to_string(kind) + " " + fmt(at100, 3) + "->" + fmt(running, 3) + "; ";
  }
  const double ratio = mins[OptimizerKind::flad].second / mins[OptimizerKind::sgd].second;
  const double s = seconds_since(t);
  detail += "flad/sgd " + fmt(ratio, 3) + " (<= 10), " + fmt(s, 3) + " s (< 120)";
  return {all_drop && ratio <= 10.0 && s < 120.0, detail};
}

// --- 6, 7, 8, 10 -----------------------------------------------------------

struct SeedRun {
  double acc = 0.0;
  double aaa = 0.0;
  std::size_t sharpness_steps = 0;
  double top_eigenvalue = 0.0;
  double trace = 0.0;
};

// Top eigenvalue and Hutchinson trace of the final model on the whole training set.
void measure_flatness(const ContinualRun& run, SeedRun& out) {
  const auto oracle = LossOracle::mlp(run.spec, run.stream.num_classes());
  const auto batch = run.train.all();
  const auto eig = top_eigenpairs(oracle, run.w, batch, {1, 300, 1e-6, 11});
  out.top_eigenvalue = eig.top_eigenvalues[0];
  out.trace = hutchinson_trace(oracle, run.w, batch, 200, 12).mean;
}

std::vector<SeedRun> run_seeds(const RunConfig& cfg, bool flatness) {
  std::vector<SeedRun> out;
  for (auto seed : cfg.run.seeds) {
    const auto run = run_continual(cfg, seed);
    SeedRun s;
    s.acc = run.record.acc;
    s.aaa = run.record.aaa;
    for (const auto& p : run.record.phases) s.sharpness_steps += p.sharpness_steps;
    if (flatness) measure_flatness(run, s);
    out.push_back(s);
  }
  return out;
}

double mean_of(const std::vector<SeedRun>& runs, double SeedRun::*field) {
  double total = 0.0;
  for (const auto& r : runs) total += r.*field;
  return total / static_cast<double>(runs.size());
}

struct ClRuns {
  std::vector<SeedRun> sgd, combined, flad, window;
  double seconds = 0.0;
};

ClRuns& cl_runs() {
  static ClRuns runs = [] {
    ClRuns r;
    const auto t = Clock::now();
    const auto cfg = fixture();
    r.sgd = run_seeds(with_kind(cfg, OptimizerKind::sgd), true);
    r.combined = run_seeds(with_kind(cfg, OptimizerKind::combined), false);
    r.flad = run_seeds(with_kind(cfg, OptimizerKind::flad), true);
    r.seconds = seconds_since(t);
    auto windowed = with_kind(cfg, OptimizerKind::flad);
    windowed.schedule.window_start = 0.8;
    windowed.schedule.window_end = 1.0;
    r.window = run_seeds(windowed, false);
    return r;
  }();
  return runs;
}

Outcome cl_direction() {
  const auto& r = cl_runs();
  const double s = mean_of(r.sgd, &SeedRun::aaa), c = mean_of(r.combined, &SeedRun::aaa),
               f = mean_of(r.flad, &SeedRun::aaa);
  std::size_t held = 0;
  for (std::size_t i = 0; i < r.sgd.size(); ++i) {
    held += r.flad[i].aaa >= r.combined[i].aaa && r.combined[i].aaa >= r.sgd[i].aaa;
  }
  const double gain = 100.0 * (f - s);
  const bool ok = f >= c && c >= s && gain >= 0.5 && held >= 4 && r.seconds < 600.0;
  return {ok, "mean AAA flad " + fmt(f) + ", combined " + fmt(c) + ", sgd " + fmt(s) + "; flad-sgd " + fmt(gain, 3) +
                  " pts (>= 0.5); per-seed ordering " + std::to_string(held) + "/" + std::to_string(r.sgd.size()) +
                  " (>= 4); " + fmt(r.seconds, 3) + " s (< 600)"};
}

Outcome flatness() {
  const auto& r = cl_runs();
  std::size_t flatter = 0;
  std::string detail;
  for (std::size_t i = 0; i < r.sgd.size(); ++i) {
    const bool ok = r.flad[i].top_eigenvalue <= r.sgd[i].top_eigenvalue && r.flad[i].trace <= r.sgd[i].trace;
    flatter += ok;
    detail += "[" + fmt(r.flad[i].top_eigenvalue, 3) + "/" + fmt(r.sgd[i].top_eigenvalue, 3) + ", " +
              fmt(r.flad[i].trace, 3) + "/" + fmt(r.sgd[i].trace, 3) + "] ";
  }
  return {flatter >= 4, std::to_string(flatter) + "/" + std::to_string(r.sgd.size()) +
                            " seeds with flad lambda_max and trace <= sgd (>= 4); flad/sgd per seed " + detail};
}

Outcome partial_application() {
  const auto& r = cl_runs();
  const double s = mean_of(r.sgd, &SeedRun::aaa), f = mean_of(r.flad, &SeedRun::aaa),
               w = mean_of(r.window, &SeedRun::aaa);
  double full_steps = 0.0, window_steps = 0.0;
  for (const auto& x : r.flad) full_steps += static_cast<double>(x.sharpness_steps);
  for (const auto& x : r.window) window_steps += static_cast<double>(x.sharpness_steps);
  const double step_share = window_steps / full_steps;
  const double full_gain = f - s;
  const double recovered = full_gain > 0.0 ? (w - s) / full_gain : std::numeric_limits<double>::quiet_NaN();
  const bool ok = full_gain > 0.0 && recovered >= 0.5 && step_share <= 0.4;
  return {ok, "window AAA " + fmt(w) + " vs flad " + fmt(f) + ", sgd " + fmt(s) + "; recovered " +
                  (full_gain > 0.0 ? fmt(100 * recovered, 3) + "%" : std::string("n/a (no flad gain)")) +
                  " (>= 50%); sharpness steps " + fmt(100 * step_share, 3) + "% of full (<= 40%)"};
}

Outcome batch_size() {
  auto cfg = with_kind(fixture(), OptimizerKind::first);
  cfg.run.batch_size = 32;
  const auto small = run_seeds(cfg, false);
  cfg.run.batch_size = 256;
  const auto large = run_seeds(cfg, false);
  const double a = mean_of(small, &SeedRun::acc), b = mean_of(large, &SeedRun::acc);
  return {a >= b, "first-order mean Acc bs32 " + fmt(a) + " vs bs256 " + fmt(b) + " (need bs32 >= bs256)"};
}

// --- 9 ---------------------------------------------------------------------

Outcome trhs_estimator() {
  const auto f = fixture_mlp(fixture(), 1);
  const std::vector<Batch> same(32, f.batches[0]);
  const double zero = tr_h_sigma(f.oracle, f.w, same, 5, 1);

  // H with known top eigenpair; per-batch gradients g + eps_b v1, Var(eps) = s^2
  const Eigen::Index d = 8;
  auto rng = make_rng(9, "constructed-noise");
  const Eigen::MatrixXd q = Eigen::HouseholderQR<Eigen::MatrixXd>(
                                Eigen::MatrixXd::NullaryExpr(d, d, [&] { return std::normal_distribution<>()(rng); }))
                                .householderQ();
  Eigen::VectorXd spectrum(d);
  spectrum << 6, 3, 2, 1.5, 1, 0.5, 0.25, 0.1;
  const Eigen::MatrixXd h = q * spectrum.asDiagonal() * q.transpose();
  const auto oracle = LossOracle::quadratic(0.5 * (h + h.transpose()), gaussian_vector(rng, d));
  const Eigen::VectorXd v1 = q.col(0);
  const double amplitude = 0.3;
  std::vector<Batch> batches;
  for (int i = 0; i < 64; ++i) {
    const double eps = (rng() & 1u ? 1.0 : -1.0) * amplitude;
    batches.push_back(make_batch((-eps * v1).transpose(), {0}, 1));
  }
  const auto w = ParamVector::from_values(gaussian_vector(rng, d));
  const double est = tr_h_sigma(oracle, w, batches, 3, 2, 1000, 1e-10);
  const double expect = spectrum[0] * amplitude * amplitude;
  const double rel = std::abs(est - expect) / expect;
  return {zero == 0.0 && rel <= 0.2, "identical batches " + fmt(zero) + " (== 0); constructed noise " + fmt(est) +
                                         " vs lambda1 s^2 " + fmt(expect) + ", rel err " + fmt(rel, 3) +
                                         " (<= 0.2) at 64 batches"};
}

}  // namespace

int main(int argc, char** argv) {
  std::vector<std::pair<std::string, std::function<Outcome()>>> criteria = {
      {"oracle suite", oracle_suite},
      {"reduction equivalences", reductions},
      {"perturbation radius", radius_contract},
      {"hand arithmetic", hand_arithmetic},
      {"convergence", convergence},
      {"continual-learning direction", cl_direction},
      {"flatness direction", flatness},
      {"partial application", partial_application},
      {"Tr(H Sigma) estimator", trhs_estimator},
      {"batch-size direction", batch_size},
  };
  std::vector<int> only;
  for (int i = 1; i < argc; ++i) only.push_back(std::stoi(argv[i]));
  int failed = 0;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    const int id = static_cast<int>(i) + 1;
    if (!only.empty() && std::find(only.begin(), only.end(), id) == only.end()) continue;
    Outcome o;
    try {
      o = criteria[i].second();
    } catch (const std::exception& e) {
      o = {false, std::string("error: ") + e.what()};
    }
    failed += !o.passed;
    std::printf("%s %2d %-30s %s\n", o.passed ? "PASS" : "FAIL", id, criteria[i].first.c_str(), o.detail.c_str());
    std::fflush(stdout);
  }
  return failed == 0 ? 0 : 3;
}
