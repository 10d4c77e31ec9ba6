#include "flad/verify.hpp"

#include "flad/continual.hpp"
#include "flad/dataset.hpp"
#include "flad/diagnostics.hpp"
#include "flad/format.hpp"
#include "flad/optimizer.hpp"
#include "flad/rng.hpp"

#include <algorithm>
#include <cmath>

namespace flad {

ParamVector fd_gradient(const LossOracle& oracle, const ParamVector& w, const Batch& batch, double eps) {
  ParamVector g = ParamVector::zeros_like(w);
  ParamVector probe = w;
  for (std::size_t i = 0; i < w.size(); ++i) {
    const double x = w[i];
    probe[i] = x + eps;
    const double up = oracle.loss(probe, batch);
    probe[i] = x - eps;
    const double down = oracle.loss(probe, batch);
    probe[i] = x;
    g[i] = (up - down) / (2.0 * eps);
  }
  return g;
}

Eigen::MatrixXd dense_hessian(const LossOracle& oracle, const ParamVector& w, const Batch& batch) {
  const auto d = static_cast<Eigen::Index>(w.size());
  Eigen::MatrixXd h(d, d);
  for (Eigen::Index j = 0; j < d; ++j) {
    Eigen::VectorXd e = Eigen::VectorXd::Zero(d);
    e[j] = 1.0;
    h.col(j) = oracle.hvp(w, batch, ParamVector::with_layout(w, e)).values();
  }
  return 0.5 * (h + h.transpose());
}

namespace {

struct Fixture {
  LossOracle oracle;
  ParamVector w;
  Batch batch;
};

Fixture mlp_fixture(std::size_t dim, std::vector<std::size_t> hidden, std::size_t classes, Activation act,
                    std::size_t samples, std::uint64_t seed) {
  BlobParams bp;
  bp.classes = classes;
  bp.dim = dim;
  bp.separation = 2.0;
  bp.samples_per_class = samples;
  const DatasetSplit data = gaussian_blobs(bp, derive_seed(seed, "verify-data"));
  ModelSpec spec;
  spec.input_dim = dim;
  spec.hidden = std::move(hidden);
  spec.classes = classes;
  spec.activation = act;
  spec.seed = derive_seed(seed, "verify-model");
  ParamVector w = init_params(spec);
  // nonzero biases so every parameter is exercised
  auto rng = make_rng(seed, "verify-jitter");
  w += ParamVector::with_layout(w, gaussian_vector(rng, static_cast<Eigen::Index>(w.size()), 0.05));
  return Fixture{LossOracle::mlp(spec), std::move(w), data.train.all()};
}

CheckResult make(std::string name, double value, double tol, std::string detail = {}) {
  return CheckResult{std::move(name), value < tol, value, tol, std::move(detail)};
}

double max_abs(const Eigen::VectorXd& v) { return v.size() ? v.cwiseAbs().maxCoeff() : 0.0; }

}  // namespace

std::vector<CheckResult> run_oracle_suite(std::uint64_t seed) {
  std::vector<CheckResult> out;

  // Gradient and HVP checks on two small MLPs (< 5k parameters).
  const Fixture nets[] = {mlp_fixture(8, {32, 16}, 5, Activation::tanh, 12, seed),
                          mlp_fixture(6, {24}, 4, Activation::relu, 12, seed + 1)};
  for (const auto& f : nets) {
    const std::string tag = to_string(f.oracle.model().activation) + " d=" + std::to_string(f.w.size());
    const ParamVector g = f.oracle.grad(f.w, f.batch);
    const ParamVector fd = fd_gradient(f.oracle, f.w, f.batch, 1e-6);
    out.push_back(make("fd-gradient (" + tag + ")", max_abs(g.values() - fd.values()), 1e-5, "max component error"));

    auto rng = make_rng(seed, "verify-directions", f.w.size());
    const auto n = static_cast<Eigen::Index>(f.w.size());
    const ParamVector u = ParamVector::with_layout(f.w, gaussian_vector(rng, n).normalized());
    const ParamVector v = ParamVector::with_layout(f.w, gaussian_vector(rng, n).normalized());
    const ParamVector hu = f.oracle.hvp(f.w, f.batch, u);
    const ParamVector hv = f.oracle.hvp(f.w, f.batch, v);
    const ParamVector fdv = fd_hvp_oracle(f.oracle, f.w, f.batch, v, 1e-6);
    out.push_back(make("fd-hvp (" + tag + ")", norm(hv - fdv) / norm(fdv), 1e-3, "relative error"));

    const double uhv = dot(u, hv), vhu = dot(v, hu);
    out.push_back(make("hvp-symmetry (" + tag + ")", std::abs(uhv - vhu) / std::max(1.0, std::abs(uhv)), 1e-8,
                       "|<u,Hv> - <v,Hu>| relative"));
    const double a = 0.7, b = -1.3;
    const ParamVector combo = f.oracle.hvp(f.w, f.batch, a * u + b * v);
    const ParamVector lin = a * hu + b * hv;
    out.push_back(make("hvp-linearity (" + tag + ")", norm(combo - lin) / std::max(1.0, norm(lin)), 1e-8,
                       "|H(au+bv) - aHu - bHv| relative"));
  }

  // Dense-Hessian spectrum and trace on a d <= 200 model.
  {
    const Fixture f = mlp_fixture(6, {12}, 4, Activation::tanh, 10, seed + 2);
    const Eigen::MatrixXd h = dense_hessian(f.oracle, f.w, f.batch);
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(h);
    const Eigen::VectorXd ev = es.eigenvalues();
    double dominant = ev[ev.size() - 1];
    if (std::abs(ev[0]) > std::abs(dominant)) dominant = ev[0];
    const auto spectrum = top_eigenpairs(f.oracle, f.w, f.batch, {1, 5000, 1e-10, derive_seed(seed, "verify-power")});
    const double top = spectrum.top_eigenvalues[0];
    out.push_back(make("dense-hessian top eigenvalue (d=" + std::to_string(f.w.size()) + ")",
                       std::abs(top - dominant) / std::abs(dominant), 1e-4,
                       "power " + format_double(top) + " vs dense " + format_double(dominant)));
    const auto trace = hutchinson_trace(f.oracle, f.w, f.batch, 500, derive_seed(seed, "verify-trace"));
    const double exact = h.trace();
    out.push_back(make("dense-hessian trace vs Hutchinson", std::abs(trace.mean - exact) / trace.std_error, 3.0,
                       "standard errors; exact " + format_double(exact)));
  }

  // EMA closed form and hand recursion.
  {
    auto rng = make_rng(seed, "verify-ema");
    const double lambda = 0.9;
    ParamVector m = ParamVector::with_layout(ParamVector::from_values({0, 0, 0}), gaussian_vector(rng, 3));
    const ParamVector m0 = m;
    std::vector<ParamVector> gs;
    for (int k = 0; k < 50; ++k) {
      gs.push_back(ParamVector::with_layout(m0, gaussian_vector(rng, 3)));
      m = update_ema(m, gs.back(), lambda);
    }
    Eigen::VectorXd closed = std::pow(lambda, 50) * m0.values();
    for (int j = 0; j < 50; ++j) closed += (1 - lambda) * std::pow(lambda, 49 - j) * gs[static_cast<std::size_t>(j)].values();
    out.push_back(make("ema closed form (k=50)", (m.values() - closed).norm() / closed.norm(), 1e-10, "relative"));

    ParamVector t = ParamVector::from_values({0.0});
    double worst = 0.0;
    const double expect[] = {0.5, 1.25, 2.125};
    for (int k = 0; k < 3; ++k) {
      t = update_ema(t, ParamVector::from_values({static_cast<double>(k + 1)}), 0.5);
      worst = std::max(worst, std::abs(t[0] - expect[k]));
    }
    out.push_back(make("ema hand sequence (0.5, 1.25, 2.125)", worst, 1e-12));
  }

  // Hand-evaluated optimizer steps.
  {
    Eigen::MatrixXd a(2, 2);
    a << 2, 0, 0, 1;
    const LossOracle q = LossOracle::quadratic(a);
    HyperParams hp;
    hp.rho = 0.1;
    hp.gamma = 0.0;
    hp.sigma = 0.0;
    hp.lr = 0.1;
    hp.c = 0.0;
    hp.weight_decay = 0.0;
    hp.momentum = 0.0;
    const ParamVector w = ParamVector::from_values({1.0, 0.0});
    const auto r = flad_step(q, w, noiseless_batch(), OptimizerState::init(w), hp);
    out.push_back(make("flad quadratic step -> (0.78, 0)",
                       std::max(std::abs(r.w[0] - 0.78), std::abs(r.w[1] - 0.0)), 1e-12));

    const LossOracle iq = LossOracle::quadratic(Eigen::MatrixXd::Identity(2, 2));
    HyperParams z;
    z.rho = 0.5;
    z.lr = 0.1;
    z.c = 0.0;
    z.weight_decay = 0.0;
    z.momentum = 0.0;
    const ParamVector w2 = ParamVector::from_values({3.0, 4.0});
    const auto r2 = baseline_step(OptimizerKind::zeroth, PerturbationVariant::standard, iq, w2, noiseless_batch(),
                                  OptimizerState::init(w2), z);
    out.push_back(make("zeroth quadratic step -> (2.67, 3.56)",
                       std::max(std::abs(r2.w[0] - 2.67), std::abs(r2.w[1] - 3.56)), 1e-12));
  }

  // Metrics and schedule arithmetic.
  {
    MetricsLedger ledger(2);
    ledger.record(0, {1.0});
    ledger.record(1, {0.8, 0.9});
    out.push_back(make("metrics Acc = 0.85, AAA = 0.925",
                       std::max(std::abs(acc_final(ledger) - 0.85), std::abs(aaa(ledger) - 0.925)), 1e-12));
    Schedule s;
    s.theorem_mode = true;
    const auto sv = schedule_at(s, 4, 10, 0.1, 0.2);
    out.push_back(make("theorem schedule (0.05, 0.2/sqrt 2)",
                       std::max(std::abs(sv.lr - 0.05), std::abs(sv.rho - 0.2 / std::sqrt(2.0))), 1e-12));
  }
  return out;
}

bool all_passed(const std::vector<CheckResult>& checks) {
  return std::all_of(checks.begin(), checks.end(), [](const CheckResult& c) { return c.passed; });
}

}  // namespace flad
