#include "flad/errors.hpp"
#include "flad/kernels.hpp"
#include "flad/loss_oracle.hpp"
#include "support.hpp"

#include <doctest.h>
#include <omp.h>

using namespace flad;
using namespace flad::test;

namespace {

Eigen::VectorXd fd_grad_of(const std::function<double(const ParamVector&)>& f, const ParamVector& w, double eps) {
  Eigen::VectorXd g(static_cast<Eigen::Index>(w.size()));
  ParamVector p = w;
  for (std::size_t i = 0; i < w.size(); ++i) {
    p[i] = w[i] + eps;
    const double up = f(p);
    p[i] = w[i] - eps;
    const double down = f(p);
    p[i] = w[i];
    g[static_cast<Eigen::Index>(i)] = (up - down) / (2 * eps);
  }
  return g;
}

}  // namespace

TEST_CASE("library loss matches the naive forward pass") {
  for (auto act : {Activation::tanh, Activation::relu}) {
    const auto spec = small_spec(act);
    const auto w = jittered_params(spec, 1);
    for (std::size_t active : {std::size_t{2}, spec.classes}) {
      const auto batch = random_batch(77, spec.input_dim, active, 2);
      const double ref = naive_loss(spec, w, batch, active);
      for (auto backend : {kernels::Backend::serial, kernels::Backend::parallel}) {
        const auto o = LossOracle::mlp(spec, active, backend);
        CHECK(o.loss(w, batch) == doctest::Approx(ref).epsilon(1e-12));
      }
    }
  }
}

TEST_CASE("labels outside the active classes are rejected") {
  const auto spec = small_spec();
  const auto batch = random_batch(30, spec.input_dim, spec.classes, 3);
  for (auto backend : {kernels::Backend::serial, kernels::Backend::parallel}) {
    CHECK_THROWS_AS(LossOracle::mlp(spec, 1, backend).loss(init_params(spec), batch), DimensionError);
  }
}

TEST_CASE("gradient matches central differences of the naive loss") {
  for (auto act : {Activation::tanh, Activation::relu}) {
    const auto spec = small_spec(act);
    const auto w = jittered_params(spec, 3);
    const auto batch = random_batch(40, spec.input_dim, spec.classes, 4);
    const auto fd = fd_grad_of([&](const ParamVector& p) { return naive_loss(spec, p, batch, 3); }, w, 1e-6);
    for (auto backend : {kernels::Backend::serial, kernels::Backend::parallel}) {
      const auto g = LossOracle::mlp(spec, 3, backend).grad(w, batch);
      CHECK(max_abs_diff(g.values(), fd) < 1e-7);
    }
  }
}

TEST_CASE("serial and parallel kernels agree") {
  const auto spec = small_spec(Activation::tanh, {16, 9}, 6, 5);
  const auto w = jittered_params(spec, 5);
  const auto batch = random_batch(101, spec.input_dim, 4, 6);
  auto rng = make_rng(7, "v");
  const auto v = ParamVector::with_layout(w, gaussian_vector(rng, static_cast<Eigen::Index>(w.size())));
  const auto s = LossOracle::mlp(spec, 4, kernels::Backend::serial);
  const auto p = LossOracle::mlp(spec, 4, kernels::Backend::parallel);
  CHECK(std::abs(s.loss(w, batch) - p.loss(w, batch)) < 1e-12);
  CHECK(max_abs_diff(s.grad(w, batch).values(), p.grad(w, batch).values()) < 1e-12);
  CHECK(max_abs_diff(s.hvp(w, batch, v).values(), p.hvp(w, batch, v).values()) < 1e-11);
  CHECK(max_abs_diff(s.grad_norm_grad(w, batch, 1e-12).values(), p.grad_norm_grad(w, batch, 1e-12).values()) <
        1e-11);
}

TEST_CASE("parallel kernels are bitwise independent of the thread count") {
  const auto spec = small_spec(Activation::relu, {12}, 5, 4);
  const auto w = jittered_params(spec, 8);
  const auto batch = random_batch(150, spec.input_dim, spec.classes, 9);
  const auto o = LossOracle::mlp(spec);
  auto rng = make_rng(10, "v");
  const auto v = ParamVector::with_layout(w, gaussian_vector(rng, static_cast<Eigen::Index>(w.size())));
  const int saved = omp_get_max_threads();
  omp_set_num_threads(1);
  const auto g1 = o.grad(w, batch);
  const auto h1 = o.hvp(w, batch, v);
  omp_set_num_threads(4);
  const auto g4 = o.grad(w, batch);
  const auto h4 = o.hvp(w, batch, v);
  omp_set_num_threads(saved);
  CHECK(g1 == g4);
  CHECK(h1 == h4);
}

TEST_CASE("HVP matches central differences with Richardson agreement") {
  const auto spec = small_spec(Activation::tanh);
  const auto w = jittered_params(spec, 11);
  const auto batch = random_batch(30, spec.input_dim, spec.classes, 12);
  const auto o = LossOracle::mlp(spec);
  auto rng = make_rng(13, "v");
  const auto v = ParamVector::with_layout(w, gaussian_vector(rng, static_cast<Eigen::Index>(w.size())).normalized());
  const auto hv = o.hvp(w, batch, v);
  const auto coarse = fd_hvp_oracle(o, w, batch, v, 2e-3);
  const auto fine = fd_hvp_oracle(o, w, batch, v, 1e-3);
  // O(eps^2) error: Richardson extrapolation removes the leading term
  const Eigen::VectorXd rich = (4.0 * fine.values() - coarse.values()) / 3.0;
  CHECK(norm(hv - fine) / norm(fine) < 1e-5);
  CHECK((hv.values() - rich).norm() / rich.norm() < 1e-8);
}

TEST_CASE("HVP is symmetric and linear over random directions") {
  const auto spec = small_spec(Activation::relu, {9, 6});
  const auto w = jittered_params(spec, 14);
  const auto batch = random_batch(45, spec.input_dim, spec.classes, 15);
  const auto o = LossOracle::mlp(spec);
  auto rng = make_rng(16, "dirs");
  const auto n = static_cast<Eigen::Index>(w.size());
  for (int trial = 0; trial < 20; ++trial) {
    const auto u = ParamVector::with_layout(w, gaussian_vector(rng, n));
    const auto v = ParamVector::with_layout(w, gaussian_vector(rng, n));
    const double a = std::normal_distribution<double>(0, 2)(rng);
    const auto hu = o.hvp(w, batch, u);
    const auto hv = o.hvp(w, batch, v);
    CHECK(std::abs(dot(u, hv) - dot(v, hu)) < 1e-10 * std::max(1.0, std::abs(dot(u, hv))));
    const auto lhs = o.hvp(w, batch, u + a * v);
    CHECK(norm(lhs - (hu + a * hv)) < 1e-10 * std::max(1.0, norm(lhs)));
  }
}

TEST_CASE("inactive classes do not influence the loss") {
  const auto spec = small_spec(Activation::tanh, {6}, 4, 5);
  auto w = jittered_params(spec, 17);
  const auto batch = random_batch(20, spec.input_dim, 2, 18);
  const auto o = LossOracle::mlp(spec, 2);
  const double before = o.loss(w, batch);
  const auto g = o.grad(w, batch);
  // head rows 2..4 of the last layer
  const auto& wl = w.span("W1");
  const auto& bl = w.span("b1");
  for (std::size_t k = 2; k < 5; ++k) {
    CHECK(g.segment(bl)[static_cast<Eigen::Index>(k)] == 0.0);
    for (std::size_t i = 0; i < 6; ++i) CHECK(g.segment(wl)[static_cast<Eigen::Index>(k * 6 + i)] == 0.0);
  }
  w.segment(bl)[3] += 5.0;
  CHECK(o.loss(w, batch) == before);
  const auto pred = kernels::predict(spec, w.values(), batch.inputs, 2);
  for (int p : pred) CHECK(p < 2);
}

TEST_CASE("zero gradient gives a zero gradient-norm direction") {
  Eigen::MatrixXd a = Eigen::MatrixXd::Identity(3, 3);
  const auto q = LossOracle::quadratic(a);
  const auto w = ParamVector::from_values({0.0, 0.0, 0.0});
  CHECK(q.grad_norm_grad(w, noiseless_batch(), 0.0).values().isZero());
}
