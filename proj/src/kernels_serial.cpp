#include "flad/kernels.hpp"

#include "flad/errors.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace flad::kernels {
namespace {

struct Layer {
  std::size_t in = 0;
  std::size_t out = 0;
  std::size_t w_off = 0;
  std::size_t b_off = 0;
};

std::vector<Layer> layers_of(const ModelSpec& spec) {
  std::vector<Layer> layers;
  std::size_t off = 0;
  for (std::size_t l = 0; l < spec.num_layers(); ++l) {
    Layer L{spec.fan_in(l), spec.fan_out(l), off, off + spec.fan_in(l) * spec.fan_out(l)};
    off = L.b_off + L.out;
    layers.push_back(L);
  }
  return layers;
}

double act(Activation a, double z) { return a == Activation::relu ? (z > 0.0 ? z : 0.0) : std::tanh(z); }

double act_d1(Activation a, double z) {
  if (a == Activation::relu) return z > 0.0 ? 1.0 : 0.0;
  const double t = std::tanh(z);
  return 1.0 - t * t;
}

double act_d2(Activation a, double z) {
  if (a == Activation::relu) return 0.0;
  const double t = std::tanh(z);
  return -2.0 * t * (1.0 - t * t);
}

void check_problem(const MlpProblem& p) {
  if (static_cast<std::size_t>(p.w.size()) != p.spec.param_count()) {
    throw DimensionError("parameter vector length does not match model");
  }
  if (static_cast<std::size_t>(p.x.cols()) != p.spec.input_dim) {
    throw DimensionError("batch width " + std::to_string(p.x.cols()) + " does not match model input " +
                         std::to_string(p.spec.input_dim));
  }
  if (static_cast<std::size_t>(p.x.rows()) != p.labels.size() || p.labels.empty()) {
    throw DimensionError("batch rows and labels disagree");
  }
  if (p.active_classes < 1 || p.active_classes > p.spec.classes) {
    throw DimensionError("active class count out of range");
  }
  for (int y : p.labels) {
    if (y < 0 || static_cast<std::size_t>(y) >= p.active_classes) {
      throw DimensionError("label " + std::to_string(y) + " outside the " + std::to_string(p.active_classes) +
                           " active classes");
    }
  }
}

// Per-example activations: z[l] pre-activation of layer l, a[l] its input.
struct Trace {
  std::vector<std::vector<double>> a;
  std::vector<std::vector<double>> z;
  std::vector<double> prob;
};

void forward_one(const ModelSpec& spec, const std::vector<Layer>& layers, const Eigen::VectorXd& w,
                 const Eigen::MatrixXd& x, Eigen::Index row, Trace& t) {
  const std::size_t L = layers.size();
  t.a.assign(L, {});
  t.z.assign(L, {});
  t.a[0].resize(spec.input_dim);
  for (std::size_t i = 0; i < spec.input_dim; ++i) t.a[0][i] = x(row, static_cast<Eigen::Index>(i));
  for (std::size_t l = 0; l < L; ++l) {
    const Layer& ly = layers[l];
    t.z[l].assign(ly.out, 0.0);
    for (std::size_t o = 0; o < ly.out; ++o) {
      double s = w[static_cast<Eigen::Index>(ly.b_off + o)];
      for (std::size_t i = 0; i < ly.in; ++i) s += w[static_cast<Eigen::Index>(ly.w_off + o * ly.in + i)] * t.a[l][i];
      t.z[l][o] = s;
    }
    if (l + 1 < L) {
      t.a[l + 1].resize(ly.out);
      for (std::size_t o = 0; o < ly.out; ++o) t.a[l + 1][o] = act(spec.activation, t.z[l][o]);
    }
  }
}

// Softmax over the active prefix; returns -log p[label].
double softmax_nll(const std::vector<double>& logits, std::size_t active, int label, std::vector<double>& prob) {
  double mx = -std::numeric_limits<double>::infinity();
  for (std::size_t k = 0; k < active; ++k) mx = std::max(mx, logits[k]);
  double sum = 0.0;
  prob.assign(logits.size(), 0.0);
  for (std::size_t k = 0; k < active; ++k) {
    prob[k] = std::exp(logits[k] - mx);
    sum += prob[k];
  }
  for (std::size_t k = 0; k < active; ++k) prob[k] /= sum;
  return -(logits[static_cast<std::size_t>(label)] - mx - std::log(sum));
}

// Backprop of one example. Accumulates into grad (if non-null) and returns
// deltas per layer (dLoss/dz, already scaled by 1/B).
std::vector<std::vector<double>> backward_one(const ModelSpec& spec, const std::vector<Layer>& layers,
                                              const Eigen::VectorXd& w, const Trace& t, int label,
                                              std::size_t active, double scale, Eigen::VectorXd* grad) {
  const std::size_t L = layers.size();
  std::vector<std::vector<double>> delta(L);
  delta[L - 1].assign(layers[L - 1].out, 0.0);
  for (std::size_t k = 0; k < active; ++k) {
    delta[L - 1][k] = (t.prob[k] - (static_cast<int>(k) == label ? 1.0 : 0.0)) * scale;
  }
  for (std::size_t l = L; l-- > 0;) {
    const Layer& ly = layers[l];
    if (grad) {
      for (std::size_t o = 0; o < ly.out; ++o) {
        const double d = delta[l][o];
        for (std::size_t i = 0; i < ly.in; ++i) (*grad)[static_cast<Eigen::Index>(ly.w_off + o * ly.in + i)] += d * t.a[l][i];
        (*grad)[static_cast<Eigen::Index>(ly.b_off + o)] += d;
      }
    }
    if (l > 0) {
      delta[l - 1].assign(ly.in, 0.0);
      for (std::size_t i = 0; i < ly.in; ++i) {
        double s = 0.0;
        for (std::size_t o = 0; o < ly.out; ++o) s += w[static_cast<Eigen::Index>(ly.w_off + o * ly.in + i)] * delta[l][o];
        delta[l - 1][i] = s * act_d1(spec.activation, t.z[l - 1][i]);
      }
    }
  }
  return delta;
}

// R-operator pass for one example along direction v; accumulates into hv.
void r_pass_one(const ModelSpec& spec, const std::vector<Layer>& layers, const Eigen::VectorXd& w,
                const Eigen::VectorXd& v, const Trace& t, const std::vector<std::vector<double>>& delta,
                std::size_t active, double scale, Eigen::VectorXd& hv) {
  const std::size_t L = layers.size();
  std::vector<std::vector<double>> ra(L), rz(L);
  ra[0].assign(spec.input_dim, 0.0);
  for (std::size_t l = 0; l < L; ++l) {
    const Layer& ly = layers[l];
    rz[l].assign(ly.out, 0.0);
    for (std::size_t o = 0; o < ly.out; ++o) {
      double s = v[static_cast<Eigen::Index>(ly.b_off + o)];
      for (std::size_t i = 0; i < ly.in; ++i) {
        const auto idx = static_cast<Eigen::Index>(ly.w_off + o * ly.in + i);
        s += v[idx] * t.a[l][i] + w[idx] * ra[l][i];
      }
      rz[l][o] = s;
    }
    if (l + 1 < L) {
      ra[l + 1].resize(ly.out);
      for (std::size_t o = 0; o < ly.out; ++o) ra[l + 1][o] = act_d1(spec.activation, t.z[l][o]) * rz[l][o];
    }
  }
  std::vector<double> rd(layers[L - 1].out, 0.0);
  double mean = 0.0;
  for (std::size_t k = 0; k < active; ++k) mean += t.prob[k] * rz[L - 1][k];
  for (std::size_t k = 0; k < active; ++k) rd[k] = t.prob[k] * (rz[L - 1][k] - mean) * scale;

  for (std::size_t l = L; l-- > 0;) {
    const Layer& ly = layers[l];
    for (std::size_t o = 0; o < ly.out; ++o) {
      for (std::size_t i = 0; i < ly.in; ++i) {
        hv[static_cast<Eigen::Index>(ly.w_off + o * ly.in + i)] += rd[o] * t.a[l][i] + delta[l][o] * ra[l][i];
      }
      hv[static_cast<Eigen::Index>(ly.b_off + o)] += rd[o];
    }
    if (l > 0) {
      std::vector<double> prev(ly.in, 0.0);
      for (std::size_t i = 0; i < ly.in; ++i) {
        double back_r = 0.0;
        double back_d = 0.0;
        for (std::size_t o = 0; o < ly.out; ++o) {
          const auto idx = static_cast<Eigen::Index>(ly.w_off + o * ly.in + i);
          back_r += w[idx] * rd[o] + v[idx] * delta[l][o];
          back_d += w[idx] * delta[l][o];
        }
        const double z = t.z[l - 1][i];
        prev[i] = back_r * act_d1(spec.activation, z) + back_d * act_d2(spec.activation, z) * rz[l - 1][i];
      }
      rd = std::move(prev);
    }
  }
}

}  // namespace

namespace serial {

double loss(const MlpProblem& p) {
  check_problem(p);
  const auto layers = layers_of(p.spec);
  Trace t;
  double total = 0.0;
  for (Eigen::Index r = 0; r < p.x.rows(); ++r) {
    forward_one(p.spec, layers, p.w, p.x, r, t);
    total += softmax_nll(t.z.back(), p.active_classes, p.labels[static_cast<std::size_t>(r)], t.prob);
  }
  return total / static_cast<double>(p.x.rows());
}

LossGrad loss_grad(const MlpProblem& p) {
  check_problem(p);
  const auto layers = layers_of(p.spec);
  const double scale = 1.0 / static_cast<double>(p.x.rows());
  LossGrad out{0.0, Eigen::VectorXd::Zero(p.w.size())};
  Trace t;
  for (Eigen::Index r = 0; r < p.x.rows(); ++r) {
    const int y = p.labels[static_cast<std::size_t>(r)];
    forward_one(p.spec, layers, p.w, p.x, r, t);
    out.loss += softmax_nll(t.z.back(), p.active_classes, y, t.prob);
    backward_one(p.spec, layers, p.w, t, y, p.active_classes, scale, &out.grad);
  }
  out.loss *= scale;
  return out;
}

Eigen::VectorXd hvp(const MlpProblem& p, const Eigen::VectorXd& v) {
  check_problem(p);
  if (v.size() != p.w.size()) throw DimensionError("hvp direction length does not match parameters");
  const auto layers = layers_of(p.spec);
  const double scale = 1.0 / static_cast<double>(p.x.rows());
  Eigen::VectorXd hv = Eigen::VectorXd::Zero(p.w.size());
  Trace t;
  for (Eigen::Index r = 0; r < p.x.rows(); ++r) {
    const int y = p.labels[static_cast<std::size_t>(r)];
    forward_one(p.spec, layers, p.w, p.x, r, t);
    softmax_nll(t.z.back(), p.active_classes, y, t.prob);
    const auto delta = backward_one(p.spec, layers, p.w, t, y, p.active_classes, scale, nullptr);
    r_pass_one(p.spec, layers, p.w, v, t, delta, p.active_classes, scale, hv);
  }
  return hv;
}

GradHvp normalized_grad_hvp(const MlpProblem& p, double c) {
  auto lg = loss_grad(p);
  const double denom = lg.grad.norm() + c;
  const Eigen::VectorXd v = denom > 0.0 ? Eigen::VectorXd(lg.grad / denom) : Eigen::VectorXd::Zero(lg.grad.size());
  GradHvp out;
  out.hvp = hvp(p, v);
  out.loss = lg.loss;
  out.grad = std::move(lg.grad);
  return out;
}

Eigen::MatrixXd logits(const ModelSpec& spec, const Eigen::VectorXd& w, const Eigen::MatrixXd& x) {
  const auto layers = layers_of(spec);
  Eigen::MatrixXd out(x.rows(), static_cast<Eigen::Index>(spec.classes));
  Trace t;
  for (Eigen::Index r = 0; r < x.rows(); ++r) {
    forward_one(spec, layers, w, x, r, t);
    for (std::size_t k = 0; k < spec.classes; ++k) out(r, static_cast<Eigen::Index>(k)) = t.z.back()[k];
  }
  return out;
}

}  // namespace serial
}  // namespace flad::kernels
