#include "flad/kernels.hpp"

#include "flad/errors.hpp"

#include <omp.h>

#include <algorithm>
#include <cmath>

namespace flad::kernels {
namespace {

using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using ConstWeights = Eigen::Map<const RowMatrix>;
using Weights = Eigen::Map<RowMatrix>;

struct LayerView {
  Eigen::Index in = 0;
  Eigen::Index out = 0;
  Eigen::Index w_off = 0;
  Eigen::Index b_off = 0;
};

std::vector<LayerView> views_of(const ModelSpec& spec) {
  std::vector<LayerView> views;
  Eigen::Index off = 0;
  for (std::size_t l = 0; l < spec.num_layers(); ++l) {
    LayerView v;
    v.in = static_cast<Eigen::Index>(spec.fan_in(l));
    v.out = static_cast<Eigen::Index>(spec.fan_out(l));
    v.w_off = off;
    v.b_off = off + v.in * v.out;
    off = v.b_off + v.out;
    views.push_back(v);
  }
  return views;
}

ConstWeights weights(const Eigen::VectorXd& w, const LayerView& v) { return {w.data() + v.w_off, v.out, v.in}; }

Eigen::Map<const Eigen::RowVectorXd> bias(const Eigen::VectorXd& w, const LayerView& v) {
  return {w.data() + v.b_off, v.out};
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

Eigen::MatrixXd activate(Activation a, const Eigen::MatrixXd& z) {
  if (a == Activation::relu) return z.cwiseMax(0.0);
  return z.array().tanh().matrix();
}

Eigen::MatrixXd d1(Activation a, const Eigen::MatrixXd& z) {
  if (a == Activation::relu) return (z.array() > 0.0).cast<double>().matrix();
  return (1.0 - z.array().tanh().square()).matrix();
}

Eigen::MatrixXd d2(Activation a, const Eigen::MatrixXd& z) {
  if (a == Activation::relu) return Eigen::MatrixXd::Zero(z.rows(), z.cols());
  const Eigen::ArrayXXd t = z.array().tanh();
  return (-2.0 * t * (1.0 - t.square())).matrix();
}

// Cached forward/backward state for one chunk of examples.
struct Chunk {
  Eigen::Index begin = 0;
  Eigen::Index rows = 0;
  std::vector<Eigen::MatrixXd> a;  // a[l]: input to layer l
  std::vector<Eigen::MatrixXd> z;  // z[l]: pre-activation of layer l
  Eigen::MatrixXd prob;
  std::vector<Eigen::MatrixXd> delta;
  double nll = 0.0;
};

Eigen::Index chunk_count(Eigen::Index rows) { return (rows + parallel::kChunk - 1) / parallel::kChunk; }

void forward(const MlpProblem& p, const std::vector<LayerView>& views, Chunk& c) {
  const std::size_t L = views.size();
  c.a.resize(L);
  c.z.resize(L);
  c.a[0] = p.x.middleRows(c.begin, c.rows);
  for (std::size_t l = 0; l < L; ++l) {
    c.z[l] = c.a[l] * weights(p.w, views[l]).transpose();
    c.z[l].rowwise() += bias(p.w, views[l]);
    if (l + 1 < L) c.a[l + 1] = activate(p.spec.activation, c.z[l]);
  }
  const auto active = static_cast<Eigen::Index>(p.active_classes);
  const Eigen::MatrixXd& logits = c.z[L - 1];
  c.prob = Eigen::MatrixXd::Zero(c.rows, logits.cols());
  c.nll = 0.0;
  for (Eigen::Index r = 0; r < c.rows; ++r) {
    const double mx = logits.row(r).head(active).maxCoeff();
    c.prob.row(r).head(active) = (logits.row(r).head(active).array() - mx).exp().matrix();
    const double sum = c.prob.row(r).head(active).sum();
    c.prob.row(r).head(active) /= sum;
    const int y = p.labels[static_cast<std::size_t>(c.begin + r)];
    c.nll -= logits(r, y) - mx - std::log(sum);
  }
}

void backward(const MlpProblem& p, const std::vector<LayerView>& views, double scale, Chunk& c,
              Eigen::VectorXd* grad) {
  const std::size_t L = views.size();
  c.delta.resize(L);
  c.delta[L - 1] = c.prob;
  for (Eigen::Index r = 0; r < c.rows; ++r) c.delta[L - 1](r, p.labels[static_cast<std::size_t>(c.begin + r)]) -= 1.0;
  c.delta[L - 1] *= scale;
  for (std::size_t l = L; l-- > 0;) {
    const LayerView& v = views[l];
    if (grad) {
      Weights(grad->data() + v.w_off, v.out, v.in).noalias() += c.delta[l].transpose() * c.a[l];
      grad->segment(v.b_off, v.out) += c.delta[l].colwise().sum().transpose();
    }
    if (l > 0) {
      c.delta[l - 1] = (c.delta[l] * weights(p.w, v)).cwiseProduct(d1(p.spec.activation, c.z[l - 1]));
    }
  }
}

void r_pass(const MlpProblem& p, const std::vector<LayerView>& views, const Eigen::VectorXd& dir, double scale,
            const Chunk& c, Eigen::VectorXd& hv) {
  const std::size_t L = views.size();
  std::vector<Eigen::MatrixXd> ra(L), rz(L);
  ra[0] = Eigen::MatrixXd::Zero(c.rows, views[0].in);
  for (std::size_t l = 0; l < L; ++l) {
    rz[l] = c.a[l] * weights(dir, views[l]).transpose() + ra[l] * weights(p.w, views[l]).transpose();
    rz[l].rowwise() += bias(dir, views[l]);
    if (l + 1 < L) ra[l + 1] = d1(p.spec.activation, c.z[l]).cwiseProduct(rz[l]);
  }
  const auto active = static_cast<Eigen::Index>(p.active_classes);
  Eigen::MatrixXd rd = Eigen::MatrixXd::Zero(c.rows, views[L - 1].out);
  for (Eigen::Index r = 0; r < c.rows; ++r) {
    const double mean = c.prob.row(r).head(active).dot(rz[L - 1].row(r).head(active));
    rd.row(r).head(active) =
        (c.prob.row(r).head(active).array() * (rz[L - 1].row(r).head(active).array() - mean)).matrix() * scale;
  }
  for (std::size_t l = L; l-- > 0;) {
    const LayerView& v = views[l];
    Weights h(hv.data() + v.w_off, v.out, v.in);
    h.noalias() += rd.transpose() * c.a[l];
    h.noalias() += c.delta[l].transpose() * ra[l];
    hv.segment(v.b_off, v.out) += rd.colwise().sum().transpose();
    if (l > 0) {
      const Eigen::MatrixXd back_r = rd * weights(p.w, v) + c.delta[l] * weights(dir, v);
      const Eigen::MatrixXd back_d = c.delta[l] * weights(p.w, v);
      rd = back_r.cwiseProduct(d1(p.spec.activation, c.z[l - 1])) +
           back_d.cwiseProduct(d2(p.spec.activation, c.z[l - 1])).cwiseProduct(rz[l - 1]);
    }
  }
}

std::vector<Chunk> make_chunks(Eigen::Index rows) {
  std::vector<Chunk> chunks(static_cast<std::size_t>(chunk_count(rows)));
  for (std::size_t i = 0; i < chunks.size(); ++i) {
    chunks[i].begin = static_cast<Eigen::Index>(i) * parallel::kChunk;
    chunks[i].rows = std::min(parallel::kChunk, rows - chunks[i].begin);
  }
  return chunks;
}

// Sums per-chunk columns in chunk order.
Eigen::VectorXd ordered_sum(const Eigen::MatrixXd& partials) {
  Eigen::VectorXd total = Eigen::VectorXd::Zero(partials.rows());
  for (Eigen::Index j = 0; j < partials.cols(); ++j) total += partials.col(j);
  return total;
}

struct GradPass {
  std::vector<Chunk> chunks;
  double loss = 0.0;
  Eigen::VectorXd grad;
};

GradPass grad_pass(const MlpProblem& p, const std::vector<LayerView>& views, bool keep_grad) {
  GradPass out;
  out.chunks = make_chunks(p.x.rows());
  const double scale = 1.0 / static_cast<double>(p.x.rows());
  const auto n = static_cast<Eigen::Index>(out.chunks.size());
  Eigen::MatrixXd partials = Eigen::MatrixXd::Zero(keep_grad ? p.w.size() : 0, n);
#pragma omp parallel for schedule(static)
  for (Eigen::Index i = 0; i < n; ++i) {
    Chunk& c = out.chunks[static_cast<std::size_t>(i)];
    forward(p, views, c);
    if (keep_grad) {
      Eigen::VectorXd g = Eigen::VectorXd::Zero(p.w.size());
      backward(p, views, scale, c, &g);
      partials.col(i) = g;
    } else {
      backward(p, views, scale, c, nullptr);
    }
  }
  double nll = 0.0;
  for (const auto& c : out.chunks) nll += c.nll;
  out.loss = nll * scale;
  if (keep_grad) out.grad = ordered_sum(partials);
  return out;
}

Eigen::VectorXd hvp_pass(const MlpProblem& p, const std::vector<LayerView>& views, const std::vector<Chunk>& chunks,
                         const Eigen::VectorXd& dir) {
  const double scale = 1.0 / static_cast<double>(p.x.rows());
  const auto n = static_cast<Eigen::Index>(chunks.size());
  Eigen::MatrixXd partials = Eigen::MatrixXd::Zero(p.w.size(), n);
#pragma omp parallel for schedule(static)
  for (Eigen::Index i = 0; i < n; ++i) {
    Eigen::VectorXd h = Eigen::VectorXd::Zero(p.w.size());
    r_pass(p, views, dir, scale, chunks[static_cast<std::size_t>(i)], h);
    partials.col(i) = h;
  }
  return ordered_sum(partials);
}

}  // namespace

namespace parallel {

double loss(const MlpProblem& p) {
  check_problem(p);
  const auto views = views_of(p.spec);
  auto chunks = make_chunks(p.x.rows());
  const auto n = static_cast<Eigen::Index>(chunks.size());
#pragma omp parallel for schedule(static)
  for (Eigen::Index i = 0; i < n; ++i) forward(p, views, chunks[static_cast<std::size_t>(i)]);
  double nll = 0.0;
  for (const auto& c : chunks) nll += c.nll;
  return nll / static_cast<double>(p.x.rows());
}

LossGrad loss_grad(const MlpProblem& p) {
  check_problem(p);
  auto pass = grad_pass(p, views_of(p.spec), true);
  return {pass.loss, std::move(pass.grad)};
}

Eigen::VectorXd hvp(const MlpProblem& p, const Eigen::VectorXd& v) {
  check_problem(p);
  if (v.size() != p.w.size()) throw DimensionError("hvp direction length does not match parameters");
  const auto views = views_of(p.spec);
  auto pass = grad_pass(p, views, false);
  return hvp_pass(p, views, pass.chunks, v);
}

GradHvp normalized_grad_hvp(const MlpProblem& p, double c) {
  check_problem(p);
  const auto views = views_of(p.spec);
  auto pass = grad_pass(p, views, true);
  const double denom = pass.grad.norm() + c;
  const Eigen::VectorXd dir = denom > 0.0 ? Eigen::VectorXd(pass.grad / denom) : Eigen::VectorXd::Zero(pass.grad.size());
  GradHvp out;
  out.hvp = hvp_pass(p, views, pass.chunks, dir);
  out.loss = pass.loss;
  out.grad = std::move(pass.grad);
  return out;
}

Eigen::MatrixXd logits(const ModelSpec& spec, const Eigen::VectorXd& w, const Eigen::MatrixXd& x) {
  if (static_cast<std::size_t>(x.cols()) != spec.input_dim) throw DimensionError("input width does not match model");
  const auto views = views_of(spec);
  Eigen::MatrixXd out(x.rows(), static_cast<Eigen::Index>(spec.classes));
  const Eigen::Index n = chunk_count(x.rows());
#pragma omp parallel for schedule(static)
  for (Eigen::Index i = 0; i < n; ++i) {
    const Eigen::Index begin = i * kChunk;
    const Eigen::Index rows = std::min(kChunk, x.rows() - begin);
    Eigen::MatrixXd a = x.middleRows(begin, rows);
    for (std::size_t l = 0; l < views.size(); ++l) {
      Eigen::MatrixXd z = a * weights(w, views[l]).transpose();
      z.rowwise() += bias(w, views[l]);
      a = l + 1 < views.size() ? activate(spec.activation, z) : z;
    }
    out.middleRows(begin, rows) = a;
  }
  return out;
}

}  // namespace parallel

std::vector<int> predict(const ModelSpec& spec, const Eigen::VectorXd& w, const Eigen::MatrixXd& x,
                         std::size_t active_classes) {
  const Eigen::MatrixXd z = parallel::logits(spec, w, x);
  std::vector<int> out(static_cast<std::size_t>(x.rows()));
  for (Eigen::Index r = 0; r < z.rows(); ++r) {
    Eigen::Index best = 0;
    z.row(r).head(static_cast<Eigen::Index>(active_classes)).maxCoeff(&best);
    out[static_cast<std::size_t>(r)] = static_cast<int>(best);
  }
  return out;
}

}  // namespace flad::kernels
