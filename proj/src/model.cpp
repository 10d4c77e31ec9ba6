#include "flad/model.hpp"

#include "flad/errors.hpp"
#include "flad/rng.hpp"

#include <cmath>

namespace flad {

std::string to_string(Activation a) { return a == Activation::relu ? "relu" : "tanh"; }

Activation parse_activation(const std::string& name) {
  if (name == "relu") return Activation::relu;
  if (name == "tanh") return Activation::tanh;
  throw ConfigError("unknown activation '" + name + "' (expected relu or tanh)");
}

std::size_t ModelSpec::fan_in(std::size_t layer) const {
  return layer == 0 ? input_dim : hidden[layer - 1];
}

std::size_t ModelSpec::fan_out(std::size_t layer) const {
  return layer + 1 == num_layers() ? classes : hidden[layer];
}

std::size_t ModelSpec::param_count() const {
  std::size_t n = 0;
  for (std::size_t l = 0; l < num_layers(); ++l) n += fan_out(l) * fan_in(l) + fan_out(l);
  return n;
}

std::vector<Span> ModelSpec::layout() const {
  std::vector<Span> spans;
  std::size_t offset = 0;
  for (std::size_t l = 0; l < num_layers(); ++l) {
    const std::size_t out = fan_out(l);
    const std::size_t in = fan_in(l);
    spans.push_back(Span{"W" + std::to_string(l), {out, in}, offset, out * in});
    offset += out * in;
    spans.push_back(Span{"b" + std::to_string(l), {out}, offset, out});
    offset += out;
  }
  return spans;
}

void ModelSpec::validate() const {
  if (input_dim == 0) throw ConfigError("model: input dimension must be positive");
  for (std::size_t i = 0; i < hidden.size(); ++i) {
    if (hidden[i] == 0) throw ConfigError("model: hidden layer " + std::to_string(i) + " has zero width");
  }
  if (classes < 2) throw ConfigError("model: need at least 2 output classes");
}

double init_stddev(const ModelSpec& spec, std::size_t layer) {
  const auto in = static_cast<double>(spec.fan_in(layer));
  const auto out = static_cast<double>(spec.fan_out(layer));
  return spec.activation == Activation::relu ? std::sqrt(2.0 / in) : std::sqrt(2.0 / (in + out));
}

ParamVector init_params(const ModelSpec& spec) {
  spec.validate();
  ParamVector w(Eigen::VectorXd::Zero(static_cast<Eigen::Index>(spec.param_count())), spec.layout());
  for (std::size_t l = 0; l < spec.num_layers(); ++l) {
    auto rng = make_rng(spec.seed, "init", l);
    const Span& s = w.span("W" + std::to_string(l));
    w.segment(s) = gaussian_vector(rng, static_cast<Eigen::Index>(s.size), init_stddev(spec, l));
  }
  return w;
}

void zero_head_rows(const ModelSpec& spec, ParamVector& w, std::size_t first, std::size_t last) {
  const std::size_t head = spec.num_layers() - 1;
  const std::size_t in = spec.fan_in(head);
  if (last > spec.classes || first > last) throw DimensionError("zero_head_rows: row range out of bounds");
  auto weights = w.segment(w.span("W" + std::to_string(head)));
  auto bias = w.segment(w.span("b" + std::to_string(head)));
  for (std::size_t r = first; r < last; ++r) {
    weights.segment(static_cast<Eigen::Index>(r * in), static_cast<Eigen::Index>(in)).setZero();
    bias[static_cast<Eigen::Index>(r)] = 0.0;
  }
}

Batch make_batch(Eigen::MatrixXd inputs, std::vector<int> labels, std::size_t classes) {
  if (labels.empty()) throw DimensionError("batch must hold at least one example");
  if (static_cast<std::size_t>(inputs.rows()) != labels.size()) {
    throw DimensionError("batch has " + std::to_string(inputs.rows()) + " rows but " +
                         std::to_string(labels.size()) + " labels");
  }
  for (int y : labels) {
    if (y < 0 || static_cast<std::size_t>(y) >= classes) {
      throw DimensionError("label " + std::to_string(y) + " outside [0, " + std::to_string(classes) + ")");
    }
  }
  return Batch{std::move(inputs), std::move(labels)};
}

Batch noiseless_batch() { return Batch{Eigen::MatrixXd(1, 0), {0}}; }

}  // namespace flad
