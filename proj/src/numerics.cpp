#include "priorflow/numerics.hpp"

#include <cmath>

namespace priorflow {

void require_dimension(std::size_t expected, std::size_t actual, const char* what) {
  if (expected != actual) {
    throw DimensionError(std::string(what) + ": expected dimension " + std::to_string(expected) +
                         ", got " + std::to_string(actual));
  }
}

const char* to_string(Activation a) {
  switch (a) {
    case Activation::tanh:
      return "tanh";
    case Activation::relu:
      return "relu";
  }
  return "?";
}

Activation activation_from_string(const std::string& name) {
  if (name == "tanh") return Activation::tanh;
  if (name == "relu") return Activation::relu;
  throw std::invalid_argument("unknown activation '" + name + "'");
}

namespace {

void check_widths(std::span<const int> widths) {
  if (widths.size() < 2) throw std::invalid_argument("an MLP needs at least input and output widths");
  for (int w : widths) {
    if (w <= 0) throw std::invalid_argument("MLP layer widths must be positive");
  }
}

Matrix activate(const Matrix& pre, Activation a) {
  if (a == Activation::tanh) return pre.array().tanh().matrix();
  return pre.cwiseMax(0.0);
}

// Derivative of the activation expressed through its output.
Matrix activation_slope(const Matrix& activated, Activation a) {
  if (a == Activation::tanh) return (1.0 - activated.array().square()).matrix();
  return (activated.array() > 0.0).cast<double>().matrix();
}

}  // namespace

Mlp Mlp::random(std::span<const int> widths, Activation activation, Rng& rng) {
  check_widths(widths);
  Mlp net;
  net.activation = activation;
  for (std::size_t i = 0; i + 1 < widths.size(); ++i) {
    const int in = widths[i];
    const int out = widths[i + 1];
    const double bound = 1.0 / std::sqrt(static_cast<double>(in));
    std::uniform_real_distribution<double> uniform(-bound, bound);
    DenseLayer layer{Matrix(out, in), Vector(out)};
    // Row-major fill keeps the draw order independent of Eigen's storage order.
    for (int r = 0; r < out; ++r)
      for (int c = 0; c < in; ++c) layer.weight(r, c) = uniform(rng);
    for (int r = 0; r < out; ++r) layer.bias(r) = uniform(rng);
    net.layers.push_back(std::move(layer));
  }
  return net;
}

Mlp Mlp::zeros(std::span<const int> widths, Activation activation) {
  check_widths(widths);
  Mlp net;
  net.activation = activation;
  for (std::size_t i = 0; i + 1 < widths.size(); ++i) {
    net.layers.push_back({Matrix::Zero(widths[i + 1], widths[i]), Vector::Zero(widths[i + 1])});
  }
  return net;
}

std::vector<int> Mlp::widths() const {
  std::vector<int> w;
  if (layers.empty()) return w;
  w.push_back(static_cast<int>(layers.front().weight.cols()));
  for (const auto& layer : layers) w.push_back(static_cast<int>(layer.weight.rows()));
  return w;
}

int Mlp::input_width() const {
  return layers.empty() ? 0 : static_cast<int>(layers.front().weight.cols());
}

int Mlp::output_width() const {
  return layers.empty() ? 0 : static_cast<int>(layers.back().weight.rows());
}

std::size_t Mlp::parameter_count() const {
  std::size_t n = 0;
  for (const auto& layer : layers) n += layer.weight.size() + layer.bias.size();
  return n;
}

Mlp Mlp::zeros_like() const {
  Mlp out;
  out.activation = activation;
  for (const auto& layer : layers) {
    out.layers.push_back({Matrix::Zero(layer.weight.rows(), layer.weight.cols()),
                          Vector::Zero(layer.bias.size())});
  }
  return out;
}

Mlp& Mlp::operator+=(const Mlp& other) {
  require_dimension(layers.size(), other.layers.size(), "mlp accumulate");
  for (std::size_t i = 0; i < layers.size(); ++i) {
    layers[i].weight += other.layers[i].weight;
    layers[i].bias += other.layers[i].bias;
  }
  return *this;
}

Mlp& Mlp::operator*=(double factor) {
  for (auto& layer : layers) {
    layer.weight *= factor;
    layer.bias *= factor;
  }
  return *this;
}

bool operator==(const Mlp& a, const Mlp& b) {
  if (a.activation != b.activation || a.layers.size() != b.layers.size()) return false;
  for (std::size_t i = 0; i < a.layers.size(); ++i) {
    const auto& la = a.layers[i];
    const auto& lb = b.layers[i];
    if (la.weight.rows() != lb.weight.rows() || la.weight.cols() != lb.weight.cols()) return false;
    if (la.bias.size() != lb.bias.size()) return false;
    if (la.weight != lb.weight || la.bias != lb.bias) return false;
  }
  return true;
}

void validate(const Mlp& net) {
  if (net.layers.empty()) throw DimensionError("mlp has no layers");
  for (std::size_t i = 0; i < net.layers.size(); ++i) {
    const auto& layer = net.layers[i];
    if (layer.weight.rows() == 0 || layer.weight.cols() == 0)
      throw DimensionError("mlp layer " + std::to_string(i) + " has an empty weight matrix");
    require_dimension(layer.weight.rows(), layer.bias.size(), "mlp bias");
    if (i > 0) require_dimension(net.layers[i - 1].weight.rows(), layer.weight.cols(), "mlp layer chain");
  }
}

MlpTape mlp_forward_recorded(const Mlp& net, const Matrix& inputs) {
  require_dimension(net.input_width(), inputs.rows(), "mlp input");
  MlpTape tape;
  tape.inputs.reserve(net.layers.size());
  Matrix current = inputs;
  for (std::size_t i = 0; i < net.layers.size(); ++i) {
    const auto& layer = net.layers[i];
    Matrix pre = layer.weight * current;
    pre.colwise() += layer.bias;
    tape.inputs.push_back(std::move(current));
    const bool hidden = i + 1 < net.layers.size();
    current = hidden ? activate(pre, net.activation) : std::move(pre);
  }
  tape.output = std::move(current);
  return tape;
}

Matrix mlp_forward(const Mlp& net, const Matrix& inputs) {
  require_dimension(net.input_width(), inputs.rows(), "mlp input");
  Matrix current = inputs;
  for (std::size_t i = 0; i < net.layers.size(); ++i) {
    const auto& layer = net.layers[i];
    Matrix pre = layer.weight * current;
    pre.colwise() += layer.bias;
    current = i + 1 < net.layers.size() ? activate(pre, net.activation) : std::move(pre);
  }
  return current;
}

Vector mlp_forward(const Mlp& net, const Vector& input) {
  return mlp_forward(net, Matrix(input));
}

MlpGradient mlp_backward(const Mlp& net, const MlpTape& tape, const Matrix& cotangent) {
  require_dimension(net.output_width(), cotangent.rows(), "mlp cotangent");
  require_dimension(tape.output.cols(), cotangent.cols(), "mlp cotangent batch");
  MlpGradient grad{net.zeros_like(), Matrix()};
  Matrix upstream = cotangent;  // d/d(layer output)
  for (std::size_t k = net.layers.size(); k-- > 0;) {
    const bool hidden = k + 1 < net.layers.size();
    Matrix d_pre = hidden ? Matrix(upstream.cwiseProduct(activation_slope(tape.inputs[k + 1], net.activation)))
                          : upstream;
    grad.params.layers[k].weight.noalias() = d_pre * tape.inputs[k].transpose();
    grad.params.layers[k].bias = d_pre.rowwise().sum();
    upstream = net.layers[k].weight.transpose() * d_pre;
  }
  grad.input = std::move(upstream);
  return grad;
}

MlpGradient mlp_gradient(const Mlp& net, const Matrix& inputs, const Matrix& output_cotangents) {
  return mlp_backward(net, mlp_forward_recorded(net, inputs), output_cotangents);
}

MlpGradient mlp_gradient(const Mlp& net, const Vector& input, const Vector& output_cotangent) {
  return mlp_gradient(net, Matrix(input), Matrix(output_cotangent));
}

void append_parameters(const Mlp& net, std::vector<double>& out) {
  for (const auto& layer : net.layers) {
    for (Eigen::Index r = 0; r < layer.weight.rows(); ++r)
      for (Eigen::Index c = 0; c < layer.weight.cols(); ++c) out.push_back(layer.weight(r, c));
    for (Eigen::Index r = 0; r < layer.bias.size(); ++r) out.push_back(layer.bias(r));
  }
}

std::size_t assign_parameters(Mlp& net, std::span<const double> values) {
  if (values.size() < net.parameter_count())
    throw DimensionError("not enough values to assign mlp parameters");
  std::size_t i = 0;
  for (auto& layer : net.layers) {
    for (Eigen::Index r = 0; r < layer.weight.rows(); ++r)
      for (Eigen::Index c = 0; c < layer.weight.cols(); ++c) layer.weight(r, c) = values[i++];
    for (Eigen::Index r = 0; r < layer.bias.size(); ++r) layer.bias(r) = values[i++];
  }
  return i;
}

AdamOptimizer::AdamOptimizer(std::size_t size, AdamConfig config)
    : config_(config), m_(size, 0.0), v_(size, 0.0) {
  if (!(config_.learning_rate > 0.0) || !(config_.epsilon > 0.0) || config_.beta1 < 0.0 ||
      config_.beta1 >= 1.0 || config_.beta2 < 0.0 || config_.beta2 >= 1.0) {
    throw std::invalid_argument("invalid optimizer configuration");
  }
}

bool AdamOptimizer::step(std::span<double> params, std::span<const double> grads) {
  require_dimension(m_.size(), params.size(), "optimizer parameters");
  require_dimension(m_.size(), grads.size(), "optimizer gradients");
  for (double g : grads) {
    if (!std::isfinite(g)) return false;
  }
  ++steps_;
  const double t = static_cast<double>(steps_);
  const double correction1 = 1.0 - std::pow(config_.beta1, t);
  const double correction2 = 1.0 - std::pow(config_.beta2, t);
  for (std::size_t i = 0; i < params.size(); ++i) {
    const double g = grads[i];
    m_[i] = config_.beta1 * m_[i] + (1.0 - config_.beta1) * g;
    v_[i] = config_.beta2 * v_[i] + (1.0 - config_.beta2) * g * g;
    const double m_hat = m_[i] / correction1;
    const double v_hat = v_[i] / correction2;
    params[i] -= config_.learning_rate * m_hat / (std::sqrt(v_hat) + config_.epsilon);
  }
  return true;
}

bool AdamOptimizer::step(Mlp& net, const Mlp& grads) {
  std::vector<double> p;
  std::vector<double> g;
  append_parameters(net, p);
  append_parameters(grads, g);
  if (!step(std::span<double>(p), std::span<const double>(g))) return false;
  assign_parameters(net, p);
  return true;
}

}  // namespace priorflow
