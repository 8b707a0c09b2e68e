#pragma once

#include "priorflow/types.hpp"

#include <span>
#include <vector>

namespace priorflow {

enum class Activation { tanh, relu };

const char* to_string(Activation a);
Activation activation_from_string(const std::string& name);

struct DenseLayer {
  Matrix weight;  // out x in
  Vector bias;    // out
};

/// Feed-forward network. The activation applies to hidden layers only; the
/// final layer is affine.
struct Mlp {
  std::vector<DenseLayer> layers;
  Activation activation = Activation::tanh;

  /// Uniform init in [-1/sqrt(fan_in), 1/sqrt(fan_in)].
  static Mlp random(std::span<const int> widths, Activation activation, Rng& rng);
  static Mlp zeros(std::span<const int> widths, Activation activation);

  std::vector<int> widths() const;
  int input_width() const;
  int output_width() const;
  std::size_t parameter_count() const;

  /// A zero-valued network with the same shapes; used to hold gradients.
  Mlp zeros_like() const;

  Mlp& operator+=(const Mlp& other);
  Mlp& operator*=(double factor);
  friend bool operator==(const Mlp&, const Mlp&);
};

/// Checks that weight and bias shapes chain; throws DimensionError otherwise.
void validate(const Mlp& net);

Vector mlp_forward(const Mlp& net, const Vector& input);
Matrix mlp_forward(const Mlp& net, const Matrix& inputs);

/// Activations recorded by a forward pass, consumed by mlp_backward.
struct MlpTape {
  std::vector<Matrix> inputs;  // input to each layer; hidden entries are activations
  Matrix output;
};

MlpTape mlp_forward_recorded(const Mlp& net, const Matrix& inputs);

struct MlpGradient {
  Mlp params;    // same shapes as the network; summed over the batch
  Matrix input;  // one column per sample
};

/// Reverse pass for the scalar sum over samples of <output, cotangent>.
MlpGradient mlp_backward(const Mlp& net, const MlpTape& tape, const Matrix& cotangent);

MlpGradient mlp_gradient(const Mlp& net, const Vector& input, const Vector& output_cotangent);
MlpGradient mlp_gradient(const Mlp& net, const Matrix& inputs, const Matrix& output_cotangents);

/// Row-major flattening: per layer, weights then bias.
void append_parameters(const Mlp& net, std::vector<double>& out);
std::size_t assign_parameters(Mlp& net, std::span<const double> values);

struct AdamConfig {
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

/// Adaptive-moment optimizer over a flat parameter vector.
class AdamOptimizer {
 public:
  explicit AdamOptimizer(std::size_t size, AdamConfig config = {});

  /// Returns false, leaving params and state untouched, if any gradient
  /// entry is non-finite.
  bool step(std::span<double> params, std::span<const double> grads);

  /// Convenience overload for a single network.
  bool step(Mlp& net, const Mlp& grads);

  std::int64_t step_count() const noexcept { return steps_; }
  const AdamConfig& config() const noexcept { return config_; }
  std::span<const double> first_moment() const noexcept { return m_; }
  std::span<const double> second_moment() const noexcept { return v_; }

 private:
  AdamConfig config_;
  std::vector<double> m_;
  std::vector<double> v_;
  std::int64_t steps_ = 0;
};

}  // namespace priorflow
