#pragma once

#include "priorflow/dataset.hpp"
#include "priorflow/numerics.hpp"
#include "priorflow/priors.hpp"

#include <map>
#include <span>
#include <vector>

namespace priorflow {

/// Affine coupling: pass-through coordinates (mask true) are copied and
/// condition an elementwise affine map of the remaining coordinates,
///   y_t = x_t * exp(s(x_p)) + t(x_p),  s squashed to clamp * tanh(raw / clamp).
struct CouplingLayer {
  std::vector<bool> mask;
  Mlp scale_net;
  Mlp translate_net;
  double scale_clamp = 2.0;

  Eigen::Index dim() const { return static_cast<Eigen::Index>(mask.size()); }
  std::vector<Eigen::Index> pass_indices() const;
  std::vector<Eigen::Index> transformed_indices() const;
};

void validate(const CouplingLayer& layer);

/// The invertible map z = F(x) plus one diagonal-Gaussian prior per attribute.
struct FlowModel {
  Eigen::Index dim = 0;
  std::vector<CouplingLayer> layers;
  std::map<AttributeId, DiagonalGaussian> priors;

  const DiagonalGaussian& prior(const AttributeId& attr) const;
  std::vector<AttributeId> attributes() const;
};

void validate(const FlowModel& model);

struct FlowArchitecture {
  Eigen::Index dim = 2;
  int num_layers = 6;
  std::vector<int> hidden = {64, 64};
  Activation activation = Activation::tanh;
  double scale_clamp = 2.0;
};

/// Layers with alternating half masks. The output layer of each subnet starts
/// at zero, so the initial map is the identity. Priors start at N(0, I).
FlowModel make_flow(const FlowArchitecture& arch, std::span<const AttributeId> attributes, Rng& rng);

struct Transformed {
  Vector point;
  double log_det = 0.0;
};

struct TransformedBatch {
  PointBatch points;
  Vector log_det;  // per column
};

Transformed coupling_forward(const CouplingLayer& layer, const Vector& x);
Transformed coupling_inverse(const CouplingLayer& layer, const Vector& z);
TransformedBatch coupling_forward(const CouplingLayer& layer, const PointBatch& x);
TransformedBatch coupling_inverse(const CouplingLayer& layer, const PointBatch& z);

Transformed flow_forward(const FlowModel& model, const Vector& x);
TransformedBatch flow_forward(const FlowModel& model, const PointBatch& x);
Vector flow_inverse(const FlowModel& model, const Vector& z);
PointBatch flow_inverse(const FlowModel& model, const PointBatch& z);

/// log p(x | attr) = log prior(F(x) | attr) + log |det dF/dx|.
double log_prob(const FlowModel& model, const AttributeId& attr, const Vector& x);
Vector log_prob(const FlowModel& model, const AttributeId& attr, const PointBatch& x);

// ---------------------------------------------------------------------------
// Training

enum class PriorMode { fixed, learned };

const char* to_string(PriorMode mode);
PriorMode prior_mode_from_string(const std::string& name);

struct TrainConfig {
  int epochs = 100;
  int batch_size = 256;
  double learning_rate = 1e-3;
  std::uint64_t seed = 0;
  PriorMode prior_mode = PriorMode::learned;
  double clip_norm = 10.0;
};

void validate(const TrainConfig& cfg);

/// Gradient of the mean negative log-likelihood. Prior gradients are taken
/// with respect to the mean and log of the std.
struct FlowGradient {
  std::vector<Mlp> scale_nets;
  std::vector<Mlp> translate_nets;
  std::map<AttributeId, Vector> prior_mean;
  std::map<AttributeId, Vector> prior_log_std;
};

struct Objective {
  double loss = 0.0;  // mean NLL over the batch
  FlowGradient grad;
};

/// labels[j] names the attribute of column j.
Objective nll_objective(const FlowModel& model, const PointBatch& x, std::span<const AttributeId> labels);

/// Flat parameter order: per layer scale net then translate net, then (in
/// learned mode) per attribute mean followed by log std.
std::vector<double> pack_parameters(const FlowModel& model, PriorMode mode);
void unpack_parameters(FlowModel& model, std::span<const double> values, PriorMode mode);
std::vector<double> pack_gradient(const FlowModel& model, const FlowGradient& grad, PriorMode mode);

struct TrainResult {
  FlowModel model;
  std::vector<double> loss_trace;  // mean training NLL per epoch
  std::size_t skipped_steps = 0;   // steps dropped for non-finite gradients
};

TrainResult train(FlowModel model, const LatentDataset& data, const TrainConfig& cfg);

/// Mean NLL of a dataset under the model.
double mean_nll(const FlowModel& model, const LatentDataset& data);

// ---------------------------------------------------------------------------
// Serialization: versioned JSON text, bit-exact round trip.

inline constexpr int kModelFormatVersion = 1;

std::string serialize_model(const FlowModel& model);
FlowModel deserialize_model(const std::string& text);
void save_model(const FlowModel& model, const std::filesystem::path& path);
FlowModel load_model(const std::filesystem::path& path);

}  // namespace priorflow

namespace priorflow {

/// log |det J| of the forward map from a central-difference Jacobian.
double finite_difference_log_det(const FlowModel& model, const Vector& x, double step = 1e-5);

}  // namespace priorflow
