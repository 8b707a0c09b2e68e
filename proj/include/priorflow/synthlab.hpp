#pragma once

#include "priorflow/dataset.hpp"
#include "priorflow/priors.hpp"

#include <span>
#include <variant>
#include <vector>

namespace priorflow {

struct MixtureComponent {
  double weight = 1.0;
  DiagonalGaussian gaussian;
};

struct GaussianMixture {
  std::vector<MixtureComponent> components;
};

/// u ~ base; x_0 = u_0, x_1 = u_1 + curvature * (u_0 - base.mean_0)^2, other
/// coordinates unchanged. Unit Jacobian.
struct BananaWarp {
  DiagonalGaussian base;
  double curvature = 0.0;
};

/// Polar arc in the first two coordinates around `center`:
///   r = radius * exp(radial_std * v),  theta = mid_angle + (span / 2) * tanh(w),
/// with v, w ~ N(0, 1). Remaining coordinates ~ N(center_i, extra_std^2).
struct RingArc {
  Vector center;
  double radius = 1.0;
  double radial_std = 0.1;
  double mid_angle = 0.0;
  double span = 3.14159265358979;  // must lie in (0, 2 pi)
  double extra_std = 1.0;
};

enum class DistributionKind { gaussian_mixture, banana_warp, ring_arc };

struct AttributeDistribution {
  AttributeId id;
  std::variant<GaussianMixture, BananaWarp, RingArc> shape;

  DistributionKind kind() const;
  Eigen::Index dim() const;
};

void validate(const AttributeDistribution& dist);

/// Exact log density (-inf outside the support).
double synth_log_density(const AttributeDistribution& dist, const Vector& x);

/// Draws `count` points, one per column.
PointBatch synth_sample(const AttributeDistribution& dist, std::size_t count, Rng& rng);

/// `per_attr_count` points from each distribution, seeded by `seed`.
LatentDataset generate_dataset(std::span<const AttributeDistribution> dists, std::size_t per_attr_count,
                               std::uint64_t seed);

/// Two skewed, partially overlapping two-component mixtures ("neg", "pos")
/// and two banana warps ("sports", "world"). Requires dim >= 2; coordinates
/// beyond the second are unit Gaussians.
std::vector<AttributeDistribution> default_scene(Eigen::Index dim = 2);

/// Two well-separated symmetric mixtures ("a", "b"), mirror images of each other.
std::vector<AttributeDistribution> separated_pair_scene(Eigen::Index dim = 2);

}  // namespace priorflow
