#pragma once

#include "priorflow/flow.hpp"
#include "priorflow/priors.hpp"

#include <optional>
#include <span>
#include <utility>
#include <vector>

namespace priorflow {

/// Tolerance on the sum of interpolation weights.
inline constexpr double kWeightSumTolerance = 1e-9;

struct WeightedAttribute {
  AttributeId attr;
  double weight = 0.0;
};

/// Weights must sum to one but may leave [0, 1] (extension past an attribute).
struct ControlSpec {
  std::vector<WeightedAttribute> terms;
  double lambda = 1.0;
  std::optional<Vector> center_offset;
};

void validate(const ControlSpec& spec);

/// Parses "pos=0.7,neg=0.3".
std::vector<WeightedAttribute> parse_weights(const std::string& text);
std::string format_weights(std::span<const WeightedAttribute> terms);

/// N(sum a_i mu_i, sum (a_i sigma_i)^2 I), the law of sum a_i z_i for
/// independent z_i ~ N(mu_i, sigma_i^2).
DiagonalGaussian interpolate_distribution(std::span<const DiagonalGaussian> priors, std::span<const double> weights);

enum class IntersectionCase { equal_variance, two_roots, no_root_in_interval };

const char* to_string(IntersectionCase c);

/// Where two univariate Gaussian densities coincide.
///
/// With equal variances the crossing is the midpoint of the means. Otherwise
/// log N(z; a) = log N(z; b) is the quadratic A z^2 + B z + C = 0 with
///   A = 1/sb^2 - 1/sa^2,  B = 2 (ma/sa^2 - mb/sb^2),
///   C = log(sb^2/sa^2) - ma^2/sa^2 + mb^2/sb^2,
/// and the root between the means is selected. When neither root lies between
/// the means the result reports both roots and falls back to the midpoint with
/// alpha_star = 0.5.
struct IntersectionResult {
  double z_hat = 0.0;
  /// z_hat = alpha_star * mean_a + (1 - alpha_star) * mean_b.
  double alpha_star = 0.5;
  IntersectionCase kind = IntersectionCase::equal_variance;
  std::optional<std::pair<double, double>> both_roots;  // ascending
  double discriminant = 0.0;
};

/// Throws std::invalid_argument for identical distributions or non-positive std.
IntersectionResult intersection_center_1d(const Gaussian1d& a, const Gaussian1d& b);

/// Discriminant of the crossing quadratic in its factored, non-negative form.
double intersection_discriminant(const Gaussian1d& a, const Gaussian1d& b);

/// Projects both priors onto the line through their means (std along the
/// direction u is sqrt(sum u_i^2 sigma_i^2)) and solves the 1-D crossing.
/// Returns alpha with crossing point alpha * mu_a + (1 - alpha) * mu_b.
double intersection_alpha(const DiagonalGaussian& a, const DiagonalGaussian& b);
IntersectionResult intersection_on_line(const DiagonalGaussian& a, const DiagonalGaussian& b);

/// A point on the segment between the means where the full diagonal
/// densities are exactly equal, if one exists.
std::optional<Vector> equal_density_point(const DiagonalGaussian& a, const DiagonalGaussian& b);

/// Shift of `magnitude` prior-space units pointing from the interferer's mean
/// away through the target's mean.
Vector extension_offset(const DiagonalGaussian& target, const DiagonalGaussian& interferer, double magnitude = 0.2);

/// The prior-space distribution a spec samples from (before lambda scaling).
DiagonalGaussian control_distribution(const FlowModel& model, const ControlSpec& spec);

/// Returns a message when more attributes are combined than an intersection
/// subspace can hold (d > n + 1). Informational only.
std::optional<std::string> intersection_capacity_warning(const ControlSpec& spec, Eigen::Index dim);

/// Samples in prior space and maps each point back through the inverse flow.
/// One column per sample.
PointBatch controlled_sample(const FlowModel& model, const ControlSpec& spec, std::size_t count, Rng& rng);

}  // namespace priorflow
