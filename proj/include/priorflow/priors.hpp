#pragma once

#include "priorflow/types.hpp"

namespace priorflow {

/// N(mean, diag(std^2)).
struct DiagonalGaussian {
  Vector mean;
  Vector std;

  DiagonalGaussian() = default;
  /// Throws if dimensions differ or any std entry is not strictly positive.
  DiagonalGaussian(Vector mean, Vector std);

  static DiagonalGaussian standard(Eigen::Index dim);
  static DiagonalGaussian isotropic(Vector mean, double std);

  Eigen::Index dim() const { return mean.size(); }

  friend bool operator==(const DiagonalGaussian& a, const DiagonalGaussian& b) {
    return a.mean.size() == b.mean.size() && a.mean == b.mean && a.std == b.std;
  }
};

/// Univariate Gaussian. A zero std denotes a point mass (used for lambda = 0
/// samplers); densities are only defined for std > 0.
struct Gaussian1d {
  double mean = 0.0;
  double std = 1.0;
};

inline constexpr double kLogTwoPi = 1.8378770664093454835606594728112;

double gaussian_log_pdf(const DiagonalGaussian& g, const Vector& z);
double gaussian_log_pdf(double mean, double std, double z);
double gaussian_pdf(double mean, double std, double z);

/// Phi((t - mu) / sigma). Throws std::invalid_argument for sigma <= 0.
double gaussian_cdf_1d(double mu, double sigma, double t);

/// mean + std * eps, eps ~ N(0, lambda^2 I). lambda = 0 returns the mean exactly.
Vector sample(const DiagonalGaussian& g, double lambda, Rng& rng);

/// One sample per column.
PointBatch sample(const DiagonalGaussian& g, double lambda, std::size_t count, Rng& rng);

/// Statistics over the entries of std. `std` here is the population
/// standard deviation.
struct IsotropyStats {
  double max = 0.0;
  double min = 0.0;
  double avg = 0.0;
  double std = 0.0;
};

IsotropyStats isotropy_stats(const DiagonalGaussian& g);

}  // namespace priorflow
