#include "priorflow/priors.hpp"

#include <algorithm>
#include <cmath>

namespace priorflow {

DiagonalGaussian::DiagonalGaussian(Vector m, Vector s) : mean(std::move(m)), std(std::move(s)) {
  require_dimension(mean.size(), std.size(), "gaussian std");
  for (Eigen::Index i = 0; i < std.size(); ++i) {
    if (!(std(i) > 0.0) || !std::isfinite(std(i)))
      throw std::invalid_argument("gaussian std entries must be positive and finite");
    if (!std::isfinite(mean(i))) throw std::invalid_argument("gaussian mean entries must be finite");
  }
}

DiagonalGaussian DiagonalGaussian::standard(Eigen::Index dim) {
  return DiagonalGaussian(Vector::Zero(dim), Vector::Ones(dim));
}

DiagonalGaussian DiagonalGaussian::isotropic(Vector mean, double std) {
  const auto n = mean.size();
  return DiagonalGaussian(std::move(mean), Vector::Constant(n, std));
}

double gaussian_log_pdf(double mean, double std, double z) {
  const double u = (z - mean) / std;
  return -0.5 * (kLogTwoPi + u * u) - std::log(std);
}

double gaussian_pdf(double mean, double std, double z) {
  return std::exp(gaussian_log_pdf(mean, std, z));
}

double gaussian_log_pdf(const DiagonalGaussian& g, const Vector& z) {
  require_dimension(g.dim(), z.size(), "gaussian_log_pdf");
  double total = 0.0;
  for (Eigen::Index i = 0; i < z.size(); ++i) total += gaussian_log_pdf(g.mean(i), g.std(i), z(i));
  return total;
}

double gaussian_cdf_1d(double mu, double sigma, double t) {
  if (!(sigma > 0.0)) throw std::invalid_argument("gaussian_cdf_1d: sigma must be positive");
  // erfc keeps full relative accuracy in the lower tail.
  return 0.5 * std::erfc(-(t - mu) / (sigma * std::sqrt(2.0)));
}

Vector sample(const DiagonalGaussian& g, double lambda, Rng& rng) {
  if (!(lambda >= 0.0)) throw std::invalid_argument("sampling scale lambda must be >= 0");
  if (lambda == 0.0) return g.mean;
  std::normal_distribution<double> normal(0.0, 1.0);
  Vector z(g.dim());
  for (Eigen::Index i = 0; i < z.size(); ++i) z(i) = g.mean(i) + g.std(i) * (lambda * normal(rng));
  return z;
}

PointBatch sample(const DiagonalGaussian& g, double lambda, std::size_t count, Rng& rng) {
  PointBatch out(g.dim(), static_cast<Eigen::Index>(count));
  for (std::size_t j = 0; j < count; ++j) out.col(static_cast<Eigen::Index>(j)) = sample(g, lambda, rng);
  return out;
}

IsotropyStats isotropy_stats(const DiagonalGaussian& g) {
  IsotropyStats s;
  if (g.dim() == 0) return s;
  s.max = g.std.maxCoeff();
  s.min = g.std.minCoeff();
  // Rounding in the mean can otherwise step outside [min, max] for equal entries.
  s.avg = std::clamp(g.std.mean(), s.min, s.max);
  s.std = std::sqrt((g.std.array() - s.avg).square().mean());
  return s;
}

}  // namespace priorflow
