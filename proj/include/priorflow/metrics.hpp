#pragma once

#include "priorflow/control.hpp"
#include "priorflow/flow.hpp"

#include <ostream>
#include <vector>

namespace priorflow {

/// A target attribute, the attribute interfering with it, and the
/// distribution actually sampled from (a std of zero is a point sampler).
struct ExclusivePair {
  Gaussian1d target;
  Gaussian1d interferer;
  Gaussian1d sampler;
};

/// Sampler centred on the target with std scaled by lambda.
ExclusivePair scaled_sampler_pair(const Gaussian1d& target, const Gaussian1d& interferer, double lambda);

/// Probability under the sampler of landing on the target's side of the
/// crossing point z*: CDF(z*) when the target lies left of the interferer,
/// 1 - CDF(z*) otherwise.
double surpass_probability(const ExclusivePair& pair);

struct QuadratureConfig {
  int nodes = 20001;           // odd, composite Simpson
  double sampler_sigmas = 10;  // integration reaches this far into the sampler's tail
};

/// Integral over the target's side of z* of sampler(z) * (target(z) - interferer(z)).
/// Throws NumericalError when the node spacing cannot resolve the sampler.
double difference_expectation(const ExclusivePair& pair, const QuadratureConfig& quad = {});

struct SweepRow {
  double param = 0.0;
  double surpass_prob = 0.0;
  double diff_expectation = 0.0;
};

std::vector<SweepRow> lambda_sweep(const Gaussian1d& target, const Gaussian1d& interferer,
                                   std::span<const double> lambdas, const QuadratureConfig& quad = {});

struct AlphaRow {
  double alpha = 0.0;
  double mean_margin = 0.0;  // mean of log p(x|a) - log p(x|b)
};

struct AlphaSweep {
  std::vector<AlphaRow> rows;
  bool monotone = false;  // reported only; not guaranteed
};

/// For each alpha, `count` controlled samples with weights (alpha, 1 - alpha)
/// on (a, b) and the mean latent log-density margin.
AlphaSweep alpha_sweep(const FlowModel& model, const AttributeId& a, const AttributeId& b,
                       std::span<const double> alphas, double lambda, std::size_t count, Rng& rng);

/// Parses "start:stop:step" (inclusive, either direction), a single value, or
/// a comma-separated list.
std::vector<double> parse_grid(const std::string& text);

/// Header `param,surpass_prob,diff_expectation`, three decimals, LF endings.
void write_sweep_csv(std::ostream& out, std::span<const SweepRow> rows);
void write_alpha_csv(std::ostream& out, const AlphaSweep& sweep);

}  // namespace priorflow
