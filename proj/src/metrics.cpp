#include "priorflow/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <sstream>

namespace priorflow {

namespace {

// Which side of z* the target occupies: -1 (left) or +1 (right).
int target_side(const ExclusivePair& pair) { return pair.target.mean <= pair.interferer.mean ? -1 : 1; }

double crossing(const ExclusivePair& pair) { return intersection_center_1d(pair.target, pair.interferer).z_hat; }

double density_gap(const ExclusivePair& pair, double z) {
  return gaussian_pdf(pair.target.mean, pair.target.std, z) -
         gaussian_pdf(pair.interferer.mean, pair.interferer.std, z);
}

std::string fixed3(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.3f", v);
  // Avoid printing "-0.000".
  if (std::string(buf) == "-0.000") return "0.000";
  return buf;
}

}  // namespace

ExclusivePair scaled_sampler_pair(const Gaussian1d& target, const Gaussian1d& interferer, double lambda) {
  if (!(lambda >= 0.0) || !std::isfinite(lambda)) throw std::invalid_argument("lambda must be finite and >= 0");
  return {target, interferer, {target.mean, lambda * target.std}};
}

double surpass_probability(const ExclusivePair& pair) {
  const double z_star = crossing(pair);
  const int side = target_side(pair);
  if (pair.sampler.std == 0.0) {
    return side < 0 ? (pair.sampler.mean < z_star ? 1.0 : 0.0) : (pair.sampler.mean > z_star ? 1.0 : 0.0);
  }
  if (!(pair.sampler.std > 0.0)) throw std::invalid_argument("sampler std must be >= 0");
  const double below = gaussian_cdf_1d(pair.sampler.mean, pair.sampler.std, z_star);
  return side < 0 ? below : gaussian_cdf_1d(-pair.sampler.mean, pair.sampler.std, -z_star);
}

double difference_expectation(const ExclusivePair& pair, const QuadratureConfig& quad) {
  const double z_star = crossing(pair);
  const int side = target_side(pair);
  const auto& s = pair.sampler;
  if (s.std == 0.0) {
    const bool inside = side < 0 ? s.mean < z_star : s.mean > z_star;
    return inside ? density_gap(pair, s.mean) : 0.0;
  }
  if (!(s.std > 0.0)) throw std::invalid_argument("sampler std must be >= 0");
  if (quad.nodes < 3 || quad.nodes % 2 == 0) throw std::invalid_argument("Simpson quadrature needs an odd node count >= 3");
  if (!(quad.sampler_sigmas > 0.0)) throw NumericalError("quadrature tail coverage must be positive");

  // Beyond sampler_sigmas the sampler weight (and hence the integrand) is negligible.
  const double reach = quad.sampler_sigmas * s.std;
  double lo = 0.0;
  double hi = 0.0;
  if (side < 0) {
    lo = s.mean - reach;
    hi = std::min(z_star, s.mean + reach);
  } else {
    lo = std::max(z_star, s.mean - reach);
    hi = s.mean + reach;
  }
  if (hi <= lo) return 0.0;
  const int intervals = quad.nodes - 1;
  const double h = (hi - lo) / intervals;
  if (h > 0.25 * s.std) throw NumericalError("quadrature step too coarse for the sampler width");

  auto integrand = [&](double z) { return gaussian_pdf(s.mean, s.std, z) * density_gap(pair, z); };
  double acc = integrand(lo) + integrand(hi);
  for (int i = 1; i < intervals; ++i) acc += (i % 2 ? 4.0 : 2.0) * integrand(lo + i * h);
  return acc * h / 3.0;
}

std::vector<SweepRow> lambda_sweep(const Gaussian1d& target, const Gaussian1d& interferer,
                                   std::span<const double> lambdas, const QuadratureConfig& quad) {
  std::vector<SweepRow> rows;
  rows.reserve(lambdas.size());
  for (double lambda : lambdas) {
    const auto pair = scaled_sampler_pair(target, interferer, lambda);
    rows.push_back({lambda, surpass_probability(pair), difference_expectation(pair, quad)});
  }
  return rows;
}

AlphaSweep alpha_sweep(const FlowModel& model, const AttributeId& a, const AttributeId& b,
                       std::span<const double> alphas, double lambda, std::size_t count, Rng& rng) {
  (void)model.prior(a);
  (void)model.prior(b);
  if (count == 0) throw std::invalid_argument("alpha sweep needs a positive sample count");
  AlphaSweep sweep;
  for (double alpha : alphas) {
    ControlSpec spec{{{a, alpha}, {b, 1.0 - alpha}}, lambda, std::nullopt};
    const PointBatch x = controlled_sample(model, spec, count, rng);
    const Vector margin = log_prob(model, a, x) - log_prob(model, b, x);
    sweep.rows.push_back({alpha, margin.mean()});
  }
  // Monotone in the sense that a larger alpha never lowers the margin.
  sweep.monotone = true;
  for (std::size_t i = 0; i < sweep.rows.size(); ++i) {
    for (std::size_t j = i + 1; j < sweep.rows.size(); ++j) {
      const auto& p = sweep.rows[i];
      const auto& q = sweep.rows[j];
      if ((p.alpha - q.alpha) * (p.mean_margin - q.mean_margin) < 0.0) sweep.monotone = false;
    }
  }
  return sweep;
}

std::vector<double> parse_grid(const std::string& text) {
  auto number = [&](const std::string& s) {
    std::size_t used = 0;
    double v = 0.0;
    try {
      v = std::stod(s, &used);
    } catch (const std::exception&) {
      used = 0;
    }
    if (used != s.size() || !std::isfinite(v)) throw std::invalid_argument("invalid grid value '" + s + "'");
    return v;
  };
  std::vector<double> out;
  if (text.find(':') != std::string::npos) {
    std::vector<std::string> parts;
    std::stringstream ss(text);
    std::string item;
    while (std::getline(ss, item, ':')) parts.push_back(item);
    if (parts.size() != 3) throw std::invalid_argument("grid must be start:stop:step");
    const double start = number(parts[0]);
    const double stop = number(parts[1]);
    const double step = std::abs(number(parts[2]));
    if (!(step > 0.0)) throw std::invalid_argument("grid step must be non-zero");
    const double span = std::abs(stop - start);
    const auto n = static_cast<long>(std::floor(span / step + 1e-9));
    if (n > 1000000) throw std::invalid_argument("grid has too many points");
    const double dir = stop >= start ? 1.0 : -1.0;
    for (long i = 0; i <= n; ++i) out.push_back(start + dir * static_cast<double>(i) * step);
    // Land exactly on the stop value when the step divides the span.
    if (std::abs(out.back() - stop) < 1e-9 * std::max(1.0, step)) out.back() = stop;
  } else {
    std::stringstream ss(text);
    std::string item;
    while (std::getline(ss, item, ',')) out.push_back(number(item));
  }
  if (out.empty()) throw std::invalid_argument("empty grid");
  return out;
}

void write_sweep_csv(std::ostream& out, std::span<const SweepRow> rows) {
  out << "param,surpass_prob,diff_expectation\n";
  for (const auto& r : rows) {
    out << fixed3(r.param) << ',' << fixed3(r.surpass_prob) << ',' << fixed3(r.diff_expectation) << '\n';
  }
}

void write_alpha_csv(std::ostream& out, const AlphaSweep& sweep) {
  out << "param,mean_log_margin\n";
  for (const auto& r : sweep.rows) out << fixed3(r.alpha) << ',' << fixed3(r.mean_margin) << '\n';
}

}  // namespace priorflow
