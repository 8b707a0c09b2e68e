#include "priorflow/control.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

namespace priorflow {

void validate(const ControlSpec& spec) {
  if (spec.terms.empty()) throw std::invalid_argument("control spec needs at least one attribute");
  double sum = 0.0;
  for (const auto& t : spec.terms) {
    if (!std::isfinite(t.weight)) throw std::invalid_argument("weight for '" + t.attr + "' is not finite");
    sum += t.weight;
  }
  if (std::abs(sum - 1.0) > kWeightSumTolerance) {
    std::ostringstream msg;
    msg.precision(12);
    msg << "control weights must sum to 1 (got " << sum << ")";
    throw std::invalid_argument(msg.str());
  }
  if (!(spec.lambda >= 0.0) || !std::isfinite(spec.lambda))
    throw std::invalid_argument("sampling scale lambda must be finite and >= 0");
  if (spec.center_offset && !spec.center_offset->allFinite())
    throw std::invalid_argument("center offset must be finite");
}

namespace {

std::string trim(const std::string& s) {
  const auto first = s.find_first_not_of(" \t");
  if (first == std::string::npos) return {};
  return s.substr(first, s.find_last_not_of(" \t") - first + 1);
}

}  // namespace

std::vector<WeightedAttribute> parse_weights(const std::string& text) {
  std::vector<WeightedAttribute> out;
  std::stringstream ss(text);
  std::string raw;
  while (std::getline(ss, raw, ',')) {
    const std::string item = trim(raw);
    const auto eq = item.find('=');
    if (eq == std::string::npos || eq == 0 || eq + 1 == item.size())
      throw std::invalid_argument("malformed weight term '" + item + "' (expected name=weight)");
    WeightedAttribute term;
    term.attr = trim(item.substr(0, eq));
    const std::string value = trim(item.substr(eq + 1));
    if (term.attr.empty() || value.empty())
      throw std::invalid_argument("malformed weight term '" + item + "' (expected name=weight)");
    std::size_t used = 0;
    try {
      term.weight = std::stod(value, &used);
    } catch (const std::exception&) {
      used = 0;
    }
    if (used != value.size()) throw std::invalid_argument("malformed weight value '" + value + "'");
    for (const auto& existing : out) {
      if (existing.attr == term.attr) throw std::invalid_argument("attribute '" + term.attr + "' given twice");
    }
    out.push_back(std::move(term));
  }
  if (out.empty()) throw std::invalid_argument("empty weight specification");
  return out;
}

std::string format_weights(std::span<const WeightedAttribute> terms) {
  std::ostringstream out;
  for (std::size_t i = 0; i < terms.size(); ++i) {
    if (i) out << ',';
    out << terms[i].attr << '=' << terms[i].weight;
  }
  return out.str();
}

DiagonalGaussian interpolate_distribution(std::span<const DiagonalGaussian> priors, std::span<const double> weights) {
  if (priors.empty()) throw std::invalid_argument("interpolation needs at least one distribution");
  require_dimension(priors.size(), weights.size(), "interpolation weights");
  double sum = 0.0;
  for (double w : weights) sum += w;
  if (std::abs(sum - 1.0) > kWeightSumTolerance) throw std::invalid_argument("interpolation weights must sum to 1");
  const auto n = priors.front().dim();
  Vector mean = Vector::Zero(n);
  Vector var = Vector::Zero(n);
  for (std::size_t i = 0; i < priors.size(); ++i) {
    require_dimension(n, priors[i].dim(), "interpolated prior");
    mean += weights[i] * priors[i].mean;
    var += (weights[i] * priors[i].std).array().square().matrix();
  }
  if ((var.array() <= 0.0).any())
    throw std::invalid_argument("interpolated distribution is degenerate (all weighted stds vanish)");
  return DiagonalGaussian(std::move(mean), var.cwiseSqrt());
}

const char* to_string(IntersectionCase c) {
  switch (c) {
    case IntersectionCase::equal_variance:
      return "equal_variance";
    case IntersectionCase::two_roots:
      return "two_roots";
    case IntersectionCase::no_root_in_interval:
      return "no_root_in_interval";
  }
  return "?";
}

double intersection_discriminant(const Gaussian1d& a, const Gaussian1d& b) {
  const double va = a.std * a.std;
  const double vb = b.std * b.std;
  const double dm = a.mean - b.mean;
  // (va - vb) * log(va / vb) >= 0 for all positive va, vb.
  return 4.0 / (va * vb) * (dm * dm + (va - vb) * std::log(va / vb));
}

namespace {

double alpha_for(double z, double mean_a, double mean_b) { return (z - mean_b) / (mean_a - mean_b); }

// log N(z; a) - log N(z; b)
double log_ratio(const Gaussian1d& a, const Gaussian1d& b, double z) {
  const double ua = (z - a.mean) / a.std;
  const double ub = (z - b.mean) / b.std;
  return 0.5 * (ub * ub - ua * ua) + std::log(b.std / a.std);
}

double polish_root(const Gaussian1d& a, const Gaussian1d& b, double z) {
  for (int i = 0; i < 3; ++i) {
    const double f = log_ratio(a, b, z);
    const double slope = (z - b.mean) / (b.std * b.std) - (z - a.mean) / (a.std * a.std);
    if (f == 0.0 || slope == 0.0 || !std::isfinite(slope)) break;
    const double next = z - f / slope;
    if (!std::isfinite(next) || std::abs(log_ratio(a, b, next)) >= std::abs(f)) break;
    z = next;
  }
  return z;
}

}  // namespace

IntersectionResult intersection_center_1d(const Gaussian1d& a, const Gaussian1d& b) {
  if (!(a.std > 0.0) || !(b.std > 0.0)) throw std::invalid_argument("intersection requires positive stds");
  if (a.mean == b.mean && a.std == b.std)
    throw std::invalid_argument("identical distributions intersect everywhere");
  IntersectionResult r;
  r.discriminant = intersection_discriminant(a, b);
  const double lo = std::min(a.mean, b.mean);
  const double hi = std::max(a.mean, b.mean);
  if (a.std == b.std) {
    r.kind = IntersectionCase::equal_variance;
    r.z_hat = 0.5 * (a.mean + b.mean);
    r.alpha_star = 0.5;
    return r;
  }
  const double va = a.std * a.std;
  const double vb = b.std * b.std;
  const double A = 1.0 / vb - 1.0 / va;
  const double B = 2.0 * (a.mean / va - b.mean / vb);
  const double C = std::log(vb / va) - a.mean * a.mean / va + b.mean * b.mean / vb;
  // Cancellation-free pair of roots.
  const double q = -0.5 * (B + std::copysign(std::sqrt(r.discriminant), B));
  double r1 = q / A;
  double r2 = q != 0.0 ? C / q : -r1;
  r1 = polish_root(a, b, r1);
  r2 = polish_root(a, b, r2);
  if (r1 > r2) std::swap(r1, r2);
  r.both_roots = std::make_pair(r1, r2);
  const bool in1 = r1 >= lo && r1 <= hi;
  const bool in2 = r2 >= lo && r2 <= hi;
  if ((in1 || in2) && a.mean != b.mean) {
    r.kind = IntersectionCase::two_roots;
    r.z_hat = in1 ? r1 : r2;
    r.alpha_star = alpha_for(r.z_hat, a.mean, b.mean);
  } else {
    r.kind = IntersectionCase::no_root_in_interval;
    r.z_hat = 0.5 * (a.mean + b.mean);
    r.alpha_star = 0.5;
  }
  return r;
}

IntersectionResult intersection_on_line(const DiagonalGaussian& a, const DiagonalGaussian& b) {
  require_dimension(a.dim(), b.dim(), "intersection_on_line");
  const Vector d = b.mean - a.mean;
  const double length = d.norm();
  if (!(length > 0.0)) throw std::invalid_argument("intersection along a line needs distinct means");
  const Vector u = d / length;
  const double sa = std::sqrt(u.cwiseProduct(a.std).squaredNorm());
  const double sb = std::sqrt(u.cwiseProduct(b.std).squaredNorm());
  auto r = intersection_center_1d({0.0, sa}, {length, sb});
  // 1-D coordinate t maps to mu_a + t u, i.e. alpha = 1 - t / length.
  if (r.kind != IntersectionCase::no_root_in_interval) r.alpha_star = 1.0 - r.z_hat / length;
  return r;
}

double intersection_alpha(const DiagonalGaussian& a, const DiagonalGaussian& b) {
  return intersection_on_line(a, b).alpha_star;
}

std::optional<Vector> equal_density_point(const DiagonalGaussian& a, const DiagonalGaussian& b) {
  require_dimension(a.dim(), b.dim(), "equal_density_point");
  const Vector d = b.mean - a.mean;
  if (!(d.norm() > 0.0)) return std::nullopt;
  // Along z(t) = mu_a + t d, log N(z; a) - log N(z; b) is a quadratic in t.
  auto f = [&](double t) {
    const Vector z = a.mean + t * d;
    return gaussian_log_pdf(a, z) - gaussian_log_pdf(b, z);
  };
  double lo = 0.0;
  double hi = 1.0;
  double flo = f(lo);
  const double fhi = f(hi);
  if (flo == 0.0) return a.mean;
  if (fhi == 0.0) return b.mean;
  if ((flo > 0.0) == (fhi > 0.0)) return std::nullopt;
  // The endpoints bracket exactly one crossing; bisect to the last representable step.
  for (int i = 0; i < 200 && hi - lo > 0.0; ++i) {
    const double mid = 0.5 * (lo + hi);
    if (mid <= lo || mid >= hi) break;
    const double fm = f(mid);
    if (fm == 0.0) {
      lo = hi = mid;
      break;
    }
    if ((fm > 0.0) == (flo > 0.0)) {
      lo = mid;
      flo = fm;
    } else {
      hi = mid;
    }
  }
  const double t = std::abs(f(lo)) <= std::abs(f(hi)) ? lo : hi;
  return Vector(a.mean + t * d);
}

Vector extension_offset(const DiagonalGaussian& target, const DiagonalGaussian& interferer, double magnitude) {
  require_dimension(target.dim(), interferer.dim(), "extension_offset");
  const Vector d = interferer.mean - target.mean;
  const double length = d.norm();
  if (!(length > 0.0)) throw std::invalid_argument("extension needs distinct target and interferer means");
  return -magnitude * d / length;
}

DiagonalGaussian control_distribution(const FlowModel& model, const ControlSpec& spec) {
  validate(spec);
  std::vector<DiagonalGaussian> priors;
  std::vector<double> weights;
  for (const auto& t : spec.terms) {
    priors.push_back(model.prior(t.attr));
    weights.push_back(t.weight);
  }
  auto g = interpolate_distribution(priors, weights);
  if (spec.center_offset) {
    require_dimension(model.dim, spec.center_offset->size(), "center offset");
    g.mean += *spec.center_offset;
  }
  return g;
}

std::optional<std::string> intersection_capacity_warning(const ControlSpec& spec, Eigen::Index dim) {
  const auto d = static_cast<Eigen::Index>(spec.terms.size());
  if (d <= dim + 1) return std::nullopt;
  return "combining " + std::to_string(d) + " attributes in a " + std::to_string(dim) +
         "-dimensional prior space exceeds the n + 1 = " + std::to_string(dim + 1) +
         " attributes whose equal-density subspace is guaranteed non-empty";
}

PointBatch controlled_sample(const FlowModel& model, const ControlSpec& spec, std::size_t count, Rng& rng) {
  const auto g = control_distribution(model, spec);
  return flow_inverse(model, sample(g, spec.lambda, count, rng));
}

}  // namespace priorflow
