#include "priorflow/synthlab.hpp"

#include <cmath>
#include <limits>
#include <numbers>

namespace priorflow {

namespace {

template <class... Ts>
struct overloaded : Ts... {
  using Ts::operator()...;
};
template <class... Ts>
overloaded(Ts...) -> overloaded<Ts...>;

double log_sum_exp(std::span<const double> values) {
  double m = -std::numeric_limits<double>::infinity();
  for (double v : values) m = std::max(m, v);
  if (!std::isfinite(m)) return m;
  double acc = 0.0;
  for (double v : values) acc += std::exp(v - m);
  return m + std::log(acc);
}

double standard_normal(Rng& rng) { return std::normal_distribution<double>(0.0, 1.0)(rng); }

double mixture_log_density(const GaussianMixture& mix, const Vector& x) {
  std::vector<double> terms;
  terms.reserve(mix.components.size());
  for (const auto& c : mix.components) terms.push_back(std::log(c.weight) + gaussian_log_pdf(c.gaussian, x));
  return log_sum_exp(terms);
}

double banana_log_density(const BananaWarp& b, const Vector& x) {
  Vector u = x;
  u(1) -= b.curvature * (x(0) - b.base.mean(0)) * (x(0) - b.base.mean(0));
  return gaussian_log_pdf(b.base, u);
}

double arc_log_density(const RingArc& arc, const Vector& x) {
  const double dx = x(0) - arc.center(0);
  const double dy = x(1) - arc.center(1);
  const double r = std::hypot(dx, dy);
  if (!(r > 0.0)) return -std::numeric_limits<double>::infinity();
  // Angle relative to the arc midpoint, in (-pi, pi].
  const double c = std::cos(arc.mid_angle);
  const double s = std::sin(arc.mid_angle);
  const double rel = std::atan2(-s * dx + c * dy, c * dx + s * dy);
  const double half = 0.5 * arc.span;
  const double q = rel / half;
  if (std::abs(q) >= 1.0) return -std::numeric_limits<double>::infinity();
  const double v = std::log(r / arc.radius) / arc.radial_std;
  const double w = std::atanh(q);
  // p(x) = p(v) p(w) / |d(r, theta)/d(v, w)| / r
  double lp = gaussian_log_pdf(0.0, 1.0, v) + gaussian_log_pdf(0.0, 1.0, w);
  lp -= std::log(r * arc.radial_std);            // dr/dv
  lp -= std::log(half * (1.0 - q * q));         // dtheta/dw
  lp -= std::log(r);                            // polar area element
  for (Eigen::Index i = 2; i < x.size(); ++i) lp += gaussian_log_pdf(arc.center(i), arc.extra_std, x(i));
  return lp;
}

Vector mixture_draw(const GaussianMixture& mix, Rng& rng) {
  std::uniform_real_distribution<double> uniform(0.0, 1.0);
  const double u = uniform(rng);
  double acc = 0.0;
  std::size_t pick = mix.components.size() - 1;
  for (std::size_t i = 0; i < mix.components.size(); ++i) {
    acc += mix.components[i].weight;
    if (u < acc) {
      pick = i;
      break;
    }
  }
  return sample(mix.components[pick].gaussian, 1.0, rng);
}

Vector banana_draw(const BananaWarp& b, Rng& rng) {
  Vector x = sample(b.base, 1.0, rng);
  x(1) += b.curvature * (x(0) - b.base.mean(0)) * (x(0) - b.base.mean(0));
  return x;
}

Vector arc_draw(const RingArc& arc, Rng& rng) {
  const double v = standard_normal(rng);
  const double w = standard_normal(rng);
  const double r = arc.radius * std::exp(arc.radial_std * v);
  const double theta = arc.mid_angle + 0.5 * arc.span * std::tanh(w);
  Vector x(arc.center.size());
  x(0) = arc.center(0) + r * std::cos(theta);
  x(1) = arc.center(1) + r * std::sin(theta);
  for (Eigen::Index i = 2; i < x.size(); ++i) x(i) = arc.center(i) + arc.extra_std * standard_normal(rng);
  return x;
}

}  // namespace

DistributionKind AttributeDistribution::kind() const {
  return std::visit(overloaded{[](const GaussianMixture&) { return DistributionKind::gaussian_mixture; },
                               [](const BananaWarp&) { return DistributionKind::banana_warp; },
                               [](const RingArc&) { return DistributionKind::ring_arc; }},
                    shape);
}

Eigen::Index AttributeDistribution::dim() const {
  return std::visit(overloaded{[](const GaussianMixture& m) {
                                 return m.components.empty() ? Eigen::Index{0} : m.components.front().gaussian.dim();
                               },
                               [](const BananaWarp& b) { return b.base.dim(); },
                               [](const RingArc& a) { return a.center.size(); }},
                    shape);
}

void validate(const AttributeDistribution& dist) {
  if (dist.id.empty()) throw std::invalid_argument("distribution needs an attribute id");
  std::visit(overloaded{
                 [](const GaussianMixture& m) {
                   if (m.components.empty()) throw std::invalid_argument("mixture has no components");
                   double total = 0.0;
                   for (const auto& c : m.components) {
                     if (!(c.weight > 0.0)) throw std::invalid_argument("mixture weights must be positive");
                     require_dimension(m.components.front().gaussian.dim(), c.gaussian.dim(), "mixture component");
                     total += c.weight;
                   }
                   if (std::abs(total - 1.0) > 1e-9) throw std::invalid_argument("mixture weights must sum to 1");
                 },
                 [](const BananaWarp& b) {
                   if (b.base.dim() < 2) throw DimensionError("banana warp needs at least 2 dimensions");
                   if (!std::isfinite(b.curvature)) throw std::invalid_argument("banana curvature must be finite");
                 },
                 [](const RingArc& a) {
                   if (a.center.size() < 2) throw DimensionError("ring arc needs at least 2 dimensions");
                   if (!(a.radius > 0.0) || !(a.radial_std > 0.0) || !(a.extra_std > 0.0))
                     throw std::invalid_argument("ring arc scales must be positive");
                   if (!(a.span > 0.0) || !(a.span < 2.0 * std::numbers::pi))
                     throw std::invalid_argument("ring arc span must lie in (0, 2 pi)");
                 }},
             dist.shape);
}

double synth_log_density(const AttributeDistribution& dist, const Vector& x) {
  require_dimension(dist.dim(), x.size(), "synth_log_density");
  return std::visit(overloaded{[&](const GaussianMixture& m) { return mixture_log_density(m, x); },
                               [&](const BananaWarp& b) { return banana_log_density(b, x); },
                               [&](const RingArc& a) { return arc_log_density(a, x); }},
                    dist.shape);
}

PointBatch synth_sample(const AttributeDistribution& dist, std::size_t count, Rng& rng) {
  validate(dist);
  PointBatch out(dist.dim(), static_cast<Eigen::Index>(count));
  for (std::size_t j = 0; j < count; ++j) {
    out.col(static_cast<Eigen::Index>(j)) =
        std::visit(overloaded{[&](const GaussianMixture& m) { return mixture_draw(m, rng); },
                              [&](const BananaWarp& b) { return banana_draw(b, rng); },
                              [&](const RingArc& a) { return arc_draw(a, rng); }},
                   dist.shape);
  }
  return out;
}

LatentDataset generate_dataset(std::span<const AttributeDistribution> dists, std::size_t per_attr_count,
                               std::uint64_t seed) {
  if (dists.empty()) throw std::invalid_argument("no distributions given");
  if (per_attr_count == 0) throw std::invalid_argument("per-attribute count must be positive");
  const auto dim = dists.front().dim();
  Rng rng(seed);
  std::vector<LabeledPoint> records;
  records.reserve(dists.size() * per_attr_count);
  for (const auto& d : dists) {
    require_dimension(dim, d.dim(), "scene distribution");
    const PointBatch pts = synth_sample(d, per_attr_count, rng);
    for (Eigen::Index j = 0; j < pts.cols(); ++j) records.push_back({pts.col(j), d.id});
  }
  return LatentDataset(dim, std::move(records));
}

namespace {

DiagonalGaussian padded(Eigen::Index dim, std::initializer_list<double> mean, std::initializer_list<double> std) {
  Vector m = Vector::Zero(dim);
  Vector s = Vector::Ones(dim);
  Eigen::Index i = 0;
  for (double v : mean) m(i++) = v;
  i = 0;
  for (double v : std) s(i++) = v;
  return DiagonalGaussian(std::move(m), std::move(s));
}

}  // namespace

std::vector<AttributeDistribution> default_scene(Eigen::Index dim) {
  if (dim < 2) throw DimensionError("the default scene needs at least 2 dimensions");
  std::vector<AttributeDistribution> scene;
  scene.push_back({"neg", GaussianMixture{{{0.7, padded(dim, {-2.0, 0.0}, {0.6, 0.9})},
                                           {0.3, padded(dim, {-0.8, 1.4}, {0.4, 0.4})}}}});
  scene.push_back({"pos", GaussianMixture{{{0.6, padded(dim, {2.0, 0.2}, {0.7, 0.6})},
                                           {0.4, padded(dim, {0.9, -1.2}, {0.5, 0.5})}}}});
  scene.push_back({"sports", BananaWarp{padded(dim, {0.0, 2.5}, {1.0, 0.3}), -0.5}});
  scene.push_back({"world", BananaWarp{padded(dim, {0.0, -2.8}, {1.0, 0.3}), 0.4}});
  return scene;
}

std::vector<AttributeDistribution> separated_pair_scene(Eigen::Index dim) {
  if (dim < 2) throw DimensionError("the separated pair needs at least 2 dimensions");
  std::vector<AttributeDistribution> scene;
  scene.push_back({"a", GaussianMixture{{{0.5, padded(dim, {-3.0, 0.8}, {0.6, 0.5})},
                                         {0.5, padded(dim, {-3.0, -0.8}, {0.6, 0.5})}}}});
  scene.push_back({"b", GaussianMixture{{{0.5, padded(dim, {3.0, 0.8}, {0.6, 0.5})},
                                         {0.5, padded(dim, {3.0, -0.8}, {0.6, 0.5})}}}});
  return scene;
}

}  // namespace priorflow
