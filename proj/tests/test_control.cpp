#include <doctest.h>

#include "priorflow/control.hpp"
#include "priorflow/metrics.hpp"
#include "priorflow/synthlab.hpp"
#include "stat_helpers.hpp"

#include <cmath>

using namespace priorflow;

namespace {

double npdf(double z, double mu, double sigma) {
  const double u = (z - mu) / sigma;
  return std::exp(-0.5 * u * u) / (sigma * std::sqrt(2.0 * std::numbers::pi));
}

// Oracle: dense grid scan for |pdf_a - pdf_b| minima in [lo, hi].
std::vector<double> scan_crossings(double ma, double sa, double mb, double sb, double lo, double hi) {
  const int n = 2000000;
  const double h = (hi - lo) / n;
  std::vector<double> roots;
  double prev = npdf(lo, ma, sa) - npdf(lo, mb, sb);
  for (int i = 1; i <= n; ++i) {
    const double z = lo + i * h;
    const double cur = npdf(z, ma, sa) - npdf(z, mb, sb);
    if ((prev < 0) != (cur < 0)) roots.push_back(z - h * cur / (cur - prev));
    prev = cur;
  }
  return roots;
}

FlowModel identity_model(Eigen::Index dim, std::vector<AttributeId> attrs, Rng& rng) {
  FlowArchitecture arch;
  arch.dim = dim;
  arch.num_layers = 2;
  arch.hidden = {4};
  return make_flow(arch, attrs, rng);
}

FlowModel perturbed_model(Rng& rng) {
  FlowArchitecture arch;
  arch.num_layers = 4;
  arch.hidden = {12};
  const std::vector<AttributeId> attrs{"a", "b", "c"};
  auto model = make_flow(arch, attrs, rng);
  std::normal_distribution<double> normal(0.0, 0.4);
  for (auto& layer : model.layers)
    for (Mlp* net : {&layer.scale_net, &layer.translate_net})
      for (auto& v : net->layers.back().weight.reshaped()) v = normal(rng);
  model.priors.at("a") = DiagonalGaussian(Vector{{-1.0, 0.5}}, Vector{{0.8, 0.9}});
  model.priors.at("b") = DiagonalGaussian(Vector{{1.5, -0.5}}, Vector{{1.1, 0.7}});
  model.priors.at("c") = DiagonalGaussian(Vector{{0.0, 2.0}}, Vector{{0.6, 0.6}});
  return model;
}

const FlowModel& trained_pair_model() {
  static const FlowModel model = [] {
    const auto data = generate_dataset(separated_pair_scene(2), 800, 3);
    FlowArchitecture arch;
    arch.num_layers = 4;
    arch.hidden = {32, 32};
    Rng rng(0);
    const auto attrs = data.attributes();
    TrainConfig cfg;
    cfg.epochs = 30;
    cfg.batch_size = 128;
    return train(make_flow(arch, attrs, rng), data, cfg).model;
  }();
  return model;
}

}  // namespace

TEST_CASE("interpolation with a unit weight returns that prior") {
  const DiagonalGaussian a(Vector{{0.5, -1.0}}, Vector{{0.3, 2.0}});
  const DiagonalGaussian b(Vector{{3.0, 3.0}}, Vector{{1.0, 1.0}});
  const std::vector<DiagonalGaussian> priors{a, b};
  const std::vector<double> w{1.0, 0.0};
  CHECK(interpolate_distribution(priors, w) == a);
}

TEST_CASE("interpolation moments against component-wise sampling") {
  const std::vector<DiagonalGaussian> priors{DiagonalGaussian(Vector{{0.0}}, Vector{{1.0}}),
                                             DiagonalGaussian(Vector{{2.0}}, Vector{{1.0}})};
  struct Case {
    double w0;
    double mean;
    double var;
  };
  for (const Case c : {Case{0.5, 1.0, 0.5}, Case{1.2, -0.4, 1.48}}) {
    const std::vector<double> w{c.w0, 1.0 - c.w0};
    const auto g = interpolate_distribution(priors, w);
    CHECK(g.mean(0) == doctest::Approx(c.mean).epsilon(1e-12));
    CHECK(g.std(0) * g.std(0) == doctest::Approx(c.var).epsilon(1e-12));

    // Monte-Carlo: sum of weighted independent draws.
    Rng rng(42);
    std::vector<double> draws(100000);
    for (auto& d : draws) d = w[0] * sample(priors[0], 1.0, rng)(0) + w[1] * sample(priors[1], 1.0, rng)(0);
    const double m = testutil::mean(draws);
    const double s = testutil::stddev(draws);
    CHECK(std::abs(m - c.mean) <= 0.02 * std::max(1.0, std::abs(c.mean)));
    CHECK(std::abs(s * s - c.var) <= 0.02 * c.var);
  }
}

TEST_CASE("interpolation errors") {
  const std::vector<DiagonalGaussian> priors{DiagonalGaussian::standard(2), DiagonalGaussian::standard(2)};
  const std::vector<double> bad_sum{0.6, 0.6};
  CHECK_THROWS_AS(interpolate_distribution(priors, bad_sum), std::invalid_argument);
  const std::vector<DiagonalGaussian> mixed{DiagonalGaussian::standard(2), DiagonalGaussian::standard(3)};
  const std::vector<double> w{0.5, 0.5};
  CHECK_THROWS_AS(interpolate_distribution(mixed, w), DimensionError);
  const std::vector<double> short_w{1.0};
  CHECK_THROWS_AS(interpolate_distribution(priors, short_w), DimensionError);
}

TEST_CASE("interpolation closure: result always has positive std") {
  Rng rng(5);
  std::uniform_real_distribution<double> unit(0.05, 3.0);
  std::uniform_real_distribution<double> wdist(-0.5, 1.5);
  for (int t = 0; t < 1000; ++t) {
    std::vector<DiagonalGaussian> priors;
    for (int i = 0; i < 3; ++i) priors.emplace_back(Vector{{unit(rng), -unit(rng)}}, Vector{{unit(rng), unit(rng)}});
    const double w0 = wdist(rng);
    const double w1 = wdist(rng);
    const std::vector<double> w{w0, w1, 1.0 - w0 - w1};
    const auto g = interpolate_distribution(priors, w);
    CHECK((g.std.array() > 0).all());
    CHECK(g.std.allFinite());
  }
}

TEST_CASE("weight parsing") {
  const auto terms = parse_weights("pos=0.7, neg=0.3");
  REQUIRE(terms.size() == 2);
  CHECK(terms[0].attr == "pos");
  CHECK(terms[0].weight == 0.7);
  CHECK(terms[1].attr == "neg");
  CHECK(parse_weights("a=1.2,b=-0.2")[1].weight == -0.2);
  CHECK_THROWS_AS(parse_weights(""), std::invalid_argument);
  CHECK_THROWS_AS(parse_weights("a"), std::invalid_argument);
  CHECK_THROWS_AS(parse_weights("a=x"), std::invalid_argument);
  CHECK_THROWS_AS(parse_weights("=0.5,b=0.5"), std::invalid_argument);
  CHECK_THROWS_AS(parse_weights("a=0.5,a=0.5"), std::invalid_argument);
  CHECK(parse_weights(format_weights(terms))[0].weight == 0.7);
}

TEST_CASE("control spec validation") {
  ControlSpec spec;
  CHECK_THROWS_AS(validate(spec), std::invalid_argument);
  spec.terms = {{"a", 0.5}, {"b", 0.5 + 1e-12}};
  CHECK_NOTHROW(validate(spec));
  spec.terms[1].weight = 0.51;
  CHECK_THROWS_AS(validate(spec), std::invalid_argument);
  spec.terms[1].weight = 0.5;
  spec.lambda = -0.1;
  CHECK_THROWS_AS(validate(spec), std::invalid_argument);
}

TEST_CASE("equal-variance intersection is the midpoint") {
  const auto r = intersection_center_1d({0.0, 1.0}, {1.5, 1.0});
  CHECK(r.kind == IntersectionCase::equal_variance);
  CHECK(r.z_hat == doctest::Approx(0.75).epsilon(1e-15));
  CHECK(r.alpha_star == doctest::Approx(0.5));
  CHECK_FALSE(r.both_roots.has_value());
}

TEST_CASE("unequal-variance intersection against a grid-scan oracle") {
  const auto r = intersection_center_1d({0.0, 1.0}, {2.0, 2.0});
  CHECK(r.kind == IntersectionCase::two_roots);
  const auto oracle = scan_crossings(0.0, 1.0, 2.0, 2.0, -10.0, 10.0);
  REQUIRE(oracle.size() == 2);
  REQUIRE(r.both_roots.has_value());
  CHECK(r.both_roots->first == doctest::Approx(oracle[0]).epsilon(1e-6));
  CHECK(r.both_roots->second == doctest::Approx(oracle[1]).epsilon(1e-6));
  CHECK(r.z_hat == doctest::Approx(oracle[1]).epsilon(1e-6));
  CHECK(r.z_hat == doctest::Approx(1.2376).epsilon(1e-4));
  CHECK(r.both_roots->first == doctest::Approx(-2.5709).epsilon(1e-4));
  CHECK(npdf(r.z_hat, 0.0, 1.0) == doctest::Approx(0.1855).epsilon(5e-4));
  CHECK(std::abs(npdf(r.z_hat, 0, 1) / npdf(r.z_hat, 2, 2) - 1.0) <= 1e-9);
  CHECK(r.alpha_star == doctest::Approx(1.0 - 1.2376 / 2.0).epsilon(1e-4));
}

TEST_CASE("intersection properties over random pairs") {
  Rng rng(2024);
  std::uniform_real_distribution<double> mu(-5.0, 5.0);
  std::uniform_real_distribution<double> logsig(std::log(0.1), std::log(10.0));
  int in_interval = 0;
  for (int t = 0; t < 10000; ++t) {
    const Gaussian1d a{mu(rng), std::exp(logsig(rng))};
    const Gaussian1d b{mu(rng), std::exp(logsig(rng))};
    CHECK(intersection_discriminant(a, b) >= 0.0);
    const auto r = intersection_center_1d(a, b);
    if (r.kind == IntersectionCase::no_root_in_interval) {
      CHECK(r.alpha_star == 0.5);
      CHECK(r.z_hat == doctest::Approx(0.5 * (a.mean + b.mean)));
      REQUIRE(r.both_roots.has_value());
      continue;
    }
    ++in_interval;
    CHECK(r.z_hat >= std::min(a.mean, b.mean));
    CHECK(r.z_hat <= std::max(a.mean, b.mean));
    const double la = -std::log(a.std) - 0.5 * std::pow((r.z_hat - a.mean) / a.std, 2);
    const double lb = -std::log(b.std) - 0.5 * std::pow((r.z_hat - b.mean) / b.std, 2);
    CHECK(std::abs(std::expm1(la - lb)) <= 1e-9);
    CHECK(r.alpha_star * a.mean + (1 - r.alpha_star) * b.mean == doctest::Approx(r.z_hat));
  }
  CHECK(in_interval > 5000);
}

TEST_CASE("no root between the means is reported, not thrown") {
  // A tight Gaussian inside a wide one: both crossings straddle the narrow mean.
  const auto r = intersection_center_1d({0.0, 0.1}, {0.05, 5.0});
  CHECK(r.kind == IntersectionCase::no_root_in_interval);
  REQUIRE(r.both_roots.has_value());
  CHECK(r.both_roots->first < 0.0);
  CHECK(r.both_roots->second > 0.05);
  CHECK(r.alpha_star == 0.5);
  CHECK(std::string(to_string(r.kind)) == "no_root_in_interval");
}

TEST_CASE("intersection input errors") {
  CHECK_THROWS_AS(intersection_center_1d({1.0, 1.0}, {1.0, 1.0}), std::invalid_argument);
  CHECK_THROWS_AS(intersection_center_1d({0.0, 0.0}, {1.0, 1.0}), std::invalid_argument);
  const auto g = DiagonalGaussian::standard(2);
  CHECK_THROWS_AS(intersection_alpha(g, g), std::invalid_argument);
}

TEST_CASE("intersection alpha") {
  const DiagonalGaussian a(Vector{{0.0, 0.0}}, Vector{{0.7, 0.7}});
  const DiagonalGaussian b(Vector{{3.0, -1.0}}, Vector{{0.7, 0.7}});
  CHECK(intersection_alpha(a, b) == doctest::Approx(0.5).epsilon(1e-14));
  const DiagonalGaussian a1(Vector{{0.0}}, Vector{{1.0}});
  const DiagonalGaussian b1(Vector{{2.0}}, Vector{{2.0}});
  CHECK(intersection_alpha(a1, b1) == doctest::Approx(0.3812).epsilon(1e-4));

  // Projected densities are equal at the crossing.
  Rng rng(6);
  std::uniform_real_distribution<double> u(0.3, 2.0);
  for (int t = 0; t < 500; ++t) {
    const DiagonalGaussian ga(Vector{{-u(rng), u(rng), 0.0}}, Vector{{u(rng), u(rng), u(rng)}});
    const DiagonalGaussian gb(Vector{{u(rng), -u(rng), u(rng)}}, Vector{{u(rng), u(rng), u(rng)}});
    const auto r = intersection_on_line(ga, gb);
    if (r.kind == IntersectionCase::no_root_in_interval) continue;
    const Vector dir = (gb.mean - ga.mean).normalized();
    const double len = (gb.mean - ga.mean).norm();
    const double sa = std::sqrt((dir.array().square() * ga.std.array().square()).sum());
    const double sb = std::sqrt((dir.array().square() * gb.std.array().square()).sum());
    const double t_hat = (1.0 - r.alpha_star) * len;
    const double la = -std::log(sa) - 0.5 * std::pow(t_hat / sa, 2);
    const double lb = -std::log(sb) - 0.5 * std::pow((t_hat - len) / sb, 2);
    CHECK(std::abs(std::expm1(la - lb)) <= 1e-9);
  }
}

TEST_CASE("equal-density point on the segment") {
  const DiagonalGaussian a(Vector{{0.0, 0.0}}, Vector{{1.0, 0.5}});
  const DiagonalGaussian b(Vector{{2.0, 1.0}}, Vector{{1.5, 0.8}});
  const auto z = equal_density_point(a, b);
  REQUIRE(z.has_value());
  CHECK(std::abs(gaussian_log_pdf(a, *z) - gaussian_log_pdf(b, *z)) <= 1e-9);
  // collinear check
  const Vector d = *z - a.mean;
  const Vector e = b.mean - a.mean;
  CHECK(std::abs(d(0) * e(1) - d(1) * e(0)) <= 1e-12);
}

TEST_CASE("extension offset points away from the interferer") {
  const DiagonalGaussian target(Vector{{0.0, 0.0}}, Vector{{1.0, 1.0}});
  const DiagonalGaussian other(Vector{{3.0, 4.0}}, Vector{{1.0, 1.0}});
  const Vector off = extension_offset(target, other);
  CHECK(off.norm() == doctest::Approx(0.2));
  CHECK(off(0) == doctest::Approx(-0.12));
  CHECK(off(1) == doctest::Approx(-0.16));
  CHECK(extension_offset(target, other, 0.5).norm() == doctest::Approx(0.5));
}

TEST_CASE("capacity warning when too many attributes intersect") {
  ControlSpec spec;
  spec.terms = {{"a", 0.4}, {"b", 0.3}, {"c", 0.3}};
  CHECK(intersection_capacity_warning(spec, 2).has_value() == false);
  spec.terms = {{"a", 0.25}, {"b", 0.25}, {"c", 0.25}, {"d", 0.25}};
  CHECK(intersection_capacity_warning(spec, 2).has_value());
}

TEST_CASE("controlled sampling with lambda zero returns the mean") {
  Rng rng(1);
  auto model = identity_model(2, {"a", "b"}, rng);
  model.priors.at("a") = DiagonalGaussian(Vector{{0.4, -0.3}}, Vector{{1.0, 1.0}});
  ControlSpec spec;
  spec.terms = {{"a", 1.0}};
  spec.lambda = 0.0;
  const auto xs = controlled_sample(model, spec, 50, rng);
  REQUIRE(xs.cols() == 50);
  for (Eigen::Index j = 0; j < xs.cols(); ++j) CHECK(xs.col(j) == model.priors.at("a").mean);

  spec.center_offset = Vector{{0.1, 0.1}};
  const auto shifted = controlled_sample(model, spec, 3, rng);
  CHECK(shifted.col(0).isApprox(Vector{{0.5, -0.2}}, 1e-15));

  spec.terms = {{"zzz", 1.0}};
  CHECK_THROWS_AS(controlled_sample(model, spec, 1, rng), UnknownAttributeError);
}

TEST_CASE("controlled sampling draws from the expected prior-space law") {
  Rng rng(9);
  const auto model = perturbed_model(rng);
  ControlSpec spec;
  spec.terms = {{"a", 0.7}, {"b", 0.3}};
  spec.lambda = 0.6;
  const auto target = control_distribution(model, spec);
  const auto xs = controlled_sample(model, spec, 20000, rng);
  const auto zs = flow_forward(model, xs).points;
  for (Eigen::Index d = 0; d < 2; ++d) {
    std::vector<double> coord(zs.cols());
    for (Eigen::Index j = 0; j < zs.cols(); ++j) coord[j] = zs(d, j);
    const double m = target.mean(d);
    const double s = target.std(d) * spec.lambda;
    const double ks = testutil::ks_statistic(coord, [&](double v) { return testutil::normal_cdf((v - m) / s); });
    CHECK(ks < testutil::ks_critical_1pct(coord.size()));
  }
}

TEST_CASE("attribute preservation, intersection invertibility, inequality maintenance") {
  Rng rng(10);
  const auto model = perturbed_model(rng);
  const auto attrs = model.attributes();

  // Preservation.
  for (const auto& attr : attrs) {
    ControlSpec spec;
    spec.terms = {{attr, 1.0}};
    const auto xs = controlled_sample(model, spec, 200, rng);
    for (const auto& other : attrs) CHECK(log_prob(model, other, xs).allFinite());
  }

  // Intersection invertibility for every pair.
  for (std::size_t i = 0; i < attrs.size(); ++i) {
    for (std::size_t j = i + 1; j < attrs.size(); ++j) {
      const auto& ga = model.prior(attrs[i]);
      const auto& gb = model.prior(attrs[j]);
      const auto z = equal_density_point(ga, gb);
      REQUIRE(z.has_value());
      const Vector x = flow_inverse(model, *z);
      const double la = log_prob(model, attrs[i], x);
      const double lb = log_prob(model, attrs[j], x);
      CHECK(std::abs(std::expm1(la - lb)) <= 1e-9);
    }
  }

  // Inequality maintenance.
  std::normal_distribution<double> normal(0.0, 2.0);
  int mismatches = 0;
  for (int t = 0; t < 1000; ++t) {
    const Vector z{{normal(rng), normal(rng)}};
    const Vector x = flow_inverse(model, z);
    const double dz = gaussian_log_pdf(model.prior("a"), z) - gaussian_log_pdf(model.prior("b"), z);
    const double dx = log_prob(model, "a", x) - log_prob(model, "b", x);
    if ((dz > 0) != (dx > 0)) ++mismatches;
  }
  CHECK(mismatches == 0);
}

TEST_CASE("controlled samples favour the targeted attribute on a trained model") {
  const auto& model = trained_pair_model();
  Rng rng(11);
  ControlSpec spec;
  spec.terms = {{"a", 1.0}, {"b", 0.0}};
  const auto xs = controlled_sample(model, spec, 1000, rng);
  CHECK(log_prob(model, "a", xs).mean() > log_prob(model, "b", xs).mean());
  spec.terms = {{"a", 0.0}, {"b", 1.0}};
  const auto ys = controlled_sample(model, spec, 1000, rng);
  CHECK(log_prob(model, "b", ys).mean() > log_prob(model, "a", ys).mean());
}

TEST_CASE("extension offset raises the surpass probability") {
  const Gaussian1d target{0.0, 1.0};
  const Gaussian1d interferer{1.5, 1.0};
  const DiagonalGaussian t(Vector{{target.mean}}, Vector{{target.std}});
  const DiagonalGaussian i(Vector{{interferer.mean}}, Vector{{interferer.std}});
  const Vector off = extension_offset(t, i);
  const ExclusivePair plain{target, interferer, target};
  const ExclusivePair shifted{target, interferer, {target.mean + off(0), target.std}};
  CHECK(surpass_probability(shifted) > surpass_probability(plain));
  CHECK(difference_expectation(shifted) > difference_expectation(plain));
}
