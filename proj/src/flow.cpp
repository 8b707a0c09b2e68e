#include "priorflow/flow.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace priorflow {

namespace {

Matrix gather_rows(const Matrix& m, const std::vector<Eigen::Index>& rows) {
  return m(rows, Eigen::indexing::all);
}

void scatter_rows(Matrix& dst, const std::vector<Eigen::Index>& rows, const Matrix& src) {
  dst(rows, Eigen::indexing::all) = src;
}

void check_finite(const Matrix& m, int layer_index, const char* direction) {
  if (!m.allFinite()) {
    std::string where = layer_index >= 0 ? "coupling layer " + std::to_string(layer_index) : "coupling layer";
    throw NumericalError(where + " produced a non-finite value (" + direction + ")");
  }
}

// Scale outputs squashed into (-clamp, clamp).
Matrix squash(const Matrix& raw, double clamp) {
  return (clamp * (raw.array() / clamp).tanh()).matrix();
}

TransformedBatch forward_impl(const CouplingLayer& layer, const PointBatch& x, int index) {
  require_dimension(layer.dim(), x.rows(), "coupling_forward");
  const auto pass = layer.pass_indices();
  const auto moved = layer.transformed_indices();
  const Matrix xp = gather_rows(x, pass);
  const Matrix s = squash(mlp_forward(layer.scale_net, xp), layer.scale_clamp);
  const Matrix t = mlp_forward(layer.translate_net, xp);
  const Matrix yt = gather_rows(x, moved).cwiseProduct(s.array().exp().matrix()) + t;
  TransformedBatch out{x, s.colwise().sum().transpose()};
  scatter_rows(out.points, moved, yt);
  check_finite(out.points, index, "forward");
  check_finite(out.log_det, index, "forward");
  return out;
}

TransformedBatch inverse_impl(const CouplingLayer& layer, const PointBatch& z, int index) {
  require_dimension(layer.dim(), z.rows(), "coupling_inverse");
  const auto pass = layer.pass_indices();
  const auto moved = layer.transformed_indices();
  const Matrix zp = gather_rows(z, pass);
  const Matrix s = squash(mlp_forward(layer.scale_net, zp), layer.scale_clamp);
  const Matrix t = mlp_forward(layer.translate_net, zp);
  const Matrix xt = (gather_rows(z, moved) - t).cwiseProduct((-s).array().exp().matrix());
  TransformedBatch out{z, -s.colwise().sum().transpose()};
  scatter_rows(out.points, moved, xt);
  check_finite(out.points, index, "inverse");
  return out;
}

}  // namespace

std::vector<Eigen::Index> CouplingLayer::pass_indices() const {
  std::vector<Eigen::Index> idx;
  for (std::size_t i = 0; i < mask.size(); ++i)
    if (mask[i]) idx.push_back(static_cast<Eigen::Index>(i));
  return idx;
}

std::vector<Eigen::Index> CouplingLayer::transformed_indices() const {
  std::vector<Eigen::Index> idx;
  for (std::size_t i = 0; i < mask.size(); ++i)
    if (!mask[i]) idx.push_back(static_cast<Eigen::Index>(i));
  return idx;
}

void validate(const CouplingLayer& layer) {
  const auto pass = static_cast<int>(layer.pass_indices().size());
  const auto moved = static_cast<int>(layer.transformed_indices().size());
  if (pass == 0 || moved == 0) throw DimensionError("coupling mask needs both pass-through and transformed entries");
  validate(layer.scale_net);
  validate(layer.translate_net);
  require_dimension(pass, layer.scale_net.input_width(), "scale net input");
  require_dimension(moved, layer.scale_net.output_width(), "scale net output");
  require_dimension(pass, layer.translate_net.input_width(), "translate net input");
  require_dimension(moved, layer.translate_net.output_width(), "translate net output");
  if (!(layer.scale_clamp > 0.0)) throw std::invalid_argument("scale clamp must be positive");
}

const DiagonalGaussian& FlowModel::prior(const AttributeId& attr) const {
  auto it = priors.find(attr);
  if (it == priors.end()) throw UnknownAttributeError(attr);
  return it->second;
}

std::vector<AttributeId> FlowModel::attributes() const {
  std::vector<AttributeId> out;
  for (const auto& [attr, g] : priors) out.push_back(attr);
  return out;
}

void validate(const FlowModel& model) {
  if (model.dim < 2) throw DimensionError("flow dimension must be at least 2");
  for (const auto& layer : model.layers) {
    require_dimension(model.dim, layer.dim(), "coupling layer");
    validate(layer);
  }
  if (model.priors.empty()) throw std::invalid_argument("flow model has no registered attributes");
  for (const auto& [attr, g] : model.priors) require_dimension(model.dim, g.dim(), "prior");
}

FlowModel make_flow(const FlowArchitecture& arch, std::span<const AttributeId> attributes, Rng& rng) {
  if (arch.dim < 2) throw DimensionError("flow dimension must be at least 2");
  if (arch.num_layers < 0) throw std::invalid_argument("layer count must be non-negative");
  if (attributes.empty()) throw std::invalid_argument("at least one attribute is required");
  FlowModel model;
  model.dim = arch.dim;
  for (int k = 0; k < arch.num_layers; ++k) {
    CouplingLayer layer;
    layer.scale_clamp = arch.scale_clamp;
    layer.mask.resize(static_cast<std::size_t>(arch.dim));
    for (Eigen::Index i = 0; i < arch.dim; ++i) layer.mask[static_cast<std::size_t>(i)] = (i % 2) == (k % 2);
    std::vector<int> widths;
    widths.push_back(static_cast<int>(layer.pass_indices().size()));
    widths.insert(widths.end(), arch.hidden.begin(), arch.hidden.end());
    widths.push_back(static_cast<int>(layer.transformed_indices().size()));
    layer.scale_net = Mlp::random(widths, arch.activation, rng);
    layer.translate_net = Mlp::random(widths, arch.activation, rng);
    for (Mlp* net : {&layer.scale_net, &layer.translate_net}) {
      net->layers.back().weight.setZero();
      net->layers.back().bias.setZero();
    }
    model.layers.push_back(std::move(layer));
  }
  for (const auto& attr : attributes) {
    if (!model.priors.emplace(attr, DiagonalGaussian::standard(arch.dim)).second)
      throw std::invalid_argument("duplicate attribute '" + attr + "'");
  }
  return model;
}

Transformed coupling_forward(const CouplingLayer& layer, const Vector& x) {
  auto out = forward_impl(layer, Matrix(x), -1);
  return {out.points.col(0), out.log_det(0)};
}

Transformed coupling_inverse(const CouplingLayer& layer, const Vector& z) {
  auto out = inverse_impl(layer, Matrix(z), -1);
  return {out.points.col(0), out.log_det(0)};
}

TransformedBatch coupling_forward(const CouplingLayer& layer, const PointBatch& x) {
  return forward_impl(layer, x, -1);
}

TransformedBatch coupling_inverse(const CouplingLayer& layer, const PointBatch& z) {
  return inverse_impl(layer, z, -1);
}

TransformedBatch flow_forward(const FlowModel& model, const PointBatch& x) {
  require_dimension(model.dim, x.rows(), "flow_forward");
  TransformedBatch acc{x, Vector::Zero(x.cols())};
  for (std::size_t k = 0; k < model.layers.size(); ++k) {
    auto step = forward_impl(model.layers[k], acc.points, static_cast<int>(k));
    acc.points = std::move(step.points);
    acc.log_det += step.log_det;
  }
  return acc;
}

Transformed flow_forward(const FlowModel& model, const Vector& x) {
  auto out = flow_forward(model, Matrix(x));
  return {out.points.col(0), out.log_det(0)};
}

PointBatch flow_inverse(const FlowModel& model, const PointBatch& z) {
  require_dimension(model.dim, z.rows(), "flow_inverse");
  PointBatch x = z;
  for (std::size_t k = model.layers.size(); k-- > 0;) {
    x = inverse_impl(model.layers[k], x, static_cast<int>(k)).points;
  }
  return x;
}

Vector flow_inverse(const FlowModel& model, const Vector& z) {
  return flow_inverse(model, Matrix(z)).col(0);
}

Vector log_prob(const FlowModel& model, const AttributeId& attr, const PointBatch& x) {
  const auto& prior = model.prior(attr);
  const auto fwd = flow_forward(model, x);
  Vector out(x.cols());
  for (Eigen::Index j = 0; j < x.cols(); ++j) {
    out(j) = gaussian_log_pdf(prior, fwd.points.col(j)) + fwd.log_det(j);
  }
  return out;
}

double log_prob(const FlowModel& model, const AttributeId& attr, const Vector& x) {
  return log_prob(model, attr, Matrix(x))(0);
}

// ---------------------------------------------------------------------------

const char* to_string(PriorMode mode) { return mode == PriorMode::fixed ? "fixed" : "learned"; }

PriorMode prior_mode_from_string(const std::string& name) {
  if (name == "fixed") return PriorMode::fixed;
  if (name == "learned") return PriorMode::learned;
  throw std::invalid_argument("unknown prior mode '" + name + "' (expected fixed or learned)");
}

void validate(const TrainConfig& cfg) {
  if (cfg.epochs <= 0) throw std::invalid_argument("epochs must be positive");
  if (cfg.batch_size <= 0) throw std::invalid_argument("batch size must be positive");
  if (!(cfg.learning_rate > 0.0)) throw std::invalid_argument("learning rate must be positive");
  if (!(cfg.clip_norm > 0.0)) throw std::invalid_argument("gradient clip norm must be positive");
}

namespace {

struct LayerTape {
  Matrix input;  // layer input x
  Matrix pass;
  Matrix moved;
  MlpTape scale;
  MlpTape translate;
  Matrix s;  // squashed scale
};

}  // namespace

Objective nll_objective(const FlowModel& model, const PointBatch& x, std::span<const AttributeId> labels) {
  require_dimension(model.dim, x.rows(), "nll_objective");
  require_dimension(static_cast<std::size_t>(x.cols()), labels.size(), "nll_objective labels");
  if (x.cols() == 0) throw std::invalid_argument("nll_objective: empty batch");
  const double inv_batch = 1.0 / static_cast<double>(x.cols());

  std::vector<LayerTape> tapes;
  tapes.reserve(model.layers.size());
  Matrix current = x;
  Vector log_det = Vector::Zero(x.cols());
  for (std::size_t k = 0; k < model.layers.size(); ++k) {
    const auto& layer = model.layers[k];
    LayerTape tape;
    tape.input = current;
    tape.pass = gather_rows(current, layer.pass_indices());
    tape.moved = gather_rows(current, layer.transformed_indices());
    tape.scale = mlp_forward_recorded(layer.scale_net, tape.pass);
    tape.translate = mlp_forward_recorded(layer.translate_net, tape.pass);
    tape.s = squash(tape.scale.output, layer.scale_clamp);
    const Matrix yt = tape.moved.cwiseProduct(tape.s.array().exp().matrix()) + tape.translate.output;
    scatter_rows(current, layer.transformed_indices(), yt);
    check_finite(current, static_cast<int>(k), "forward");
    log_det += tape.s.colwise().sum().transpose();
    tapes.push_back(std::move(tape));
  }

  Objective result;
  for (const auto& [attr, g] : model.priors) {
    result.grad.prior_mean[attr] = Vector::Zero(model.dim);
    result.grad.prior_log_std[attr] = Vector::Zero(model.dim);
  }

  // Seed the reverse pass with d(mean NLL)/dz.
  Matrix grad = Matrix::Zero(model.dim, x.cols());
  double total = 0.0;
  for (Eigen::Index j = 0; j < x.cols(); ++j) {
    const auto& attr = labels[static_cast<std::size_t>(j)];
    const auto& prior = model.prior(attr);
    const Vector z = current.col(j);
    total -= gaussian_log_pdf(prior, z) + log_det(j);
    const Vector u = (z - prior.mean).cwiseQuotient(prior.std);
    grad.col(j) = u.cwiseQuotient(prior.std) * inv_batch;
    result.grad.prior_mean[attr] -= u.cwiseQuotient(prior.std) * inv_batch;
    result.grad.prior_log_std[attr] += (1.0 - u.array().square()).matrix() * inv_batch;
  }
  result.loss = total * inv_batch;
  const double grad_log_det = -inv_batch;

  result.grad.scale_nets.resize(model.layers.size());
  result.grad.translate_nets.resize(model.layers.size());
  for (std::size_t k = model.layers.size(); k-- > 0;) {
    const auto& layer = model.layers[k];
    const auto& tape = tapes[k];
    const auto pass = layer.pass_indices();
    const auto moved = layer.transformed_indices();
    const Matrix gy_pass = gather_rows(grad, pass);
    const Matrix gy_moved = gather_rows(grad, moved);
    const Matrix scale = tape.s.array().exp().matrix();

    const Matrix gx_moved = gy_moved.cwiseProduct(scale);
    Matrix gs = gy_moved.cwiseProduct(tape.moved).cwiseProduct(scale);
    gs.array() += grad_log_det;
    const Matrix squash_slope =
        (1.0 - (tape.scale.output.array() / layer.scale_clamp).tanh().square()).matrix();
    const Matrix g_raw = gs.cwiseProduct(squash_slope);

    auto g_scale = mlp_backward(layer.scale_net, tape.scale, g_raw);
    auto g_translate = mlp_backward(layer.translate_net, tape.translate, gy_moved);
    const Matrix gx_pass = gy_pass + g_scale.input + g_translate.input;

    grad = Matrix(model.dim, x.cols());
    scatter_rows(grad, pass, gx_pass);
    scatter_rows(grad, moved, gx_moved);
    result.grad.scale_nets[k] = std::move(g_scale.params);
    result.grad.translate_nets[k] = std::move(g_translate.params);
  }
  return result;
}

std::vector<double> pack_parameters(const FlowModel& model, PriorMode mode) {
  std::vector<double> out;
  for (const auto& layer : model.layers) {
    append_parameters(layer.scale_net, out);
    append_parameters(layer.translate_net, out);
  }
  if (mode == PriorMode::learned) {
    for (const auto& [attr, g] : model.priors) {
      out.insert(out.end(), g.mean.data(), g.mean.data() + g.mean.size());
      for (Eigen::Index i = 0; i < g.std.size(); ++i) out.push_back(std::log(g.std(i)));
    }
  }
  return out;
}

void unpack_parameters(FlowModel& model, std::span<const double> values, PriorMode mode) {
  std::size_t offset = 0;
  for (auto& layer : model.layers) {
    offset += assign_parameters(layer.scale_net, values.subspan(offset));
    offset += assign_parameters(layer.translate_net, values.subspan(offset));
  }
  if (mode == PriorMode::learned) {
    for (auto& [attr, g] : model.priors) {
      if (values.size() < offset + 2 * static_cast<std::size_t>(model.dim))
        throw DimensionError("not enough values to assign prior parameters");
      Vector mean(model.dim);
      Vector std(model.dim);
      for (Eigen::Index i = 0; i < model.dim; ++i) mean(i) = values[offset++];
      for (Eigen::Index i = 0; i < model.dim; ++i) std(i) = std::exp(values[offset++]);
      g = DiagonalGaussian(std::move(mean), std::move(std));
    }
  }
  require_dimension(values.size(), offset, "flow parameter vector");
}

std::vector<double> pack_gradient(const FlowModel& model, const FlowGradient& grad, PriorMode mode) {
  std::vector<double> out;
  require_dimension(model.layers.size(), grad.scale_nets.size(), "flow gradient layers");
  for (std::size_t k = 0; k < model.layers.size(); ++k) {
    append_parameters(grad.scale_nets[k], out);
    append_parameters(grad.translate_nets[k], out);
  }
  if (mode == PriorMode::learned) {
    for (const auto& [attr, g] : model.priors) {
      const Vector& gm = grad.prior_mean.at(attr);
      const Vector& gs = grad.prior_log_std.at(attr);
      out.insert(out.end(), gm.data(), gm.data() + gm.size());
      out.insert(out.end(), gs.data(), gs.data() + gs.size());
    }
  }
  return out;
}

double mean_nll(const FlowModel& model, const LatentDataset& data) {
  double total = 0.0;
  for (const auto& attr : data.attributes()) {
    total -= log_prob(model, attr, data.points_of(attr)).sum();
  }
  return total / static_cast<double>(data.size());
}

TrainResult train(FlowModel model, const LatentDataset& data, const TrainConfig& cfg) {
  validate(cfg);
  validate(model);
  require_dimension(model.dim, data.dim(), "training data");
  const auto attrs = data.attributes();
  for (const auto& attr : attrs) (void)model.prior(attr);
  check_balance(data.counts());

  std::vector<std::vector<std::size_t>> members(attrs.size());
  for (std::size_t i = 0; i < data.size(); ++i) {
    const auto pos = std::lower_bound(attrs.begin(), attrs.end(), data.records()[i].attr) - attrs.begin();
    members[static_cast<std::size_t>(pos)].push_back(i);
  }
  std::size_t min_count = members.front().size();
  for (const auto& m : members) min_count = std::min(min_count, m.size());

  // Each batch draws an even share from every attribute.
  const std::size_t per_attr = std::max<std::size_t>(1, static_cast<std::size_t>(cfg.batch_size) / attrs.size());
  const std::size_t batches = (min_count + per_attr - 1) / per_attr;

  Rng rng(cfg.seed);
  std::vector<double> params = pack_parameters(model, cfg.prior_mode);
  AdamOptimizer optimizer(params.size(), AdamConfig{cfg.learning_rate});

  TrainResult result;
  result.loss_trace.reserve(static_cast<std::size_t>(cfg.epochs));
  std::vector<AttributeId> labels;
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    for (auto& m : members) std::shuffle(m.begin(), m.end(), rng);
    double epoch_loss = 0.0;
    std::size_t epoch_points = 0;
    for (std::size_t b = 0; b < batches; ++b) {
      std::vector<std::size_t> picked;
      labels.clear();
      for (std::size_t a = 0; a < attrs.size(); ++a) {
        const auto n = members[a].size();
        const std::size_t lo = b * n / batches;
        const std::size_t hi = (b + 1) * n / batches;
        for (std::size_t i = lo; i < hi; ++i) {
          picked.push_back(members[a][i]);
          labels.push_back(attrs[a]);
        }
      }
      PointBatch x(model.dim, static_cast<Eigen::Index>(picked.size()));
      for (std::size_t j = 0; j < picked.size(); ++j)
        x.col(static_cast<Eigen::Index>(j)) = data.records()[picked[j]].x;

      Objective obj;
      try {
        obj = nll_objective(model, x, labels);
      } catch (const NumericalError&) {
        ++result.skipped_steps;
        continue;
      }
      std::vector<double> grads = pack_gradient(model, obj.grad, cfg.prior_mode);
      double norm = 0.0;
      for (double g : grads) norm += g * g;
      norm = std::sqrt(norm);
      if (std::isfinite(norm) && norm > cfg.clip_norm) {
        const double factor = cfg.clip_norm / norm;
        for (double& g : grads) g *= factor;
      }
      if (!std::isfinite(obj.loss) || !optimizer.step(params, grads)) {
        ++result.skipped_steps;
        continue;
      }
      unpack_parameters(model, params, cfg.prior_mode);
      epoch_loss += obj.loss * static_cast<double>(picked.size());
      epoch_points += picked.size();
    }
    result.loss_trace.push_back(epoch_points > 0 ? epoch_loss / static_cast<double>(epoch_points)
                                                 : std::numeric_limits<double>::quiet_NaN());
  }
  result.model = std::move(model);
  return result;
}

}  // namespace priorflow

#include <Eigen/LU>

namespace priorflow {

double finite_difference_log_det(const FlowModel& model, const Vector& x, double step) {
  require_dimension(model.dim, x.size(), "finite_difference_log_det");
  Matrix jac(model.dim, model.dim);
  for (Eigen::Index i = 0; i < model.dim; ++i) {
    Vector up = x;
    Vector down = x;
    up(i) += step;
    down(i) -= step;
    jac.col(i) = (flow_forward(model, up).point - flow_forward(model, down).point) / (2.0 * step);
  }
  return std::log(std::abs(jac.determinant()));
}

}  // namespace priorflow
