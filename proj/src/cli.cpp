#include "priorflow/cli.hpp"

#include "priorflow/control.hpp"
#include "priorflow/flow.hpp"
#include "priorflow/metrics.hpp"
#include "priorflow/synthlab.hpp"

#include <CLI11.hpp>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <sstream>

namespace priorflow::cli {

namespace {

class UsageError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

// Flat key=value file. Keys name the subcommand's long options; values given
// on the command line take precedence.
void apply_config_file(CLI::App& sub, const std::string& path) {
  std::ifstream in(path);
  if (!in) throw UsageError("cannot open config file " + path);
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos)
      throw UsageError(path + ":" + std::to_string(line_no) + ": expected key=value");
    std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    std::replace(key.begin(), key.end(), '_', '-');
    if (key == "config" || key == "help") throw UsageError(path + ":" + std::to_string(line_no) + ": key '" + key + "' not allowed");
    CLI::Option* opt = sub.get_option_no_throw("--" + key);
    if (opt == nullptr) throw UsageError(path + ":" + std::to_string(line_no) + ": unknown config key '" + key + "'");
    if (opt->count() > 0) continue;
    opt->add_result(value);
    try {
      opt->run_callback();
    } catch (const CLI::Error& e) {
      throw UsageError(path + ":" + std::to_string(line_no) + ": " + e.what());
    }
  }
}

void log_resolved_config(const CLI::App& sub, std::ostream& err) {
  err << "# priorflow " << sub.get_name();
  for (const CLI::Option* opt : sub.get_options()) {
    if (opt->get_lnames().empty()) continue;
    const auto& name = opt->get_lnames().front();
    if (name == "help") continue;
    std::string value;
    if (opt->count() > 0) {
      value = opt->as<std::string>();
    } else {
      value = opt->get_default_str();
    }
    err << ' ' << name << '=' << (value.empty() ? "-" : value);
  }
  err << '\n';
}

std::string require(const std::string& value, const char* flag) {
  if (value.empty()) throw UsageError(std::string("missing required option ") + flag);
  return value;
}

std::vector<int> parse_int_list(const std::string& text) {
  std::vector<int> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    std::size_t used = 0;
    int v = 0;
    try {
      v = std::stoi(item, &used);
    } catch (const std::exception&) {
      used = 0;
    }
    if (used != item.size() || v <= 0) throw UsageError("invalid width list '" + text + "'");
    out.push_back(v);
  }
  return out;
}

// Writes to `path`, or to `fallback` when the path is empty.
template <class Fn>
void emit(const std::string& path, std::ostream& fallback, Fn&& write) {
  if (path.empty()) {
    write(fallback);
    return;
  }
  std::ofstream file(path, std::ios::binary);
  if (!file) throw DataError("cannot open " + path + " for writing");
  write(file);
  if (!file) throw DataError("failed writing " + path);
}

std::string sci(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.3e", v);
  return buf;
}

// ---------------------------------------------------------------------------

struct SynthOptions {
  std::string out;
  std::string scene = "default";
  int dim = 2;
  std::size_t count = 1000;
  std::uint64_t seed = 0;
};

int cmd_synth(const SynthOptions& o, std::ostream& out) {
  std::vector<AttributeDistribution> scene;
  if (o.scene == "default") {
    scene = default_scene(o.dim);
  } else if (o.scene == "separated") {
    scene = separated_pair_scene(o.dim);
  } else {
    throw UsageError("unknown scene '" + o.scene + "' (expected default or separated)");
  }
  const auto data = generate_dataset(scene, o.count, o.seed);
  emit(o.out, out, [&](std::ostream& s) { s << dataset_to_jsonl(data); });
  return kSuccess;
}

struct TrainOptions {
  std::string data;
  std::string model;
  std::string loss_out;
  int epochs = 100;
  int batch_size = 256;
  double lr = 1e-3;
  int layers = 6;
  std::string hidden = "64,64";
  std::string activation = "tanh";
  std::string prior_mode = "learned";
  double clip = 10.0;
  double scale_clamp = 2.0;
  std::uint64_t seed = 0;
};

int cmd_train(const TrainOptions& o, std::ostream& err) {
  const std::string model_path = require(o.model, "--model");
  const auto data = load_dataset(require(o.data, "--data"));
  FlowArchitecture arch;
  arch.dim = data.dim();
  arch.num_layers = o.layers;
  arch.hidden = parse_int_list(o.hidden);
  arch.activation = activation_from_string(o.activation);
  arch.scale_clamp = o.scale_clamp;
  TrainConfig cfg;
  cfg.epochs = o.epochs;
  cfg.batch_size = o.batch_size;
  cfg.learning_rate = o.lr;
  cfg.seed = o.seed;
  cfg.prior_mode = prior_mode_from_string(o.prior_mode);
  cfg.clip_norm = o.clip;
  validate(cfg);

  Rng init_rng(o.seed);
  const auto attrs = data.attributes();
  auto result = train(make_flow(arch, attrs, init_rng), data, cfg);
  save_model(result.model, model_path);
  const std::string loss_path = o.loss_out.empty() ? model_path + ".loss.csv" : o.loss_out;
  emit(loss_path, err, [&](std::ostream& s) {
    s << "epoch,mean_nll\n";
    char buf[64];
    for (std::size_t i = 0; i < result.loss_trace.size(); ++i) {
      std::snprintf(buf, sizeof buf, "%zu,%.6f\n", i + 1, result.loss_trace[i]);
      s << buf;
    }
  });
  if (result.skipped_steps > 0) err << "warning: skipped " << result.skipped_steps << " non-finite steps\n";
  if (!result.loss_trace.empty()) err << "final mean NLL " << result.loss_trace.back() << '\n';
  return kSuccess;
}

struct SampleOptions {
  std::string model;
  std::string attr;
  std::string out;
  double lambda = 1.0;
  std::size_t count = 100;
  std::uint64_t seed = 0;
};

int cmd_sample(const SampleOptions& o, std::ostream& out) {
  const auto model = load_model(require(o.model, "--model"));
  ControlSpec spec{{{require(o.attr, "--attr"), 1.0}}, o.lambda, std::nullopt};
  Rng rng(o.seed);
  const auto x = controlled_sample(model, spec, o.count, rng);
  emit(o.out, out, [&](std::ostream& s) { write_points_jsonl(s, x, o.attr); });
  return kSuccess;
}

struct ControlOptions {
  std::string model;
  std::string weights;
  std::string away_from;
  std::string out;
  double lambda = 1.0;
  double offset = 0.0;
  std::size_t count = 100;
  std::uint64_t seed = 0;
};

int cmd_control(const ControlOptions& o, std::ostream& out, std::ostream& err) {
  const auto model = load_model(require(o.model, "--model"));
  ControlSpec spec{parse_weights(require(o.weights, "--weights")), o.lambda, std::nullopt};
  for (const auto& t : spec.terms) (void)model.prior(t.attr);
  validate(spec);
  if (o.offset != 0.0) {
    if (o.away_from.empty()) throw UsageError("--offset needs --away-from <attribute>");
    // Shift away from the interferer, starting from the heaviest-weighted target.
    const auto target = std::max_element(spec.terms.begin(), spec.terms.end(),
                                         [](const auto& a, const auto& b) { return a.weight < b.weight; });
    spec.center_offset = extension_offset(model.prior(target->attr), model.prior(o.away_from), o.offset);
  }
  if (auto warning = intersection_capacity_warning(spec, model.dim)) err << "warning: " << *warning << '\n';
  Rng rng(o.seed);
  const auto x = controlled_sample(model, spec, o.count, rng);
  const std::string tag = format_weights(spec.terms);
  emit(o.out, out, [&](std::ostream& s) { write_points_jsonl(s, x, tag); });
  return kSuccess;
}

struct SweepOptions {
  std::string kind = "lambda";
  std::string grid = "1.0:0.0:0.1";
  std::string out;
  double target_mean = 0.0;
  double target_std = 1.0;
  double interferer_mean = 1.5;
  double interferer_std = 1.0;
  double offset = 0.0;
  std::string model;
  std::string pair;
  double lambda = 1.0;
  std::size_t count = 1000;
  std::uint64_t seed = 0;
};

int cmd_sweep(const SweepOptions& o, std::ostream& out, std::ostream& err) {
  std::vector<double> grid;
  try {
    grid = parse_grid(o.grid);
  } catch (const std::invalid_argument& e) {
    throw UsageError(e.what());
  }
  if (o.kind == "lambda") {
    for (double l : grid) {
      if (l < 0.0) throw UsageError("lambda grid values must be >= 0");
    }
    const Gaussian1d target{o.target_mean, o.target_std};
    const Gaussian1d interferer{o.interferer_mean, o.interferer_std};
    // A positive offset moves the sampler centre away from the interferer.
    const double away = o.target_mean <= o.interferer_mean ? -1.0 : 1.0;
    std::vector<SweepRow> rows;
    for (double lambda : grid) {
      ExclusivePair pair{target, interferer, {o.target_mean + away * o.offset, lambda * o.target_std}};
      rows.push_back({lambda, surpass_probability(pair), difference_expectation(pair)});
    }
    emit(o.out, out, [&](std::ostream& s) { write_sweep_csv(s, rows); });
    return kSuccess;
  }
  if (o.kind == "alpha") {
    const auto model = load_model(require(o.model, "--model"));
    const auto terms = require(o.pair, "--pair");
    const auto comma = terms.find(',');
    if (comma == std::string::npos) throw UsageError("--pair expects two attributes, e.g. pos,neg");
    const std::string a = terms.substr(0, comma);
    const std::string b = terms.substr(comma + 1);
    Rng rng(o.seed);
    const auto sweep = alpha_sweep(model, a, b, grid, o.lambda, o.count, rng);
    err << "alpha* (prior-space crossing) = " << intersection_alpha(model.prior(a), model.prior(b))
        << "; margins " << (sweep.monotone ? "monotone" : "not monotone") << " over the grid\n";
    emit(o.out, out, [&](std::ostream& s) { write_alpha_csv(s, sweep); });
    return kSuccess;
  }
  throw UsageError("unknown sweep kind '" + o.kind + "' (expected lambda or alpha)");
}

struct VerifyOptions {
  std::string model;
  std::string profile = "default";
  std::string out;
  std::size_t points = 200;
  std::uint64_t seed = 0;
};

struct Tolerances {
  double roundtrip;
  double jacobian;
  double intersection;
};

Tolerances tolerance_profile(const std::string& name) {
  if (name == "default") return {1e-6, 1e-3, 1e-9};
  if (name == "strict") return {1e-9, 1e-4, 1e-10};
  throw UsageError("unknown tolerance profile '" + name + "' (expected default or strict)");
}

int cmd_verify(const VerifyOptions& o, std::ostream& out) {
  const auto tol = tolerance_profile(o.profile);
  const auto model = load_model(require(o.model, "--model"));
  if (o.points == 0) throw UsageError("--points must be positive");
  const auto attrs = model.attributes();
  Rng rng(o.seed);

  // Latent test points: prior draws pulled back through the flow.
  const std::size_t per_attr = (o.points + attrs.size() - 1) / attrs.size();
  PointBatch z(model.dim, static_cast<Eigen::Index>(per_attr * attrs.size()));
  for (std::size_t a = 0; a < attrs.size(); ++a) {
    z.middleCols(static_cast<Eigen::Index>(a * per_attr), static_cast<Eigen::Index>(per_attr)) =
        sample(model.prior(attrs[a]), 1.0, per_attr, rng);
  }
  const PointBatch x = flow_inverse(model, z);

  std::ostringstream report;
  bool ok = true;
  auto line = [&](const std::string& name, bool pass, const std::string& detail) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%-28s %s  ", name.c_str(), pass ? "PASS" : "FAIL");
    report << buf << detail << '\n';
    ok = ok && pass;
  };

  {
    const PointBatch back = flow_inverse(model, flow_forward(model, x).points);
    const double err = (back - x).cwiseAbs().maxCoeff();
    line("invertibility", err <= tol.roundtrip, "max_abs_error=" + sci(err) + " tolerance=" + sci(tol.roundtrip));
  }
  {
    double worst = 0.0;
    const auto n = std::min<Eigen::Index>(x.cols(), 100);
    for (Eigen::Index j = 0; j < n; ++j) {
      const Vector xj = x.col(j);
      const double analytic = flow_forward(model, xj).log_det;
      const double numeric = finite_difference_log_det(model, xj);
      worst = std::max(worst, std::abs(std::expm1(numeric - analytic)));
    }
    line("jacobian", worst <= tol.jacobian,
         "max_rel_det_error=" + sci(worst) + " tolerance=" + sci(tol.jacobian) + " points=" + std::to_string(n));
  }
  {
    double worst = 0.0;
    int pairs = 0;
    for (std::size_t i = 0; i < attrs.size(); ++i) {
      for (std::size_t j = i + 1; j < attrs.size(); ++j) {
        const auto zc = equal_density_point(model.prior(attrs[i]), model.prior(attrs[j]));
        if (!zc) continue;
        ++pairs;
        const Vector xc = flow_inverse(model, *zc);
        const double gap = log_prob(model, attrs[i], xc) - log_prob(model, attrs[j], xc);
        worst = std::max(worst, std::abs(std::expm1(gap)));
      }
    }
    line("intersection_invertibility", worst <= tol.intersection,
         "max_rel_density_gap=" + sci(worst) + " tolerance=" + sci(tol.intersection) +
             " pairs=" + std::to_string(pairs));
  }
  {
    std::size_t compared = 0;
    std::size_t mismatches = 0;
    std::vector<Vector> lp;
    for (const auto& a : attrs) lp.push_back(log_prob(model, a, x));
    for (Eigen::Index k = 0; k < x.cols(); ++k) {
      const Vector zk = z.col(k);
      for (std::size_t i = 0; i < attrs.size(); ++i) {
        for (std::size_t j = i + 1; j < attrs.size(); ++j) {
          const double prior_gap =
              gaussian_log_pdf(model.prior(attrs[i]), zk) - gaussian_log_pdf(model.prior(attrs[j]), zk);
          if (std::abs(prior_gap) < 1e-9) continue;  // numerically tied
          ++compared;
          const double latent_gap = lp[i](k) - lp[j](k);
          if ((prior_gap > 0.0) != (latent_gap > 0.0)) ++mismatches;
        }
      }
    }
    line("inequality_maintenance", mismatches == 0,
         "sign_mismatches=" + std::to_string(mismatches) + "/" + std::to_string(compared));
  }
  for (const auto& a : attrs) {
    const auto s = isotropy_stats(model.prior(a));
    char buf[160];
    std::snprintf(buf, sizeof buf, "%-28s INFO  max=%.3f min=%.3f avg=%.3f std=%.3f\n", ("isotropy[" + a + "]").c_str(),
                  s.max, s.min, s.avg, s.std);
    report << buf;
  }
  report << "result: " << (ok ? "PASS" : "FAIL") << '\n';
  emit(o.out, out, [&](std::ostream& s) { s << report.str(); });
  return ok ? kSuccess : kVerificationFailure;
}

}  // namespace

int run(std::span<const std::string> args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Controllable sampling through a normalizing flow over labeled latent points", "priorflow"};
  app.require_subcommand(1);
  app.option_defaults()->always_capture_default();
  std::string config_path;

  auto add_config = [&](CLI::App* sub) { sub->add_option("--config", config_path, "flat key=value config file"); };

  SynthOptions synth;
  auto* synth_cmd = app.add_subcommand("synth", "generate a balanced synthetic latent dataset");
  synth_cmd->add_option("--out", synth.out, "dataset path (stdout if omitted)");
  synth_cmd->add_option("--scene", synth.scene, "default | separated");
  synth_cmd->add_option("--dim", synth.dim, "latent dimension")->check(CLI::PositiveNumber);
  synth_cmd->add_option("--count", synth.count, "points per attribute")->check(CLI::PositiveNumber);
  synth_cmd->add_option("--seed", synth.seed, "random seed");
  add_config(synth_cmd);

  TrainOptions tr;
  auto* train_cmd = app.add_subcommand("train", "fit the flow and per-attribute priors");
  train_cmd->add_option("--data", tr.data, "dataset (JSON lines)");
  train_cmd->add_option("--model", tr.model, "output model path");
  train_cmd->add_option("--loss-out", tr.loss_out, "loss trace path (default <model>.loss.csv)");
  train_cmd->add_option("--epochs", tr.epochs)->check(CLI::PositiveNumber);
  train_cmd->add_option("--batch-size", tr.batch_size)->check(CLI::PositiveNumber);
  train_cmd->add_option("--lr", tr.lr)->check(CLI::PositiveNumber);
  train_cmd->add_option("--layers", tr.layers, "coupling layers")->check(CLI::NonNegativeNumber);
  train_cmd->add_option("--hidden", tr.hidden, "hidden widths, comma separated");
  train_cmd->add_option("--activation", tr.activation, "tanh | relu");
  train_cmd->add_option("--prior-mode", tr.prior_mode, "learned | fixed");
  train_cmd->add_option("--clip", tr.clip, "gradient clip norm")->check(CLI::PositiveNumber);
  train_cmd->add_option("--scale-clamp", tr.scale_clamp)->check(CLI::PositiveNumber);
  train_cmd->add_option("--seed", tr.seed);
  add_config(train_cmd);

  SampleOptions smp;
  auto* sample_cmd = app.add_subcommand("sample", "sample one attribute with scale lambda");
  sample_cmd->add_option("--model", smp.model);
  sample_cmd->add_option("--attr", smp.attr);
  sample_cmd->add_option("--out", smp.out);
  sample_cmd->add_option("--lambda", smp.lambda)->check(CLI::NonNegativeNumber);
  sample_cmd->add_option("--count", smp.count)->check(CLI::PositiveNumber);
  sample_cmd->add_option("--seed", smp.seed);
  add_config(sample_cmd);

  ControlOptions ctl;
  auto* control_cmd = app.add_subcommand("control", "sample an interpolation of attribute priors");
  control_cmd->add_option("--model", ctl.model);
  control_cmd->add_option("--weights", ctl.weights, "e.g. pos=0.7,neg=0.3");
  control_cmd->add_option("--lambda", ctl.lambda)->check(CLI::NonNegativeNumber);
  control_cmd->add_option("--offset", ctl.offset, "shift of the sampling centre away from --away-from");
  control_cmd->add_option("--away-from", ctl.away_from, "interfering attribute");
  control_cmd->add_option("--count", ctl.count)->check(CLI::PositiveNumber);
  control_cmd->add_option("--out", ctl.out);
  control_cmd->add_option("--seed", ctl.seed);
  add_config(control_cmd);

  SweepOptions sw;
  auto* sweep_cmd = app.add_subcommand("sweep", "lambda or alpha sweep tables");
  sweep_cmd->add_option("--kind", sw.kind, "lambda | alpha");
  sweep_cmd->add_option("--grid", sw.grid, "start:stop:step, a value, or a comma list");
  sweep_cmd->add_option("--out", sw.out);
  sweep_cmd->add_option("--target-mean", sw.target_mean);
  sweep_cmd->add_option("--target-std", sw.target_std)->check(CLI::PositiveNumber);
  sweep_cmd->add_option("--interferer-mean", sw.interferer_mean);
  sweep_cmd->add_option("--interferer-std", sw.interferer_std)->check(CLI::PositiveNumber);
  sweep_cmd->add_option("--offset", sw.offset, "sampler shift away from the interferer");
  sweep_cmd->add_option("--model", sw.model, "model (alpha sweeps)");
  sweep_cmd->add_option("--pair", sw.pair, "a,b (alpha sweeps)");
  sweep_cmd->add_option("--lambda", sw.lambda)->check(CLI::NonNegativeNumber);
  sweep_cmd->add_option("--count", sw.count)->check(CLI::PositiveNumber);
  sweep_cmd->add_option("--seed", sw.seed);
  add_config(sweep_cmd);

  VerifyOptions ver;
  auto* verify_cmd = app.add_subcommand("verify", "check invertibility and prior/latent density properties");
  verify_cmd->add_option("--model", ver.model);
  verify_cmd->add_option("--profile", ver.profile, "default | strict");
  verify_cmd->add_option("--points", ver.points)->check(CLI::PositiveNumber);
  verify_cmd->add_option("--out", ver.out);
  verify_cmd->add_option("--seed", ver.seed);
  add_config(verify_cmd);

  std::vector<const char*> argv;
  for (const auto& a : args) argv.push_back(a.c_str());
  try {
    app.parse(static_cast<int>(argv.size()), argv.data());
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return kSuccess;
  } catch (const CLI::CallForAllHelp&) {
    out << app.help("", CLI::AppFormatMode::All);
    return kSuccess;
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << '\n';
    return kUsageError;
  }

  CLI::App* sub = app.get_subcommands().front();
  try {
    if (!config_path.empty()) apply_config_file(*sub, config_path);
    log_resolved_config(*sub, err);
    if (sub == synth_cmd) return cmd_synth(synth, out);
    if (sub == train_cmd) return cmd_train(tr, err);
    if (sub == sample_cmd) return cmd_sample(smp, out);
    if (sub == control_cmd) return cmd_control(ctl, out, err);
    if (sub == sweep_cmd) return cmd_sweep(sw, out, err);
    if (sub == verify_cmd) return cmd_verify(ver, out);
  } catch (const UsageError& e) {
    err << "error: " << e.what() << '\n';
    return kUsageError;
  } catch (const DataError& e) {
    err << "error: " << e.what() << '\n';
    return kDataError;
  } catch (const NumericalError& e) {
    err << "error: " << e.what() << '\n';
    return kDataError;
  } catch (const std::invalid_argument& e) {
    err << "error: " << e.what() << '\n';
    return kUsageError;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return kDataError;
  }
  return kUsageError;
}

int run(int argc, const char* const* argv) {
  std::vector<std::string> args(argv, argv + argc);
  return run(args, std::cout, std::cerr);
}

}  // namespace priorflow::cli
