#include "priorflow/flow.hpp"

#include <json.hpp>

#include <fstream>
#include <sstream>

namespace priorflow {

using nlohmann::json;

namespace {

constexpr const char* kFormatName = "priorflow-model";

json vector_json(const Vector& v) { return std::vector<double>(v.data(), v.data() + v.size()); }

Vector vector_from(const json& j, const char* what) {
  if (!j.is_array()) throw DataError(std::string(what) + " must be an array");
  Vector v(static_cast<Eigen::Index>(j.size()));
  for (std::size_t i = 0; i < j.size(); ++i) {
    if (!j[i].is_number()) throw DataError(std::string(what) + " must contain numbers");
    v(static_cast<Eigen::Index>(i)) = j[i].get<double>();
  }
  return v;
}

json mlp_json(const Mlp& net) {
  json j;
  j["activation"] = to_string(net.activation);
  j["widths"] = net.widths();
  json weights = json::array();
  json biases = json::array();
  for (const auto& layer : net.layers) {
    std::vector<double> flat;
    flat.reserve(static_cast<std::size_t>(layer.weight.size()));
    for (Eigen::Index r = 0; r < layer.weight.rows(); ++r)
      for (Eigen::Index c = 0; c < layer.weight.cols(); ++c) flat.push_back(layer.weight(r, c));
    weights.push_back(std::move(flat));
    biases.push_back(vector_json(layer.bias));
  }
  j["weights"] = std::move(weights);
  j["biases"] = std::move(biases);
  return j;
}

Mlp mlp_from(const json& j) {
  const auto widths = j.at("widths").get<std::vector<int>>();
  Mlp net = Mlp::zeros(widths, activation_from_string(j.at("activation").get<std::string>()));
  const auto& weights = j.at("weights");
  const auto& biases = j.at("biases");
  if (weights.size() != net.layers.size() || biases.size() != net.layers.size())
    throw DataError("network layer count does not match its widths");
  for (std::size_t k = 0; k < net.layers.size(); ++k) {
    auto& layer = net.layers[k];
    const Vector flat = vector_from(weights[k], "weights");
    if (flat.size() != layer.weight.size()) throw DataError("weight matrix size does not match widths");
    Eigen::Index i = 0;
    for (Eigen::Index r = 0; r < layer.weight.rows(); ++r)
      for (Eigen::Index c = 0; c < layer.weight.cols(); ++c) layer.weight(r, c) = flat(i++);
    layer.bias = vector_from(biases[k], "biases");
    if (layer.bias.size() != layer.weight.rows()) throw DataError("bias size does not match widths");
  }
  return net;
}

}  // namespace

std::string serialize_model(const FlowModel& model) {
  validate(model);
  json doc;
  doc["format"] = kFormatName;
  doc["version"] = kModelFormatVersion;
  doc["dim"] = model.dim;
  json layers = json::array();
  for (const auto& layer : model.layers) {
    json l;
    std::vector<int> mask;
    for (bool b : layer.mask) mask.push_back(b ? 1 : 0);
    l["mask"] = mask;
    l["scale_clamp"] = layer.scale_clamp;
    l["scale_net"] = mlp_json(layer.scale_net);
    l["translate_net"] = mlp_json(layer.translate_net);
    layers.push_back(std::move(l));
  }
  doc["layers"] = std::move(layers);
  json priors = json::object();
  for (const auto& [attr, g] : model.priors) {
    priors[attr] = {{"mean", vector_json(g.mean)}, {"std", vector_json(g.std)}};
  }
  doc["priors"] = std::move(priors);
  return doc.dump() + "\n";
}

FlowModel deserialize_model(const std::string& text) {
  json doc;
  try {
    doc = json::parse(text);
  } catch (const json::parse_error& e) {
    throw DataError(std::string("model document is not valid JSON: ") + e.what());
  }
  try {
    if (!doc.is_object() || doc.value("format", std::string()) != kFormatName)
      throw DataError("not a priorflow model document");
    const int version = doc.at("version").get<int>();
    if (version != kModelFormatVersion)
      throw DataError("unsupported model format version " + std::to_string(version));
    FlowModel model;
    model.dim = doc.at("dim").get<Eigen::Index>();
    for (const auto& l : doc.at("layers")) {
      CouplingLayer layer;
      for (int b : l.at("mask").get<std::vector<int>>()) layer.mask.push_back(b != 0);
      layer.scale_clamp = l.at("scale_clamp").get<double>();
      layer.scale_net = mlp_from(l.at("scale_net"));
      layer.translate_net = mlp_from(l.at("translate_net"));
      model.layers.push_back(std::move(layer));
    }
    for (const auto& [attr, g] : doc.at("priors").items()) {
      model.priors.emplace(attr, DiagonalGaussian(vector_from(g.at("mean"), "prior mean"),
                                                  vector_from(g.at("std"), "prior std")));
    }
    validate(model);
    return model;
  } catch (const json::exception& e) {
    throw DataError(std::string("malformed model document: ") + e.what());
  } catch (const std::invalid_argument& e) {
    throw DataError(std::string("invalid model document: ") + e.what());
  }
}

void save_model(const FlowModel& model, const std::filesystem::path& path) {
  const std::string text = serialize_model(model);
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot open " + path.string() + " for writing");
  out << text;
  if (!out) throw DataError("failed writing " + path.string());
}

FlowModel load_model(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open model " + path.string());
  std::ostringstream buf;
  buf << in.rdbuf();
  try {
    return deserialize_model(buf.str());
  } catch (const DataError& e) {
    throw DataError(path.string() + ": " + e.what());
  }
}

}  // namespace priorflow
