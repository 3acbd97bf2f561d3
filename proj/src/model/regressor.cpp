#include <cmath>

#include "coralvol/model.hpp"
#include "json.hpp"

namespace coralvol::model {

using ad::Shape;
using ad::Tensor;
using ad::Var;
using nlohmann::json;

RegressorConfig RegressorConfig::desk() {
  RegressorConfig c;
  c.k = 10;
  c.edgeconv_channels = {32, 32, 64};
  c.mlp_hidden = {128, 64};
  return c;
}

RegressorConfig RegressorConfig::tiny() {
  RegressorConfig c;
  c.k = 4;
  c.edgeconv_channels = {8, 8};
  c.mlp_hidden = {16};
  return c;
}

void RegressorConfig::validate() const {
  if (k < 1) throw ConfigError("regressor: k must be at least 1");
  if (edgeconv_channels.empty()) throw ConfigError("regressor: edgeconv_channels must not be empty");
  for (auto c : edgeconv_channels)
    if (c < 1) throw ConfigError("regressor: channel widths must be positive");
  for (auto h : mlp_hidden)
    if (h < 1) throw ConfigError("regressor: hidden widths must be positive");
  if (!(dropout_p >= 0.0 && dropout_p < 1.0)) throw ConfigError("regressor: dropout_p must lie in [0, 1)");
  if (!(leaky_slope > 0.0 && leaky_slope < 1.0)) throw ConfigError("regressor: leaky_slope must lie in (0, 1)");
  if (input_dim != 4) throw ConfigError("regressor: input_dim must be 4 (x, y, z, confidence)");
}

std::string config_to_json(const RegressorConfig& c) {
  return json{{"k", c.k},
              {"edgeconv_channels", c.edgeconv_channels},
              {"mlp_hidden", c.mlp_hidden},
              {"dropout_p", c.dropout_p},
              {"leaky_slope", c.leaky_slope},
              {"input_dim", c.input_dim}}
      .dump();
}

namespace {

RegressorConfig config_from(const json& j) {
  RegressorConfig c;
  try {
    for (const auto& [key, value] : j.items()) {
      if (key == "k") c.k = value.get<std::size_t>();
      else if (key == "edgeconv_channels") c.edgeconv_channels = value.get<std::vector<std::size_t>>();
      else if (key == "mlp_hidden") c.mlp_hidden = value.get<std::vector<std::size_t>>();
      else if (key == "dropout_p") c.dropout_p = value.get<double>();
      else if (key == "leaky_slope") c.leaky_slope = value.get<double>();
      else if (key == "input_dim") c.input_dim = value.get<std::size_t>();
      else throw ConfigError("regressor config: unknown key '" + key + "'");
    }
  } catch (const json::exception& e) {
    throw ConfigError(std::string("regressor config: ") + e.what());
  }
  c.validate();
  return c;
}

}  // namespace

RegressorConfig config_from_json(std::string_view text) {
  try {
    return config_from(json::parse(text));
  } catch (const json::exception& e) {
    throw ConfigError(std::string("regressor config: ") + e.what());
  }
}

double Prediction::confidence() const { return std::exp(-log_var); }
double Prediction::sigma() const { return std::exp(0.5 * log_var); }

namespace {

struct ParamSpec {
  std::string name;
  Shape shape;
  enum Kind { kWeight, kZero, kOne } kind;
  std::size_t fan_in = 0;
};

std::string ec_name(std::size_t l, const char* what) { return "ec" + std::to_string(l) + "." + what; }
std::string mlp_name(std::size_t l, const char* what) { return "mlp" + std::to_string(l) + "." + what; }

std::vector<ParamSpec> param_specs(const RegressorConfig& c) {
  std::vector<ParamSpec> specs;
  std::size_t in = c.input_dim, pooled = 0;
  for (std::size_t l = 0; l < c.edgeconv_channels.size(); ++l) {
    const std::size_t out = c.edgeconv_channels[l];
    specs.push_back({ec_name(l, "w_self"), {in, out}, ParamSpec::kWeight, 2 * in});
    specs.push_back({ec_name(l, "w_diff"), {in, out}, ParamSpec::kWeight, 2 * in});
    specs.push_back({ec_name(l, "gamma"), {out}, ParamSpec::kOne});
    specs.push_back({ec_name(l, "beta"), {out}, ParamSpec::kZero});
    pooled += out;
    in = out;
  }
  in = pooled;
  for (std::size_t l = 0; l < c.mlp_hidden.size(); ++l) {
    specs.push_back({mlp_name(l, "w"), {in, c.mlp_hidden[l]}, ParamSpec::kWeight, in});
    specs.push_back({mlp_name(l, "b"), {c.mlp_hidden[l]}, ParamSpec::kZero});
    in = c.mlp_hidden[l];
  }
  specs.push_back({"out.w", {in, 2}, ParamSpec::kWeight, in});
  specs.push_back({"out.b", {2}, ParamSpec::kZero});
  return specs;
}

}  // namespace

ad::ParamSet init_params(const RegressorConfig& config, std::uint64_t seed) {
  config.validate();
  ad::ParamSet params;
  for (const auto& spec : param_specs(config)) {
    Tensor t(spec.shape, spec.kind == ParamSpec::kOne ? 1.0 : 0.0);
    if (spec.kind == ParamSpec::kWeight) {
      // Kaiming uniform on fan-in with negative slope sqrt(5), i.e. bound 1/sqrt(fan_in).
      // The ReLU gain blows up the head: pooled maxima are all positive and of order 3.
      const double bound = 1.0 / std::sqrt(static_cast<double>(spec.fan_in));
      Rng rng(mix_seed(seed, fnv1a64(spec.name)));
      for (auto& v : t.data) v = rng.uniform(-bound, bound);
    }
    params.add(spec.name, std::move(t));
  }
  return params;
}

void check_params(const RegressorConfig& config, const ad::ParamSet& params) {
  const auto specs = param_specs(config);
  if (specs.size() != params.count())
    throw ConfigError("parameter set holds " + std::to_string(params.count()) + " arrays, config expects " +
                      std::to_string(specs.size()));
  for (const auto& spec : specs) {
    if (!params.contains(spec.name)) throw ConfigError("missing parameter '" + spec.name + "'");
    if (params.at(spec.name).shape != spec.shape)
      throw ConfigError("parameter '" + spec.name + "' has shape " + ad::shape_str(params.at(spec.name).shape) +
                        ", config expects " + ad::shape_str(spec.shape));
  }
}

GraphInput make_input(const cloud::FeatureCloud& cloud, std::size_t k) {
  cloud::check_cloud(cloud);
  const std::size_t n = cloud.size();
  if (n < k + 1)
    throw DataError("cloud '" + cloud.shape_id + "' has " + std::to_string(n) + " points; k=" + std::to_string(k) +
                    " needs at least " + std::to_string(k + 1));
  GraphInput in;
  in.k = k;
  in.features = Tensor({n, 4});
  std::vector<std::array<double, 3>> xyz(n);
  for (std::size_t i = 0; i < n; ++i) {
    const auto& f = cloud.features[i];
    for (int a = 0; a < 4; ++a) in.features.data[i * 4 + a] = f[a];
    xyz[i] = {f[0], f[1], f[2]};
  }
  in.neighbors = knn_graph(xyz, k);
  return in;
}

ForwardResult forward(ad::Tape& tape, const ad::Bound& params, const RegressorConfig& config,
                      const GraphInput& input, bool train, std::uint64_t dropout_seed) {
  if (input.k != config.k)
    throw ConfigError("graph built with k=" + std::to_string(input.k) + " but config has k=" +
                      std::to_string(config.k));
  auto p = [&](const std::string& name) {
    auto it = params.find(name);
    if (it == params.end()) throw ConfigError("missing parameter '" + name + "'");
    return it->second;
  };

  Var h = tape.constant(input.features);
  std::vector<Var> layers;
  for (std::size_t l = 0; l < config.edgeconv_channels.size(); ++l) {
    const EdgeConvParams ec{p(ec_name(l, "w_self")), p(ec_name(l, "w_diff")), p(ec_name(l, "gamma")),
                            p(ec_name(l, "beta"))};
    h = edge_conv(h, input.neighbors, config.k, ec, config.leaky_slope);
    layers.push_back(h);
  }
  Var pooled = ad::max_reduce(layers.size() == 1 ? layers[0] : ad::concat(layers, 1), 0);
  Var x = ad::reshape(pooled, {1, pooled.shape()[0]});
  for (std::size_t l = 0; l < config.mlp_hidden.size(); ++l) {
    x = ad::add(ad::matmul(x, p(mlp_name(l, "w"))), p(mlp_name(l, "b")));
    x = ad::leaky_relu(x, config.leaky_slope);
    x = ad::dropout(x, config.dropout_p, mix_seed(dropout_seed, l), train);
  }
  Var raw = ad::reshape(ad::add(ad::matmul(x, p("out.w")), p("out.b")), {2});
  return {ad::add_scalar(ad::softplus(ad::select(raw, 0, 0)), kMuFloor), ad::select(raw, 0, 1)};
}

Prediction predict(const RegressorConfig& config, const ad::ParamSet& params, const GraphInput& input) {
  ad::Tape tape;
  ad::Bound bound;
  for (const auto& [name, t] : params.items()) bound.emplace(name, tape.constant(t));
  const auto out = forward(tape, bound, config, input, false, 0);
  return {out.mu.item(), out.log_var.item()};
}

Prediction predict(const RegressorConfig& config, const ad::ParamSet& params, const cloud::FeatureCloud& cloud) {
  return predict(config, params, make_input(cloud, config.k));
}

void save_checkpoint(const std::string& path, const RegressorConfig& config, const ad::ParamSet& params,
                     const std::map<std::string, std::string>& meta) {
  check_params(config, params);
  const json header{{"format", "coralvol-regressor"}, {"config", json::parse(config_to_json(config))}, {"meta", meta}};
  ad::save_params(params, path, header.dump());
}

Checkpoint load_checkpoint(const std::string& path) {
  auto file = ad::load_params(path);
  Checkpoint ck;
  try {
    const json header = json::parse(file.header);
    if (header.value("format", "") != "coralvol-regressor")
      throw DataError(path + ": not a regressor checkpoint");
    ck.config = config_from(header.at("config"));
    if (header.contains("meta")) ck.meta = header.at("meta").get<std::map<std::string, std::string>>();
  } catch (const json::exception& e) {
    throw DataError(path + ": bad checkpoint header: " + e.what());
  } catch (const ConfigError& e) {
    throw DataError(path + ": " + e.what());
  }
  ck.params = std::move(file.params);
  try {
    check_params(ck.config, ck.params);
  } catch (const ConfigError& e) {
    throw DataError(path + ": " + e.what());
  }
  return ck;
}

}  // namespace coralvol::model
