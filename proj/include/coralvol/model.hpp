#pragma once

#include <array>
#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "coralvol/autodiff.hpp"
#include "coralvol/cloud.hpp"

namespace coralvol::model {

// --- neighbourhood graph -----------------------------------------------------

// For each point, its k nearest other points by Euclidean distance, nearest
// first, ties broken by smaller index. Row-major N x k. Throws DataError if N <= k.
std::vector<std::uint32_t> knn_graph(const std::vector<std::array<double, 3>>& points, std::size_t k);

// --- EdgeConv ----------------------------------------------------------------
//
// For every edge (i, j): m_ij = f_i W_self + (f_j - f_i) W_diff, instance
// normalized per channel over all N*k edges, affine (gamma, beta), leaky ReLU,
// then max over the k neighbours of i.

struct EdgeConvParams {
  ad::Var w_self;  // [C_in, C_out]
  ad::Var w_diff;  // [C_in, C_out]
  ad::Var gamma;   // [C_out]
  ad::Var beta;    // [C_out]
};

// Single fused node for gather + norm + affine + activation + max.
ad::Var edge_conv(ad::Var features, const std::vector<std::uint32_t>& neighbors, std::size_t k,
                  const EdgeConvParams& p, double slope);

// Same function assembled from primitives only; used to verify the fused op.
ad::Var edge_conv_reference(ad::Var features, const std::vector<std::uint32_t>& neighbors, std::size_t k,
                            const EdgeConvParams& p, double slope);

// --- regressor ---------------------------------------------------------------

struct RegressorConfig {
  std::size_t k = 30;
  std::vector<std::size_t> edgeconv_channels{64, 64, 128, 256, 256};
  std::vector<std::size_t> mlp_hidden{512, 128};
  double dropout_p = 0.3;
  double leaky_slope = 0.2;
  std::size_t input_dim = 4;

  static RegressorConfig full() { return {}; }
  static RegressorConfig desk();  // k 10, channels [32,32,64], mlp [128,64]
  static RegressorConfig tiny();  // k 4, channels [8,8], mlp [16]

  void validate() const;  // ConfigError
  bool operator==(const RegressorConfig&) const = default;
};

std::string config_to_json(const RegressorConfig& config);
RegressorConfig config_from_json(std::string_view json);  // ConfigError on bad content

struct Prediction {
  double mu = 0.0;
  double log_var = 0.0;
  // Reporting transform for the predicted variance.
  double confidence() const;
  double sigma() const;
};

inline constexpr double kMuFloor = 1e-8;

ad::ParamSet init_params(const RegressorConfig& config, std::uint64_t seed);
// Throws ConfigError unless params hold exactly the arrays config expects.
void check_params(const RegressorConfig& config, const ad::ParamSet& params);

// A cloud turned into network input: [N, 4] features and its static graph.
struct GraphInput {
  ad::Tensor features;
  std::vector<std::uint32_t> neighbors;
  std::size_t k = 0;
};
GraphInput make_input(const cloud::FeatureCloud& cloud, std::size_t k);

struct ForwardResult {
  ad::Var mu;       // scalar, softplus(raw) + 1e-8
  ad::Var log_var;  // scalar
};

// Dropout is active only when `train` is set; `dropout_seed` picks its masks.
ForwardResult forward(ad::Tape& tape, const ad::Bound& params, const RegressorConfig& config,
                      const GraphInput& input, bool train = false, std::uint64_t dropout_seed = 0);

// Inference convenience: eval mode, no gradients kept.
Prediction predict(const RegressorConfig& config, const ad::ParamSet& params, const GraphInput& input);
Prediction predict(const RegressorConfig& config, const ad::ParamSet& params, const cloud::FeatureCloud& cloud);

// --- checkpoints ---------------------------------------------------------------
//
// A parameter file whose JSON header is
//   {"format": "coralvol-regressor", "config": {...}, "meta": {string: string}}

struct Checkpoint {
  RegressorConfig config;
  ad::ParamSet params;
  std::map<std::string, std::string> meta;
};

void save_checkpoint(const std::string& path, const RegressorConfig& config, const ad::ParamSet& params,
                     const std::map<std::string, std::string>& meta = {});
Checkpoint load_checkpoint(const std::string& path);

}  // namespace coralvol::model
