#include <algorithm>
#include <cmath>
#include <filesystem>
#include <numeric>

#include "coralvol/autodiff.hpp"
#include "coralvol/common.hpp"
#include "coralvol/losses.hpp"
#include "coralvol/model.hpp"
#include "doctest.h"

using namespace coralvol;
using namespace coralvol::model;

namespace {

cloud::FeatureCloud random_cloud(std::size_t n, std::uint64_t seed) {
  cloud::FeatureCloud c;
  Rng rng(seed);
  for (std::size_t i = 0; i < n; ++i)
    c.features.push_back({rng.uniform(-0.5, 0.5), rng.uniform(-0.5, 0.5), rng.uniform(-0.5, 0.5), rng.uniform(0.1, 1.0)});
  return c;
}

ad::Tensor tensor(ad::Shape s, std::vector<double> v) { return ad::Tensor(std::move(s), std::move(v)); }

double rel(double a, double b) { return std::abs(a - b) / std::max(std::abs(b), 1e-300); }

}  // namespace

TEST_CASE("knn graph") {
  const std::vector<std::array<double, 3>> line{{0, 0, 0}, {1, 0, 0}, {2, 0, 0}, {4, 0, 0}};
  // Point 1 is equidistant from 0 and 2; the smaller index wins.
  CHECK(knn_graph(line, 1) == std::vector<std::uint32_t>{1, 0, 1, 2});
  CHECK(knn_graph(line, 2) == std::vector<std::uint32_t>{1, 2, 0, 2, 1, 0, 2, 1});

  const auto full = knn_graph(line, 3);
  for (std::uint32_t i = 0; i < 4; ++i) {
    std::vector<std::uint32_t> row(full.begin() + 3 * i, full.begin() + 3 * i + 3);
    std::sort(row.begin(), row.end());
    std::vector<std::uint32_t> others;
    for (std::uint32_t j = 0; j < 4; ++j)
      if (j != i) others.push_back(j);
    CHECK(row == others);
  }

  const std::vector<std::array<double, 3>> dup{{0, 0, 0}, {5, 5, 5}, {5, 5, 5}, {9, 0, 0}};
  const auto g = knn_graph(dup, 1);
  CHECK(g[1] == 2);
  CHECK(g[2] == 1);

  CHECK_THROWS_AS(knn_graph(line, 4), DataError);
}

TEST_CASE("knn graph agrees with brute force on random points") {
  Rng rng(5);
  std::vector<std::array<double, 3>> pts(300);
  for (auto& p : pts) p = {rng.normal(), rng.normal(), rng.normal()};
  const std::size_t k = 7;
  const auto g = knn_graph(pts, k);
  for (std::size_t i = 0; i < pts.size(); i += 13) {
    std::vector<std::pair<double, std::uint32_t>> d;
    for (std::uint32_t j = 0; j < pts.size(); ++j) {
      if (j == i) continue;
      double s = 0;
      for (int a = 0; a < 3; ++a) s += (pts[i][a] - pts[j][a]) * (pts[i][a] - pts[j][a]);
      d.push_back({s, j});
    }
    std::sort(d.begin(), d.end());
    for (std::size_t n = 0; n < k; ++n) CHECK(g[i * k + n] == d[n].second);
  }
}

TEST_CASE("edge conv on three points matches a hand computation") {
  ad::Tape tape;
  const auto f = tape.constant(tensor({3, 1}, {0, 1, 3}));
  const std::vector<std::uint32_t> nb{1, 2, 0, 2, 1, 0};
  const EdgeConvParams p{tape.variable(tensor({1, 1}, {2.0})), tape.variable(tensor({1, 1}, {0.5})),
                         tape.variable(tensor({1}, {1.5})), tape.variable(tensor({1}, {0.1}))};
  // Messages {0.5, 1.5}, {1.5, 3}, {5, 4.5}; mean 8/3, variance 49/18.
  const auto out = edge_conv(f, nb, 2, p, 0.2);
  REQUIRE(out.shape() == ad::Shape{3, 1});
  CHECK(out.value().data[0] == doctest::Approx(-0.19213164472677055).epsilon(1e-12));
  CHECK(out.value().data[1] == doctest::Approx(0.40304520675252953).epsilon(1e-12));
  CHECK(out.value().data[2] == doctest::Approx(2.2213164472677054).epsilon(1e-12));
}

TEST_CASE("fused edge conv equals the composite of primitives") {
  Rng rng(2);
  const std::size_t n = 24, k = 5, cin = 4, cout = 6;
  std::vector<std::array<double, 3>> xyz(n);
  ad::Tensor feats({n, cin});
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t c = 0; c < cin; ++c) feats.data[i * cin + c] = rng.normal();
    xyz[i] = {feats.data[i * cin], feats.data[i * cin + 1], feats.data[i * cin + 2]};
  }
  const auto nb = knn_graph(xyz, k);
  auto rand = [&](ad::Shape s) {
    ad::Tensor t(std::move(s));
    for (auto& v : t.data) v = rng.uniform(-0.7, 0.7);
    return t;
  };
  const auto ws = rand({cin, cout}), wd = rand({cin, cout}), ga = rand({cout}), be = rand({cout});
  const auto upstream = rand({n, cout});

  auto run = [&](bool fused) {
    ad::Tape tape;
    const auto x = tape.variable(feats);
    const EdgeConvParams p{tape.variable(ws), tape.variable(wd), tape.variable(ga), tape.variable(be)};
    const auto y = fused ? edge_conv(x, nb, k, p, 0.2) : edge_conv_reference(x, nb, k, p, 0.2);
    tape.backward(ad::sum(ad::mul(y, tape.constant(upstream))));
    return std::vector<ad::Tensor>{y.value(), tape.grad(x), tape.grad(p.w_self), tape.grad(p.w_diff),
                                   tape.grad(p.gamma), tape.grad(p.beta)};
  };
  const auto a = run(true), b = run(false);
  for (std::size_t t = 0; t < a.size(); ++t) {
    REQUIRE(a[t].shape == b[t].shape);
    for (std::size_t i = 0; i < a[t].size(); ++i)
      CHECK(std::abs(a[t].data[i] - b[t].data[i]) <= 1e-10 * std::max(1.0, std::abs(b[t].data[i])));
  }
}

TEST_CASE("edge conv equivariance and constant fields") {
  Rng rng(9);
  const std::size_t n = 12, k = 3;
  std::vector<std::array<double, 3>> xyz(n);
  ad::Tensor feats({n, 3});
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t c = 0; c < 3; ++c) xyz[i][c] = feats.data[i * 3 + c] = rng.normal();
  ad::Tensor w({3, 2});
  for (auto& v : w.data) v = rng.normal();

  ad::Tape tape;
  const EdgeConvParams p{tape.constant(w), tape.constant(w), tape.constant(ad::Tensor({2}, 1.0)),
                         tape.constant(ad::Tensor({2}, 0.0))};
  const auto nb = knn_graph(xyz, k);
  const auto y = edge_conv(tape.constant(feats), nb, k, p, 0.2).value();

  std::vector<std::uint32_t> perm(n);
  std::iota(perm.begin(), perm.end(), 0u);
  std::reverse(perm.begin(), perm.end());
  std::swap(perm[2], perm[7]);
  std::vector<std::uint32_t> inv(n);
  for (std::uint32_t i = 0; i < n; ++i) inv[perm[i]] = i;
  ad::Tensor pf({n, 3});
  std::vector<std::uint32_t> pnb(n * k);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t c = 0; c < 3; ++c) pf.data[i * 3 + c] = feats.data[perm[i] * 3 + c];
    for (std::size_t j = 0; j < k; ++j) pnb[i * k + j] = inv[nb[perm[i] * k + j]];
  }
  const auto py = edge_conv(tape.constant(pf), pnb, k, p, 0.2).value();
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t c = 0; c < 2; ++c) CHECK(py.data[i * 2 + c] == doctest::Approx(y.data[perm[i] * 2 + c]).epsilon(1e-12));

  // Identical features: no differences, so the graph is irrelevant.
  const ad::Tensor same({n, 3}, 0.25);
  std::vector<std::uint32_t> shuffled(nb.rbegin(), nb.rend());
  const auto c1 = edge_conv(tape.constant(same), nb, k, p, 0.2).value();
  const auto c2 = edge_conv(tape.constant(same), shuffled, k, p, 0.2).value();
  CHECK(c1.data == c2.data);

  CHECK_THROWS_AS(edge_conv(tape.constant(ad::Tensor({n, 4})), nb, k, p, 0.2), ad::ShapeError);
}

TEST_CASE("presets and config json") {
  const auto full = RegressorConfig::full();
  CHECK(full.k == 30);
  CHECK(full.edgeconv_channels == std::vector<std::size_t>{64, 64, 128, 256, 256});
  CHECK(full.mlp_hidden == std::vector<std::size_t>{512, 128});
  CHECK(full.dropout_p == 0.3);
  CHECK(full.input_dim == 4);
  const auto desk = RegressorConfig::desk();
  CHECK(desk.k == 10);
  CHECK(desk.edgeconv_channels == std::vector<std::size_t>{32, 32, 64});
  CHECK(desk.mlp_hidden == std::vector<std::size_t>{128, 64});
  const auto tiny = RegressorConfig::tiny();
  CHECK(tiny.k == 4);
  CHECK(tiny.edgeconv_channels == std::vector<std::size_t>{8, 8});

  for (const auto& c : {full, desk, tiny}) CHECK(config_from_json(config_to_json(c)) == c);
  CHECK_THROWS_AS(config_from_json("{\"k\": 0}"), ConfigError);
  CHECK_THROWS_AS(config_from_json("{\"k\": 3, \"colour\": 1}"), ConfigError);
  CHECK_THROWS_AS(config_from_json("not json"), ConfigError);

  RegressorConfig bad = tiny;
  bad.edgeconv_channels.clear();
  CHECK_THROWS_AS(bad.validate(), ConfigError);
  bad = tiny;
  bad.dropout_p = 1.0;
  CHECK_THROWS_AS(bad.validate(), ConfigError);
}

TEST_CASE("parameter initialization") {
  const auto cfg = RegressorConfig::tiny();
  const auto a = init_params(cfg, 1), b = init_params(cfg, 1), c = init_params(cfg, 2);
  CHECK(a == b);
  CHECK_FALSE(a == c);
  CHECK_NOTHROW(check_params(cfg, a));
  CHECK(a.at("ec0.w_self").shape == ad::Shape{4, 8});
  CHECK(a.at("ec1.w_diff").shape == ad::Shape{8, 8});
  CHECK(a.at("mlp0.w").shape == ad::Shape{16, 16});  // pooled 8 + 8
  CHECK(a.at("out.w").shape == ad::Shape{16, 2});
  for (double v : a.at("ec0.gamma").data) CHECK(v == 1.0);
  for (double v : a.at("ec0.beta").data) CHECK(v == 0.0);
  for (double v : a.at("mlp0.b").data) CHECK(v == 0.0);
  // Uniform within the fan-in bound.
  const double bound = 1.0 / std::sqrt(8.0);
  double lo = 1, hi = -1;
  for (double v : a.at("ec0.w_self").data) {
    lo = std::min(lo, v);
    hi = std::max(hi, v);
  }
  CHECK(lo >= -bound);
  CHECK(hi <= bound);
  CHECK(hi - lo > bound);

  auto missing = a;
  missing.items().erase("out.b");
  CHECK_THROWS_AS(check_params(cfg, missing), ConfigError);
  auto reshaped = a;
  reshaped.at("out.b") = ad::Tensor({3});
  CHECK_THROWS_AS(check_params(cfg, reshaped), ConfigError);
}

TEST_CASE("forward pass properties") {
  const auto cfg = RegressorConfig::tiny();
  const auto params = init_params(cfg, 3);
  const auto cloud = random_cloud(32, 4);
  const auto p = predict(cfg, params, cloud);
  CHECK(std::isfinite(p.mu));
  CHECK(std::isfinite(p.log_var));
  CHECK(p.mu > 0.0);
  CHECK(p.confidence() == doctest::Approx(std::exp(-p.log_var)));
  CHECK(p.sigma() == doctest::Approx(std::exp(0.5 * p.log_var)));

  const auto again = predict(cfg, params, cloud);
  CHECK(again.mu == p.mu);
  CHECK(again.log_var == p.log_var);

  auto moved = cloud;
  for (auto& f : moved.features) f[0] += 0.3;
  CHECK(predict(cfg, params, moved).mu != p.mu);

  CHECK_THROWS_AS(predict(cfg, params, random_cloud(4, 1)), DataError);
  const auto input = make_input(cloud, 3);
  CHECK_THROWS_AS(predict(cfg, params, input), ConfigError);
}

TEST_CASE("permutation invariance") {
  const auto cfg = RegressorConfig::tiny();
  const auto params = init_params(cfg, 6);
  Rng rng(1);
  for (int trial = 0; trial < 10; ++trial) {
    const auto cloud = random_cloud(64, 100 + trial);
    auto shuffled = cloud;
    for (std::size_t i = shuffled.size(); i > 1; --i)
      std::swap(shuffled.features[i - 1], shuffled.features[rng.below(i)]);
    const auto a = predict(cfg, params, cloud), b = predict(cfg, params, shuffled);
    CHECK(rel(b.mu, a.mu) <= 1e-9);
    CHECK(std::abs(b.log_var - a.log_var) <= 1e-9 * std::max(1.0, std::abs(a.log_var)));
  }
}

TEST_CASE("dropout only acts in training mode") {
  auto cfg = RegressorConfig::tiny();
  cfg.dropout_p = 0.5;
  const auto params = init_params(cfg, 3);
  const auto input = make_input(random_cloud(40, 2), cfg.k);
  auto run = [&](bool train, std::uint64_t seed) {
    ad::Tape tape;
    const auto out = forward(tape, ad::bind(tape, params), cfg, input, train, seed);
    return out.mu.item();
  };
  CHECK(run(false, 1) == run(false, 2));
  CHECK(run(false, 1) == predict(cfg, params, input).mu);
  CHECK(run(true, 1) == run(true, 1));
  CHECK(run(true, 1) != run(true, 2));
}

TEST_CASE("regressor and loss gradient check") {
  const auto cfg = RegressorConfig::tiny();
  const auto input = make_input(random_cloud(32, 8), cfg.k);
  for (std::uint64_t seed : {1u, 2u, 3u}) {
    const auto params = init_params(cfg, seed);
    const ad::ScalarFn f = [&](ad::Tape& tape, const ad::Bound& b) {
      const auto out = forward(tape, b, cfg, input, false, 0);
      return loss::total_loss(out.mu, out.log_var, 0.4, loss::preset("loss5")).total;
    };
    const auto r = grad_check(f, params, 1e-6, 80, seed);
    CAPTURE(r.worst_param);
    CHECK(r.max_rel_error <= 1e-4);
  }
}

TEST_CASE("checkpoints round trip") {
  const auto cfg = RegressorConfig::desk();
  const auto params = init_params(cfg, 12);
  const auto path = (std::filesystem::temp_directory_path() / "coralvol_model.ckpt").string();
  save_checkpoint(path, cfg, params, {{"target", "volume"}, {"epoch", "7"}});
  const auto ck = load_checkpoint(path);
  CHECK(ck.config == cfg);
  CHECK(ck.params == params);
  CHECK(ck.meta.at("target") == "volume");
  CHECK(ck.meta.at("epoch") == "7");

  ad::save_params(params, path, "{\"format\": \"something-else\"}");
  CHECK_THROWS(load_checkpoint(path));
  std::filesystem::remove(path);
  CHECK_THROWS(save_checkpoint(path, RegressorConfig::tiny(), params));
}
