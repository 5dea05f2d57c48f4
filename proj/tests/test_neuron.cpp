#include <cmath>
#include <vector>

#include "doctest.h"
#include "safa/errors.hpp"
#include "safa/lif.hpp"

using namespace safa;

namespace {

LifLayerState single(double u, double theta = 1.0) {
  LifConfig cfg;
  cfg.theta_init = theta;
  ChannelMask m{Tensor({1}), 0.5};
  auto s = LifLayerState::create(1, 1, cfg, m);
  s.membrane[0] = u;
  return s;
}

}  // namespace

TEST_CASE("lif_step hand arithmetic") {
  LifConfig cfg;
  SUBCASE("sub-threshold") {
    auto s = single(0.4);
    auto out = lif_step(s, Tensor::vector({0.3}), cfg);
    CHECK(out[0] == 0.0);
    CHECK(s.membrane[0] == doctest::Approx(0.5).epsilon(1e-15));
  }
  SUBCASE("fires and resets to zero") {
    auto s = single(1.6);
    auto out = lif_step(s, Tensor::vector({0.4}), cfg);
    CHECK(out[0] == 1.0);
    CHECK(s.membrane[0] == 0.0);
  }
  SUBCASE("reset by subtraction") {
    cfg.reset = ResetMode::by_subtraction;
    auto s = single(1.6);
    auto out = lif_step(s, Tensor::vector({0.4}), cfg);
    CHECK(out[0] == 1.0);
    CHECK(s.membrane[0] == doctest::Approx(0.2).epsilon(1e-12));
  }
  SUBCASE("reset to a constant") {
    cfg.u_reset = -0.25;
    auto s = single(1.6);
    lif_step(s, Tensor::vector({0.4}), cfg);
    CHECK(s.membrane[0] == -0.25);
  }
  SUBCASE("equality fires") {
    auto s = single(0.0);
    CHECK(lif_step(s, Tensor::vector({1.0}), cfg)[0] == 1.0);
  }
  SUBCASE("errors") {
    auto s = single(0.0);
    CHECK_THROWS_AS(lif_step(s, Tensor::vector({1.0, 2.0}), cfg), DimensionError);
    CHECK_THROWS_AS(lif_step(s, Tensor::vector({std::nan("")}), cfg), NumericError);
  }
}

TEST_CASE("lif config validation") {
  LifConfig cfg;
  cfg.tau = 0.0;
  CHECK_THROWS_AS(cfg.validate(), ConfigError);
  cfg.tau = 1.0;
  CHECK_NOTHROW(cfg.validate());
}

TEST_CASE("firing_rate") {
  LifConfig cfg;
  auto s = single(0.0);
  CHECK_THROWS_AS(firing_rate(s), EmptyWindowError);
  for (double i : {1.0, 0.0, 1.0, 0.0}) lif_step(s, Tensor::vector({i}), cfg);
  CHECK(firing_rate(s)[0] == 0.5);
  s.reset_statistics();
  for (int t = 0; t < 3; ++t) lif_step(s, Tensor::vector({0.0}), cfg);
  CHECK(firing_rate(s)[0] == 0.0);
}

TEST_CASE("build_mask") {
  RngStream rng(1, streams::kMask);
  auto m = build_mask(10, 0.5, rng);
  CHECK(m.active() == 5);
  RngStream a(77, streams::kMask), b(77, streams::kMask);
  CHECK(build_mask(32, 0.4, a).bits == build_mask(32, 0.4, b).bits);

  auto p = build_mask(10, 0.35, rng, true);
  CHECK(p.active() == 3);
  CHECK(p.bits == Tensor::vector({1, 1, 1, 0, 0, 0, 0, 0, 0, 0}));

  CHECK_THROWS_AS(build_mask(3, 0.2, rng), ConfigError);
  CHECK_THROWS_AS(build_mask(10, 1.0, rng), ConfigError);
  CHECK_THROWS_AS(build_mask(0, 0.5, rng), DimensionError);
}

TEST_CASE("build_mask selects channels uniformly") {
  const int seeds = 10000;
  std::vector<int> hits(10, 0);
  for (int s = 0; s < seeds; ++s) {
    RngStream rng(s, streams::kMask);
    auto m = build_mask(10, 0.3, rng);
    for (int c = 0; c < 10; ++c) hits[c] += m.bits[c] != 0.0;
  }
  // Binomial(1e4, 0.3): sd ~ 46.
  for (int h : hits) CHECK(std::abs(h - 3000) < 200);
}

TEST_CASE("adaptation_matrix") {
  AdaptationConfig cfg;
  ChannelMask m{Tensor::vector({0, 1}), 0.5};
  auto a = adaptation_matrix(m, cfg);
  CHECK(a[0] == 1.2);
  CHECK(a[1] == 0.01);
  ChannelMask z{Tensor({4}), 0.5};
  CHECK(adaptation_matrix(z, cfg) == Tensor({4}, 1.2));
}

TEST_CASE("update_thresholds") {
  auto th = Tensor::vector({1.0});
  auto a = Tensor::vector({1.2});
  auto out = update_thresholds(th, a, Tensor::vector({0.6}), Tensor::vector({0.5}));
  CHECK(out[0] == doctest::Approx(0.88).epsilon(1e-15));
  CHECK(update_thresholds(th, a, Tensor::vector({0.6}), Tensor::vector({0.5}), 1)[0] ==
        doctest::Approx(1.12).epsilon(1e-15));
  CHECK(update_thresholds(th, a, Tensor::vector({0.3}), Tensor::vector({0.3})) == th);
  CHECK_THROWS_AS(update_thresholds(th, Tensor::vector({1, 2}), th, th), DimensionError);
  CHECK_THROWS_AS(update_thresholds(th, a, th, th, 0), ConfigError);
}

TEST_CASE("stable channels move beta/gamma times farther") {
  AdaptationConfig cfg;
  ChannelMask m{Tensor::vector({0, 1}), 0.5};
  auto a = adaptation_matrix(m, cfg);
  auto th = Tensor::vector({1.0, 1.0});
  auto out = update_thresholds(th, a, Tensor::vector({0.3, 0.3}), Tensor::vector({0.2, 0.2}));
  const double stable = std::abs(out[0] - 1.0), adaptive = std::abs(out[1] - 1.0);
  CHECK(stable / adaptive == doctest::Approx(120.0).epsilon(1e-9));
}

TEST_CASE("aggregate_channel_rates") {
  std::vector<std::size_t> map{0, 0, 1, 1, 1};
  auto r = aggregate_channel_rates(Tensor::vector({0.2, 0.4, 0.0, 0.3, 0.6}), map, 2);
  CHECK(r[0] == doctest::Approx(0.3));
  CHECK(r[1] == doctest::Approx(0.3));
  CHECK_THROWS_AS(aggregate_channel_rates(Tensor::vector({1, 2, 3, 4, 5}), map, 3), DimensionError);
}

TEST_CASE("layer_forward") {
  LifConfig cfg;
  ChannelMask m{Tensor::vector({1, 0}), 0.5};
  auto s = LifLayerState::create(3, 2, cfg, m);
  CHECK(layer_forward(s, {Tensor::vector({5, 5, 5})}, cfg) == Tensor({1, 2}));

  // I = 0.7 each step: U = 0.7, 1.05 (fire), 0.7, 1.05 (fire).
  auto p = LifLayerState::create(1, 1, cfg, ChannelMask{Tensor::vector({1}), 0.5});
  p.weights[0] = 0.7;
  std::vector<Tensor> in(4, Tensor::vector({1.0}));
  auto raster = layer_forward(p, in, cfg);
  CHECK(raster == Tensor({4, 1}, std::vector<double>{0, 1, 0, 1}));
  CHECK(firing_rate(p)[0] == 0.5);

  // Large drive with bias: fires every step.
  p.bias[0] = 2.0;
  CHECK(layer_forward(p, in, cfg) == Tensor({4, 1}, 1.0));

  CHECK_THROWS_AS(layer_forward(p, {}, cfg), DimensionError);
  CHECK_THROWS_AS(layer_forward(p, {Tensor::vector({1, 2})}, cfg), DimensionError);
}
