#include <cmath>
#include <numbers>
#include <sstream>
#include <vector>

#include "doctest.h"
#include "safa/errors.hpp"
#include "safa/finite_diff.hpp"
#include "safa/network.hpp"
#include "safa/zo.hpp"
#include "support.hpp"

using namespace safa;
using namespace safa::testing;

TEST_CASE("zo_branch examples") {
  CHECK(zo_branch(0.1, 0.5, 1.0) == 1.0);
  CHECK(zo_branch(1.0, 0.5, 1.0) == 0.0);
  CHECK(zo_branch(0.5, 0.5, 1.0) == 0.0);
  CHECK(zo_branch(-0.1, 0.5, -1.0) == 1.0);
}

TEST_CASE("zo_spike_grad mean at u=0") {
  RngStream rng(3, streams::kZo);
  ZoConfig cfg{0.5, 1'000'000};
  CHECK(std::abs(zo_spike_grad(0.0, cfg, rng) - 0.7979) < 0.01);
}

TEST_CASE("zo estimator bias at b=1e6") {
  RngStream rng(4, streams::kZo);
  for (double u : {0.0, 0.3, -0.6}) {
    ZoConfig cfg{0.5, 1'000'000};
    CHECK(std::abs(zo_spike_grad(u, cfg, rng) - gaussian_surrogate(u, 0.5)) < 1e-3);
  }
}

TEST_CASE("zo draws are reproducible") {
  ZoConfig cfg{0.5, 5};
  RngStream a(8, streams::kZo), b(8, streams::kZo);
  for (int i = 0; i < 100; ++i) REQUIRE(zo_spike_grad(0.2, cfg, a) == zo_spike_grad(0.2, cfg, b));
}

TEST_CASE("zo config validation") {
  CHECK_THROWS_AS((ZoConfig{0.0, 5}.validate()), ConfigError);
  CHECK_THROWS_AS((ZoConfig{0.5, 0}.validate()), ConfigError);
}

TEST_CASE("gaussian surrogate") {
  CHECK(std::abs(gaussian_surrogate(0.0, 0.5) - 0.79788) < 1e-5);
  CHECK(gaussian_surrogate(1.5, 0.5) == gaussian_surrogate(-1.5, 0.5));
  const double delta = 0.5, lo = -6 * delta, hi = 6 * delta;
  const int n = 4000;
  const double h = (hi - lo) / n;
  double area = 0.5 * (gaussian_surrogate(lo, delta) + gaussian_surrogate(hi, delta));
  for (int i = 1; i < n; ++i) area += gaussian_surrogate(lo + i * h, delta);
  CHECK(std::abs(area * h - 1.0) < 1e-4);
  CHECK_THROWS_AS(gaussian_surrogate(0.0, 0.0), ConfigError);
}

TEST_CASE("sigmoid surrogate") {
  CHECK(sigmoid_surrogate(0.0, 1.0) == 0.25);
  CHECK(sigmoid_surrogate(1e6, 4.0) == 0.0);
  CHECK(sigmoid_surrogate(-1e6, 4.0) == 0.0);
  const double k = 3.0, u = 0.4, s = 1.0 / (1.0 + std::exp(-k * u));
  CHECK(sigmoid_surrogate(u, k) == doctest::Approx(k * s * (1 - s)).epsilon(1e-12));
}

TEST_CASE("estimator_mse_profile") {
  RngStream rng(5, streams::kZo);
  std::vector<double> us{0.0, 0.5};
  std::vector<double> ds{0.5};
  std::vector<std::size_t> bs{1, 4};
  auto rows = estimator_mse_profile(us, ds, bs, 20000, rng);
  REQUIRE(rows.size() == 4);
  for (const auto& r : rows) CHECK(r.abs_bias < 0.03);
  // Variance shrinks with b at each u.
  CHECK(rows[2].variance < rows[0].variance / 3.0);
  std::ostringstream os;
  write_mse_profile_csv(os, rows);
  CHECK(os.str().rfind("u,delta,b,mean,variance,closed_form,abs_bias\n", 0) == 0);
  CHECK_THROWS_AS(estimator_mse_profile(us, ds, bs, 10, rng), ConfigError);
}

TEST_CASE("adam") {
  Tensor p = Tensor::vector({1.0, -2.0});
  std::vector<Tensor*> params{&p};
  AdamState st;
  adam_step(params, std::vector<Tensor>{Tensor({2})}, st);
  CHECK(p == Tensor::vector({1.0, -2.0}));
  CHECK(st.step == 1);

  Tensor q = Tensor::vector({0.0});
  std::vector<Tensor*> qs{&q};
  AdamState s2;
  adam_step(qs, std::vector<Tensor>{Tensor::vector({0.5})}, s2);
  CHECK(q[0] == doctest::Approx(-0.001).epsilon(1e-6));

  auto run = [] {
    Tensor w = Tensor::vector({0.3, 0.1});
    std::vector<Tensor*> ws{&w};
    AdamState s;
    for (int i = 0; i < 50; ++i) adam_step(ws, std::vector<Tensor>{Tensor::vector({w[0] - 1.0, 2 * w[1]})}, s);
    return w;
  };
  CHECK(run() == run());
  CHECK_THROWS_AS(adam_step(params, std::vector<Tensor>{Tensor({3})}, st), DimensionError);
}

TEST_CASE("sample loss endpoints") {
  auto r = Tensor::matrix({{1.0, -1.0, 0.5}, {0.2, 0.1, 0.0}});
  LossConfig ce{0.0, 2};
  LossConfig mse{1.0, 2};
  double expect_ce = 0.0, expect_mse = 0.0;
  for (std::size_t t = 0; t < 2; ++t) {
    double z = 0.0;
    for (std::size_t c = 0; c < 3; ++c) z += std::exp(r.at(t, c));
    expect_ce += std::log(z) - r.at(t, 0);
    double m = 0.0;
    for (std::size_t c = 0; c < 3; ++c) {
      const double p = std::exp(r.at(t, c)) / z - (c == 0 ? 1.0 : 0.0);
      m += p * p;
    }
    expect_mse += m / 3.0;
  }
  CHECK(sample_loss(r, 0, ce, nullptr) == doctest::Approx(expect_ce / 2));
  CHECK(sample_loss(r, 0, mse, nullptr) == doctest::Approx(expect_mse / 2));
  CHECK_THROWS_AS(sample_loss(r, 3, ce, nullptr), DimensionError);

  Tensor grad;
  LossConfig mix{0.3, 2};
  sample_loss(r, 1, mix, &grad);
  auto fd = finite_diff_grad([&](const Tensor& x) { return sample_loss(x, 1, mix, nullptr); }, r, 1e-6);
  CHECK(max_abs_diff(grad, fd) < 1e-8);

  LossConfig raw{0.5, 2, MseTarget::raw_membrane};
  sample_loss(r, 2, raw, &grad);
  fd = finite_diff_grad([&](const Tensor& x) { return sample_loss(x, 2, raw, nullptr); }, r, 1e-6);
  CHECK(max_abs_diff(grad, fd) < 1e-8);
}

TEST_CASE("forward shapes and tape") {
  auto net = make_net(5, {8, 6}, 3, 1);
  RngStream rng(1, 0);
  auto x = random_inputs(rng, 4, 5, 2.0);
  std::vector<std::size_t> y{0, 1, 2, 0};
  LossConfig loss;
  auto tape = record_forward(net, x, y, loss);
  REQUIRE(tape.samples.size() == 4);
  CHECK(tape.samples[0].readout.shape() == Shape{4, 3});
  CHECK(tape.samples[0].layers[1].spikes.shape() == Shape{4, 6});
  for (double s : tape.samples[0].layers[0].spikes.data()) CHECK((s == 0.0 || s == 1.0));
  CHECK(replay_matches(net, tape));
  CHECK(layer_rates(tape.samples[0]).size() == 2);
  CHECK(features(tape.samples[0]).size() == 6);

  CHECK_THROWS_AS(forward_sample(net, std::vector<double>(4), 4), DimensionError);
  CHECK_THROWS_AS(record_forward(net, x, std::vector<std::size_t>{0}, loss), DimensionError);
  LossConfig bad;
  bad.lambda = 1.5;
  CHECK_THROWS_AS(record_forward(net, x, y, bad), ConfigError);

  auto w0 = net.hidden[0].weights[0];
  net.hidden[0].weights[0] += 0.5;
  CHECK_FALSE(replay_matches(net, tape));
  net.hidden[0].weights[0] = w0;
}

TEST_CASE("backward contracts") {
  auto net = make_net(5, {8, 6}, 3, 2);
  RngStream data(2, 0);
  auto x = random_inputs(data, 4, 5, 2.0);
  std::vector<std::size_t> y{0, 1, 2, 0};
  auto tape = record_forward(net, x, y, LossConfig{});
  ZoConfig zo;

  SUBCASE("incomplete tape") {
    tape.complete = false;
    RngStream rng(1, streams::kZo);
    CHECK_THROWS_AS(backward(net, tape, zo, rng), TapeIntegrityError);
  }
  SUBCASE("tape from another network") {
    auto other = make_net(5, {7, 6}, 3, 2);
    RngStream rng(1, streams::kZo);
    CHECK_THROWS_AS(backward(other, tape, zo, rng), TapeIntegrityError);
  }
  SUBCASE("zero upstream gradient") {
    for (auto& s : tape.samples) s.dloss.fill(0.0);
    RngStream rng(1, streams::kZo);
    for (const auto& g : backward(net, tape, zo, rng))
      for (double v : g.data()) CHECK(v == 0.0);
  }
  SUBCASE("determinism") {
    RngStream a(9, streams::kZo), b(9, streams::kZo);
    CHECK(backward(net, tape, zo, a) == backward(net, tape, zo, b));
  }
  SUBCASE("mask gradients zero out stable neurons") {
    ZoConfig masked = zo;
    masked.mask_gradients = true;
    RngStream rng(1, streams::kZo);
    auto g = backward(net, tape, masked, rng);
    // Last layer: bias gradient of a stable neuron only flows through its own spike derivative.
    const auto& bits = net.hidden[1].mask.bits;
    for (std::size_t j = 0; j < bits.size(); ++j)
      if (bits[j] == 0.0) CHECK(g[3][j] == 0.0);
  }
}

TEST_CASE("identity spikes match finite differences") {
  LossConfig loss;
  ZoConfig zo;
  RngStream data(10, 0);
  for (std::uint64_t draw = 0; draw < 10; ++draw) {
    auto net = make_net(4, {8, 8}, 3, 100 + draw, SpikeFunction::identity);
    auto x = random_inputs(data, 3, 4);
    std::vector<std::size_t> y{0, 1, 2};
    auto tape = record_forward(net, x, y, loss);
    RngStream rng(draw, streams::kZo);
    auto analytic = flatten(backward(net, tape, zo, rng));

    const auto theta = Tensor::vector(flatten(net));
    auto probe = net;
    auto f = [&](const Tensor& p) {
      assign(probe, p.values());
      return batch_loss(probe, x, y, loss);
    };
    auto numeric = finite_diff_grad(f, theta, 1e-5);
    CHECK(max_relative(analytic, numeric.values(), 1e-6) < 1e-4);
  }
}

TEST_CASE("reset-by-subtraction identity path also matches") {
  auto net = make_net(4, {6, 5}, 3, 7, SpikeFunction::identity);
  net.lif.reset = ResetMode::by_subtraction;
  RngStream data(11, 0);
  auto x = random_inputs(data, 2, 4);
  std::vector<std::size_t> y{1, 2};
  LossConfig loss;
  RngStream rng(0, streams::kZo);
  auto analytic = flatten(backward(net, record_forward(net, x, y, loss), ZoConfig{}, rng));
  auto probe = net;
  auto numeric = finite_diff_grad(
      [&](const Tensor& p) {
        assign(probe, p.values());
        return batch_loss(probe, x, y, loss);
      },
      Tensor::vector(flatten(net)), 1e-5);
  CHECK(max_relative(analytic, numeric.values(), 1e-6) < 1e-4);
}

TEST_CASE("large-b zeroth-order gradients approach the gaussian surrogate") {
  auto net = make_net(6, {16, 12}, 4, 3);
  RngStream data(12, 0);
  auto x = random_inputs(data, 4, 6, 1.5);
  std::vector<std::size_t> y{0, 1, 2, 3};
  auto tape = record_forward(net, x, y, LossConfig{});
  ZoConfig zo{0.5, 4000};
  RngStream rng(1, streams::kZo);
  auto g_zo = flatten(backward(net, tape, zo, rng));
  BackwardOptions gauss{SpikeDerivative::gaussian_surrogate};
  auto g_an = flatten(backward(net, tape, zo, rng, gauss));
  CHECK(relative_l2(g_zo, g_an) < 0.05);

  ZoConfig small{0.5, 1};
  auto g_small = flatten(backward(net, tape, small, rng));
  CHECK(relative_l2(g_small, g_an) > relative_l2(g_zo, g_an));
}

TEST_CASE("sigmoid surrogate backward is deterministic without draws") {
  auto net = make_net(5, {8}, 3, 4);
  RngStream data(13, 0);
  auto x = random_inputs(data, 3, 5, 2.0);
  std::vector<std::size_t> y{0, 1, 2};
  auto tape = record_forward(net, x, y, LossConfig{});
  RngStream rng(0, streams::kZo);
  BackwardOptions sig{SpikeDerivative::sigmoid_surrogate, 4.0};
  auto g = backward(net, tape, ZoConfig{}, rng, sig);
  CHECK(rng.counter() == 0);
  CHECK(g == backward(net, tape, ZoConfig{}, rng, sig));
}
