#pragma once

#include <algorithm>
#include <cmath>
#include <vector>

#include "safa/network.hpp"

namespace safa::testing {

inline SpikingNetwork make_net(std::size_t in, std::vector<std::size_t> hidden, std::size_t classes,
                               std::uint64_t seed, SpikeFunction spike = SpikeFunction::heaviside,
                               double init_scale = 1.0) {
  NetworkConfig cfg;
  cfg.input_dim = in;
  cfg.hidden = std::move(hidden);
  cfg.classes = classes;
  cfg.init_scale = init_scale;
  RngStream init(seed, streams::kInit), mask(seed, streams::kMask);
  auto net = SpikingNetwork::create(cfg, init, mask);
  net.spike = spike;
  return net;
}

inline Tensor random_inputs(RngStream& rng, std::size_t n, std::size_t d, double scale = 1.0) {
  Tensor x({n, d});
  for (auto& v : x.data()) v = scale * rng.next_normal();
  return x;
}

inline std::vector<double> flatten(const std::vector<Tensor>& ts) {
  std::vector<double> out;
  for (const auto& t : ts) out.insert(out.end(), t.data().begin(), t.data().end());
  return out;
}

inline std::vector<double> flatten(const SpikingNetwork& net) {
  std::vector<double> out;
  for (const auto* p : net.parameters()) out.insert(out.end(), p->data().begin(), p->data().end());
  return out;
}

inline void assign(SpikingNetwork& net, const std::vector<double>& flat) {
  std::size_t k = 0;
  for (auto* p : net.parameters())
    for (auto& v : p->data()) v = flat[k++];
}

inline double batch_loss(const SpikingNetwork& net, const Tensor& x, const std::vector<std::size_t>& y,
                         const LossConfig& loss) {
  return record_forward(net, x, y, loss).loss_value;
}

// ||a - b||_2 / ||b||_2
inline double relative_l2(const std::vector<double>& a, const std::vector<double>& b) {
  double num = 0.0, den = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    num += (a[i] - b[i]) * (a[i] - b[i]);
    den += b[i] * b[i];
  }
  return std::sqrt(num / den);
}

// Largest entrywise |a - b| / max(|a|, |b|, floor).
inline double max_relative(const std::vector<double>& a, const std::vector<double>& b, double floor) {
  double worst = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i)
    worst = std::max(worst, std::abs(a[i] - b[i]) / std::max({std::abs(a[i]), std::abs(b[i]), floor}));
  return worst;
}

}  // namespace safa::testing
