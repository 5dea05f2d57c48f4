#include "safa/zo.hpp"

#include <cmath>
#include <numbers>
#include <ostream>

#include "safa/errors.hpp"

namespace safa {

void ZoConfig::validate() const {
  if (!(delta > 0.0) || !std::isfinite(delta)) throw ConfigError("zo.delta", "must be positive");
  if (samples_b < 1) throw ConfigError("zo.samples", "must be >= 1");
}

double zo_spike_grad(double u, const ZoConfig& cfg, RngStream& rng) {
  double sum = 0.0;
  for (std::size_t i = 0; i < cfg.samples_b; ++i) sum += zo_branch(u, cfg.delta, rng.next_normal());
  return sum / static_cast<double>(cfg.samples_b);
}

double gaussian_surrogate(double u, double delta) {
  if (!(delta > 0.0)) throw ConfigError("zo.delta", "must be positive");
  return std::exp(-u * u / (2.0 * delta * delta)) / (delta * std::sqrt(2.0 * std::numbers::pi));
}

double sigmoid_surrogate(double u, double k) {
  if (!(k > 0.0)) throw ConfigError("k", "must be positive");
  // Written in |u| so large arguments underflow to 0 instead of inf/inf.
  const double e = std::exp(-k * std::abs(u));
  return k * e / ((1.0 + e) * (1.0 + e));
}

std::vector<MseProfileRow> estimator_mse_profile(std::span<const double> u_grid, std::span<const double> deltas,
                                                 std::span<const std::size_t> bs, std::size_t trials,
                                                 RngStream& rng) {
  if (trials < 100) throw ConfigError("trials", "must be >= 100");
  std::vector<MseProfileRow> rows;
  rows.reserve(u_grid.size() * deltas.size() * bs.size());
  for (double delta : deltas) {
    for (std::size_t b : bs) {
      ZoConfig cfg{delta, b};
      cfg.validate();
      for (double u : u_grid) {
        // Welford accumulation keeps the variance stable at large trial counts.
        double mean = 0.0, m2 = 0.0;
        for (std::size_t k = 0; k < trials; ++k) {
          const double x = zo_spike_grad(u, cfg, rng);
          const double d = x - mean;
          mean += d / static_cast<double>(k + 1);
          m2 += d * (x - mean);
        }
        const double cf = gaussian_surrogate(u, delta);
        rows.push_back({u, delta, b, mean, m2 / static_cast<double>(trials - 1), cf, std::abs(mean - cf)});
      }
    }
  }
  return rows;
}

void write_mse_profile_csv(std::ostream& os, const std::vector<MseProfileRow>& rows) {
  os << "u,delta,b,mean,variance,closed_form,abs_bias\n";
  const auto old = os.precision(17);
  for (const auto& r : rows)
    os << r.u << ',' << r.delta << ',' << r.b << ',' << r.mean << ',' << r.variance << ',' << r.closed_form << ','
       << r.abs_bias << '\n';
  os.precision(old);
}

void adam_step(std::span<Tensor* const> params, std::span<const Tensor> grads, AdamState& state) {
  if (params.size() != grads.size())
    throw DimensionError("adam_step: " + std::to_string(params.size()) + " params vs " +
                         std::to_string(grads.size()) + " grads");
  if (state.m.empty()) {
    for (const auto* p : params) {
      state.m.emplace_back(p->shape());
      state.v.emplace_back(p->shape());
    }
  }
  if (state.m.size() != params.size()) throw DimensionError("adam_step: moment count mismatch");
  for (std::size_t i = 0; i < params.size(); ++i)
    if (params[i]->shape() != grads[i].shape() || state.m[i].shape() != grads[i].shape())
      throw DimensionError("adam_step: parameter " + std::to_string(i) + " shape " +
                           shape_string(params[i]->shape()) + " vs gradient " + shape_string(grads[i].shape()));

  ++state.step;
  const double t = static_cast<double>(state.step);
  const double c1 = 1.0 - std::pow(state.beta1, t);
  const double c2 = 1.0 - std::pow(state.beta2, t);
  for (std::size_t i = 0; i < params.size(); ++i) {
    auto p = params[i]->data();
    auto g = grads[i].data();
    auto m = state.m[i].data();
    auto v = state.v[i].data();
    for (std::size_t k = 0; k < p.size(); ++k) {
      m[k] = state.beta1 * m[k] + (1.0 - state.beta1) * g[k];
      v[k] = state.beta2 * v[k] + (1.0 - state.beta2) * g[k] * g[k];
      const double mhat = m[k] / c1;
      const double vhat = v[k] / c2;
      p[k] -= state.lr * mhat / (std::sqrt(vhat) + state.eps);
    }
  }
}

}  // namespace safa
