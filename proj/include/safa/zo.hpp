#pragma once

#include <cstddef>
#include <iosfwd>
#include <span>
#include <vector>

#include "safa/rng.hpp"
#include "safa/tensor.hpp"

namespace safa {

struct ZoConfig {
  double delta = 0.5;
  std::size_t samples_b = 5;
  // When set, the spike derivative of a neuron is multiplied by its mask bit.
  bool mask_gradients = false;

  void validate() const;
};

// Piecewise central-difference value for one perturbation z: |z|/(2 delta)
// when |u| < delta|z|, otherwise 0 (the tie |u| == delta|z| included).
inline double zo_branch(double u, double delta, double z) {
  const double az = z < 0.0 ? -z : z;
  const double au = u < 0.0 ? -u : u;
  return au < delta * az ? az / (2.0 * delta) : 0.0;
}

// Mean of zo_branch over samples_b fresh standard-normal draws.
double zo_spike_grad(double u, const ZoConfig& cfg, RngStream& rng);

// Expectation of the estimator under z ~ N(0,1): a zero-mean Gaussian density
// in u with standard deviation delta.
double gaussian_surrogate(double u, double delta);

// Derivative of sigmoid(k u).
double sigmoid_surrogate(double u, double k);

struct MseProfileRow {
  double u;
  double delta;
  std::size_t b;
  double mean;
  double variance;
  double closed_form;
  double abs_bias;
};

// For every (u, delta, b) grid point, draws `trials` independent estimates
// and reports their sample mean and variance against the closed form.
std::vector<MseProfileRow> estimator_mse_profile(std::span<const double> u_grid, std::span<const double> deltas,
                                                 std::span<const std::size_t> bs, std::size_t trials,
                                                 RngStream& rng);

void write_mse_profile_csv(std::ostream& os, const std::vector<MseProfileRow>& rows);

struct AdamState {
  std::vector<Tensor> m;
  std::vector<Tensor> v;
  std::size_t step = 0;
  double lr = 0.001;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

// Bias-corrected Adam update applied in place. Moments are lazily shaped on
// the first call.
void adam_step(std::span<Tensor* const> params, std::span<const Tensor> grads, AdamState& state);

}  // namespace safa
