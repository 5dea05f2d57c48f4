#pragma once

#include <cmath>
#include <string>

#include "safa/errors.hpp"
#include "safa/tensor.hpp"

namespace safa {

// Central-difference gradient of a scalar function, one coordinate at a time.
template <typename F>
Tensor finite_diff_grad(F&& f, const Tensor& x, double h) {
  Tensor grad(x.shape());
  Tensor probe = x;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double orig = probe[i];
    probe[i] = orig + h;
    const double fp = f(static_cast<const Tensor&>(probe));
    probe[i] = orig - h;
    const double fm = f(static_cast<const Tensor&>(probe));
    probe[i] = orig;
    if (!std::isfinite(fp) || !std::isfinite(fm))
      throw NumericError("non-finite function value at coordinate " + std::to_string(i));
    grad[i] = (fp - fm) / (2.0 * h);
  }
  return grad;
}

}  // namespace safa
