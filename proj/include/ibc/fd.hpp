#pragma once

#include <functional>
#include <vector>

#include "ibc/errors.hpp"
#include "ibc/tensor.hpp"

namespace ibc::ad {

/// Central-difference gradient estimate (f(x+h*e_i) - f(x-h*e_i)) / 2h per
/// coordinate. Independent of the tape; serves as the oracle the reverse
/// sweep is checked against.
template <typename F>
Tensor finite_difference_gradient(F&& f, const Tensor& x, double h) {
  if (!(h > 0)) throw Error("finite_difference_gradient: h must be positive");
  std::vector<double> base(x.data().begin(), x.data().end());
  std::vector<double> grad(base.size());
  for (std::size_t i = 0; i < base.size(); ++i) {
    std::vector<double> up = base, down = base;
    up[i] += h;
    down[i] -= h;
    double fu = f(Tensor(x.shape(), std::move(up)));
    double fd = f(Tensor(x.shape(), std::move(down)));
    grad[i] = (fu - fd) / (2.0 * h);
  }
  return Tensor(x.shape(), std::move(grad));
}

}  // namespace ibc::ad
