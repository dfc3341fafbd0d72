#pragma once

#include <cstdint>
#include <vector>

#include "ibc/tensor.hpp"

namespace ibc::ad {

struct AdamConfig {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

/// Adam optimizer state: step count plus first/second moment accumulators
/// shaped like the parameters.
class AdamState {
 public:
  AdamState(std::span<const Tensor> params, AdamConfig cfg);

  /// One bias-corrected Adam update; returns the new parameter values.
  /// Moment shapes must match the parameter shapes they were built from.
  std::vector<Tensor> step(std::span<const Tensor> params,
                           std::span<const Tensor> grads);

  std::uint64_t step_count() const { return t_; }
  const AdamConfig& config() const { return cfg_; }

 private:
  AdamConfig cfg_;
  std::uint64_t t_ = 0;
  std::vector<std::vector<double>> m_, v_;
  std::vector<Shape> shapes_;
};

}  // namespace ibc::ad
