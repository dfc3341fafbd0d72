#pragma once

#include <cstdint>
#include <vector>

#include "ibc/tensor.hpp"

namespace ibc::metrics {

/// Uniformly weighted 2-d point cloud (weights 1/M implied).
struct PointCloud {
  ad::Tensor points;  // M x 2
};

void validate(const PointCloud& p);

/// Coupling between two uniform clouds; row sums 1/M, column sums 1/M'.
struct TransportPlan {
  std::size_t rows = 0, cols = 0;
  std::vector<double> coupling;  // rows x cols, row-major

  double at(std::size_t i, std::size_t j) const { return coupling[i * cols + j]; }
};

/// Exact Earth Mover's Distance (mean Euclidean transport cost) between two
/// equal-size uniform clouds, via optimal assignment. Size cap 256; unequal
/// sizes are rejected (use emd_sinkhorn for those).
double emd_exact(const PointCloud& p, const PointCloud& q);

struct SinkhornResult {
  double cost = 0.0;
  TransportPlan plan;
  std::size_t iterations = 0;
  double marginal_violation = 0.0;
};

/// Entropically regularized transport cost via log-domain alternating
/// marginal scaling. Converged when the worst marginal violation drops
/// below 1e-6; throws NumericError carrying the violation otherwise.
SinkhornResult emd_sinkhorn(const PointCloud& p, const PointCloud& q,
                            double epsilon = 0.01, std::size_t max_iters = 1000);

/// Fractional progress toward the goal cloud:
/// (D(P0,Pg) - D(PT,Pg)) / D(P0,Pg). 1 means the final cloud reached the
/// goal, 0 no progress, negative regression. Requires D(P0,Pg) > 1e-9.
double normalized_performance(const PointCloud& initial, const PointCloud& final_cloud,
                              const PointCloud& goal);

}  // namespace ibc::metrics
