#pragma once

#include <array>
#include <cstdint>
#include <span>
#include <vector>

#include "ibc/rng.hpp"
#include "ibc/tensor.hpp"

namespace ibc::model {

/// A 2-d particle cloud plus the roller pose (center and radius).
struct Observation {
  ad::Tensor points;  // M x 2
  std::array<double, 2> roller_center{0.0, 0.0};
  double roller_radius = 0.0;
};

void validate(const Observation& obs);

/// Box of admissible actions, a_min < a_max componentwise.
struct ActionBounds {
  std::vector<double> lo, hi;

  std::size_t dims() const { return lo.size(); }
  void validate() const;
  std::vector<double> clamped(std::span<const double> values) const;
  bool contains(std::span<const double> values, double tol = 0.0) const;
};

struct Action {
  std::vector<double> values;
};

struct EncoderWidths {
  std::size_t h1 = 64;
  std::size_t h2 = 128;
  std::size_t embed = 64;
  std::size_t head = 128;
};

/// Learnable parameters of the energy function E(o, a): a pointwise
///, permutation-invariant encoder (2 -> h1 -> h2, tanh, max-pool over
/// points, roller pose appended, linear projection to the embedding) and a
/// scalar head (embed+n -> head -> head -> 1 with tanh hidden layers).
/// Instances are immutable values; evaluation is reentrant.
struct EnergyParams {
  ad::Tensor enc_w1, enc_b1;
  ad::Tensor enc_w2, enc_b2;
  ad::Tensor proj_w, proj_b;
  ad::Tensor head_w1, head_b1;
  ad::Tensor head_w2, head_b2;
  ad::Tensor head_w3, head_b3;

  std::size_t embed_dims() const { return proj_w.cols(); }
  std::size_t action_dims() const { return head_w1.rows() - proj_w.cols(); }

  /// Glorot-uniform weights, zero biases.
  static EnergyParams init(std::size_t action_dims, Rng& rng, EncoderWidths w = {});

  std::vector<ad::Tensor> tensors() const;
  static EnergyParams from_tensors(std::span<const ad::Tensor> t);
  /// Same structure with every tensor replaced (training-step update).
  EnergyParams with_tensors(std::span<const ad::Tensor> t) const {
    return from_tensors(t);
  }
};

/// Permutation-invariant embedding of an observation, shape {1, D}.
/// Records on the active graph when the params are attached to it.
ad::Tensor encode(const EnergyParams& params, const Observation& obs);

/// Energies of K candidate actions (rows) against one observation; {K, 1}.
ad::Tensor energies(const EnergyParams& params, const Observation& obs,
                    const ad::Tensor& actions);

double energy(const EnergyParams& params, const Observation& obs, const Action& a);

/// Gradient of the energy w.r.t. the action only (params and observation
/// held constant).
std::vector<double> action_gradient(const EnergyParams& params, const Observation& obs,
                                    const Action& a);

struct EnergyGradBatch {
  std::vector<double> energies;  // K
  ad::Tensor gradients;          // K x n
};

/// Energies and per-row action gradients for K candidates in one sweep.
EnergyGradBatch action_gradients(const EnergyParams& params, const Observation& obs,
                                 const ad::Tensor& actions);

/// Boltzmann weights over candidate energies: p_i = exp(-E_i) / sum_j exp(-E_j),
/// computed with the log-sum-exp shift and renormalized to sum to one.
std::vector<double> candidate_softmax(std::span<const double> energies);

/// Roller pose as a {1, 3} tensor (center x, center y, radius).
ad::Tensor pose_row(const Observation& obs);

}  // namespace ibc::model
