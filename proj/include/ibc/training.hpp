#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include "ibc/dataset.hpp"
#include "ibc/energy_model.hpp"
#include "ibc/rng.hpp"
#include "ibc/samplers.hpp"
#include "ibc/tensor.hpp"

namespace ibc::train {

struct TrainConfig {
  std::size_t batch = 100;
  std::size_t negatives = 256;
  std::size_t epochs = 10;
  double lr = 1e-3;
  double noise_std = 0.01;  // Gaussian augmentation on expert actions

  enum class NegativeKind { uniform, langevin };
  NegativeKind kind = NegativeKind::uniform;
  /// Share of negatives drawn by Langevin chains when kind == langevin; the
  /// rest stay uniform.
  double langevin_fraction = 1.0;
  samplers::LangevinConfig chain;  // chain settings for langevin negatives
  std::size_t buffer_capacity = 10000;

  std::uint64_t seed = 0;

  void validate() const;
};

/// i.i.d. uniform draws over the action box, one row per negative.
ad::Tensor sample_uniform_negatives(const model::ActionBounds& bounds, std::size_t count,
                                    Rng& rng);

/// -log of the positive's share of the approximate partition function,
/// computed with log-sum-exp stabilization; always >= 0.
double infonce_loss(double pos_energy, std::span<const double> neg_energies);

/// Graph-recorded InfoNCE for a {K, 1} energy column whose first row is the
/// positive.
ad::Tensor infonce_loss_node(const ad::Tensor& energies);

struct ImplicitTrainResult {
  model::EnergyParams params;
  /// Entry 0 is the pre-training dataset loss; entry e >= 1 averages the
  /// per-sample training loss of epoch e.
  std::vector<double> history;
};

/// InfoNCE training of the energy model. Batches sample (o, a) pairs
/// uniformly over all timesteps with reshuffling per epoch; expert actions
/// get clamped Gaussian noise; negatives come from the configured sampler.
/// Each batch item draws from a sub-generator derived from (seed, epoch,
/// batch, item), so results are reproducible.
ImplicitTrainResult train_implicit(const DemoDataset& data, model::EnergyParams params,
                                   const TrainConfig& cfg);

/// Squared L2 error summed over the batch.
double bc_mse_loss(std::span<const double> predicted, std::span<const double> expert);

/// Negative log density of the expert action under N(mu, diag(sigma^2)),
/// constant term included, summed over dimensions.
double gaussian_nll_loss(std::span<const double> mu, std::span<const double> sigma,
                         std::span<const double> expert);

/// Explicit policy over the same encoder: the head maps the embedding to an
/// action (mse) or to per-dimension mean and log standard deviation
/// (gaussian). log-std outputs keep sigma positive by construction.
struct ExplicitPolicyParams {
  ad::Tensor enc_w1, enc_b1;
  ad::Tensor enc_w2, enc_b2;
  ad::Tensor proj_w, proj_b;
  ad::Tensor head_w1, head_b1;
  ad::Tensor head_w2, head_b2;
  ad::Tensor head_w3, head_b3;
  bool gaussian = false;

  std::size_t action_dims() const {
    return gaussian ? head_w3.cols() / 2 : head_w3.cols();
  }

  static ExplicitPolicyParams init(std::size_t action_dims, bool gaussian, Rng& rng,
                                   model::EncoderWidths w = {});
  std::vector<ad::Tensor> tensors() const;
  static ExplicitPolicyParams from_tensors(std::span<const ad::Tensor> t, bool gaussian);
};

/// Raw head output for one observation: {1, n} or {1, 2n}.
ad::Tensor explicit_forward(const ExplicitPolicyParams& params,
                            const model::Observation& obs);

/// Mean action clamped into bounds (the deterministic explicit policy).
model::Action act_explicit(const ExplicitPolicyParams& params,
                           const model::Observation& obs,
                           const model::ActionBounds& bounds);

enum class ExplicitLoss { mse, gaussian_nll };

struct ExplicitTrainResult {
  ExplicitPolicyParams params;
  std::vector<double> history;  // same layout as the implicit history
};

ExplicitTrainResult train_explicit(const DemoDataset& data, ExplicitPolicyParams params,
                                   const TrainConfig& cfg, ExplicitLoss loss);

void save_explicit_checkpoint(const std::filesystem::path& path,
                              const ExplicitPolicyParams& params);
ExplicitPolicyParams load_explicit_checkpoint(const std::filesystem::path& path);

}  // namespace ibc::train
