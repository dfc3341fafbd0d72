#pragma once

#include <cstdint>
#include <functional>
#include <string_view>
#include <vector>

#include "ibc/energy_model.hpp"
#include "ibc/rng.hpp"
#include "ibc/tensor.hpp"

namespace ibc::samplers {

/// Derivative-free optimizer settings (iterated softmax-weighted GMM
/// refitting with shrinking exploration noise).
struct DfoConfig {
  std::size_t n_samples = 1024;
  std::size_t n_iters = 3;
  std::vector<double> sigma_init;  // empty: 0.33 * (hi - lo) per dim
  double shrink = 0.5;             // noise scale multiplier per iteration
  std::size_t gmm_components = 3;
  std::size_t em_iters = 10;
  std::uint64_t seed = 0;

  void validate(std::size_t dims) const;
};

/// Langevin chain settings. With noise_scale unset it defaults to
/// sqrt(step_size), the unadjusted-Langevin coupling that makes the
/// stationary density the Boltzmann density at temperature 1.
struct LangevinConfig {
  double step_size = 0.1;
  double step_decay = 0.98;   // geometric decay per step; 1.0 disables
  double noise_scale = -1.0;  // < 0: track sqrt(step_size)
  std::size_t steps = 100;
  double grad_clip = 1.0;     // gradient norm cap per chain
  std::size_t parallel_chains = 32;
  double buffer_reuse = 0.95;  // probability of initializing from the buffer
  std::uint64_t seed = 0;

  void validate() const;
};

/// Bounded FIFO pool of past chain endpoints, used to initialize new chains
/// (a global pool, not keyed by observation). push/sample access must be
/// serialized by the caller.
class ReplayBuffer {
 public:
  explicit ReplayBuffer(std::size_t capacity = 10000);

  void push(std::vector<double> action);
  const std::vector<double>& sample(Rng& rng) const;
  std::size_t size() const { return items_.size(); }
  std::size_t capacity() const { return capacity_; }

 private:
  std::size_t capacity_;
  std::size_t head_ = 0;
  std::vector<std::vector<double>> items_;
};

struct GmmParams {
  std::vector<double> weights;               // K, simplex
  std::vector<std::vector<double>> means;    // K x n
  std::vector<std::vector<double>> variances;  // K x n, diagonal, floored

  std::size_t components() const { return weights.size(); }
  std::size_t dims() const { return means.empty() ? 0 : means[0].size(); }
};

inline constexpr double kVarianceFloor = 1e-6;

/// Energies of a K x n candidate batch against one observation.
using BatchEnergyFn =
    std::function<std::vector<double>(const model::Observation&, const ad::Tensor&)>;
/// Energies plus per-row action gradients.
using BatchEnergyGradFn =
    std::function<model::EnergyGradBatch(const model::Observation&, const ad::Tensor&)>;

/// Weighted EM for a diagonal-covariance GMM; means seeded at distinct
/// samples drawn by weight, variances floored, weighted log-likelihood
/// non-decreasing across iterations. An emptied component is re-seeded from
/// the highest-weight sample.
GmmParams em_fit_gmm(const ad::Tensor& samples, std::span<const double> weights,
                     std::size_t components, std::size_t iters, Rng& rng);

/// i.i.d. draws from the mixture: component by weight, then diagonal Gaussian.
ad::Tensor gmm_sample(const GmmParams& gmm, std::size_t count, Rng& rng);

/// Weighted data log-likelihood under the mixture (EM's ascent objective).
double gmm_log_likelihood(const ad::Tensor& samples, std::span<const double> weights,
                          const GmmParams& gmm);

/// Iterated sample-softmax-refit-resample optimization of the energy over
/// the action box; returns the lowest-energy action observed across all
/// evaluated populations.
model::Action dfo_optimize(const BatchEnergyFn& energy, const model::Observation& obs,
                           const model::ActionBounds& bounds, const DfoConfig& cfg,
                           Rng& rng);

struct ChainResult {
  model::Action final;
  std::vector<std::vector<double>> visited;  // steps + 1 rows
  std::vector<double> energies;              // energy at each visited state
  model::Action best;                        // lowest-energy visited state
  double best_energy = 0.0;
};

/// One Langevin chain from `init`: per step the action gradient is
/// norm-clipped, a half-gradient step and Gaussian noise are applied, and
/// the state is clamped into the box. Deterministic given the rng state.
ChainResult langevin_chain(const BatchEnergyGradFn& energy_grad,
                           const model::Observation& obs, const model::Action& init,
                           const model::ActionBounds& bounds, const LangevinConfig& cfg,
                           Rng& rng);

struct ChainBatch {
  ad::Tensor finals;                  // K x n
  std::vector<double> final_energies;  // K
  model::Action best;                 // lowest-energy visited state overall
  double best_energy = 0.0;
};

/// K chains advanced in lockstep (one batched gradient evaluation per step).
ChainBatch langevin_chains(const BatchEnergyGradFn& energy_grad,
                           const model::Observation& obs, const ad::Tensor& inits,
                           const model::ActionBounds& bounds, const LangevinConfig& cfg,
                           Rng& rng);

/// Negative actions for a batch of observations: each chain initializes from
/// the replay buffer with probability cfg.buffer_reuse (uniform on the box
/// otherwise), runs its chain, and every final action is pushed back into
/// the buffer. Returns one K x n tensor per observation.
std::vector<ad::Tensor> langevin_negatives(const BatchEnergyGradFn& energy_grad,
                                           std::span<const model::Observation> batch,
                                           std::size_t n_neg, ReplayBuffer& buffer,
                                           const model::ActionBounds& bounds,
                                           const LangevinConfig& cfg, Rng& rng);

enum class InferenceMethod { dfo, langevin };

/// Parses "dfo" / "langevin"; anything else is a configuration error.
InferenceMethod parse_method(std::string_view name);

/// The implicit policy: minimize the trained energy over the action box with
/// the chosen sampler. The langevin path runs cfg.parallel_chains chains
/// from fresh uniform inits and returns the lowest-energy visited state.
model::Action act_implicit(const model::EnergyParams& params, const model::Observation& obs,
                           InferenceMethod method, const model::ActionBounds& bounds,
                           const DfoConfig& dfo_cfg, const LangevinConfig& langevin_cfg,
                           Rng& rng);

}  // namespace ibc::samplers
