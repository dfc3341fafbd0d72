#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "ibc/dataset.hpp"
#include "ibc/dough_sim.hpp"
#include "ibc/tensor.hpp"

namespace ibc::trajopt {

struct TrajOptConfig {
  std::size_t steps = 1000;
  double lr = 0.005;
  double contact_weight = 1.0;
  std::uint64_t seed = 0;
};

/// Sum over every state of task loss plus weighted contact loss.
ad::Tensor trajectory_loss(std::span<const sim::DoughState> states, const ad::Tensor& goal,
                           double contact_weight, const sim::SimConfig& cfg);

struct RecordedRollout {
  std::vector<sim::DoughState> states;  // horizon + 1
  ad::Tensor loss;
};

/// Simulate the spec's episode from an action matrix (horizon x n), recording
/// every transition so the loss can be differentiated w.r.t. the actions.
RecordedRollout record_rollout(const sim::TaskSpec& spec, const ad::Tensor& actions,
                               const sim::SimConfig& cfg, double contact_weight);

/// Gradient of the trajectory loss w.r.t. every action, via one reverse sweep
/// over the recorded rollout.
ad::Tensor action_gradients(const sim::TaskSpec& spec, const ad::Tensor& actions,
                            const sim::SimConfig& sim_cfg, const TrajOptConfig& cfg);

struct OptResult {
  ad::Tensor actions;  // horizon x n, best loss seen
  std::vector<double> loss_history;
  double best_loss = 0.0;
};

/// Adam on the flattened action sequence, actions clamped into bounds after
/// every step; returns the best-loss actions observed.
OptResult optimize_trajectory(const sim::TaskSpec& spec, const sim::SimConfig& sim_cfg,
                              const TrajOptConfig& cfg);

struct ProvenanceRow {
  std::size_t demo_index = 0;
  int config_index = -1;
  double final_loss = 0.0;
  double score = 0.0;  // normalized EMD of the stored demo
  bool skipped = false;
};

struct DemoGenResult {
  train::DemoDataset dataset;
  std::vector<ProvenanceRow> provenance;
};

/// Optimize one trajectory per configuration drawn uniformly (with
/// replacement) from the first `grid_limit` grid configurations, roll the
/// optimized actions out, and store the (observation, action) pairs. A
/// failed optimization is recorded as skipped, never fatal.
DemoGenResult generate_demos(std::size_t count, std::size_t grid_limit,
                             const sim::SimConfig& sim_cfg, const TrajOptConfig& cfg,
                             std::uint64_t seed);

}  // namespace ibc::trajopt
