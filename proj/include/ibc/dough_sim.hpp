#pragma once

#include <array>
#include <cstdint>
#include <functional>
#include <vector>

#include "ibc/energy_model.hpp"
#include "ibc/tensor.hpp"

namespace ibc::sim {

/// Simulator state: particle blob plus roller pose. States are immutable
/// values; during recorded rollouts the tensors carry graph handles.
struct DoughState {
  ad::Tensor particles;      // M x 2, workspace [0,1]^2
  ad::Tensor roller_center;  // {1, 2}
  double roller_radius = 0.12;
};

struct SimConfig {
  double kappa = 5.0;           // contact stiffness
  double contact_width = 0.02;  // softplus smoothing width
  double cohesion = 0.05;       // pull toward the centroid per step
  double softmin_temp = 0.01;   // contact-loss softmin temperature
  model::ActionBounds bounds{{-0.05, -0.05}, {0.05, 0.05}};
};

/// One task instance: initial blob, goal cloud (flattened disk), roller
/// start. The clouds are deterministic functions of the fields.
struct TaskSpec {
  int index = -1;  // grid index, or -1-k for held-out config k
  std::array<double, 2> dough_center{0.5, 0.5};
  double blob_radius = 0.1;
  std::array<double, 2> target_center{0.5, 0.5};
  double flatten = 1.15;   // goal ellipse aspect (area preserving)
  double goal_scale = 1.0;  // goal cloud size relative to the initial blob
  std::array<double, 2> roller_start{0.5, 0.85};
  double roller_radius = 0.12;
  std::size_t horizon = 40;
  std::size_t particles = 128;
  std::uint64_t seed = 0;

  ad::Tensor initial_cloud() const;
  ad::Tensor goal_cloud() const;
  DoughState initial_state() const;
};

/// Deterministic roller-particle interaction: the roller center moves by the
/// action, particles within reach are pushed radially outward through a
/// softplus contact profile, then every particle is pulled a fraction of the
/// way toward the (post-push) centroid. Differentiable w.r.t. action and
/// state; a particle exactly at the roller center is pushed along +x.
DoughState transition(const DoughState& state, const ad::Tensor& action,
                      const SimConfig& cfg);
DoughState transition(const DoughState& state, const model::Action& action,
                      const SimConfig& cfg);

/// Squared hinge of the roller-to-dough gap, with a softmin over particle
/// distances so the loss is smooth. Near zero when the roller touches.
ad::Tensor contact_loss(const DoughState& state, const SimConfig& cfg);

/// Symmetric chamfer distance between the state's particles and the goal
/// cloud (differentiable training-time surrogate of the evaluation EMD).
ad::Tensor task_loss(const DoughState& state, const ad::Tensor& goal);

/// The 5x5x5 grid over (initial dough x, target x, blob radius); 125 specs.
TaskSpec grid_configuration(std::size_t index);
inline constexpr std::size_t kGridConfigCount = 125;

/// Held-out configurations drawn off the grid, with radii beyond the grid's
/// range on both ends.
std::vector<TaskSpec> heldout_configurations(std::size_t count, std::uint64_t seed);

model::Observation observe(const DoughState& state);

struct Trajectory {
  std::vector<DoughState> states;                 // horizon + 1
  std::vector<model::Observation> observations;   // horizon
  std::vector<model::Action> actions;             // horizon
};

using PolicyFn = std::function<model::Action(const model::Observation&)>;

/// Iterates observe -> policy -> clamp -> transition for the spec's horizon.
Trajectory rollout(const PolicyFn& policy, const TaskSpec& spec, const SimConfig& cfg);

}  // namespace ibc::sim
