#include "ibc/traj_opt.hpp"

#include <cmath>
#include <limits>

#include "ibc/adam.hpp"
#include "ibc/errors.hpp"
#include "ibc/metrics.hpp"
#include "ibc/rng.hpp"

namespace ibc::trajopt {

using ad::Tensor;

Tensor trajectory_loss(std::span<const sim::DoughState> states, const Tensor& goal,
                       double contact_weight, const sim::SimConfig& cfg) {
  if (states.empty()) throw Error("trajectory_loss: no states");
  Tensor total = Tensor::scalar(0.0);
  for (const sim::DoughState& s : states) {
    Tensor term = sim::task_loss(s, goal);
    if (contact_weight != 0.0)
      term = ad::add(term, ad::scale(sim::contact_loss(s, cfg), contact_weight));
    total = ad::add(total, term);
  }
  return total;
}

RecordedRollout record_rollout(const sim::TaskSpec& spec, const Tensor& actions,
                               const sim::SimConfig& cfg, double contact_weight) {
  std::size_t n = cfg.bounds.dims();
  if (actions.shape().size() != 2 || actions.rows() != spec.horizon || actions.cols() != n)
    throw ShapeError(strf("actions must be ", spec.horizon, "x", n, ", got ",
                          ad::shape_str(actions.shape())));

  RecordedRollout rr;
  rr.states.reserve(spec.horizon + 1);
  rr.states.push_back(spec.initial_state());
  for (std::size_t t = 0; t < spec.horizon; ++t) {
    Tensor action = ad::slice(actions, t * n, (t + 1) * n).reshaped({1, n});
    rr.states.push_back(sim::transition(rr.states.back(), action, cfg));
  }
  rr.loss = trajectory_loss(rr.states, spec.goal_cloud(), contact_weight, cfg);
  return rr;
}

Tensor action_gradients(const sim::TaskSpec& spec, const Tensor& actions,
                        const sim::SimConfig& sim_cfg, const TrajOptConfig& cfg) {
  ad::Graph graph;
  ad::Graph::Scope scope(graph);
  Tensor leaf = graph.leaf(actions);
  RecordedRollout rr = record_rollout(spec, leaf, sim_cfg, cfg.contact_weight);
  graph.run_backward(rr.loss);
  return graph.gradient(leaf).detached();
}

namespace {

Tensor clamp_to_bounds(const Tensor& actions, const model::ActionBounds& bounds) {
  std::size_t n = bounds.dims();
  std::vector<double> v(actions.data().begin(), actions.data().end());
  for (std::size_t i = 0; i < v.size(); ++i) {
    std::size_t d = i % n;
    v[i] = std::min(std::max(v[i], bounds.lo[d]), bounds.hi[d]);
  }
  return Tensor(actions.shape(), std::move(v));
}

}  // namespace

OptResult optimize_trajectory(const sim::TaskSpec& spec, const sim::SimConfig& sim_cfg,
                              const TrajOptConfig& cfg) {
  if (cfg.steps < 1) throw Error("optimize_trajectory: steps must be >= 1");
  std::size_t n = sim_cfg.bounds.dims();
  Tensor actions = Tensor::zeros({spec.horizon, n});
  ad::AdamState adam({&actions, 1}, {.lr = cfg.lr});

  OptResult result;
  result.best_loss = std::numeric_limits<double>::infinity();
  result.loss_history.reserve(cfg.steps + 1);

  ad::Graph graph;
  for (std::size_t step = 0; step <= cfg.steps; ++step) {
    graph.reset();
    ad::Graph::Scope scope(graph);
    Tensor leaf = graph.leaf(actions);
    RecordedRollout rr = record_rollout(spec, leaf, sim_cfg, cfg.contact_weight);
    double loss = rr.loss.value();
    if (!std::isfinite(loss))
      throw NumericError(strf("optimize_trajectory: non-finite loss at step ", step));
    result.loss_history.push_back(loss);
    if (loss < result.best_loss) {
      result.best_loss = loss;
      result.actions = actions;
    }
    if (step == cfg.steps) break;  // final evaluation only
    graph.run_backward(rr.loss);
    Tensor grad = graph.gradient(leaf).detached();
    actions = clamp_to_bounds(adam.step({&actions, 1}, {&grad, 1})[0], sim_cfg.bounds);
  }
  return result;
}

DemoGenResult generate_demos(std::size_t count, std::size_t grid_limit,
                             const sim::SimConfig& sim_cfg, const TrajOptConfig& cfg,
                             std::uint64_t seed) {
  if (count < 1) throw Error("generate_demos: count must be >= 1");
  if (grid_limit < 1 || grid_limit > sim::kGridConfigCount)
    throw Error(strf("generate_demos: grid limit ", grid_limit, " out of range"));

  Rng rng(derive_seed(seed, {0x44454d4fu}));  // "DEMO"
  DemoGenResult result;
  result.dataset.bounds = sim_cfg.bounds;

  for (std::size_t i = 0; i < count; ++i) {
    ProvenanceRow row;
    row.demo_index = i;
    row.config_index = static_cast<int>(rng.index(grid_limit));
    sim::TaskSpec spec = sim::grid_configuration(static_cast<std::size_t>(row.config_index));
    try {
      OptResult opt = optimize_trajectory(spec, sim_cfg, cfg);
      row.final_loss = opt.best_loss;

      std::size_t n = sim_cfg.bounds.dims();
      std::size_t step = 0;
      auto replay = [&](const model::Observation&) {
        model::Action a;
        for (std::size_t d = 0; d < n; ++d) a.values.push_back(opt.actions[step * n + d]);
        ++step;
        return a;
      };
      sim::Trajectory traj = sim::rollout(replay, spec, sim_cfg);

      row.score = metrics::normalized_performance(
          metrics::PointCloud{spec.initial_cloud()},
          metrics::PointCloud{traj.states.back().particles},
          metrics::PointCloud{spec.goal_cloud()});

      train::DemoDataset::Trajectory dt;
      dt.observations = std::move(traj.observations);
      dt.actions = std::move(traj.actions);
      dt.config_index = row.config_index;
      dt.final_score = row.score;
      result.dataset.trajectories.push_back(std::move(dt));
    } catch (const Error&) {
      row.skipped = true;
      result.dataset.skipped += 1;
    }
    result.provenance.push_back(row);
  }
  return result;
}

}  // namespace ibc::trajopt
