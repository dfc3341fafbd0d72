#include "ibc/dough_sim.hpp"

#include <cmath>
#include <limits>
#include <numbers>

#include "ibc/errors.hpp"
#include "ibc/rng.hpp"

namespace ibc::sim {

using ad::Tensor;

namespace {

// sunflower layout: near-uniform deterministic disk fill
std::vector<double> disk_points(std::size_t m, std::array<double, 2> center,
                                double semi_x, double semi_y) {
  const double golden_angle = std::numbers::pi * (3.0 - std::sqrt(5.0));
  std::vector<double> pts(m * 2);
  for (std::size_t i = 0; i < m; ++i) {
    double rr = std::sqrt((static_cast<double>(i) + 0.5) / static_cast<double>(m));
    double th = static_cast<double>(i) * golden_angle;
    pts[i * 2] = center[0] + semi_x * rr * std::cos(th);
    pts[i * 2 + 1] = center[1] + semi_y * rr * std::sin(th);
  }
  return pts;
}

// particle distances to a center point: {M,1} tensor of Euclidean norms,
// plus the (safe) deltas used to compute them
struct CenterGeometry {
  Tensor delta;  // M x 2
  Tensor dist;   // M x 1
  Tensor inv;    // M x 1, 1/dist
};

CenterGeometry center_geometry(const Tensor& particles, const Tensor& center,
                               bool need_inverse) {
  std::size_t m = particles.rows();
  Tensor ones_m = Tensor::ones({m, 1});
  Tensor delta = ad::sub(particles, ad::matmul(ones_m, center));

  // a particle exactly at the center has no outward direction; nudge it
  // toward +x so the push is defined and deterministic
  bool any_zero = false;
  for (std::size_t i = 0; i < m; ++i)
    if (delta.at(i, 0) == 0.0 && delta.at(i, 1) == 0.0) any_zero = true;
  if (any_zero) {
    std::vector<double> mask(m * 2, 0.0);
    for (std::size_t i = 0; i < m; ++i)
      if (delta.at(i, 0) == 0.0 && delta.at(i, 1) == 0.0) mask[i * 2] = 1e-9;
    delta = ad::add(delta, Tensor::matrix(m, 2, std::move(mask)));
  }

  CenterGeometry geo;
  geo.delta = delta;
  Tensor d2 = ad::matmul(ad::mul(delta, delta), Tensor::ones({2, 1}));
  Tensor logd2 = ad::log(ad::clamp(d2, 1e-30, std::numeric_limits<double>::infinity()));
  geo.dist = ad::exp(ad::scale(logd2, 0.5));
  if (need_inverse) geo.inv = ad::exp(ad::scale(logd2, -0.5));
  return geo;
}

}  // namespace

Tensor TaskSpec::initial_cloud() const {
  return Tensor::matrix(particles, 2,
                        disk_points(particles, dough_center, blob_radius, blob_radius));
}

Tensor TaskSpec::goal_cloud() const {
  double r = blob_radius * goal_scale;
  return Tensor::matrix(particles, 2,
                        disk_points(particles, target_center, r * flatten, r / flatten));
}

DoughState TaskSpec::initial_state() const {
  return DoughState{initial_cloud(), Tensor::row({roller_start[0], roller_start[1]}),
                    roller_radius};
}

DoughState transition(const DoughState& state, const Tensor& action, const SimConfig& cfg) {
  if (action.size() != cfg.bounds.dims())
    throw ShapeError(strf("action has ", action.size(), " dims, bounds have ",
                          cfg.bounds.dims()));
  if (!cfg.bounds.contains(action.data(), 1e-12))
    throw Error(strf("action (", action[0], ", ", action[1],
                     ") is outside the bounds box; the policy layer clamps"));

  std::size_t m = state.particles.rows();
  Tensor center = ad::add(state.roller_center, action.reshaped({1, 2}));
  CenterGeometry geo = center_geometry(state.particles, center, true);

  // outward push kappa*w*softplus((r - d)/w) along delta/d, shifted so the
  // profile reaches exactly zero at d = r + 10w and vanishes beyond (the
  // clamp's zero subgradient applies outside contact reach)
  double w = cfg.contact_width;
  Tensor arg = ad::scale(ad::sub(Tensor::scalar(state.roller_radius), geo.dist), 1.0 / w);
  double cutoff = std::log1p(std::exp(-10.0));  // softplus(-10)
  Tensor profile = ad::clamp(ad::sub(ad::softplus(arg), Tensor::scalar(cutoff)), 0.0,
                             std::numeric_limits<double>::infinity());
  Tensor magnitude = ad::scale(profile, cfg.kappa * w);
  Tensor coef = ad::matmul(ad::mul(magnitude, geo.inv), Tensor::ones({1, 2}));
  Tensor pushed = ad::add(state.particles, ad::mul(coef, geo.delta));

  Tensor next = pushed;
  if (cfg.cohesion != 0.0) {
    Tensor centroid = ad::scale(ad::matmul(Tensor::ones({1, m}), pushed),
                                1.0 / static_cast<double>(m));
    Tensor pull = ad::sub(ad::matmul(Tensor::ones({m, 1}), centroid), pushed);
    next = ad::add(pushed, ad::scale(pull, cfg.cohesion));
  }
  return DoughState{next, center, state.roller_radius};
}

DoughState transition(const DoughState& state, const model::Action& action,
                      const SimConfig& cfg) {
  return transition(state, Tensor::row(action.values), cfg);
}

Tensor contact_loss(const DoughState& state, const SimConfig& cfg) {
  CenterGeometry geo = center_geometry(state.particles, state.roller_center, false);
  double t = cfg.softmin_temp;
  Tensor softmin = ad::scale(ad::logsumexp(ad::scale(geo.dist, -1.0 / t)), -t);
  Tensor gap = ad::sub(softmin, Tensor::scalar(state.roller_radius));
  return ad::square(ad::clamp(gap, 0.0, std::numeric_limits<double>::infinity()));
}

Tensor task_loss(const DoughState& state, const Tensor& goal) {
  const Tensor& p = state.particles;
  if (p.rows() == 0 || goal.rows() == 0) throw Error("task_loss: empty cloud");
  std::size_t m = p.rows(), n = goal.rows();

  // pairwise squared distances, one coordinate at a time; the broadcast
  // difference p_i - g_j is fused into a single matmul, and equal points
  // subtract to exactly zero, so chamfer(A, A) == 0 holds bitwise
  Tensor ones_m = Tensor::ones({m, 1});
  Tensor d;
  for (int k = 0; k < 2; ++k) {
    Tensor selector = Tensor::matrix(2, 1, {k == 0 ? 1.0 : 0.0, k == 0 ? 0.0 : 1.0});
    Tensor p_col = ad::matmul(p, selector);  // {m,1}
    // [p_col 1] * [ones_row; -goal_col_row] = p_i - g_j over the grid
    std::vector<double> bcast(2 * n);
    for (std::size_t j = 0; j < n; ++j) {
      bcast[j] = 1.0;
      bcast[n + j] = -goal.at(j, static_cast<std::size_t>(k));
    }
    Tensor diff = ad::matmul(ad::concat({p_col, ones_m}, 1),
                             Tensor::matrix(2, n, std::move(bcast)));
    Tensor sq = ad::square(diff);
    d = k == 0 ? sq : ad::add(d, sq);
  }

  Tensor neg = ad::scale(d, -1.0);
  Tensor row_mins = ad::scale(ad::max_reduce(neg, 1), -1.0);  // {m,1}
  Tensor col_mins = ad::scale(ad::max_reduce(neg, 0), -1.0);  // {1,n}
  return ad::scale(ad::add(ad::mean(row_mins), ad::mean(col_mins)), 0.5);
}

TaskSpec grid_configuration(std::size_t index) {
  if (index >= kGridConfigCount)
    throw Error(strf("grid configuration index ", index, " out of range [0, ",
                     kGridConfigCount, ")"));
  auto axis = [](std::size_t i, double lo, double hi) {
    return lo + (hi - lo) * static_cast<double>(i) / 4.0;
  };
  TaskSpec spec;
  spec.index = static_cast<int>(index);
  spec.dough_center = {axis(index / 25, 0.35, 0.65), 0.5};
  // the target axis is interleaved with the initial axis so no configuration
  // is already solved at t = 0
  spec.target_center = {axis((index / 5) % 5, 0.3875, 0.6875), 0.5};
  spec.blob_radius = axis(index % 5, 0.07, 0.13);
  // the roller starts above the target, which makes the goal identifiable
  // from the first observation (the observation carries no goal cloud)
  spec.roller_start = {spec.target_center[0], 0.85};
  spec.seed = 1000 + index;
  return spec;
}

std::vector<TaskSpec> heldout_configurations(std::size_t count, std::uint64_t seed) {
  Rng rng(derive_seed(seed, {0x48454c44u}));  // "HELD"
  std::vector<TaskSpec> specs;
  specs.reserve(count);
  for (std::size_t k = 0; k < count; ++k) {
    TaskSpec spec;
    spec.index = -1 - static_cast<int>(k);
    spec.dough_center = {rng.uniform(0.33, 0.67), 0.5};
    spec.target_center = {rng.uniform(0.33, 0.67), 0.5};
    // radii beyond the training grid on both ends
    spec.blob_radius = (k % 2 == 0) ? rng.uniform(0.055, 0.068) : rng.uniform(0.132, 0.15);
    spec.roller_start = {spec.target_center[0], 0.85};
    spec.seed = derive_seed(seed, {0x48454c44u, k});
    specs.push_back(spec);
  }
  return specs;
}

model::Observation observe(const DoughState& state) {
  return model::Observation{state.particles.detached(),
                            {state.roller_center[0], state.roller_center[1]},
                            state.roller_radius};
}

Trajectory rollout(const PolicyFn& policy, const TaskSpec& spec, const SimConfig& cfg) {
  if (spec.horizon < 1) throw Error("rollout: horizon must be at least 1");
  Trajectory traj;
  traj.states.push_back(spec.initial_state());
  for (std::size_t t = 0; t < spec.horizon; ++t) {
    model::Observation obs = observe(traj.states.back());
    model::Action act = policy(obs);
    act.values = cfg.bounds.clamped(act.values);
    traj.states.push_back(transition(traj.states.back(), act, cfg));
    traj.observations.push_back(std::move(obs));
    traj.actions.push_back(std::move(act));
  }
  return traj;
}

}  // namespace ibc::sim
