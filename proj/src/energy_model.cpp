#include "ibc/energy_model.hpp"

#include <algorithm>
#include <cmath>

#include "ibc/errors.hpp"

namespace ibc::model {

using ad::Tensor;

void validate(const Observation& obs) {
  if (obs.points.shape().size() != 2 || obs.points.cols() != 2)
    throw ShapeError(strf("observation points must be Mx2, got ",
                          ad::shape_str(obs.points.shape())));
  if (obs.points.rows() == 0) throw Error("observation has zero points");
  if (!obs.points.all_finite() || !std::isfinite(obs.roller_center[0]) ||
      !std::isfinite(obs.roller_center[1]) || !std::isfinite(obs.roller_radius))
    throw NumericError("observation contains non-finite values");
}

void ActionBounds::validate() const {
  if (lo.size() != hi.size() || lo.empty())
    throw Error(strf("action bounds arity mismatch: ", lo.size(), " vs ", hi.size()));
  for (std::size_t i = 0; i < lo.size(); ++i)
    if (!(lo[i] < hi[i]))
      throw Error(strf("action bounds must satisfy lo < hi, got [", lo[i], ", ",
                       hi[i], "] at dim ", i));
}

std::vector<double> ActionBounds::clamped(std::span<const double> values) const {
  std::vector<double> out(values.begin(), values.end());
  for (std::size_t i = 0; i < out.size(); ++i)
    out[i] = std::min(std::max(out[i], lo[i]), hi[i]);
  return out;
}

bool ActionBounds::contains(std::span<const double> values, double tol) const {
  if (values.size() != lo.size()) return false;
  for (std::size_t i = 0; i < values.size(); ++i)
    if (values[i] < lo[i] - tol || values[i] > hi[i] + tol) return false;
  return true;
}

namespace {

Tensor glorot(std::size_t rows, std::size_t cols, Rng& rng) {
  double bound = std::sqrt(6.0 / static_cast<double>(rows + cols));
  std::vector<double> v(rows * cols);
  for (double& x : v) x = rng.uniform(-bound, bound);
  return Tensor::matrix(rows, cols, std::move(v));
}

void check_finite(const Tensor& t, const char* layer) {
  if (!t.all_finite())
    throw NumericError(strf("energy model: non-finite values at layer ", layer));
}

// rows of ones used to broadcast {1, f} biases / embeddings over k rows
Tensor ones_col(std::size_t k) { return Tensor::ones({k, 1}); }

}  // namespace

EnergyParams EnergyParams::init(std::size_t action_dims, Rng& rng, EncoderWidths w) {
  EnergyParams p;
  p.enc_w1 = glorot(2, w.h1, rng);
  p.enc_b1 = Tensor::zeros({1, w.h1});
  p.enc_w2 = glorot(w.h1, w.h2, rng);
  p.enc_b2 = Tensor::zeros({1, w.h2});
  p.proj_w = glorot(w.h2 + 3, w.embed, rng);
  p.proj_b = Tensor::zeros({1, w.embed});
  p.head_w1 = glorot(w.embed + action_dims, w.head, rng);
  p.head_b1 = Tensor::zeros({1, w.head});
  p.head_w2 = glorot(w.head, w.head, rng);
  p.head_b2 = Tensor::zeros({1, w.head});
  p.head_w3 = glorot(w.head, 1, rng);
  p.head_b3 = Tensor::zeros({1, 1});
  return p;
}

std::vector<Tensor> EnergyParams::tensors() const {
  return {enc_w1, enc_b1, enc_w2, enc_b2, proj_w,  proj_b,
          head_w1, head_b1, head_w2, head_b2, head_w3, head_b3};
}

EnergyParams EnergyParams::from_tensors(std::span<const Tensor> t) {
  if (t.size() != 12)
    throw Error(strf("energy params expect 12 tensors, got ", t.size()));
  EnergyParams p;
  p.enc_w1 = t[0];
  p.enc_b1 = t[1];
  p.enc_w2 = t[2];
  p.enc_b2 = t[3];
  p.proj_w = t[4];
  p.proj_b = t[5];
  p.head_w1 = t[6];
  p.head_b1 = t[7];
  p.head_w2 = t[8];
  p.head_b2 = t[9];
  p.head_w3 = t[10];
  p.head_b3 = t[11];
  return p;
}

Tensor pose_row(const Observation& obs) {
  return Tensor::row({obs.roller_center[0], obs.roller_center[1], obs.roller_radius});
}

ad::Tensor encode(const EnergyParams& params, const Observation& obs) {
  validate(obs);
  std::size_t m = obs.points.rows();
  Tensor ones = ones_col(m);

  Tensor h1 = ad::tanh(ad::add(ad::matmul(obs.points, params.enc_w1),
                               ad::matmul(ones, params.enc_b1)));
  check_finite(h1, "encoder-1");
  Tensor h2 = ad::tanh(ad::add(ad::matmul(h1, params.enc_w2),
                               ad::matmul(ones, params.enc_b2)));
  check_finite(h2, "encoder-2");
  Tensor pooled = ad::max_reduce(h2, 0);
  Tensor with_pose = ad::concat({pooled, pose_row(obs)}, 1);
  Tensor embed = ad::add(ad::matmul(with_pose, params.proj_w), params.proj_b);
  check_finite(embed, "projection");
  return embed;
}

namespace {

Tensor head_forward(const EnergyParams& params, const Tensor& embed,
                    const Tensor& actions) {
  std::size_t k = actions.rows();
  Tensor ones = ones_col(k);
  Tensor z = ad::concat({ad::matmul(ones, embed), actions}, 1);
  Tensor h = ad::tanh(ad::add(ad::matmul(z, params.head_w1),
                              ad::matmul(ones, params.head_b1)));
  check_finite(h, "head-1");
  h = ad::tanh(ad::add(ad::matmul(h, params.head_w2), ad::matmul(ones, params.head_b2)));
  check_finite(h, "head-2");
  Tensor e = ad::add(ad::matmul(h, params.head_w3), ad::matmul(ones, params.head_b3));
  check_finite(e, "head-3");
  return e;
}

}  // namespace

ad::Tensor energies(const EnergyParams& params, const Observation& obs,
                    const ad::Tensor& actions) {
  if (actions.shape().size() != 2 || actions.cols() != params.action_dims())
    throw ShapeError(strf("actions must be Kx", params.action_dims(), ", got ",
                          ad::shape_str(actions.shape())));
  Tensor embed = encode(params, obs);
  return head_forward(params, embed, actions);
}

double energy(const EnergyParams& params, const Observation& obs, const Action& a) {
  Tensor actions = Tensor::matrix(1, a.values.size(), a.values);
  return energies(params, obs, actions).value();
}

std::vector<double> action_gradient(const EnergyParams& params, const Observation& obs,
                                    const Action& a) {
  Tensor actions = Tensor::matrix(1, a.values.size(), a.values);
  EnergyGradBatch batch = action_gradients(params, obs, actions);
  return {batch.gradients.data().begin(), batch.gradients.data().end()};
}

EnergyGradBatch action_gradients(const EnergyParams& params, const Observation& obs,
                                 const ad::Tensor& actions) {
  ad::Graph graph;
  ad::Graph::Scope scope(graph);
  Tensor leaf = graph.leaf(actions);
  Tensor e = energies(params, obs, leaf);
  // each row's energy depends only on its own action row, so the gradient of
  // the summed energies recovers every per-row gradient in one sweep
  graph.run_backward(ad::sum(e));
  EnergyGradBatch out;
  out.energies.assign(e.data().begin(), e.data().end());
  out.gradients = graph.gradient(leaf).detached();
  return out;
}

std::vector<double> candidate_softmax(std::span<const double> energies) {
  if (energies.empty()) throw Error("candidate_softmax: empty energy vector");
  double lo = *std::min_element(energies.begin(), energies.end());
  std::vector<double> p(energies.size());
  double total = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) {
    p[i] = std::exp(lo - energies[i]);  // shift by the minimal energy
    total += p[i];
  }
  for (double& v : p) v /= total;
  return p;
}

}  // namespace ibc::model
