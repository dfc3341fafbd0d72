#include "ibc/training.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "ibc/adam.hpp"
#include "ibc/checkpoint.hpp"
#include "ibc/errors.hpp"

namespace ibc::train {

using ad::Tensor;

void TrainConfig::validate() const {
  if (batch < 1 || negatives < 1) throw Error("train config: batch and negatives must be >= 1");
  if (noise_std < 0.0) throw Error("train config: noise std must be non-negative");
  if (langevin_fraction < 0.0 || langevin_fraction > 1.0)
    throw Error(strf("train config: langevin fraction must be in [0,1], got ",
                     langevin_fraction));
}

Tensor sample_uniform_negatives(const model::ActionBounds& bounds, std::size_t count,
                                Rng& rng) {
  if (count < 1) throw Error("sample_uniform_negatives: count must be >= 1");
  std::size_t n = bounds.dims();
  std::vector<double> v(count * n);
  for (std::size_t i = 0; i < count; ++i)
    for (std::size_t d = 0; d < n; ++d)
      v[i * n + d] = rng.uniform(bounds.lo[d], bounds.hi[d]);
  return Tensor::matrix(count, n, std::move(v));
}

double infonce_loss(double pos_energy, std::span<const double> neg_energies) {
  // -log( e^{-E+} / (e^{-E+} + sum_j e^{-E-_j}) ) = lse(-E_all) + E+
  double m = -pos_energy;
  for (double e : neg_energies) m = std::max(m, -e);
  double s = std::exp(-pos_energy - m);
  for (double e : neg_energies) s += std::exp(-e - m);
  return m + std::log(s) + pos_energy;
}

Tensor infonce_loss_node(const Tensor& energies) {
  if (energies.size() < 1) throw Error("infonce_loss: no energies");
  Tensor lse = ad::logsumexp(ad::scale(energies, -1.0));
  Tensor pos = ad::slice(energies, 0, 1);
  return ad::add(lse, pos);
}

namespace {

struct PairRef {
  std::size_t traj;
  std::size_t step;
};

std::vector<PairRef> all_pairs(const DemoDataset& data) {
  std::vector<PairRef> pairs;
  for (std::size_t t = 0; t < data.trajectories.size(); ++t)
    for (std::size_t s = 0; s < data.trajectories[t].actions.size(); ++s)
      pairs.push_back({t, s});
  return pairs;
}

std::vector<double> noisy_clamped_action(const model::Action& a,
                                         const model::ActionBounds& bounds,
                                         double noise_std, Rng& rng) {
  std::vector<double> v = a.values;
  if (noise_std > 0.0)
    for (double& x : v) x += rng.normal(0.0, noise_std);
  return bounds.clamped(v);
}

// sums gradients of the current graph's leaves into an accumulator keyed by
// leaf order
void accumulate_leaf_grads(const ad::Graph& graph, std::span<const Tensor> leaves,
                           std::vector<Tensor>& acc) {
  for (std::size_t i = 0; i < leaves.size(); ++i) {
    Tensor g = graph.gradient(leaves[i]);
    if (acc[i].size() == 0) {
      acc[i] = g.detached();
    } else {
      std::vector<double> sum(acc[i].data().begin(), acc[i].data().end());
      for (std::size_t j = 0; j < sum.size(); ++j) sum[j] += g[j];
      acc[i] = Tensor(acc[i].shape(), std::move(sum));
    }
  }
}

constexpr std::size_t kSubBatch = 20;  // graph memory cap per reverse sweep

}  // namespace

ImplicitTrainResult train_implicit(const DemoDataset& data, model::EnergyParams params,
                                   const TrainConfig& cfg) {
  cfg.validate();
  data.validate();
  if (data.trajectories.empty()) throw Error("train_implicit: empty dataset");
  const model::ActionBounds& bounds = data.bounds;

  std::vector<PairRef> pairs = all_pairs(data);
  std::size_t n_neg_langevin =
      cfg.kind == TrainConfig::NegativeKind::langevin
          ? static_cast<std::size_t>(std::llround(cfg.langevin_fraction *
                                                  static_cast<double>(cfg.negatives)))
          : 0;
  samplers::ReplayBuffer buffer(cfg.buffer_capacity);

  std::vector<Tensor> current = params.tensors();
  ad::AdamState adam(current, {.lr = cfg.lr});

  ImplicitTrainResult result;
  ad::Graph graph;

  // pre-training loss over the whole dataset (history entry 0)
  {
    double total = 0.0;
    Rng eval_rng(derive_seed(cfg.seed, {0x45564c30u}));  // "EVL0"
    model::EnergyParams p = model::EnergyParams::from_tensors(current);
    for (const PairRef& ref : pairs) {
      const auto& traj = data.trajectories[ref.traj];
      auto noisy = noisy_clamped_action(traj.actions[ref.step], bounds, cfg.noise_std,
                                        eval_rng);
      Tensor negs = sample_uniform_negatives(bounds, cfg.negatives, eval_rng);
      Tensor pos = Tensor::matrix(1, bounds.dims(), noisy);
      Tensor all = ad::concat({pos, negs}, 0);
      Tensor e = model::energies(p, traj.observations[ref.step], all);
      std::vector<double> neg_e(e.data().begin() + 1, e.data().end());
      total += infonce_loss(e[0], neg_e);
    }
    result.history.push_back(total / static_cast<double>(pairs.size()));
  }

  for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    Rng shuffle_rng(derive_seed(cfg.seed, {0x53485546u, epoch}));  // "SHUF"
    shuffle_rng.shuffle(pairs);

    double epoch_total = 0.0;
    std::size_t epoch_samples = 0;
    std::size_t n_batches = (pairs.size() + cfg.batch - 1) / cfg.batch;

    for (std::size_t b = 0; b < n_batches; ++b) {
      std::size_t begin = b * cfg.batch;
      std::size_t end = std::min(begin + cfg.batch, pairs.size());

      model::EnergyParams p = model::EnergyParams::from_tensors(current);
      std::vector<Tensor> grad_acc(current.size());
      double batch_loss = 0.0;

      for (std::size_t chunk = begin; chunk < end; chunk += kSubBatch) {
        std::size_t chunk_end = std::min(chunk + kSubBatch, end);
        graph.reset();
        ad::Graph::Scope scope(graph);
        std::vector<Tensor> leaves;
        leaves.reserve(current.size());
        for (const Tensor& t : current) leaves.push_back(graph.leaf(t));
        model::EnergyParams attached = model::EnergyParams::from_tensors(leaves);

        Tensor chunk_loss = Tensor::scalar(0.0);
        for (std::size_t i = chunk; i < chunk_end; ++i) {
          const PairRef& ref = pairs[i];
          const auto& traj = data.trajectories[ref.traj];
          const model::Observation& obs = traj.observations[ref.step];
          Rng item_rng(derive_seed(cfg.seed, {epoch, b, i - begin}));

          auto noisy = noisy_clamped_action(traj.actions[ref.step], bounds,
                                            cfg.noise_std, item_rng);
          Tensor pos = Tensor::matrix(1, bounds.dims(), noisy);

          Tensor negs;
          if (n_neg_langevin > 0) {
            samplers::BatchEnergyGradFn grad_fn =
                [&p](const model::Observation& o, const Tensor& actions) {
                  return model::action_gradients(p, o, actions);
                };
            const model::Observation obs_batch[] = {obs};
            auto lang = samplers::langevin_negatives(grad_fn, obs_batch, n_neg_langevin,
                                                     buffer, bounds, cfg.chain, item_rng);
            negs = lang[0];
            if (n_neg_langevin < cfg.negatives) {
              Tensor uni = sample_uniform_negatives(
                  bounds, cfg.negatives - n_neg_langevin, item_rng);
              negs = ad::concat({negs, uni}, 0);
            }
          } else {
            negs = sample_uniform_negatives(bounds, cfg.negatives, item_rng);
          }

          Tensor all = ad::concat({pos, negs.detached()}, 0);
          Tensor e = model::energies(attached, obs, all);
          chunk_loss = ad::add(chunk_loss, infonce_loss_node(e));
        }

        double loss_value = chunk_loss.value();
        if (!std::isfinite(loss_value))
          throw NumericError(strf("train_implicit: non-finite loss at epoch ", epoch,
                                  " batch ", b));
        batch_loss += loss_value;
        graph.run_backward(chunk_loss);
        accumulate_leaf_grads(graph, leaves, grad_acc);
      }

      epoch_total += batch_loss;
      epoch_samples += end - begin;
      current = adam.step(current, grad_acc);
    }
    result.history.push_back(epoch_total / static_cast<double>(epoch_samples));
  }

  result.params = model::EnergyParams::from_tensors(current);
  return result;
}

double bc_mse_loss(std::span<const double> predicted, std::span<const double> expert) {
  if (predicted.size() != expert.size())
    throw ShapeError(strf("bc_mse_loss: ", predicted.size(), " predictions vs ",
                          expert.size(), " targets"));
  double s = 0.0;
  for (std::size_t i = 0; i < predicted.size(); ++i) {
    double d = predicted[i] - expert[i];
    s += d * d;
  }
  return s;
}

double gaussian_nll_loss(std::span<const double> mu, std::span<const double> sigma,
                         std::span<const double> expert) {
  if (mu.size() != sigma.size() || mu.size() != expert.size())
    throw ShapeError("gaussian_nll_loss: size mismatch");
  double s = 0.0;
  for (std::size_t i = 0; i < mu.size(); ++i) {
    if (!(sigma[i] > 0.0))
      throw Error(strf("gaussian_nll_loss: sigma must be positive, got ", sigma[i]));
    double z = (expert[i] - mu[i]) / sigma[i];
    s += 0.5 * std::log(2.0 * std::numbers::pi) + std::log(sigma[i]) + 0.5 * z * z;
  }
  return s;
}

ExplicitPolicyParams ExplicitPolicyParams::init(std::size_t action_dims, bool gaussian,
                                                Rng& rng, model::EncoderWidths w) {
  // reuse the energy-model encoder initialization, then swap in a head that
  // maps the embedding alone
  model::EnergyParams base = model::EnergyParams::init(action_dims, rng, w);
  ExplicitPolicyParams p;
  p.enc_w1 = base.enc_w1;
  p.enc_b1 = base.enc_b1;
  p.enc_w2 = base.enc_w2;
  p.enc_b2 = base.enc_b2;
  p.proj_w = base.proj_w;
  p.proj_b = base.proj_b;
  p.gaussian = gaussian;

  std::size_t out = gaussian ? 2 * action_dims : action_dims;
  auto glorot = [&rng](std::size_t rows, std::size_t cols) {
    double bound = std::sqrt(6.0 / static_cast<double>(rows + cols));
    std::vector<double> v(rows * cols);
    for (double& x : v) x = rng.uniform(-bound, bound);
    return Tensor::matrix(rows, cols, std::move(v));
  };
  p.head_w1 = glorot(w.embed, w.head);
  p.head_b1 = Tensor::zeros({1, w.head});
  p.head_w2 = glorot(w.head, w.head);
  p.head_b2 = Tensor::zeros({1, w.head});
  p.head_w3 = glorot(w.head, out);
  p.head_b3 = Tensor::zeros({1, out});
  return p;
}

std::vector<Tensor> ExplicitPolicyParams::tensors() const {
  return {enc_w1, enc_b1, enc_w2, enc_b2, proj_w,  proj_b,
          head_w1, head_b1, head_w2, head_b2, head_w3, head_b3};
}

ExplicitPolicyParams ExplicitPolicyParams::from_tensors(std::span<const Tensor> t,
                                                        bool gaussian) {
  if (t.size() != 12)
    throw Error(strf("explicit policy expects 12 tensors, got ", t.size()));
  ExplicitPolicyParams p;
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
  p.gaussian = gaussian;
  return p;
}

ad::Tensor explicit_forward(const ExplicitPolicyParams& params,
                            const model::Observation& obs) {
  model::EnergyParams enc;
  enc.enc_w1 = params.enc_w1;
  enc.enc_b1 = params.enc_b1;
  enc.enc_w2 = params.enc_w2;
  enc.enc_b2 = params.enc_b2;
  enc.proj_w = params.proj_w;
  enc.proj_b = params.proj_b;
  // head tensors are irrelevant for encode(); reuse the encoder weights to
  // keep shapes consistent
  enc.head_w1 = params.head_w1;
  enc.head_b1 = params.head_b1;
  enc.head_w2 = params.head_w2;
  enc.head_b2 = params.head_b2;
  enc.head_w3 = params.head_w3;
  enc.head_b3 = params.head_b3;

  Tensor embed = model::encode(enc, obs);
  Tensor h = ad::tanh(ad::add(ad::matmul(embed, params.head_w1), params.head_b1));
  h = ad::tanh(ad::add(ad::matmul(h, params.head_w2), params.head_b2));
  return ad::add(ad::matmul(h, params.head_w3), params.head_b3);
}

model::Action act_explicit(const ExplicitPolicyParams& params,
                           const model::Observation& obs,
                           const model::ActionBounds& bounds) {
  Tensor out = explicit_forward(params, obs);
  std::size_t n = params.action_dims();
  std::vector<double> mu(out.data().begin(), out.data().begin() + static_cast<std::ptrdiff_t>(n));
  return model::Action{bounds.clamped(mu)};
}

ExplicitTrainResult train_explicit(const DemoDataset& data, ExplicitPolicyParams params,
                                   const TrainConfig& cfg, ExplicitLoss loss) {
  cfg.validate();
  data.validate();
  if (data.trajectories.empty()) throw Error("train_explicit: empty dataset");
  const model::ActionBounds& bounds = data.bounds;
  std::size_t n = bounds.dims();

  std::vector<PairRef> pairs = all_pairs(data);
  std::vector<Tensor> current = params.tensors();
  ad::AdamState adam(current, {.lr = cfg.lr});

  const double half_log_2pi = 0.5 * std::log(2.0 * std::numbers::pi);

  auto item_loss_node = [&](const ExplicitPolicyParams& p, const model::Observation& obs,
                            std::span<const double> target) {
    Tensor out = explicit_forward(p, obs);
    Tensor a = Tensor::row(std::vector<double>(target.begin(), target.end()));
    if (loss == ExplicitLoss::mse) {
      if (p.gaussian) throw Error("train_explicit: mse loss on a gaussian head");
      return ad::sum(ad::square(ad::sub(out, a)));
    }
    if (!p.gaussian) throw Error("train_explicit: gaussian loss on an mse head");
    Tensor mu = ad::slice(out, 0, n).reshaped({1, n});
    Tensor log_sigma = ad::slice(out, n, 2 * n).reshaped({1, n});
    Tensor z2 = ad::mul(ad::square(ad::sub(a, mu)), ad::exp(ad::scale(log_sigma, -2.0)));
    return ad::add(ad::add(ad::sum(log_sigma), ad::scale(ad::sum(z2), 0.5)),
                   Tensor::scalar(half_log_2pi * static_cast<double>(n)));
  };

  ExplicitTrainResult result;
  ad::Graph graph;

  {
    double total = 0.0;
    Rng eval_rng(derive_seed(cfg.seed, {0x45564c30u}));
    ExplicitPolicyParams p = ExplicitPolicyParams::from_tensors(current, params.gaussian);
    for (const PairRef& ref : pairs) {
      const auto& traj = data.trajectories[ref.traj];
      auto noisy = noisy_clamped_action(traj.actions[ref.step], bounds, cfg.noise_std,
                                        eval_rng);
      total += item_loss_node(p, traj.observations[ref.step], noisy).value();
    }
    result.history.push_back(total / static_cast<double>(pairs.size()));
  }

  for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    Rng shuffle_rng(derive_seed(cfg.seed, {0x53485546u, epoch}));
    shuffle_rng.shuffle(pairs);

    double epoch_total = 0.0;
    std::size_t epoch_samples = 0;
    std::size_t n_batches = (pairs.size() + cfg.batch - 1) / cfg.batch;

    for (std::size_t b = 0; b < n_batches; ++b) {
      std::size_t begin = b * cfg.batch;
      std::size_t end = std::min(begin + cfg.batch, pairs.size());
      std::vector<Tensor> grad_acc(current.size());
      double batch_loss = 0.0;

      for (std::size_t chunk = begin; chunk < end; chunk += kSubBatch) {
        std::size_t chunk_end = std::min(chunk + kSubBatch, end);
        graph.reset();
        ad::Graph::Scope scope(graph);
        std::vector<Tensor> leaves;
        for (const Tensor& t : current) leaves.push_back(graph.leaf(t));
        ExplicitPolicyParams attached =
            ExplicitPolicyParams::from_tensors(leaves, params.gaussian);

        Tensor chunk_loss = Tensor::scalar(0.0);
        for (std::size_t i = chunk; i < chunk_end; ++i) {
          const PairRef& ref = pairs[i];
          const auto& traj = data.trajectories[ref.traj];
          Rng item_rng(derive_seed(cfg.seed, {epoch, b, i - begin}));
          auto noisy = noisy_clamped_action(traj.actions[ref.step], bounds,
                                            cfg.noise_std, item_rng);
          chunk_loss = ad::add(chunk_loss,
                               item_loss_node(attached, traj.observations[ref.step], noisy));
        }

        double loss_value = chunk_loss.value();
        if (!std::isfinite(loss_value))
          throw NumericError(strf("train_explicit: non-finite loss at epoch ", epoch,
                                  " batch ", b));
        batch_loss += loss_value;
        graph.run_backward(chunk_loss);
        accumulate_leaf_grads(graph, leaves, grad_acc);
      }

      epoch_total += batch_loss;
      epoch_samples += end - begin;
      current = adam.step(current, grad_acc);
    }
    result.history.push_back(epoch_total / static_cast<double>(epoch_samples));
  }

  result.params = ExplicitPolicyParams::from_tensors(current, params.gaussian);
  return result;
}

void save_explicit_checkpoint(const std::filesystem::path& path,
                              const ExplicitPolicyParams& params) {
  model::write_tensor_file(path,
                           params.gaussian ? model::kExplicitGaussMagic
                                           : model::kExplicitMseMagic,
                           params.tensors());
}

ExplicitPolicyParams load_explicit_checkpoint(const std::filesystem::path& path) {
  model::TensorFile file = model::read_tensor_file(path);
  if (file.magic == model::kExplicitMseMagic)
    return ExplicitPolicyParams::from_tensors(file.tensors, false);
  if (file.magic == model::kExplicitGaussMagic)
    return ExplicitPolicyParams::from_tensors(file.tensors, true);
  throw IoError(strf("checkpoint ", path.string(), " is not an explicit policy (magic '",
                     file.magic, "')"));
}

}  // namespace ibc::train
