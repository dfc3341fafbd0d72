#include "ibc/samplers.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "ibc/errors.hpp"

namespace ibc::samplers {

using ad::Tensor;

void DfoConfig::validate(std::size_t dims) const {
  if (n_samples < gmm_components || gmm_components < 1)
    throw Error(strf("dfo config: need n_samples >= gmm_components >= 1, got ",
                     n_samples, " / ", gmm_components));
  if (!(shrink > 0.0 && shrink < 1.0))
    throw Error(strf("dfo config: shrink factor must be in (0,1), got ", shrink));
  if (!sigma_init.empty() && sigma_init.size() != dims)
    throw Error(strf("dfo config: sigma_init has ", sigma_init.size(), " dims, want ",
                     dims));
  for (double s : sigma_init)
    if (!(s > 0.0)) throw Error("dfo config: sigma_init must be positive");
}

void LangevinConfig::validate() const {
  if (!(step_size > 0.0)) throw Error("langevin config: step size must be positive");
  if (noise_scale >= 0.0 && !(noise_scale > 0.0))
    throw Error("langevin config: explicit noise scale must be positive");
  if (!(step_decay > 0.0 && step_decay <= 1.0))
    throw Error(strf("langevin config: step decay must be in (0,1], got ", step_decay));
  if (buffer_reuse < 0.0 || buffer_reuse > 1.0)
    throw Error(strf("langevin config: buffer reuse must be in [0,1], got ", buffer_reuse));
}

ReplayBuffer::ReplayBuffer(std::size_t capacity) : capacity_(capacity) {
  if (capacity_ == 0) throw Error("replay buffer capacity must be positive");
}

void ReplayBuffer::push(std::vector<double> action) {
  if (items_.size() < capacity_) {
    items_.push_back(std::move(action));
  } else {
    items_[head_] = std::move(action);
    head_ = (head_ + 1) % capacity_;
  }
}

const std::vector<double>& ReplayBuffer::sample(Rng& rng) const {
  if (items_.empty()) throw Error("replay buffer sample from empty buffer");
  return items_[rng.index(items_.size())];
}

namespace {

constexpr double kLogTwoPi = 1.8378770664093453;  // log(2*pi)

Tensor uniform_box_samples(const model::ActionBounds& bounds, std::size_t count,
                           Rng& rng) {
  std::size_t n = bounds.dims();
  std::vector<double> v(count * n);
  for (std::size_t i = 0; i < count; ++i)
    for (std::size_t d = 0; d < n; ++d)
      v[i * n + d] = rng.uniform(bounds.lo[d], bounds.hi[d]);
  return Tensor::matrix(count, n, std::move(v));
}

// log N(x; mu, diag(var)) for one sample row
double log_gauss(std::span<const double> x, const std::vector<double>& mean,
                 const std::vector<double>& var) {
  double s = 0.0;
  for (std::size_t d = 0; d < x.size(); ++d) {
    double diff = x[d] - mean[d];
    s += -0.5 * (kLogTwoPi + std::log(var[d]) + diff * diff / var[d]);
  }
  return s;
}

}  // namespace

double gmm_log_likelihood(const Tensor& samples, std::span<const double> weights,
                          const GmmParams& gmm) {
  std::size_t n = samples.cols(), k = gmm.components();
  double total = 0.0;
  std::vector<double> logp(k);
  for (std::size_t i = 0; i < samples.rows(); ++i) {
    std::span<const double> row(samples.data().data() + i * n, n);
    double best = -1e300;
    for (std::size_t c = 0; c < k; ++c) {
      logp[c] = std::log(std::max(gmm.weights[c], 1e-300)) +
                log_gauss(row, gmm.means[c], gmm.variances[c]);
      best = std::max(best, logp[c]);
    }
    double s = 0.0;
    for (double lp : logp) s += std::exp(lp - best);
    total += weights[i] * (best + std::log(s));
  }
  return total;
}

GmmParams em_fit_gmm(const Tensor& samples, std::span<const double> weights,
                     std::size_t components, std::size_t iters, Rng& rng) {
  std::size_t count = samples.rows(), n = samples.cols();
  if (count < components)
    throw Error(strf("em_fit_gmm: ", count, " samples cannot seed ", components,
                     " components"));
  if (weights.size() != count)
    throw Error(strf("em_fit_gmm: ", weights.size(), " weights for ", count, " samples"));

  auto sample_row = [&](std::size_t i) {
    return std::vector<double>(samples.data().begin() + static_cast<std::ptrdiff_t>(i * n),
                               samples.data().begin() + static_cast<std::ptrdiff_t>((i + 1) * n));
  };

  // global weighted mean / variance (variance also seeds re-initialization)
  std::vector<double> gmean(n, 0.0), gvar(n, 0.0);
  for (std::size_t i = 0; i < count; ++i)
    for (std::size_t d = 0; d < n; ++d) gmean[d] += weights[i] * samples.at(i, d);
  for (std::size_t i = 0; i < count; ++i)
    for (std::size_t d = 0; d < n; ++d) {
      double diff = samples.at(i, d) - gmean[d];
      gvar[d] += weights[i] * diff * diff;
    }
  for (double& v : gvar) v = std::max(v, kVarianceFloor);

  std::size_t best_sample = 0;
  for (std::size_t i = 1; i < count; ++i)
    if (weights[i] > weights[best_sample]) best_sample = i;

  // means seeded at distinct samples: the first by weight, the rest by
  // weight times squared distance to the seeds chosen so far, so separated
  // clusters get separated seeds
  GmmParams gmm;
  gmm.weights.assign(components, 1.0 / static_cast<double>(components));
  std::vector<std::size_t> chosen;
  std::vector<double> min_d2(count, 1.0);
  for (std::size_t c = 0; c < components; ++c) {
    if (c > 0) {
      const auto& last = gmm.means.back();
      for (std::size_t i = 0; i < count; ++i) {
        double d2 = 0.0;
        for (std::size_t d = 0; d < n; ++d) {
          double diff = samples.at(i, d) - last[d];
          d2 += diff * diff;
        }
        min_d2[i] = c == 1 ? d2 : std::min(min_d2[i], d2);
      }
    }
    double total = 0.0;
    std::vector<double> seed_w(count);
    for (std::size_t i = 0; i < count; ++i) {
      seed_w[i] = weights[i] * min_d2[i];
      if (std::find(chosen.begin(), chosen.end(), i) != chosen.end()) seed_w[i] = 0.0;
      total += seed_w[i];
    }

    std::size_t pick = count;  // sentinel
    if (total > 0.0) {
      double u = rng.uniform() * total;
      double acc = 0.0;
      for (std::size_t i = 0; i < count; ++i) {
        acc += seed_w[i];
        if (u <= acc) {
          pick = i;
          break;
        }
      }
    }
    if (pick == count)  // all residual mass vanished: first unused index
      for (std::size_t i = 0; i < count && pick == count; ++i)
        if (std::find(chosen.begin(), chosen.end(), i) == chosen.end()) pick = i;
    chosen.push_back(pick);
    gmm.means.push_back(sample_row(pick));
    gmm.variances.push_back(gvar);
  }

  std::vector<double> resp(count * components);
  for (std::size_t iter = 0; iter < std::max<std::size_t>(iters, 1); ++iter) {
    // E-step in log space
    for (std::size_t i = 0; i < count; ++i) {
      std::span<const double> row(samples.data().data() + i * n, n);
      double best = -1e300;
      for (std::size_t c = 0; c < components; ++c) {
        double lp = std::log(std::max(gmm.weights[c], 1e-300)) +
                    log_gauss(row, gmm.means[c], gmm.variances[c]);
        resp[i * components + c] = lp;
        best = std::max(best, lp);
      }
      double s = 0.0;
      for (std::size_t c = 0; c < components; ++c) {
        resp[i * components + c] = std::exp(resp[i * components + c] - best);
        s += resp[i * components + c];
      }
      for (std::size_t c = 0; c < components; ++c) resp[i * components + c] /= s;
    }

    // M-step with the sample weights folded in
    for (std::size_t c = 0; c < components; ++c) {
      double nk = 0.0;
      for (std::size_t i = 0; i < count; ++i) nk += weights[i] * resp[i * components + c];
      if (nk < 1e-12) {
        // degenerate component: re-seed at the current best sample
        gmm.means[c] = sample_row(best_sample);
        gmm.variances[c] = gvar;
        gmm.weights[c] = 1e-6;
        continue;
      }
      std::vector<double> mean(n, 0.0), var(n, 0.0);
      for (std::size_t i = 0; i < count; ++i) {
        double w = weights[i] * resp[i * components + c];
        for (std::size_t d = 0; d < n; ++d) mean[d] += w * samples.at(i, d);
      }
      for (double& m : mean) m /= nk;
      for (std::size_t i = 0; i < count; ++i) {
        double w = weights[i] * resp[i * components + c];
        for (std::size_t d = 0; d < n; ++d) {
          double diff = samples.at(i, d) - mean[d];
          var[d] += w * diff * diff;
        }
      }
      for (double& v : var) v = std::max(v / nk, kVarianceFloor);
      gmm.weights[c] = nk;
      gmm.means[c] = std::move(mean);
      gmm.variances[c] = std::move(var);
    }
    double total = 0.0;
    for (double w : gmm.weights) total += w;
    for (double& w : gmm.weights) w /= total;
  }
  return gmm;
}

Tensor gmm_sample(const GmmParams& gmm, std::size_t count, Rng& rng) {
  std::size_t k = gmm.components(), n = gmm.dims();
  if (k == 0) throw Error("gmm_sample: empty mixture");
  std::vector<double> v(count * n);
  for (std::size_t i = 0; i < count; ++i) {
    double u = rng.uniform();
    std::size_t c = k - 1;
    double acc = 0.0;
    for (std::size_t j = 0; j < k; ++j) {
      acc += gmm.weights[j];
      if (u <= acc) {
        c = j;
        break;
      }
    }
    for (std::size_t d = 0; d < n; ++d)
      v[i * n + d] = rng.normal(gmm.means[c][d], std::sqrt(gmm.variances[c][d]));
  }
  return Tensor::matrix(count, n, std::move(v));
}

model::Action dfo_optimize(const BatchEnergyFn& energy, const model::Observation& obs,
                           const model::ActionBounds& bounds, const DfoConfig& cfg,
                           Rng& rng) {
  bounds.validate();
  std::size_t n = bounds.dims();
  cfg.validate(n);

  std::vector<double> sigma = cfg.sigma_init;
  if (sigma.empty()) {
    sigma.resize(n);
    for (std::size_t d = 0; d < n; ++d) sigma[d] = 0.33 * (bounds.hi[d] - bounds.lo[d]);
  }

  Tensor samples = uniform_box_samples(bounds, cfg.n_samples, rng);
  model::Action best;
  double best_energy = std::numeric_limits<double>::infinity();

  auto scan_population = [&](const std::vector<double>& energies) {
    for (std::size_t i = 0; i < energies.size(); ++i)
      if (energies[i] < best_energy) {
        best_energy = energies[i];
        best.values.assign(samples.data().begin() + static_cast<std::ptrdiff_t>(i * n),
                           samples.data().begin() + static_cast<std::ptrdiff_t>((i + 1) * n));
      }
  };

  for (std::size_t iter = 0; iter < cfg.n_iters; ++iter) {
    std::vector<double> energies = energy(obs, samples);
    scan_population(energies);
    std::vector<double> probs = model::candidate_softmax(energies);
    GmmParams gmm = em_fit_gmm(samples, probs, cfg.gmm_components, cfg.em_iters, rng);
    samples = gmm_sample(gmm, cfg.n_samples, rng);

    std::vector<double> noisy(samples.data().begin(), samples.data().end());
    for (std::size_t i = 0; i < cfg.n_samples; ++i)
      for (std::size_t d = 0; d < n; ++d) {
        double v = noisy[i * n + d] + rng.normal(0.0, sigma[d]);
        noisy[i * n + d] = std::min(std::max(v, bounds.lo[d]), bounds.hi[d]);
      }
    samples = Tensor::matrix(cfg.n_samples, n, std::move(noisy));
    for (double& s : sigma) s *= cfg.shrink;
  }
  scan_population(energy(obs, samples));
  return best;
}

namespace {

struct ChainState {
  Tensor actions;  // K x n, current chain states
  model::Action best;
  double best_energy = std::numeric_limits<double>::infinity();
};

// shared single/batched chain driver; optionally collects the trace of
// chain 0 for diagnostics
ChainState run_chains(const BatchEnergyGradFn& energy_grad, const model::Observation& obs,
                      const Tensor& inits, const model::ActionBounds& bounds,
                      const LangevinConfig& cfg, Rng& rng,
                      std::vector<std::vector<double>>* trace,
                      std::vector<double>* trace_energies,
                      std::vector<double>* final_energies) {
  cfg.validate();
  bounds.validate();
  std::size_t k = inits.rows(), n = inits.cols();

  ChainState state;
  state.actions = inits;
  double lambda = cfg.step_size;
  double sigma = cfg.noise_scale < 0.0 ? std::sqrt(lambda) : cfg.noise_scale;

  auto record_trace = [&] {
    if (!trace) return;
    trace->emplace_back(state.actions.data().begin(),
                        state.actions.data().begin() + static_cast<std::ptrdiff_t>(n));
  };
  record_trace();

  for (std::size_t step = 0; step < cfg.steps; ++step) {
    model::EnergyGradBatch batch = energy_grad(obs, state.actions);
    if (!batch.gradients.all_finite())
      throw NumericError(strf("langevin chain: non-finite gradient at step ", step));
    if (trace_energies) trace_energies->push_back(batch.energies[0]);
    for (std::size_t i = 0; i < k; ++i)
      if (batch.energies[i] < state.best_energy) {
        state.best_energy = batch.energies[i];
        state.best.values.assign(
            state.actions.data().begin() + static_cast<std::ptrdiff_t>(i * n),
            state.actions.data().begin() + static_cast<std::ptrdiff_t>((i + 1) * n));
      }

    std::vector<double> next(state.actions.data().begin(), state.actions.data().end());
    for (std::size_t i = 0; i < k; ++i) {
      // clip the gradient norm per chain before the half step
      double norm2 = 0.0;
      for (std::size_t d = 0; d < n; ++d) {
        double g = batch.gradients.at(i, d);
        norm2 += g * g;
      }
      double clip = 1.0;
      if (cfg.grad_clip > 0.0 && norm2 > cfg.grad_clip * cfg.grad_clip)
        clip = cfg.grad_clip / std::sqrt(norm2);
      for (std::size_t d = 0; d < n; ++d) {
        double v = next[i * n + d] - 0.5 * lambda * clip * batch.gradients.at(i, d) +
                   rng.normal(0.0, sigma);
        next[i * n + d] = std::min(std::max(v, bounds.lo[d]), bounds.hi[d]);
      }
    }
    state.actions = Tensor::matrix(k, n, std::move(next));
    record_trace();

    lambda *= cfg.step_decay;
    sigma = cfg.noise_scale < 0.0 ? std::sqrt(lambda)
                                  : sigma * std::sqrt(cfg.step_decay);
  }

  // final states: one more energy evaluation for best-tracking and reporting
  model::EnergyGradBatch final_batch = energy_grad(obs, state.actions);
  if (trace_energies) trace_energies->push_back(final_batch.energies[0]);
  for (std::size_t i = 0; i < k; ++i)
    if (final_batch.energies[i] < state.best_energy) {
      state.best_energy = final_batch.energies[i];
      state.best.values.assign(
          state.actions.data().begin() + static_cast<std::ptrdiff_t>(i * n),
          state.actions.data().begin() + static_cast<std::ptrdiff_t>((i + 1) * n));
    }
  if (final_energies) *final_energies = std::move(final_batch.energies);
  return state;
}

}  // namespace

ChainResult langevin_chain(const BatchEnergyGradFn& energy_grad,
                           const model::Observation& obs, const model::Action& init,
                           const model::ActionBounds& bounds, const LangevinConfig& cfg,
                           Rng& rng) {
  if (!bounds.contains(init.values, 1e-12))
    throw Error("langevin_chain: init lies outside the action box");
  Tensor inits = Tensor::matrix(1, init.values.size(), init.values);
  ChainResult result;
  std::vector<double> finals;
  ChainState state = run_chains(energy_grad, obs, inits, bounds, cfg, rng,
                                &result.visited, &result.energies, &finals);
  result.final.values.assign(state.actions.data().begin(), state.actions.data().end());
  result.best = state.best;
  result.best_energy = state.best_energy;
  return result;
}

ChainBatch langevin_chains(const BatchEnergyGradFn& energy_grad,
                           const model::Observation& obs, const Tensor& inits,
                           const model::ActionBounds& bounds, const LangevinConfig& cfg,
                           Rng& rng) {
  ChainBatch batch;
  ChainState state = run_chains(energy_grad, obs, inits, bounds, cfg, rng, nullptr,
                                nullptr, &batch.final_energies);
  batch.finals = state.actions;
  batch.best = state.best;
  batch.best_energy = state.best_energy;
  return batch;
}

std::vector<Tensor> langevin_negatives(const BatchEnergyGradFn& energy_grad,
                                       std::span<const model::Observation> batch,
                                       std::size_t n_neg, ReplayBuffer& buffer,
                                       const model::ActionBounds& bounds,
                                       const LangevinConfig& cfg, Rng& rng) {
  std::size_t n = bounds.dims();
  std::vector<Tensor> result;
  result.reserve(batch.size());
  for (const model::Observation& obs : batch) {
    std::vector<double> inits(n_neg * n);
    for (std::size_t j = 0; j < n_neg; ++j) {
      double reuse_draw = rng.uniform();  // drawn unconditionally: the rng
      // stream must not depend on the buffer state
      if (buffer.size() > 0 && reuse_draw < cfg.buffer_reuse) {
        const auto& a = buffer.sample(rng);
        std::copy(a.begin(), a.end(), inits.begin() + static_cast<std::ptrdiff_t>(j * n));
      } else {
        for (std::size_t d = 0; d < n; ++d)
          inits[j * n + d] = rng.uniform(bounds.lo[d], bounds.hi[d]);
      }
    }
    ChainBatch chains = langevin_chains(energy_grad, obs,
                                        Tensor::matrix(n_neg, n, std::move(inits)),
                                        bounds, cfg, rng);
    for (std::size_t j = 0; j < n_neg; ++j)
      buffer.push(std::vector<double>(
          chains.finals.data().begin() + static_cast<std::ptrdiff_t>(j * n),
          chains.finals.data().begin() + static_cast<std::ptrdiff_t>((j + 1) * n)));
    result.push_back(std::move(chains.finals));
  }
  return result;
}

InferenceMethod parse_method(std::string_view name) {
  if (name == "dfo") return InferenceMethod::dfo;
  if (name == "langevin") return InferenceMethod::langevin;
  throw ConfigError(strf("unknown inference method '", name, "'; valid: dfo, langevin"));
}

model::Action act_implicit(const model::EnergyParams& params, const model::Observation& obs,
                           InferenceMethod method, const model::ActionBounds& bounds,
                           const DfoConfig& dfo_cfg, const LangevinConfig& langevin_cfg,
                           Rng& rng) {
  if (method == InferenceMethod::dfo) {
    BatchEnergyFn energy = [&params](const model::Observation& o, const Tensor& actions) {
      Tensor e = model::energies(params, o, actions);
      return std::vector<double>(e.data().begin(), e.data().end());
    };
    return dfo_optimize(energy, obs, bounds, dfo_cfg, rng);
  }

  BatchEnergyGradFn grad = [&params](const model::Observation& o, const Tensor& actions) {
    return model::action_gradients(params, o, actions);
  };
  std::size_t chains = std::max<std::size_t>(langevin_cfg.parallel_chains, 1);
  Tensor inits = uniform_box_samples(bounds, chains, rng);
  ChainBatch batch = langevin_chains(grad, obs, inits, bounds, langevin_cfg, rng);
  return batch.best;
}

}  // namespace ibc::samplers
