#include "ibc/adam.hpp"

#include <cmath>

#include "ibc/errors.hpp"

namespace ibc::ad {

AdamState::AdamState(std::span<const Tensor> params, AdamConfig cfg) : cfg_(cfg) {
  m_.reserve(params.size());
  v_.reserve(params.size());
  for (const Tensor& p : params) {
    m_.emplace_back(p.size(), 0.0);
    v_.emplace_back(p.size(), 0.0);
    shapes_.push_back(p.shape());
  }
}

std::vector<Tensor> AdamState::step(std::span<const Tensor> params,
                                    std::span<const Tensor> grads) {
  if (params.size() != shapes_.size() || grads.size() != shapes_.size())
    throw ShapeError(strf("adam_step: ", params.size(), " params / ", grads.size(),
                          " grads for state of ", shapes_.size()));
  for (std::size_t i = 0; i < params.size(); ++i)
    if (params[i].shape() != shapes_[i] || grads[i].shape() != shapes_[i])
      throw ShapeError(strf("adam_step: tensor ", i, " shape ",
                            shape_str(params[i].shape()), " / grad ",
                            shape_str(grads[i].shape()), " vs state ",
                            shape_str(shapes_[i])));

  ++t_;
  double bc1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(t_));
  double bc2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(t_));

  std::vector<Tensor> out;
  out.reserve(params.size());
  for (std::size_t i = 0; i < params.size(); ++i) {
    const auto p = params[i].data();
    const auto g = grads[i].data();
    auto& m = m_[i];
    auto& v = v_[i];
    std::vector<double> next(p.begin(), p.end());
    for (std::size_t j = 0; j < next.size(); ++j) {
      m[j] = cfg_.beta1 * m[j] + (1.0 - cfg_.beta1) * g[j];
      v[j] = cfg_.beta2 * v[j] + (1.0 - cfg_.beta2) * g[j] * g[j];
      double mhat = m[j] / bc1;
      double vhat = v[j] / bc2;
      next[j] -= cfg_.lr * mhat / (std::sqrt(vhat) + cfg_.eps);
    }
    out.emplace_back(shapes_[i], std::move(next));
  }
  return out;
}

}  // namespace ibc::ad
