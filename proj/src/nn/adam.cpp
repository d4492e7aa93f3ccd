#include "mgcg/nn/adam.hpp"

#include <algorithm>
#include <cmath>

#include "mgcg/errors.hpp"

namespace mgcg::nn {

Adam::Adam(const ParamStore& store, AdamConfig cfg) : cfg_(cfg) {
  for (std::size_t i = 0; i < store.size(); ++i) {
    const auto& v = store.value(ParamId{i});
    m_.push_back(Mat::Zero(v.rows(), v.cols()));
    v_.push_back(Mat::Zero(v.rows(), v.cols()));
  }
}

double Adam::step(ParamStore& store, Gradients& grads, double lr) {
  if (grads.size() != m_.size() || store.size() != m_.size()) {
    throw ShapeError("adam: optimizer state does not match the parameter store");
  }
  if (lr < 0) lr = cfg_.lr;
  const double norm = grads.global_norm();
  if (cfg_.grad_clip > 0 && norm > cfg_.grad_clip) grads.scale(cfg_.grad_clip / norm);
  ++t_;
  const double bc1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(t_));
  const double bc2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(t_));
  for (std::size_t i = 0; i < m_.size(); ++i) {
    const ParamId id{i};
    const Mat& g = grads[id];
    m_[i] = cfg_.beta1 * m_[i] + (1.0 - cfg_.beta1) * g;
    v_[i] = cfg_.beta2 * v_[i] + (1.0 - cfg_.beta2) * g.cwiseProduct(g);
    Mat& w = store.value(id);
    if (cfg_.weight_decay > 0) w *= 1.0 - lr * cfg_.weight_decay;
    w.array() -= lr * (m_[i].array() / bc1) / ((v_[i].array() / bc2).sqrt() + cfg_.eps);
  }
  return norm;
}

double warmup_linear(double peak, long step, long warmup, long total) {
  if (total <= 0) return peak;
  if (warmup > 0 && step < warmup) {
    return peak * static_cast<double>(step + 1) / static_cast<double>(warmup);
  }
  const long rest = std::max(1L, total - warmup);
  const double frac = static_cast<double>(std::max(0L, total - step)) / static_cast<double>(rest);
  return peak * std::clamp(frac, 0.0, 1.0);
}

}  // namespace mgcg::nn
