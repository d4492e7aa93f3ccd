#include "mgcg/nn/loss.hpp"

#include <cmath>

#include "mgcg/errors.hpp"

namespace mgcg::nn {

SeqLoss nll_loss(const Mat& logits, const std::vector<TokenId>& gold) {
  if (gold.empty()) throw ShapeError("nll_loss: empty gold sequence");
  if (logits.rows() != static_cast<Eigen::Index>(gold.size())) {
    throw ShapeError("nll_loss: " + std::to_string(logits.rows()) + " logit rows for " +
                     std::to_string(gold.size()) + " gold tokens");
  }
  const double inv = 1.0 / static_cast<double>(gold.size());
  SeqLoss out;
  out.d_logits.resize(logits.rows(), logits.cols());
  for (Eigen::Index t = 0; t < logits.rows(); ++t) {
    const TokenId y = gold[static_cast<std::size_t>(t)];
    if (y < 0 || y >= logits.cols()) throw ShapeError("nll_loss: gold id out of range");
    const Vec lp = log_softmax(logits.row(t));
    out.loss -= lp(y) * inv;
    out.d_logits.row(t) = lp.array().exp().matrix() * inv;
    out.d_logits(t, y) -= inv;
  }
  if (!std::isfinite(out.loss)) throw DomainError("nll_loss: non-finite loss");
  return out;
}

KlLoss kl_div_loss(const Vec& p, const Vec& q) {
  if (p.size() != q.size() || p.size() == 0) throw ShapeError("kl_div_loss: support size mismatch");
  if (std::abs(p.sum() - 1.0) > 1e-6 || std::abs(q.sum() - 1.0) > 1e-6) {
    throw DomainError("kl_div_loss: inputs must sum to 1");
  }
  const double inv_n = 1.0 / static_cast<double>(p.size());
  KlLoss out;
  out.d_posterior = Vec::Zero(p.size());
  out.d_prior = Vec::Zero(p.size());
  for (Eigen::Index i = 0; i < p.size(); ++i) {
    if (p(i) < 0 || q(i) < 0) throw DomainError("kl_div_loss: negative probability");
    if (p(i) == 0.0) continue;
    if (q(i) == 0.0) throw DomainError("kl_div_loss: prior is zero where posterior is positive");
    const double lr = std::log(p(i) / q(i));
    out.loss += inv_n * p(i) * lr;
    out.d_posterior(i) = inv_n * (lr + 1.0);
    out.d_prior(i) = -inv_n * p(i) / q(i);
  }
  return out;
}

VecLoss bow_loss(const Vec& w, const std::vector<TokenId>& gold) {
  if (gold.empty()) throw ShapeError("bow_loss: empty gold sequence");
  const double inv = 1.0 / static_cast<double>(gold.size());
  const Vec lp = log_softmax(w);
  VecLoss out;
  out.d_logits = lp.array().exp().matrix();
  for (TokenId y : gold) {
    if (y < 0 || y >= w.size()) throw ShapeError("bow_loss: gold id out of range");
    out.loss -= lp(y) * inv;
    out.d_logits(y) -= inv;
  }
  return out;
}

VecLoss cross_entropy(const Vec& logits, Eigen::Index label) {
  if (label < 0 || label >= logits.size()) throw ShapeError("cross_entropy: label out of range");
  const Vec lp = log_softmax(logits);
  VecLoss out;
  out.loss = -lp(label);
  out.d_logits = lp.array().exp().matrix();
  out.d_logits(label) -= 1.0;
  return out;
}

ScalarLoss binary_cross_entropy(double z, double y) {
  // log(1 + e^-|z|) + max(z, 0) - y z, stable for large |z|.
  const double loss = std::log1p(std::exp(-std::abs(z))) + std::max(z, 0.0) - y * z;
  return {loss, sigmoid(z) - y};
}

Vec softmax_backward(const Vec& p, const Vec& d_p) {
  const double dot = p.dot(d_p);
  return (p.array() * (d_p.array() - dot)).matrix();
}

}  // namespace mgcg::nn
