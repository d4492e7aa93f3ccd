#include "mgcg/nn/layers.hpp"

#include "mgcg/errors.hpp"

namespace mgcg::nn {

Embedding::Embedding(ParamStore& store, const std::string& name, Eigen::Index vocab,
                     Eigen::Index dim, Rng& rng, Init init)
    : table_(store.add(name, vocab, dim, init, rng)), vocab_(vocab), dim_(dim) {}

Mat Embedding::forward(const ParamStore& store, const std::vector<TokenId>& ids) const {
  const Mat& t = store.value(table_);
  Mat out(static_cast<Eigen::Index>(ids.size()), dim_);
  for (std::size_t i = 0; i < ids.size(); ++i) {
    if (ids[i] < 0 || ids[i] >= vocab_) throw ShapeError("embedding id out of range");
    out.row(static_cast<Eigen::Index>(i)) = t.row(ids[i]);
  }
  return out;
}

void Embedding::backward(const std::vector<TokenId>& ids, const Mat& d_out,
                         Gradients& grads) const {
  Mat& g = grads[table_];
  for (std::size_t i = 0; i < ids.size(); ++i) g.row(ids[i]) += d_out.row(static_cast<Eigen::Index>(i));
}

Linear::Linear(ParamStore& store, const std::string& name, Eigen::Index in, Eigen::Index out,
               Rng& rng, Init init)
    : w_(store.add(name + ".w", out, in, init, rng)),
      b_(store.add(name + ".b", 1, out, Init::zeros(), rng)),
      in_(in),
      out_(out) {}

Mat Linear::forward(const ParamStore& store, const Mat& x) const {
  if (x.cols() != in_) throw ShapeError("linear: input width mismatch");
  Mat y = x * store.value(w_).transpose();
  y.rowwise() += store.value(b_).row(0);
  return y;
}

Vec Linear::forward(const ParamStore& store, const Vec& x) const {
  if (x.size() != in_) throw ShapeError("linear: input width mismatch");
  return x * store.value(w_).transpose() + store.value(b_).row(0);
}

Mat Linear::backward(const ParamStore& store, const Mat& x, const Mat& d_out,
                     Gradients& grads) const {
  grads[w_].noalias() += d_out.transpose() * x;
  grads[b_].row(0) += d_out.colwise().sum();
  return d_out * store.value(w_);
}

Vec Linear::backward(const ParamStore& store, const Vec& x, const Vec& d_out,
                     Gradients& grads) const {
  grads[w_].noalias() += d_out.transpose() * x;
  grads[b_].row(0) += d_out;
  return d_out * store.value(w_);
}

LayerNorm::LayerNorm(ParamStore& store, const std::string& name, Eigen::Index dim, Rng& rng,
                     double eps)
    : gamma_(store.add(name + ".gamma", 1, dim, Init::constant(1.0), rng)),
      beta_(store.add(name + ".beta", 1, dim, Init::zeros(), rng)),
      eps_(eps) {}

Mat LayerNorm::forward(const ParamStore& store, const Mat& x, Cache* cache) const {
  const Eigen::Index n = x.rows();
  const double d = static_cast<double>(x.cols());
  Mat xhat(n, x.cols());
  Eigen::VectorXd inv_std(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    const double mu = x.row(i).mean();
    const double var = (x.row(i).array() - mu).square().sum() / d;
    inv_std(i) = 1.0 / std::sqrt(var + eps_);
    xhat.row(i) = (x.row(i).array() - mu) * inv_std(i);
  }
  Mat y = xhat.array().rowwise() * store.value(gamma_).row(0).array();
  y.rowwise() += store.value(beta_).row(0);
  if (cache) {
    cache->xhat = std::move(xhat);
    cache->inv_std = std::move(inv_std);
  }
  return y;
}

Mat LayerNorm::backward(const ParamStore& store, const Cache& cache, const Mat& d_out,
                        Gradients& grads) const {
  grads[gamma_].row(0) += (d_out.array() * cache.xhat.array()).colwise().sum().matrix();
  grads[beta_].row(0) += d_out.colwise().sum();
  Mat dxhat = d_out.array().rowwise() * store.value(gamma_).row(0).array();
  Mat dx(d_out.rows(), d_out.cols());
  for (Eigen::Index i = 0; i < d_out.rows(); ++i) {
    const double m1 = dxhat.row(i).mean();
    const double m2 = (dxhat.row(i).array() * cache.xhat.row(i).array()).mean();
    dx.row(i) = cache.inv_std(i) *
                (dxhat.row(i).array() - m1 - cache.xhat.row(i).array() * m2).matrix();
  }
  return dx;
}

Mlp::Mlp(ParamStore& store, const std::string& name, Eigen::Index in, Eigen::Index hidden,
         Eigen::Index out, Rng& rng, double dropout)
    : l1_(store, name + ".l1", in, hidden, rng),
      l2_(store, name + ".l2", hidden, out, rng),
      dropout_(dropout) {}

Mat Mlp::forward(const ParamStore& store, const Mat& x, Cache* cache, Rng* dropout_rng) const {
  Mat act = l1_.forward(store, x).array().tanh().matrix();
  Mat mask;
  Mat dropped = act;
  if (dropout_rng && dropout_ > 0.0) {
    mask = dropout_mask(act.rows(), act.cols(), dropout_, *dropout_rng);
    dropped = act.cwiseProduct(mask);
  }
  Mat y = l2_.forward(store, dropped);
  if (cache) {
    cache->x = x;
    cache->act = std::move(act);
    cache->dropped = std::move(dropped);
    cache->mask = std::move(mask);
  }
  return y;
}

Vec Mlp::forward(const ParamStore& store, const Vec& x, Cache* cache, Rng* dropout_rng) const {
  Mat y = forward(store, Mat(x), cache, dropout_rng);
  return y.row(0);
}

Mat Mlp::backward(const ParamStore& store, const Cache& cache, const Mat& d_out,
                  Gradients& grads) const {
  Mat d_dropped = l2_.backward(store, cache.dropped, d_out, grads);
  Mat d_act = cache.mask.size() ? Mat(d_dropped.cwiseProduct(cache.mask)) : d_dropped;
  Mat d_pre = d_act.array() * (1.0 - cache.act.array().square());
  return l1_.backward(store, cache.x, d_pre, grads);
}

Vec Mlp::backward(const ParamStore& store, const Cache& cache, const Vec& d_out,
                  Gradients& grads) const {
  Mat dx = backward(store, cache, Mat(d_out), grads);
  return dx.row(0);
}

}  // namespace mgcg::nn
