#include "mgcg/nn/attention.hpp"

#include <cmath>

#include "mgcg/errors.hpp"

namespace mgcg::nn {

namespace {

constexpr double kGeluC = 0.7978845608028654;  // sqrt(2/pi)

double gelu(double x) { return 0.5 * x * (1.0 + std::tanh(kGeluC * (x + 0.044715 * x * x * x))); }

double gelu_grad(double x) {
  const double t = std::tanh(kGeluC * (x + 0.044715 * x * x * x));
  return 0.5 * (1.0 + t) + 0.5 * x * (1.0 - t * t) * kGeluC * (1.0 + 3.0 * 0.044715 * x * x);
}

}  // namespace

PairInput pack_pair(const std::vector<TokenId>& a, const std::optional<std::vector<TokenId>>& b,
                    std::size_t max_len) {
  PairInput in;
  in.ids.push_back(Vocab::kCls);
  in.ids.insert(in.ids.end(), a.begin(), a.end());
  in.ids.push_back(Vocab::kSep);
  in.segments.assign(in.ids.size(), 0);
  if (b) {
    in.ids.insert(in.ids.end(), b->begin(), b->end());
    in.ids.push_back(Vocab::kSep);
    in.segments.resize(in.ids.size(), 1);
  }
  if (in.ids.size() > max_len) {
    throw OverflowError("input of " + std::to_string(in.ids.size()) + " tokens exceeds max_len " +
                        std::to_string(max_len));
  }
  return in;
}

SelfAttentionEncoder::SelfAttentionEncoder(ParamStore& store, const std::string& name,
                                           const AttentionConfig& cfg, Rng& rng)
    : cfg_(cfg) {
  if (cfg.dim % cfg.heads != 0) throw ConfigError("attention dim must be divisible by heads");
  const double proj_std = 1.0 / std::sqrt(static_cast<double>(cfg.dim));
  pos_ = store.add(name + ".pos", cfg.max_len, cfg.dim, Init::normal(0.02), rng);
  seg_ = store.add(name + ".seg", 2, cfg.dim, Init::normal(0.02), rng);
  ln_emb_ = LayerNorm(store, name + ".ln_emb", cfg.dim, rng);
  for (Eigen::Index l = 0; l < cfg.layers; ++l) {
    const std::string p = name + ".layer" + std::to_string(l);
    layers_.push_back({Linear(store, p + ".q", cfg.dim, cfg.dim, rng, Init::normal(proj_std)),
                       Linear(store, p + ".k", cfg.dim, cfg.dim, rng, Init::normal(proj_std)),
                       Linear(store, p + ".v", cfg.dim, cfg.dim, rng, Init::normal(proj_std)),
                       Linear(store, p + ".o", cfg.dim, cfg.dim, rng, Init::normal(proj_std)),
                       LayerNorm(store, p + ".ln1", cfg.dim, rng),
                       Linear(store, p + ".ff1", cfg.dim, cfg.ffn, rng),
                       Linear(store, p + ".ff2", cfg.ffn, cfg.dim, rng),
                       LayerNorm(store, p + ".ln2", cfg.dim, rng)});
  }
}

EncoderOutput SelfAttentionEncoder::forward(const ParamStore& store, const Mat& x,
                                            const std::vector<int>& segments, Cache* cache) const {
  const Eigen::Index T = x.rows();
  if (T == 0) throw ShapeError("self-attention: empty input");
  if (T > cfg_.max_len) throw OverflowError("self-attention: input exceeds max_len");
  if (static_cast<Eigen::Index>(segments.size()) != T) {
    throw ShapeError("self-attention: segment count mismatch");
  }
  if (x.cols() != cfg_.dim) throw ShapeError("self-attention: embedding width mismatch");

  Mat e = x + store.value(pos_).topRows(T);
  const Mat& seg = store.value(seg_);
  for (Eigen::Index t = 0; t < T; ++t) e.row(t) += seg.row(segments[static_cast<std::size_t>(t)]);
  if (cache) {
    cache->segments = segments;
    cache->layers.assign(layers_.size(), {});
  }
  Mat h = ln_emb_.forward(store, e, cache ? &cache->ln_emb : nullptr);

  const Eigen::Index dk = cfg_.dim / cfg_.heads;
  const double scale = 1.0 / std::sqrt(static_cast<double>(dk));
  for (std::size_t l = 0; l < layers_.size(); ++l) {
    const auto& L = layers_[l];
    LayerCache local;
    LayerCache& c = cache ? cache->layers[l] : local;
    c.input = h;
    c.q = L.wq.forward(store, h);
    c.k = L.wk.forward(store, h);
    c.v = L.wv.forward(store, h);
    c.context.resize(T, cfg_.dim);
    c.attn.assign(static_cast<std::size_t>(cfg_.heads), {});
    for (Eigen::Index hd = 0; hd < cfg_.heads; ++hd) {
      const auto qh = c.q.middleCols(hd * dk, dk);
      const auto kh = c.k.middleCols(hd * dk, dk);
      const auto vh = c.v.middleCols(hd * dk, dk);
      Mat a = softmax_rows((qh * kh.transpose()) * scale);
      c.context.middleCols(hd * dk, dk) = a * vh;
      c.attn[static_cast<std::size_t>(hd)] = std::move(a);
    }
    const Mat o = L.wo.forward(store, c.context);
    c.u = L.ln1.forward(store, h + o, &c.ln1);
    c.pre = L.ff1.forward(store, c.u);
    c.act = c.pre.unaryExpr([](double v) { return gelu(v); });
    const Mat f = L.ff2.forward(store, c.act);
    h = L.ln2.forward(store, c.u + f, &c.ln2);
  }
  check_finite(h, "self-attention forward");
  EncoderOutput out;
  out.summary = h.row(0);
  out.states = std::move(h);
  return out;
}

Mat SelfAttentionEncoder::backward(const ParamStore& store, const Cache& cache,
                                   const Mat& d_states, const Vec& d_summary,
                                   Gradients& grads) const {
  const Eigen::Index T = static_cast<Eigen::Index>(cache.segments.size());
  Mat dh = d_states.rows() > 0 ? d_states : Mat::Zero(T, cfg_.dim);
  if (d_summary.size() > 0) dh.row(0) += d_summary;

  const Eigen::Index dk = cfg_.dim / cfg_.heads;
  const double scale = 1.0 / std::sqrt(static_cast<double>(dk));
  for (std::size_t li = layers_.size(); li-- > 0;) {
    const auto& L = layers_[li];
    const auto& c = cache.layers[li];
    const Mat ds2 = L.ln2.backward(store, c.ln2, dh, grads);
    const Mat dact = L.ff2.backward(store, c.act, ds2, grads);
    const Mat dpre = dact.cwiseProduct(c.pre.unaryExpr([](double v) { return gelu_grad(v); }));
    Mat du = ds2 + L.ff1.backward(store, c.u, dpre, grads);
    const Mat ds1 = L.ln1.backward(store, c.ln1, du, grads);
    const Mat dcontext = L.wo.backward(store, c.context, ds1, grads);
    Mat dq(T, cfg_.dim), dkm(T, cfg_.dim), dv(T, cfg_.dim);
    for (Eigen::Index hd = 0; hd < cfg_.heads; ++hd) {
      const Mat& a = c.attn[static_cast<std::size_t>(hd)];
      const auto dch = dcontext.middleCols(hd * dk, dk);
      const Mat da = dch * c.v.middleCols(hd * dk, dk).transpose();
      dv.middleCols(hd * dk, dk) = a.transpose() * dch;
      Mat dscore = a.cwiseProduct(da);
      const Eigen::VectorXd rows = dscore.rowwise().sum();
      dscore -= (a.array().colwise() * rows.array()).matrix();
      dscore *= scale;
      dq.middleCols(hd * dk, dk) = dscore * c.k.middleCols(hd * dk, dk);
      dkm.middleCols(hd * dk, dk) = dscore.transpose() * c.q.middleCols(hd * dk, dk);
    }
    dh = ds1;
    dh += L.wq.backward(store, c.input, dq, grads);
    dh += L.wk.backward(store, c.input, dkm, grads);
    dh += L.wv.backward(store, c.input, dv, grads);
  }
  const Mat de = ln_emb_.backward(store, cache.ln_emb, dh, grads);
  grads[pos_].topRows(T) += de;
  for (Eigen::Index t = 0; t < T; ++t) {
    grads[seg_].row(cache.segments[static_cast<std::size_t>(t)]) += de.row(t);
  }
  return de;
}

}  // namespace mgcg::nn
