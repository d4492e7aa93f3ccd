#include "mgcg/nn/block_checks.hpp"

#include "mgcg/nn/attention.hpp"
#include "mgcg/nn/cnn.hpp"
#include "mgcg/nn/gru.hpp"
#include "mgcg/nn/hgfu.hpp"
#include "mgcg/nn/layers.hpp"
#include "mgcg/nn/loss.hpp"

namespace mgcg::nn {

namespace {

ParamId random_input(ParamStore& store, const std::string& name, Eigen::Index r, Eigen::Index c,
                     Rng& rng) {
  return store.add(name, r, c, Init::uniform(1.0), rng);
}

double project(const Mat& out, const Mat& proj) { return out.cwiseProduct(proj).sum(); }

Mat random_projection(Eigen::Index r, Eigen::Index c, Rng& rng) {
  Mat m(r, c);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = rng.uniform(-1.0, 1.0);
  return m;
}

BlockCheck check_bigru(Rng& rng, const GradCheckOptions& opt) {
  ParamStore store;
  const auto x = random_input(store, "x", 4, 5, rng);
  // Wider init than the training default so every gate is exercised.
  BiGru enc(store, "bigru", 5, 4, rng);
  for (std::size_t i = 1; i < store.size(); ++i) store.value(ParamId{i}) *= 6.0;
  const Mat r_states = random_projection(4, 8, rng);
  const Mat r_summary = random_projection(1, 8, rng);
  auto loss = [=](const ParamStore& s, Gradients* g) {
    BiGru::Cache cache;
    auto out = enc.forward(s, s.value(x), g ? &cache : nullptr);
    const double l = project(out.states, r_states) + project(out.summary, r_summary);
    if (g) (*g)[x] += enc.backward(s, cache, r_states, r_summary.row(0), *g);
    return l;
  };
  return {"bigru", grad_check(store, loss, opt)};
}

BlockCheck check_attention(Rng& rng, const GradCheckOptions& opt) {
  ParamStore store;
  AttentionConfig cfg{8, 2, 12, 2, 8};
  const auto x = random_input(store, "x", 5, 8, rng);
  SelfAttentionEncoder enc(store, "attn", cfg, rng);
  const std::vector<int> segments = {0, 0, 0, 1, 1};
  const Mat r_states = random_projection(5, 8, rng);
  const Mat r_summary = random_projection(1, 8, rng);
  auto loss = [=](const ParamStore& s, Gradients* g) {
    SelfAttentionEncoder::Cache cache;
    auto out = enc.forward(s, s.value(x), segments, g ? &cache : nullptr);
    const double l = project(out.states, r_states) + project(out.summary, r_summary);
    if (g) (*g)[x] += enc.backward(s, cache, r_states, r_summary.row(0), *g);
    return l;
  };
  return {"self_attention", grad_check(store, loss, opt)};
}

BlockCheck check_cnn(Rng& rng, const GradCheckOptions& opt, Eigen::Index len, const char* name) {
  ParamStore store;
  const auto x = random_input(store, "x", len, 5, rng);
  CnnTextEncoder enc(store, "cnn", 5, {2, 3}, 4, rng);
  const Mat r = random_projection(1, enc.out_dim(), rng);
  auto loss = [=](const ParamStore& s, Gradients* g) {
    CnnTextEncoder::Cache cache;
    const Vec out = enc.forward(s, s.value(x), g ? &cache : nullptr);
    if (g) (*g)[x] += enc.backward(s, cache, r.row(0), *g);
    return project(out, r);
  };
  return {name, grad_check(store, loss, opt)};
}

BlockCheck check_hgfu(Rng& rng, const GradCheckOptions& opt) {
  ParamStore store;
  const Eigen::Index steps = 3, E = 5, K = 6, H = 4, V = 7;
  const auto s0 = random_input(store, "s0", 1, H, rng);
  const auto emb = random_input(store, "emb", steps, E, rng);
  const auto kc = random_input(store, "k_c", 1, K, rng);
  HgfuCell cell(store, "hgfu", E, K, H, V, rng);
  for (std::size_t i = 3; i < store.size(); ++i) store.value(ParamId{i}) *= 6.0;
  const std::vector<TokenId> gold = {2, 5, 1};
  const Mat r_final = random_projection(1, H, rng);
  auto loss = [=](const ParamStore& s, Gradients* g) {
    std::vector<HgfuCell::StepCache> caches(steps);
    Mat logits(steps, V);
    Vec state = s.value(s0).row(0);
    for (Eigen::Index t = 0; t < steps; ++t) {
      auto out = cell.step(s, state, s.value(emb).row(t), s.value(kc).row(0),
                           &caches[static_cast<std::size_t>(t)]);
      logits.row(t) = out.logits;
      state = out.state;
    }
    const auto nll = nll_loss(logits, gold);
    const double l = nll.loss + project(state, r_final);
    if (g) {
      Vec d_state = r_final.row(0);
      Vec ds_prev, de, dk;
      for (Eigen::Index t = steps - 1; t >= 0; --t) {
        cell.backward_step(s, caches[static_cast<std::size_t>(t)], d_state, nll.d_logits.row(t), *g,
                           ds_prev, de, dk);
        (*g)[emb].row(t) += de;
        (*g)[kc].row(0) += dk;
        d_state = ds_prev;
      }
      (*g)[s0].row(0) += d_state;
    }
    return l;
  };
  return {"hgfu_step", grad_check(store, loss, opt)};
}

BlockCheck check_nll(Rng& rng, const GradCheckOptions& opt) {
  ParamStore store;
  const auto z = random_input(store, "logits", 3, 6, rng);
  const std::vector<TokenId> gold = {0, 4, 4};
  auto loss = [=](const ParamStore& s, Gradients* g) {
    auto r = nll_loss(s.value(z), gold);
    if (g) (*g)[z] += r.d_logits;
    return r.loss;
  };
  return {"nll_loss", grad_check(store, loss, opt)};
}

BlockCheck check_kl(Rng& rng, const GradCheckOptions& opt) {
  ParamStore store;
  const auto zp = random_input(store, "posterior_logits", 1, 5, rng);
  const auto zq = random_input(store, "prior_logits", 1, 5, rng);
  auto loss = [=](const ParamStore& s, Gradients* g) {
    const Vec p = softmax(s.value(zp).row(0));
    const Vec q = softmax(s.value(zq).row(0));
    auto r = kl_div_loss(p, q);
    if (g) {
      (*g)[zp].row(0) += softmax_backward(p, r.d_posterior);
      (*g)[zq].row(0) += softmax_backward(q, r.d_prior);
    }
    return r.loss;
  };
  return {"kl_loss", grad_check(store, loss, opt)};
}

BlockCheck check_bow(Rng& rng, const GradCheckOptions& opt) {
  ParamStore store;
  const auto kc = random_input(store, "k_c", 1, 4, rng);
  Mlp proj(store, "bow", 4, 6, 9, rng);
  const std::vector<TokenId> gold = {3, 3, 7, 0};
  auto loss = [=](const ParamStore& s, Gradients* g) {
    Mlp::Cache cache;
    const Vec w = proj.forward(s, Vec(s.value(kc).row(0)), &cache);
    auto r = bow_loss(w, gold);
    if (g) (*g)[kc].row(0) += proj.backward(s, cache, r.d_logits, *g);
    return r.loss;
  };
  return {"bow_loss", grad_check(store, loss, opt)};
}

BlockCheck check_selector(Rng& rng, const GradCheckOptions& opt) {
  ParamStore store;
  const Eigen::Index D = 6, N = 4;
  const auto x = random_input(store, "query_in", 1, 5, rng);
  const auto k = random_input(store, "knowledge", N, D, rng);
  Mlp q_mlp(store, "selector", 5, 7, D, rng);
  const Mat r = random_projection(1, D, rng);
  auto loss = [=](const ParamStore& s, Gradients* g) {
    Mlp::Cache cache;
    const Vec q = q_mlp.forward(s, Vec(s.value(x).row(0)), &cache);
    const Mat& kn = s.value(k);
    const Vec w = softmax(q * kn.transpose());
    const Vec kc = w * kn;
    if (g) {
      const Vec d_kc = r.row(0);
      const Vec d_w = d_kc * kn.transpose();
      const Vec d_score = softmax_backward(w, d_w);
      (*g)[k] += w.transpose() * d_kc + d_score.transpose() * q;
      const Vec d_q = d_score * kn;
      (*g)[x].row(0) += q_mlp.backward(s, cache, d_q, *g);
    }
    return project(kc, r);
  };
  return {"selector_mlp", grad_check(store, loss, opt)};
}

BlockCheck check_matcher(Rng& rng, const GradCheckOptions& opt) {
  ParamStore store;
  const auto x = random_input(store, "features", 1, 8, rng);
  Mlp m(store, "matcher", 8, 6, 2, rng);
  auto loss = [=](const ParamStore& s, Gradients* g) {
    Mlp::Cache cache;
    const Vec z = m.forward(s, Vec(s.value(x).row(0)), &cache);
    auto r = cross_entropy(z, 1);
    if (g) (*g)[x].row(0) += m.backward(s, cache, r.d_logits, *g);
    return r.loss;
  };
  return {"matcher_mlp", grad_check(store, loss, opt)};
}

BlockCheck check_layer_norm_embedding(Rng& rng, const GradCheckOptions& opt) {
  ParamStore store;
  Embedding emb(store, "emb", 6, 5, rng, Init::uniform(1.0));
  LayerNorm ln(store, "ln", 5, rng);
  store.value(store.find("ln.gamma")) = random_projection(1, 5, rng);
  store.value(store.find("ln.beta")) = random_projection(1, 5, rng);
  const std::vector<TokenId> ids = {1, 4, 4, 0};
  const Mat r = random_projection(4, 5, rng);
  auto loss = [=](const ParamStore& s, Gradients* g) {
    LayerNorm::Cache cache;
    const Mat e = emb.forward(s, ids);
    const Mat y = ln.forward(s, e, &cache);
    if (g) emb.backward(ids, ln.backward(s, cache, r, *g), *g);
    return project(y, r);
  };
  return {"layer_norm_embedding", grad_check(store, loss, opt)};
}

}  // namespace

std::vector<BlockCheck> run_block_gradient_checks(std::uint64_t seed,
                                                  const GradCheckOptions& options) {
  Rng rng(mix_seed(seed, 0x9c));
  std::vector<BlockCheck> out;
  out.push_back(check_bigru(rng, options));
  out.push_back(check_attention(rng, options));
  out.push_back(check_cnn(rng, options, 6, "cnn"));
  out.push_back(check_cnn(rng, options, 2, "cnn_padded"));
  out.push_back(check_hgfu(rng, options));
  out.push_back(check_nll(rng, options));
  out.push_back(check_kl(rng, options));
  out.push_back(check_bow(rng, options));
  out.push_back(check_selector(rng, options));
  out.push_back(check_matcher(rng, options));
  out.push_back(check_layer_norm_embedding(rng, options));
  return out;
}

}  // namespace mgcg::nn
