#include "mgcg/nn/hgfu.hpp"

namespace mgcg::nn {

HgfuCell::HgfuCell(ParamStore& store, const std::string& name, Eigen::Index emb_dim,
                   Eigen::Index k_dim, Eigen::Index hidden, Eigen::Index vocab, Rng& rng)
    : word_(store, name + ".word", emb_dim, hidden, rng),
      know_(store, name + ".know", k_dim, hidden, rng),
      gate_(store, name + ".gate", 2 * hidden, hidden, rng),
      out_(store, name + ".out", hidden, vocab, rng) {}

HgfuCell::Step HgfuCell::step(const ParamStore& store, const Vec& s_prev, const Vec& e_prev,
                              const Vec& k_c, StepCache* cache) const {
  StepCache local;
  StepCache& c = cache ? *cache : local;
  c.e_prev = e_prev;
  c.k_c = k_c;
  c.s_w = word_.step(store, e_prev, s_prev, &c.word);
  c.s_k = know_.step(store, k_c, s_prev, &c.know);
  c.gate_in = concat({&c.s_w, &c.s_k});
  c.r = sigmoid(gate_.forward(store, c.gate_in));
  c.state = (c.r.array() * c.s_w.array() + (1.0 - c.r.array()) * c.s_k.array()).matrix();
  Step out{c.state, out_.forward(store, c.state)};
  check_finite(out.logits, "hgfu step");
  return out;
}

void HgfuCell::backward_step(const ParamStore& store, const StepCache& c, const Vec& d_state_in,
                             const Vec& d_logits, Gradients& grads, Vec& d_s_prev, Vec& d_e_prev,
                             Vec& d_k_c) const {
  const Eigen::Index H = hidden();
  Vec d_state = d_state_in;
  if (d_logits.size() > 0) d_state += out_.backward(store, c.state, d_logits, grads);
  Vec d_sw = (d_state.array() * c.r.array()).matrix();
  Vec d_sk = (d_state.array() * (1.0 - c.r.array())).matrix();
  const Vec d_r = (d_state.array() * (c.s_w.array() - c.s_k.array())).matrix();
  const Vec d_gate_pre = (d_r.array() * c.r.array() * (1.0 - c.r.array())).matrix();
  const Vec d_gate_in = gate_.backward(store, c.gate_in, d_gate_pre, grads);
  d_sw += d_gate_in.segment(0, H);
  d_sk += d_gate_in.segment(H, H);

  Vec dgx, dh_w, dh_k;
  word_.backward_step(store, c.word, d_sw, grads, dgx, dh_w);
  d_e_prev = word_.backward_input(store, Mat(c.e_prev), Mat(dgx), grads).row(0);
  know_.backward_step(store, c.know, d_sk, grads, dgx, dh_k);
  d_k_c = know_.backward_input(store, Mat(c.k_c), Mat(dgx), grads).row(0);
  d_s_prev = dh_w + dh_k;
}

}  // namespace mgcg::nn
