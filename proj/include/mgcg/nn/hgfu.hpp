#pragma once

#include <string>

#include "mgcg/nn/gru.hpp"
#include "mgcg/nn/layers.hpp"

namespace mgcg::nn {

/// Knowledge-gated fusion decoder cell. A word GRU (driven by the previous
/// token embedding) and a knowledge GRU (driven by k_c) both read the fused
/// previous state; a sigmoid gate mixes them:
///   r = s(W_r [s_w; s_k] + b_r),  s = r * s_w + (1 - r) * s_k
/// and the vocabulary logits are W_o s + b_o.
class HgfuCell {
 public:
  struct StepCache {
    GruCell::StepCache word;
    GruCell::StepCache know;
    Vec e_prev;
    Vec k_c;
    Vec s_w;
    Vec s_k;
    Vec gate_in;
    Vec r;
    Vec state;
  };
  struct Step {
    Vec state;
    Vec logits;
  };

  HgfuCell() = default;
  HgfuCell(ParamStore& store, const std::string& name, Eigen::Index emb_dim, Eigen::Index k_dim,
           Eigen::Index hidden, Eigen::Index vocab, Rng& rng);

  Step step(const ParamStore& store, const Vec& s_prev, const Vec& e_prev, const Vec& k_c,
            StepCache* cache = nullptr) const;
  /// Gradients flow in through the next state and this step's logits.
  void backward_step(const ParamStore& store, const StepCache& cache, const Vec& d_state,
                     const Vec& d_logits, Gradients& grads, Vec& d_s_prev, Vec& d_e_prev,
                     Vec& d_k_c) const;

  Eigen::Index hidden() const { return word_.hidden(); }
  const GruCell& word_cell() const { return word_; }
  const GruCell& knowledge_cell() const { return know_; }
  const Linear& gate() const { return gate_; }
  const Linear& output() const { return out_; }

 private:
  GruCell word_;
  GruCell know_;
  Linear gate_;
  Linear out_;
};

}  // namespace mgcg::nn
