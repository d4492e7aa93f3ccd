#pragma once

#include <optional>
#include <string>
#include <vector>

#include "mgcg/nn/gru.hpp"
#include "mgcg/nn/layers.hpp"

namespace mgcg::nn {

struct AttentionConfig {
  Eigen::Index dim = 32;
  Eigen::Index heads = 2;
  Eigen::Index ffn = 64;
  Eigen::Index layers = 1;
  Eigen::Index max_len = 128;
};

/// [CLS] a [SEP] (b [SEP]) with segment 0 for the first part and 1 for b.
struct PairInput {
  std::vector<TokenId> ids;
  std::vector<int> segments;
};

/// Throws OverflowError if the packed length exceeds max_len.
PairInput pack_pair(const std::vector<TokenId>& a, const std::optional<std::vector<TokenId>>& b,
                    std::size_t max_len);

/// Post-norm transformer encoder over externally embedded tokens: adds
/// position and segment embeddings, normalizes, then runs the stacked
/// (self-attention, feed-forward) layers. Summary is the state at position 0.
class SelfAttentionEncoder {
 public:
  struct LayerCache {
    Mat input;
    Mat q, k, v;
    std::vector<Mat> attn;  // per head, T x T
    Mat context;
    LayerNorm::Cache ln1;
    Mat u;
    Mat pre;
    Mat act;
    LayerNorm::Cache ln2;
  };
  struct Cache {
    std::vector<int> segments;
    LayerNorm::Cache ln_emb;
    std::vector<LayerCache> layers;
  };

  SelfAttentionEncoder() = default;
  SelfAttentionEncoder(ParamStore& store, const std::string& name, const AttentionConfig& cfg,
                       Rng& rng);

  EncoderOutput forward(const ParamStore& store, const Mat& token_embeddings,
                        const std::vector<int>& segments, Cache* cache = nullptr) const;
  /// Returns the gradient w.r.t. token_embeddings.
  Mat backward(const ParamStore& store, const Cache& cache, const Mat& d_states,
               const Vec& d_summary, Gradients& grads) const;

  const AttentionConfig& config() const { return cfg_; }
  ParamId position_table() const { return pos_; }

 private:
  struct Layer {
    Linear wq, wk, wv, wo;
    LayerNorm ln1;
    Linear ff1, ff2;
    LayerNorm ln2;
  };

  AttentionConfig cfg_;
  ParamId pos_;
  ParamId seg_;
  LayerNorm ln_emb_;
  std::vector<Layer> layers_;
};

}  // namespace mgcg::nn
