#pragma once

#include <vector>

#include "mgcg/nn/tensor.hpp"
#include "mgcg/tokenizer.hpp"

namespace mgcg::nn {

struct SeqLoss {
  double loss = 0.0;
  Mat d_logits;
};

struct VecLoss {
  double loss = 0.0;
  Vec d_logits;
};

struct KlLoss {
  double loss = 0.0;
  Vec d_posterior;
  Vec d_prior;
};

/// Mean over positions of -log softmax(logits_t)[gold_t]. ShapeError when
/// the number of rows differs from gold.size() or gold is empty.
SeqLoss nll_loss(const Mat& logits, const std::vector<TokenId>& gold);

/// (1/N) sum_i p_i log(p_i / q_i) over probability vectors (posterior p,
/// prior q). Inputs must each sum to 1 within 1e-6. DomainError if some
/// q_i = 0 where p_i > 0. Entries with p_i = 0 contribute nothing and get a
/// zero posterior gradient.
KlLoss kl_div_loss(const Vec& posterior, const Vec& prior);

/// -(1/m) sum_t log softmax(w)[y_t] for m = gold.size() >= 1.
VecLoss bow_loss(const Vec& w, const std::vector<TokenId>& gold);

/// -log softmax(logits)[label].
VecLoss cross_entropy(const Vec& logits, Eigen::Index label);

/// Logistic loss on one logit z with target y in {0,1}.
struct ScalarLoss {
  double loss = 0.0;
  double d_logit = 0.0;
};
ScalarLoss binary_cross_entropy(double logit, double target);

/// Chain rule through p = softmax(z): returns dz given dp.
Vec softmax_backward(const Vec& p, const Vec& d_p);

}  // namespace mgcg::nn
