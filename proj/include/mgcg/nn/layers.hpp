#pragma once

#include <string>
#include <vector>

#include "mgcg/nn/params.hpp"
#include "mgcg/tokenizer.hpp"

namespace mgcg::nn {

class Embedding {
 public:
  Embedding() = default;
  Embedding(ParamStore& store, const std::string& name, Eigen::Index vocab, Eigen::Index dim,
            Rng& rng, Init init = Init::uniform());

  /// One row per id. Ids outside the table raise ShapeError.
  Mat forward(const ParamStore& store, const std::vector<TokenId>& ids) const;
  void backward(const std::vector<TokenId>& ids, const Mat& d_out, Gradients& grads) const;

  Eigen::Index dim() const { return dim_; }
  Eigen::Index vocab() const { return vocab_; }
  ParamId table() const { return table_; }

 private:
  ParamId table_;
  Eigen::Index vocab_ = 0;
  Eigen::Index dim_ = 0;
};

/// y = x W^T + b with W stored out x in.
class Linear {
 public:
  Linear() = default;
  Linear(ParamStore& store, const std::string& name, Eigen::Index in, Eigen::Index out, Rng& rng,
         Init init = Init::xavier());

  Mat forward(const ParamStore& store, const Mat& x) const;
  Vec forward(const ParamStore& store, const Vec& x) const;
  /// Accumulates dW, db and returns dX.
  Mat backward(const ParamStore& store, const Mat& x, const Mat& d_out, Gradients& grads) const;
  Vec backward(const ParamStore& store, const Vec& x, const Vec& d_out, Gradients& grads) const;

  Eigen::Index in() const { return in_; }
  Eigen::Index out() const { return out_; }
  ParamId weight() const { return w_; }
  ParamId bias() const { return b_; }

 private:
  ParamId w_;
  ParamId b_;
  Eigen::Index in_ = 0;
  Eigen::Index out_ = 0;
};

class LayerNorm {
 public:
  struct Cache {
    Mat xhat;
    Eigen::VectorXd inv_std;
  };

  LayerNorm() = default;
  LayerNorm(ParamStore& store, const std::string& name, Eigen::Index dim, Rng& rng,
            double eps = 1e-5);

  Mat forward(const ParamStore& store, const Mat& x, Cache* cache = nullptr) const;
  Mat backward(const ParamStore& store, const Cache& cache, const Mat& d_out,
               Gradients& grads) const;

 private:
  ParamId gamma_;
  ParamId beta_;
  double eps_ = 1e-5;
};

/// Linear -> tanh -> (dropout) -> Linear.
class Mlp {
 public:
  struct Cache {
    Mat x;
    Mat act;
    Mat dropped;
    Mat mask;
  };

  Mlp() = default;
  Mlp(ParamStore& store, const std::string& name, Eigen::Index in, Eigen::Index hidden,
      Eigen::Index out, Rng& rng, double dropout = 0.0);

  /// Dropout is applied only when `dropout_rng` is given.
  Mat forward(const ParamStore& store, const Mat& x, Cache* cache = nullptr,
              Rng* dropout_rng = nullptr) const;
  Vec forward(const ParamStore& store, const Vec& x, Cache* cache = nullptr,
              Rng* dropout_rng = nullptr) const;
  Mat backward(const ParamStore& store, const Cache& cache, const Mat& d_out,
               Gradients& grads) const;
  Vec backward(const ParamStore& store, const Cache& cache, const Vec& d_out,
               Gradients& grads) const;

  Eigen::Index out() const { return l2_.out(); }
  const Linear& first() const { return l1_; }
  const Linear& second() const { return l2_; }

 private:
  Linear l1_;
  Linear l2_;
  double dropout_ = 0.0;
};

}  // namespace mgcg::nn
