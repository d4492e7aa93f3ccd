#pragma once

#include <string>
#include <vector>

#include "mgcg/nn/params.hpp"

namespace mgcg::nn {

/// Multi-width 1-D convolution, tanh, max-over-time pooling, concatenation.
/// Inputs shorter than the widest kernel are zero-padded at the end.
class CnnTextEncoder {
 public:
  struct WidthCache {
    Mat windows;
    Mat act;
    std::vector<Eigen::Index> argmax;
  };
  struct Cache {
    Eigen::Index rows = 0;  // unpadded input length
    std::vector<WidthCache> widths;
  };

  CnnTextEncoder() = default;
  CnnTextEncoder(ParamStore& store, const std::string& name, Eigen::Index in,
                 std::vector<Eigen::Index> widths, Eigen::Index filters, Rng& rng);

  Vec forward(const ParamStore& store, const Mat& x, Cache* cache = nullptr) const;
  Mat backward(const ParamStore& store, const Cache& cache, const Vec& d_out,
               Gradients& grads) const;

  Eigen::Index out_dim() const { return filters_ * static_cast<Eigen::Index>(widths_.size()); }
  Eigen::Index max_width() const;

 private:
  Eigen::Index in_ = 0;
  std::vector<Eigen::Index> widths_;
  Eigen::Index filters_ = 0;
  std::vector<ParamId> kernels_;
  std::vector<ParamId> biases_;
};

}  // namespace mgcg::nn
