#pragma once

#include <vector>

#include "mgcg/nn/params.hpp"

namespace mgcg::nn {

struct AdamConfig {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 0.0;  // decoupled
  double grad_clip = 0.0;     // global norm; 0 disables
};

class Adam {
 public:
  Adam() = default;
  Adam(const ParamStore& store, AdamConfig cfg);

  /// Clips `grads` in place (if configured) and updates `store`. `lr` < 0
  /// uses the configured rate. Returns the pre-clip global gradient norm.
  double step(ParamStore& store, Gradients& grads, double lr = -1.0);

  const AdamConfig& config() const { return cfg_; }
  long steps() const { return t_; }

 private:
  AdamConfig cfg_;
  std::vector<Mat> m_;
  std::vector<Mat> v_;
  long t_ = 0;
};

/// Linear warmup over `warmup` steps to `peak`, then linear decay to zero at
/// `total`.
double warmup_linear(double peak, long step, long warmup, long total);

}  // namespace mgcg::nn
