#pragma once

#include <functional>
#include <string>

#include "mgcg/nn/params.hpp"

namespace mgcg::nn {

/// Scalar loss of the parameters. When `grads` is non-null the function
/// must also accumulate the analytic gradient into it.
using LossFn = std::function<double(const ParamStore&, Gradients*)>;

struct GradCheckOptions {
  double tolerance = 1e-4;
  double eps = 1e-5;
  /// Relative error is |a - n| / max(|a|, |n|, abs_floor).
  double abs_floor = 1e-5;
  /// Entries sampled per parameter; 0 checks every entry.
  std::size_t max_entries_per_param = 0;
  std::uint64_t seed = 1;
};

struct GradCheckReport {
  double max_rel_error = 0.0;
  std::string worst_param;
  std::size_t checked = 0;
  bool passed = true;
};

/// Central-difference check of every parameter of `store`. The store is
/// perturbed in place and restored.
GradCheckReport grad_check(ParamStore& store, const LossFn& loss,
                           const GradCheckOptions& options = {});

}  // namespace mgcg::nn
