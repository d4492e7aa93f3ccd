#include "mgcg/nn/grad_check.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace mgcg::nn {

GradCheckReport grad_check(ParamStore& store, const LossFn& loss, const GradCheckOptions& opt) {
  Gradients analytic(store);
  loss(store, &analytic);
  Rng rng(opt.seed);
  GradCheckReport report;
  for (std::size_t p = 0; p < store.size(); ++p) {
    const ParamId id{p};
    Mat& w = store.value(id);
    std::vector<Eigen::Index> entries(static_cast<std::size_t>(w.size()));
    std::iota(entries.begin(), entries.end(), 0);
    if (opt.max_entries_per_param > 0 && entries.size() > opt.max_entries_per_param) {
      rng.shuffle(entries);
      entries.resize(opt.max_entries_per_param);
    }
    for (auto e : entries) {
      double& x = w.data()[e];
      const double saved = x;
      x = saved + opt.eps;
      const double up = loss(store, nullptr);
      x = saved - opt.eps;
      const double down = loss(store, nullptr);
      x = saved;
      const double numeric = (up - down) / (2.0 * opt.eps);
      const double a = analytic[id].data()[e];
      const double denom = std::max({std::abs(a), std::abs(numeric), opt.abs_floor});
      const double rel = std::abs(a - numeric) / denom;
      ++report.checked;
      if (rel > report.max_rel_error) {
        report.max_rel_error = rel;
        report.worst_param = store.name(id);
      }
    }
  }
  report.passed = report.max_rel_error < opt.tolerance;
  return report;
}

}  // namespace mgcg::nn
