#include "mgcg/nn/cnn.hpp"

#include <algorithm>

#include "mgcg/errors.hpp"

namespace mgcg::nn {

CnnTextEncoder::CnnTextEncoder(ParamStore& store, const std::string& name, Eigen::Index in,
                               std::vector<Eigen::Index> widths, Eigen::Index filters, Rng& rng)
    : in_(in), widths_(std::move(widths)), filters_(filters) {
  if (widths_.empty()) throw ConfigError("cnn: at least one kernel width is required");
  for (auto w : widths_) {
    if (w <= 0) throw ConfigError("cnn: kernel widths must be positive");
    const std::string p = name + ".w" + std::to_string(w);
    kernels_.push_back(store.add(p + ".kernel", filters, w * in, Init::xavier(), rng));
    biases_.push_back(store.add(p + ".b", 1, filters, Init::zeros(), rng));
  }
}

Eigen::Index CnnTextEncoder::max_width() const {
  return *std::max_element(widths_.begin(), widths_.end());
}

Vec CnnTextEncoder::forward(const ParamStore& store, const Mat& x, Cache* cache) const {
  if (x.cols() != in_) throw ShapeError("cnn: input width mismatch");
  const Eigen::Index T = std::max(x.rows(), max_width());
  Mat padded = Mat::Zero(T, in_);
  padded.topRows(x.rows()) = x;
  if (cache) {
    cache->rows = x.rows();
    cache->widths.assign(widths_.size(), {});
  }
  Vec out(out_dim());
  for (std::size_t wi = 0; wi < widths_.size(); ++wi) {
    const Eigen::Index w = widths_[wi];
    const Eigen::Index P = T - w + 1;
    Mat windows(P, w * in_);
    for (Eigen::Index t = 0; t < P; ++t) {
      for (Eigen::Index j = 0; j < w; ++j) windows.block(t, j * in_, 1, in_) = padded.row(t + j);
    }
    Mat act = windows * store.value(kernels_[wi]).transpose();
    act.rowwise() += store.value(biases_[wi]).row(0);
    act = act.array().tanh().matrix();
    std::vector<Eigen::Index> argmax(static_cast<std::size_t>(filters_));
    for (Eigen::Index f = 0; f < filters_; ++f) {
      Eigen::Index best = 0;
      // First maximum wins so equal responses pool deterministically.
      for (Eigen::Index t = 1; t < P; ++t) {
        if (act(t, f) > act(best, f)) best = t;
      }
      argmax[static_cast<std::size_t>(f)] = best;
      out(static_cast<Eigen::Index>(wi) * filters_ + f) = act(best, f);
    }
    if (cache) cache->widths[wi] = {std::move(windows), std::move(act), std::move(argmax)};
  }
  check_finite(out, "cnn forward");
  return out;
}

Mat CnnTextEncoder::backward(const ParamStore& store, const Cache& cache, const Vec& d_out,
                             Gradients& grads) const {
  const Eigen::Index T = std::max(cache.rows, max_width());
  Mat dpadded = Mat::Zero(T, in_);
  for (std::size_t wi = 0; wi < widths_.size(); ++wi) {
    const auto& c = cache.widths[wi];
    const Eigen::Index w = widths_[wi];
    Mat dz = Mat::Zero(c.act.rows(), filters_);
    for (Eigen::Index f = 0; f < filters_; ++f) {
      const Eigen::Index t = c.argmax[static_cast<std::size_t>(f)];
      const double a = c.act(t, f);
      dz(t, f) = d_out(static_cast<Eigen::Index>(wi) * filters_ + f) * (1.0 - a * a);
    }
    grads[kernels_[wi]].noalias() += dz.transpose() * c.windows;
    grads[biases_[wi]].row(0) += dz.colwise().sum();
    const Mat dwin = dz * store.value(kernels_[wi]);
    for (Eigen::Index t = 0; t < dwin.rows(); ++t) {
      for (Eigen::Index j = 0; j < w; ++j) dpadded.row(t + j) += dwin.block(t, j * in_, 1, in_);
    }
  }
  return dpadded.topRows(cache.rows);
}

}  // namespace mgcg::nn
