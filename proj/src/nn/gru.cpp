#include "mgcg/nn/gru.hpp"

#include <cmath>

#include "mgcg/errors.hpp"

namespace mgcg::nn {

GruCell::GruCell(ParamStore& store, const std::string& name, Eigen::Index in, Eigen::Index hidden,
                 Rng& rng, std::optional<Init> init)
    : in_(in), hidden_(hidden) {
  const Init i = init.value_or(Init::uniform(1.0 / std::sqrt(static_cast<double>(hidden))));
  w_ih_ = store.add(name + ".w_ih", 3 * hidden, in, i, rng);
  w_hh_ = store.add(name + ".w_hh", 3 * hidden, hidden, i, rng);
  b_ih_ = store.add(name + ".b_ih", 1, 3 * hidden, i, rng);
  b_hh_ = store.add(name + ".b_hh", 1, 3 * hidden, i, rng);
}

Mat GruCell::project_input(const ParamStore& store, const Mat& x) const {
  if (x.cols() != in_) throw ShapeError("gru: input width mismatch");
  Mat gx = x * store.value(w_ih_).transpose();
  gx.rowwise() += store.value(b_ih_).row(0);
  return gx;
}

Vec GruCell::step_projected(const ParamStore& store, const Vec& gx, const Vec& h,
                            StepCache* cache) const {
  const Eigen::Index H = hidden_;
  const Vec gh = h * store.value(w_hh_).transpose() + store.value(b_hh_).row(0);
  const Vec r = sigmoid(Vec(gx.segment(0, H) + gh.segment(0, H)));
  const Vec z = sigmoid(Vec(gx.segment(H, H) + gh.segment(H, H)));
  const Vec hn = gh.segment(2 * H, H);
  const Vec n = (gx.segment(2 * H, H).array() + r.array() * hn.array()).tanh().matrix();
  Vec out = ((1.0 - z.array()) * n.array() + z.array() * h.array()).matrix();
  if (cache) *cache = {h, r, z, n, hn};
  return out;
}

Vec GruCell::step(const ParamStore& store, const Vec& x, const Vec& h, StepCache* cache) const {
  const Vec gx = x * store.value(w_ih_).transpose() + store.value(b_ih_).row(0);
  return step_projected(store, gx, h, cache);
}

void GruCell::backward_step(const ParamStore& store, const StepCache& c, const Vec& d_h,
                            Gradients& grads, Vec& d_gx, Vec& d_h_prev) const {
  const Eigen::Index H = hidden_;
  const auto dn = (d_h.array() * (1.0 - c.z.array())).eval();
  const auto dz = (d_h.array() * (c.h_prev.array() - c.n.array())).eval();
  const auto dan = (dn * (1.0 - c.n.array().square())).eval();
  const auto dr = (dan * c.hn.array()).eval();
  const auto dar = (dr * c.r.array() * (1.0 - c.r.array())).eval();
  const auto daz = (dz * c.z.array() * (1.0 - c.z.array())).eval();
  d_gx.resize(3 * H);
  d_gx << dar.matrix(), daz.matrix(), dan.matrix();
  Vec d_gh(3 * H);
  d_gh << dar.matrix(), daz.matrix(), (dan * c.r.array()).matrix();
  grads[w_hh_].noalias() += d_gh.transpose() * c.h_prev;
  grads[b_hh_].row(0) += d_gh;
  d_h_prev = (d_h.array() * c.z.array()).matrix() + d_gh * store.value(w_hh_);
}

Mat GruCell::backward_input(const ParamStore& store, const Mat& x, const Mat& d_gx,
                            Gradients& grads) const {
  grads[w_ih_].noalias() += d_gx.transpose() * x;
  grads[b_ih_].row(0) += d_gx.colwise().sum();
  return d_gx * store.value(w_ih_);
}

Mat Gru::forward(const ParamStore& store, const Mat& x, const Vec& h0, Cache* cache) const {
  const Mat gx = cell_.project_input(store, x);
  Mat states(x.rows(), cell_.hidden());
  if (cache) {
    cache->x = x;
    cache->steps.assign(static_cast<std::size_t>(x.rows()), {});
  }
  Vec h = h0;
  for (Eigen::Index t = 0; t < x.rows(); ++t) {
    h = cell_.step_projected(store, gx.row(t), h,
                             cache ? &cache->steps[static_cast<std::size_t>(t)] : nullptr);
    states.row(t) = h;
  }
  check_finite(states, "gru forward");
  return states;
}

Mat Gru::backward(const ParamStore& store, const Cache& cache, const Mat& d_states,
                  Gradients& grads, Vec* d_h0) const {
  const Eigen::Index T = cache.x.rows();
  Mat d_gx(T, 3 * cell_.hidden());
  Vec dh = Vec::Zero(cell_.hidden());
  Vec dgx_t, dh_prev;
  for (Eigen::Index t = T - 1; t >= 0; --t) {
    if (d_states.rows() > 0) dh += d_states.row(t);
    cell_.backward_step(store, cache.steps[static_cast<std::size_t>(t)], dh, grads, dgx_t, dh_prev);
    d_gx.row(t) = dgx_t;
    dh = dh_prev;
  }
  if (d_h0) *d_h0 = dh;
  return cell_.backward_input(store, cache.x, d_gx, grads);
}

BiGru::BiGru(ParamStore& store, const std::string& name, Eigen::Index in, Eigen::Index hidden,
             Rng& rng)
    : fwd_(store, name + ".fwd", in, hidden, rng), bwd_(store, name + ".bwd", in, hidden, rng) {}

EncoderOutput BiGru::forward(const ParamStore& store, const Mat& x, Cache* cache) const {
  if (x.rows() == 0) throw ShapeError("bigru: empty sequence");
  const Eigen::Index T = x.rows();
  const Eigen::Index H = hidden();
  const Mat reversed = x.colwise().reverse();
  const Vec h0 = Vec::Zero(H);
  const Mat f = fwd_.forward(store, x, h0, cache ? &cache->fwd : nullptr);
  const Mat b = bwd_.forward(store, reversed, h0, cache ? &cache->bwd : nullptr);
  EncoderOutput out;
  out.states.resize(T, 2 * H);
  out.states.leftCols(H) = f;
  out.states.rightCols(H) = b.colwise().reverse();
  out.summary.resize(2 * H);
  out.summary << f.row(T - 1), b.row(T - 1);
  return out;
}

Mat BiGru::backward(const ParamStore& store, const Cache& cache, const Mat& d_states,
                    const Vec& d_summary, Gradients& grads) const {
  const Eigen::Index T = cache.fwd.x.rows();
  const Eigen::Index H = hidden();
  Mat df = Mat::Zero(T, H);
  Mat db = Mat::Zero(T, H);  // in the reversed time order of the backward pass
  if (d_states.rows() > 0) {
    df = d_states.leftCols(H);
    db = d_states.rightCols(H).colwise().reverse();
  }
  if (d_summary.size() > 0) {
    df.row(T - 1) += d_summary.segment(0, H);
    db.row(T - 1) += d_summary.segment(H, H);
  }
  Mat dx = fwd_.backward(store, cache.fwd, df, grads);
  dx += bwd_.backward(store, cache.bwd, db, grads).colwise().reverse();
  return dx;
}

}  // namespace mgcg::nn
