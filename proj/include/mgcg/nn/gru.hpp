#pragma once

#include <optional>
#include <string>
#include <vector>

#include "mgcg/nn/params.hpp"

namespace mgcg::nn {

/// Gated recurrent unit with gates ordered (reset, update, candidate):
///   r = s(Wx_r + Uh_r), z = s(Wx_z + Uh_z), n = tanh(Wx_n + r * Uh_n)
///   h' = (1 - z) * n + z * h
class GruCell {
 public:
  struct StepCache {
    Vec h_prev;
    Vec r;
    Vec z;
    Vec n;
    Vec hn;  // U h + b for the candidate gate, before the reset product
  };

  GruCell() = default;
  /// Default init is uniform in +-1/sqrt(hidden).
  GruCell(ParamStore& store, const std::string& name, Eigen::Index in, Eigen::Index hidden,
          Rng& rng, std::optional<Init> init = std::nullopt);

  /// Input projection W x + b for every row of `x`.
  Mat project_input(const ParamStore& store, const Mat& x) const;
  /// One step given a projected input row.
  Vec step_projected(const ParamStore& store, const Vec& gx, const Vec& h,
                     StepCache* cache = nullptr) const;
  Vec step(const ParamStore& store, const Vec& x, const Vec& h, StepCache* cache = nullptr) const;

  /// Recurrent-side backward. Accumulates dU/db_h and returns d(gx) through
  /// `d_gx` and d(h_prev) through `d_h_prev`.
  void backward_step(const ParamStore& store, const StepCache& cache, const Vec& d_h,
                     Gradients& grads, Vec& d_gx, Vec& d_h_prev) const;
  /// Input-side backward for a batch of projected-input gradients.
  Mat backward_input(const ParamStore& store, const Mat& x, const Mat& d_gx,
                     Gradients& grads) const;

  Eigen::Index hidden() const { return hidden_; }
  Eigen::Index in() const { return in_; }
  ParamId w_ih() const { return w_ih_; }
  ParamId w_hh() const { return w_hh_; }
  ParamId b_ih() const { return b_ih_; }
  ParamId b_hh() const { return b_hh_; }

 private:
  ParamId w_ih_, w_hh_, b_ih_, b_hh_;
  Eigen::Index in_ = 0;
  Eigen::Index hidden_ = 0;
};

class Gru {
 public:
  struct Cache {
    Mat x;
    std::vector<GruCell::StepCache> steps;
  };

  Gru() = default;
  Gru(ParamStore& store, const std::string& name, Eigen::Index in, Eigen::Index hidden, Rng& rng)
      : cell_(store, name, in, hidden, rng) {}

  /// States for every row of x (one row per step), starting from h0.
  Mat forward(const ParamStore& store, const Mat& x, const Vec& h0, Cache* cache = nullptr) const;
  /// d_states may have zero rows (no per-step gradient). Returns dX.
  Mat backward(const ParamStore& store, const Cache& cache, const Mat& d_states,
               Gradients& grads, Vec* d_h0 = nullptr) const;

  const GruCell& cell() const { return cell_; }

 private:
  GruCell cell_;
};

struct EncoderOutput {
  Mat states;   // one row per position
  Vec summary;  // block-specific pooled vector
};

/// Bidirectional GRU. Summary = [last forward state; first-position backward state].
class BiGru {
 public:
  struct Cache {
    Gru::Cache fwd;
    Gru::Cache bwd;
  };

  BiGru() = default;
  BiGru(ParamStore& store, const std::string& name, Eigen::Index in, Eigen::Index hidden, Rng& rng);

  /// Throws ShapeError on an empty sequence.
  EncoderOutput forward(const ParamStore& store, const Mat& x, Cache* cache = nullptr) const;
  /// Either gradient may be empty. Returns dX.
  Mat backward(const ParamStore& store, const Cache& cache, const Mat& d_states,
               const Vec& d_summary, Gradients& grads) const;

  Eigen::Index hidden() const { return fwd_.cell().hidden(); }
  Eigen::Index out_dim() const { return 2 * hidden(); }

 private:
  Gru fwd_;
  Gru bwd_;
};

}  // namespace mgcg::nn
