#pragma once

#include <Eigen/Dense>
#include <vector>

#include "mgcg/rng.hpp"

namespace mgcg::nn {

using Mat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using Vec = Eigen::RowVectorXd;

/// NaN/Inf guard. On by default in debug builds; tests switch it on.
void set_finite_checks(bool enabled);
bool finite_checks_enabled();
/// Throws DomainError naming `where` when checks are on and `m` has a
/// non-finite entry.
void check_finite(const Mat& m, const char* where);
void check_finite(const Vec& v, const char* where);

Vec softmax(const Vec& logits);
Vec log_softmax(const Vec& logits);
/// Row-wise softmax.
Mat softmax_rows(const Mat& logits);
double sigmoid(double x);
Vec sigmoid(const Vec& x);

/// Inverted-dropout mask: entries are 0 or 1/(1-p).
Mat dropout_mask(Eigen::Index rows, Eigen::Index cols, double p, Rng& rng);

/// Concatenates row vectors left to right.
Vec concat(std::initializer_list<const Vec*> parts);

}  // namespace mgcg::nn
