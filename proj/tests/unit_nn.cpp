#include <cmath>

#include "doctest.h"
#include "mgcg/errors.hpp"
#include "mgcg/nn/adam.hpp"
#include "mgcg/nn/attention.hpp"
#include "mgcg/nn/block_checks.hpp"
#include "mgcg/nn/cnn.hpp"
#include "mgcg/nn/grad_check.hpp"
#include "mgcg/nn/gru.hpp"
#include "mgcg/nn/hgfu.hpp"
#include "mgcg/nn/layers.hpp"
#include "mgcg/nn/loss.hpp"
#include "mgcg/rng.hpp"
#include "mgcg/tokenizer.hpp"

using namespace mgcg;
using namespace mgcg::nn;

namespace {

Vec row(std::initializer_list<double> xs) {
  Vec v(static_cast<Eigen::Index>(xs.size()));
  Eigen::Index i = 0;
  for (double x : xs) v(i++) = x;
  return v;
}

}  // namespace

TEST_SUITE("nn") {
  TEST_CASE("every block passes the central-difference check") {
    set_finite_checks(true);
    for (const auto& b : run_block_gradient_checks(3)) {
      INFO(b.block, " worst ", b.report.worst_param, " rel ", b.report.max_rel_error);
      CHECK(b.report.passed);
      CHECK(b.report.checked > 0);
      CHECK(b.report.max_rel_error < 1e-4);
    }
  }

  TEST_CASE("a corrupted gradient fails the check") {
    ParamStore store;
    Rng rng(1);
    const auto w = store.add("w", 1, 3, Init::uniform(1.0), rng);
    auto loss = [=](const ParamStore& s, Gradients* g) {
      const Vec& v = s.value(w).row(0);
      if (g) (*g)[w].row(0) += 2.0 * v * 1.01;  // one percent off
      return v.squaredNorm();
    };
    const auto report = grad_check(store, loss);
    CHECK_FALSE(report.passed);
    CHECK(report.max_rel_error == doctest::Approx(0.01 / 1.01).epsilon(1e-3));
    CHECK(report.worst_param == "w");
    auto exact = [=](const ParamStore& s, Gradients* g) {
      const Vec& v = s.value(w).row(0);
      if (g) (*g)[w].row(0) += 2.0 * v;
      return v.squaredNorm();
    };
    CHECK(grad_check(store, exact).passed);
  }

  TEST_CASE("softmax") {
    const Vec p = softmax(row({1.0, 2.0, 3.0}));
    CHECK(p.sum() == doctest::Approx(1.0));
    CHECK(p(2) == doctest::Approx(std::exp(3.0) / (std::exp(1.0) + std::exp(2.0) + std::exp(3.0))));
    const Vec shifted = softmax(row({1001.0, 1002.0, 1003.0}));
    CHECK((shifted - p).cwiseAbs().maxCoeff() < 1e-12);
    CHECK(log_softmax(row({0.0, 0.0})).isApprox(row({-std::log(2.0), -std::log(2.0)})));
  }

  TEST_CASE("loss analytics") {
    const Eigen::Index V = 11;
    const Mat zeros = Mat::Zero(3, V);
    CHECK(nll_loss(zeros, {0, 4, 10}).loss == doctest::Approx(std::log(11.0)));
    CHECK(bow_loss(Vec::Zero(V), {1, 2, 2}).loss == doctest::Approx(std::log(11.0)));
    CHECK(cross_entropy(Vec::Zero(2), 0).loss == doctest::Approx(std::log(2.0)));
    CHECK(binary_cross_entropy(0.0, 1.0).loss == doctest::Approx(std::log(2.0)));
    CHECK(binary_cross_entropy(0.0, 1.0).d_logit == doctest::Approx(-0.5));
    // (1/2) (1 ln(1/0.5) + 0) = ln(2)/2
    const auto kl = kl_div_loss(row({1.0, 0.0}), row({0.5, 0.5}));
    CHECK(kl.loss == doctest::Approx(0.34657).epsilon(1e-4));
    CHECK(kl.d_posterior(1) == 0.0);
    CHECK(kl_div_loss(row({0.3, 0.7}), row({0.3, 0.7})).loss == doctest::Approx(0.0));
    CHECK_THROWS_AS(kl_div_loss(row({0.5, 0.5}), row({1.0, 0.0})), DomainError);
    CHECK_THROWS_AS(kl_div_loss(row({0.5, 0.6}), row({0.5, 0.5})), DomainError);
    CHECK_THROWS_AS(nll_loss(zeros, {0, 1}), ShapeError);
    CHECK_THROWS_AS(nll_loss(zeros, {}), ShapeError);
    CHECK_THROWS_AS(bow_loss(Vec::Zero(V), {}), ShapeError);
  }

  TEST_CASE("Adam first step moves each weight by the learning rate") {
    ParamStore store;
    Rng rng(1);
    const auto w = store.add("w", 1, 2, Init::constant(1.0), rng);
    Adam opt(store, {0.1, 0.9, 0.999, 1e-8, 0.0, 0.0});
    Gradients g(store);
    g[w] << 0.5, -3.0;
    opt.step(store, g);
    CHECK(store.value(w)(0, 0) == doctest::Approx(0.9));
    CHECK(store.value(w)(0, 1) == doctest::Approx(1.1));
    CHECK(opt.steps() == 1);
  }

  TEST_CASE("gradient clipping rescales to the global norm") {
    ParamStore store;
    Rng rng(1);
    const auto w = store.add("w", 1, 2, Init::zeros(), rng);
    Adam opt(store, {0.1, 0.9, 0.999, 1e-8, 0.0, 1.0});
    Gradients g(store);
    g[w] << 3.0, 4.0;
    CHECK(opt.step(store, g) == doctest::Approx(5.0));
    CHECK(g[w](0, 0) == doctest::Approx(0.6));
    CHECK(g[w](0, 1) == doctest::Approx(0.8));
  }

  TEST_CASE("warmup then linear decay") {
    CHECK(warmup_linear(1.0, 0, 10, 110) == doctest::Approx(0.1));
    CHECK(warmup_linear(1.0, 9, 10, 110) == doctest::Approx(1.0));
    CHECK(warmup_linear(1.0, 60, 10, 110) == doctest::Approx(0.5));
    CHECK(warmup_linear(1.0, 200, 10, 110) == doctest::Approx(0.0));
  }

  TEST_CASE("dropout masks are inverted") {
    Rng rng(5);
    const Mat m = dropout_mask(50, 40, 0.25, rng);
    for (Eigen::Index i = 0; i < m.size(); ++i) {
      const double v = m.data()[i];
      CHECK((v == 0.0 || v == doctest::Approx(1.0 / 0.75)));
    }
    CHECK(m.mean() == doctest::Approx(1.0).epsilon(0.05));
  }

  TEST_CASE("HGFU gate saturation selects one branch") {
    ParamStore store;
    Rng rng(2);
    HgfuCell cell(store, "h", 3, 4, 5, 6, rng);
    const Vec s_prev = Vec::Random(5) * 0.5;
    const Vec e = Vec::Random(3);
    const Vec k = Vec::Random(4);
    store.value(cell.gate().weight()).setZero();
    store.value(cell.gate().bias()).setConstant(60.0);
    const Vec word = cell.word_cell().step(store, e, s_prev);
    const Vec know = cell.knowledge_cell().step(store, k, s_prev);
    CHECK((cell.step(store, s_prev, e, k).state - word).cwiseAbs().maxCoeff() < 1e-12);
    store.value(cell.gate().bias()).setConstant(-60.0);
    const auto out = cell.step(store, s_prev, e, k);
    CHECK((out.state - know).cwiseAbs().maxCoeff() < 1e-12);
    const Vec logits = cell.output().forward(store, know);
    CHECK((out.logits - logits).cwiseAbs().maxCoeff() < 1e-12);
  }

  TEST_CASE("self-attention over a single token") {
    ParamStore store;
    Rng rng(3);
    SelfAttentionEncoder enc(store, "a", {8, 2, 12, 1, 4}, rng);
    const Mat x = Mat::Random(1, 8);
    SelfAttentionEncoder::Cache cache;
    const auto out = enc.forward(store, x, {0}, &cache);
    CHECK(out.states.rows() == 1);
    CHECK(out.summary.isApprox(out.states.row(0)));
    REQUIRE(cache.layers.size() == 1);
    for (const auto& a : cache.layers[0].attn) CHECK(a(0, 0) == doctest::Approx(1.0));
    CHECK_THROWS_AS(enc.forward(store, Mat::Random(5, 8), {0, 0, 0, 0, 0}), OverflowError);
    CHECK_THROWS_AS(enc.forward(store, Mat(0, 8), {}), ShapeError);
    CHECK_THROWS_AS(enc.forward(store, Mat::Random(2, 8), {0}), ShapeError);
  }

  TEST_CASE("pair packing") {
    const auto p = pack_pair({7, 8}, std::vector<TokenId>{9}, 16);
    CHECK(p.ids == std::vector<TokenId>{Vocab::kCls, 7, 8, Vocab::kSep, 9, Vocab::kSep});
    CHECK(p.segments == std::vector<int>{0, 0, 0, 0, 1, 1});
    CHECK(pack_pair({7}, std::nullopt, 3).ids.size() == 3);
    CHECK_THROWS_AS(pack_pair({7, 8}, std::nullopt, 3), OverflowError);
  }

  TEST_CASE("CNN matches a direct convolution") {
    ParamStore store;
    Rng rng(4);
    CnnTextEncoder enc(store, "c", 3, {1, 2}, 2, rng);
    const Mat x = Mat::Random(4, 3);
    const Vec out = enc.forward(store, x);
    REQUIRE(out.size() == 4);
    const Mat& k2 = store.value(store.find("c.w2.kernel"));
    const Mat& b2 = store.value(store.find("c.w2.b"));
    for (Eigen::Index f = 0; f < 2; ++f) {
      double best = -2.0;
      for (Eigen::Index t = 0; t + 1 < 4; ++t) {
        double z = b2(0, f);
        for (Eigen::Index j = 0; j < 2; ++j) {
          for (Eigen::Index c = 0; c < 3; ++c) z += k2(f, j * 3 + c) * x(t + j, c);
        }
        best = std::max(best, std::tanh(z));
      }
      CHECK(out(2 + f) == doctest::Approx(best));
    }
    // shorter than the widest kernel: padded, not an error
    const Vec short_out = enc.forward(store, Mat::Random(1, 3));
    CHECK(short_out.size() == 4);
    CHECK_THROWS_AS(enc.forward(store, Mat::Random(2, 4)), ShapeError);
  }

  TEST_CASE("BiGRU summary and errors") {
    ParamStore store;
    Rng rng(6);
    BiGru enc(store, "g", 3, 4, rng);
    const Mat x = Mat::Random(5, 3);
    const auto out = enc.forward(store, x);
    CHECK(out.states.rows() == 5);
    CHECK(out.states.cols() == 8);
    CHECK(out.summary.head(4).isApprox(out.states.row(4).head(4)));
    CHECK(out.summary.tail(4).isApprox(out.states.row(0).tail(4)));
    CHECK_THROWS_AS(enc.forward(store, Mat(0, 3)), ShapeError);
  }

  TEST_CASE("parameter snapshots round trip") {
    ParamStore a;
    Rng rng(8);
    a.add("x", 2, 3, Init::normal(1.0), rng);
    a.add("y", 1, 4, Init::uniform(), rng);
    const std::string snap = a.to_json();
    ParamStore b;
    Rng other(9);
    b.add("x", 2, 3, Init::zeros(), other);
    b.add("y", 1, 4, Init::zeros(), other);
    b.load_json(snap);
    CHECK(b.to_json() == snap);
    CHECK(b.value(b.find("x")) == a.value(a.find("x")));
    ParamStore c;
    c.add("x", 3, 2, Init::zeros(), other);
    c.add("y", 1, 4, Init::zeros(), other);
    CHECK_THROWS_AS(c.load_json(snap), ShapeError);
    ParamStore d;
    d.add("x", 2, 3, Init::zeros(), other);
    CHECK_THROWS_AS(d.load_json(snap), ShapeError);
  }

  TEST_CASE("non-finite values are caught when checks are on") {
    set_finite_checks(true);
    Mat m = Mat::Zero(1, 2);
    m(0, 1) = std::nan("");
    CHECK_THROWS_AS(check_finite(m, "test"), DomainError);
  }
}
