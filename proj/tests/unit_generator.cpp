#include <cmath>
#include <filesystem>

#include "doctest.h"
#include "mgcg/errors.hpp"
#include "mgcg/features.hpp"
#include "mgcg/generator.hpp"
#include "mgcg/nn/grad_check.hpp"
#include "mgcg/nn/loss.hpp"
#include "mgcg/synth.hpp"

using namespace mgcg;

namespace {

struct Fixture {
  SyntheticCorpus corpus;
  std::vector<TrainingExample> examples;
  std::vector<std::string> bank;
  Vocab vocab;

  Fixture() {
    SynthConfig cfg;
    cfg.n_seekers = 4;
    cfg.dialogs_per_seeker = 1;
    cfg.graph_size = 60;
    corpus = generate_synthetic_corpus(cfg);
    examples = extract_training_examples(corpus.records);
    bank = response_bank(examples);
    vocab = build_vocab(corpus.records);
  }
};

const Fixture& fixture() {
  static const Fixture f;
  return f;
}

GeneratorConfig small_config() {
  GeneratorConfig c;
  c.emb_dim = 5;
  c.enc_hidden = 3;
  c.goal_hidden = 2;
  c.dec_hidden = 4;
  c.mlp_hidden = 4;
  c.context_utterances = 2;
  c.max_context_tokens = 16;
  c.max_response_tokens = 8;
  c.max_len = 12;
  c.beam = 3;
  c.dropout = 0.0;
  c.epochs = 1;
  return c;
}

nn::GradCheckReport check_loss(Generator& g, const ResponderInput& in, const std::string& response) {
  nn::GradCheckOptions opt;
  opt.max_entries_per_param = 3;
  return nn::grad_check(
      g.params(),
      [&](const nn::ParamStore& s, nn::Gradients* grads) {
        return g.example_loss(s, in, response, grads).total;
      },
      opt);
}

}  // namespace

TEST_SUITE("generator") {
  TEST_CASE("prior and posterior distributions") {
    const auto& f = fixture();
    Generator g(f.vocab, small_config());
    const auto in = ResponderInput::from_example(f.examples[2]);
    const auto x = g.encode_context(in);
    const auto gl = g.encode_goal(in);
    const auto K = g.encode_knowledge(in.knowledge);
    const auto y = g.encode_response(f.examples[2].response.text);
    const auto prior = g.prior_dist(x, gl, K);
    const auto post = g.posterior_dist(x, y, gl, K, true);
    CHECK(prior.size() == K.rows());
    CHECK(prior.sum() == doctest::Approx(1.0));
    CHECK(post.sum() == doctest::Approx(1.0));
    CHECK((prior.array() > 0).all());
    CHECK_THROWS_AS(g.posterior_dist(x, y, gl, K, false), TrainingOnlyError);
    const auto single = g.encode_knowledge({in.knowledge.front()});
    CHECK(g.prior_dist(x, gl, single)(0) == doctest::Approx(1.0));
    CHECK(g.encode_knowledge({}).rows() == 1);
  }

  TEST_CASE("hand prior and a posterior constructed to equal it") {
    const auto& f = fixture();
    Generator g(f.vocab, small_config());
    auto& ps = g.params();
    const auto cfg = small_config();
    const auto D = static_cast<Eigen::Index>(2 * cfg.enc_hidden);
    const auto G = static_cast<Eigen::Index>(2 * cfg.goal_hidden);
    // a flat first layer makes the query equal to the second layer's bias
    ps.value(ps.find("generator.prior.l1.w")).setZero();
    ps.value(ps.find("generator.prior.l1.b")).setZero();
    auto& q = ps.value(ps.find("generator.prior.l2.b"));
    q.setZero();
    q(0, 0) = std::log(3.0);
    nn::Mat K = nn::Mat::Zero(2, D);
    K(0, 0) = 1.0;
    const nn::Vec x = nn::Vec::Random(D), gl = nn::Vec::Random(G);
    const auto prior = g.prior_dist(x, gl, K);
    CHECK(std::abs(prior(0) - 0.75) < 1e-9);
    CHECK(std::abs(prior(1) - 0.25) < 1e-9);

    // posterior weights copy the prior on the [x; g] slots and ignore y
    Generator h(f.vocab, small_config());
    auto& hs = h.params();
    const auto& pw = hs.value(hs.find("generator.prior.l1.w"));
    auto& qw = hs.value(hs.find("generator.posterior.l1.w"));
    qw.setZero();
    qw.leftCols(D) = pw.leftCols(D);
    qw.rightCols(G) = pw.rightCols(G);
    for (const char* part : {".l1.b", ".l2.w", ".l2.b"}) {
      hs.value(hs.find(std::string("generator.posterior") + part)) =
          hs.value(hs.find(std::string("generator.prior") + part));
    }
    const auto in = ResponderInput::from_example(f.examples[2]);
    const auto Kh = h.encode_knowledge(in.knowledge);
    const auto xh = h.encode_context(in);
    const auto gh = h.encode_goal(in);
    const nn::Vec y = h.encode_response(f.examples[2].response.text);
    const auto pp = h.prior_dist(xh, gh, Kh);
    const auto po = h.posterior_dist(xh, y, gh, Kh, true);
    CHECK((pp - po).cwiseAbs().maxCoeff() < 1e-12);
    CHECK(std::abs(nn::kl_div_loss(po, pp).loss) < 1e-12);
  }

  TEST_CASE("beam of one equals greedy decoding") {
    const auto& f = fixture();
    Generator g(f.vocab, small_config());
    for (std::size_t i = 0; i < 10; ++i) {
      const auto in = ResponderInput::from_example(f.examples[i]);
      const auto a = g.generate(in, 1);
      const auto b = g.greedy(in);
      CHECK(a.ids == b.ids);
      CHECK(a.text == b.text);
      CHECK(a.score == doctest::Approx(b.score));
    }
  }

  TEST_CASE("decoding length limits") {
    const auto& f = fixture();
    Generator g(f.vocab, small_config());
    const auto in = ResponderInput::from_example(f.examples[1]);
    for (std::size_t beam : {1, 3}) {
      const auto r = g.generate(in, beam, 1);
      CHECK(r.logprobs.size() == 1);
      CHECK(r.ids.back() == Vocab::kEos);
      CHECK(r.ids.size() <= 2);
      CHECK(r.forced_eos == (r.ids.size() == 2));
    }
  }

  TEST_CASE("flat output layer gives perplexity equal to the vocabulary size") {
    const auto& f = fixture();
    Generator g(f.vocab, small_config());
    g.params().value(g.decoder().output().weight()).setZero();
    g.params().value(g.decoder().output().bias()).setZero();
    std::vector<TrainingExample> some(f.examples.begin(), f.examples.begin() + 5);
    CHECK(g.perplexity(some) == doctest::Approx(static_cast<double>(f.vocab.size())).epsilon(1e-9));
    std::size_t n = 0;
    const double nll = g.response_nll(ResponderInput::from_example(some[0]), some[0].response.text, n);
    CHECK(n > 0);
    CHECK(nll == doctest::Approx(n * std::log(static_cast<double>(f.vocab.size()))));
  }

  TEST_CASE("candidate scoring by perplexity") {
    const auto& f = fixture();
    Generator g(f.vocab, small_config());
    const auto& ex = f.examples[6];
    const auto pool = build_candidate_pool(ex, f.bank, 9);
    const auto in = ResponderInput::from_example(ex);
    const auto list = g.score_candidates_by_ppl(in, pool);
    REQUIRE(list.candidates.size() == kPoolSize);
    for (std::size_t i = 0; i + 1 < list.candidates.size(); ++i) {
      CHECK(list.candidates[i].prob >= list.candidates[i + 1].prob);
    }
    for (const auto& c : list.candidates) {
      std::size_t n = 0;
      const double nll = g.response_nll(in, c.text, n);
      CHECK(c.prob == doctest::Approx(1.0 / std::exp(nll / static_cast<double>(n))));
    }
  }

  TEST_CASE("analytic gradient of the full loss") {
    const auto& f = fixture();
    const auto in = ResponderInput::from_example(f.examples[3]);
    const auto& resp = f.examples[3].response.text;
    for (bool independent : {false, true}) {
      auto cfg = small_config();
      cfg.detach_posterior = false;
      cfg.independent_alpha = independent;
      Generator g(f.vocab, cfg);
      const auto report = check_loss(g, in, resp);
      INFO("independent_alpha=", independent, " ", report.worst_param, " ", report.max_rel_error);
      CHECK(report.passed);
    }
    auto cfg = small_config();
    cfg.s2s = true;
    Generator s2s(f.vocab, cfg);
    const auto report = check_loss(s2s, in, resp);
    INFO("s2s ", report.worst_param, " ", report.max_rel_error);
    CHECK(report.passed);
  }

  TEST_CASE("detaching the posterior changes only posterior gradients") {
    const auto& f = fixture();
    const auto in = ResponderInput::from_example(f.examples[3]);
    const auto& resp = f.examples[3].response.text;
    auto cfg = small_config();
    Generator detached(f.vocab, cfg);
    cfg.detach_posterior = false;
    Generator exact(f.vocab, cfg);
    nn::Gradients gd(detached.params()), ge(exact.params());
    const auto ld = detached.example_loss(detached.params(), in, resp, &gd);
    const auto le = exact.example_loss(exact.params(), in, resp, &ge);
    CHECK(ld.total == doctest::Approx(le.total));
    CHECK(ld.kl == doctest::Approx(le.kl));
    bool posterior_differs = false;
    for (std::size_t i = 0; i < detached.params().size(); ++i) {
      const nn::ParamId id{i};
      const auto& name = detached.params().name(id);
      const bool same = (gd[id] - ge[id]).cwiseAbs().maxCoeff() < 1e-12;
      if (name.rfind("generator.posterior", 0) == 0) posterior_differs |= !same;
      for (const char* untouched : {"generator.prior", "generator.decoder", "generator.bow",
                                    "generator.init", "generator.alpha"}) {
        if (name.rfind(untouched, 0) == 0) {
          INFO(name);
          CHECK(same);
        }
      }
    }
    CHECK(posterior_differs);
  }

  TEST_CASE("training lowers the loss and models round trip") {
    const auto& f = fixture();
    auto cfg = small_config();
    cfg.epochs = 3;
    Generator g(f.vocab, cfg);
    std::vector<TrainingExample> some(f.examples.begin(), f.examples.begin() + 20);
    const double before = g.perplexity(some);
    const auto log = g.train(some);
    REQUIRE(log.epoch_loss.size() == 3);
    CHECK(log.epoch_loss.back() < log.epoch_loss.front());
    CHECK(g.perplexity(some) < before);
    for (const auto& s : log.steps) CHECK(s.total == doctest::Approx(s.alpha * (s.kl + s.nll) + s.bow));
    const auto dir = (std::filesystem::temp_directory_path() / "mgcg_generator_rt").string();
    g.save(dir);
    const auto back = Generator::load(dir);
    const auto in = ResponderInput::from_example(some[0]);
    CHECK(back.generate(in).ids == g.generate(in).ids);
    CHECK(back.alpha() == doctest::Approx(g.alpha()));
  }
}
