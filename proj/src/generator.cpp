#include "mgcg/generator.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "mgcg/errors.hpp"
#include "mgcg/features.hpp"
#include "mgcg/nn/adam.hpp"
#include "mgcg/nn/loss.hpp"

namespace mgcg {

using nn::Mat;
using nn::Vec;

namespace {

double softplus(double a) { return a > 30 ? a : std::log1p(std::exp(a)); }

Eigen::Index first_argmax(const Vec& v) {
  Eigen::Index best = 0;
  for (Eigen::Index i = 1; i < v.size(); ++i) {
    if (v(i) > v(best)) best = i;
  }
  return best;
}

}  // namespace

nlohmann::json GeneratorConfig::to_json() const {
  return {{"emb_dim", emb_dim},
          {"enc_hidden", enc_hidden},
          {"goal_hidden", goal_hidden},
          {"dec_hidden", dec_hidden},
          {"mlp_hidden", mlp_hidden},
          {"context_utterances", context_utterances},
          {"max_context_tokens", max_context_tokens},
          {"max_response_tokens", max_response_tokens},
          {"max_len", max_len},
          {"beam", beam},
          {"dropout", dropout},
          {"lr", lr},
          {"clip", clip},
          {"batch", batch},
          {"epochs", epochs},
          {"s2s", s2s},
          {"independent_alpha", independent_alpha},
          {"detach_posterior", detach_posterior},
          {"seed", seed}};
}

GeneratorConfig GeneratorConfig::from_json(const nlohmann::json& j) {
  GeneratorConfig c;
  c.emb_dim = j.value("emb_dim", c.emb_dim);
  c.enc_hidden = j.value("enc_hidden", c.enc_hidden);
  c.goal_hidden = j.value("goal_hidden", c.goal_hidden);
  c.dec_hidden = j.value("dec_hidden", c.dec_hidden);
  c.mlp_hidden = j.value("mlp_hidden", c.mlp_hidden);
  c.context_utterances = j.value("context_utterances", c.context_utterances);
  c.max_context_tokens = j.value("max_context_tokens", c.max_context_tokens);
  c.max_response_tokens = j.value("max_response_tokens", c.max_response_tokens);
  c.max_len = j.value("max_len", c.max_len);
  c.beam = j.value("beam", c.beam);
  c.dropout = j.value("dropout", c.dropout);
  c.lr = j.value("lr", c.lr);
  c.clip = j.value("clip", c.clip);
  c.batch = j.value("batch", c.batch);
  c.epochs = j.value("epochs", c.epochs);
  c.s2s = j.value("s2s", c.s2s);
  c.independent_alpha = j.value("independent_alpha", c.independent_alpha);
  c.detach_posterior = j.value("detach_posterior", c.detach_posterior);
  c.seed = j.value("seed", c.seed);
  if (c.emb_dim == 0 || c.enc_hidden == 0 || c.goal_hidden == 0 || c.dec_hidden == 0 ||
      c.mlp_hidden == 0 || c.batch == 0 || c.max_response_tokens == 0) {
    throw ConfigError("generator config: sizes must be positive");
  }
  if (c.max_len == 0 || c.beam == 0) throw ConfigError("generator config: max_len and beam must be >= 1");
  if (c.lr <= 0) throw ConfigError("generator config: lr must be positive");
  if (c.clip < 0) throw ConfigError("generator config: clip must be >= 0");
  if (c.dropout < 0 || c.dropout >= 1) throw ConfigError("generator config: dropout must be in [0,1)");
  return c;
}

GeneratorConfig GeneratorConfig::full_scale() {
  GeneratorConfig c;
  c.emb_dim = 300;
  c.enc_hidden = 400;
  c.goal_hidden = 400;
  c.dec_hidden = 800;
  c.mlp_hidden = 800;
  c.lr = 0.0005;
  c.batch = 16;
  return c;
}

nlohmann::json GenerationResult::to_json() const {
  return {{"text", text},
          {"logprobs", logprobs},
          {"knowledge_weights", std::vector<double>(knowledge_weights.data(),
                                                    knowledge_weights.data() + knowledge_weights.size())},
          {"forced_eos", forced_eos},
          {"score", score},
          {"beam", beam}};
}

struct Generator::Encoded {
  std::vector<TokenId> x_ids;
  nn::BiGru::Cache x_cache;
  Vec x;
  std::vector<TokenId> g_ids;
  nn::BiGru::Cache g_cache;
  Vec g;
  std::vector<std::vector<TokenId>> k_ids;
  std::vector<nn::BiGru::Cache> k_cache;
  Mat K;
};

Generator::Generator(Vocab vocab, GeneratorConfig config)
    : vocab_(std::move(vocab)), cfg_(std::move(config)) {
  Rng rng(mix_seed(cfg_.seed, 0x6e7));
  const auto E = static_cast<Eigen::Index>(cfg_.emb_dim);
  const auto He = static_cast<Eigen::Index>(cfg_.enc_hidden);
  const auto Hg = static_cast<Eigen::Index>(cfg_.goal_hidden);
  const auto Hd = static_cast<Eigen::Index>(cfg_.dec_hidden);
  const auto M = static_cast<Eigen::Index>(cfg_.mlp_hidden);
  const auto V = static_cast<Eigen::Index>(vocab_.size());
  emb_ = nn::Embedding(store_, "generator.emb", V, E, rng, nn::Init::normal(0.1));
  context_enc_ = nn::BiGru(store_, "generator.context", E, He, rng);
  knowledge_enc_ = nn::BiGru(store_, "generator.knowledge", E, He, rng);
  goal_enc_ = nn::BiGru(store_, "generator.goal", E, Hg, rng);
  response_enc_ = nn::BiGru(store_, "generator.response", E, He, rng);
  null_knowledge_ = store_.add("generator.null_knowledge", 1, 2 * He, nn::Init::uniform(), rng);
  prior_ = nn::Mlp(store_, "generator.prior", 2 * He + 2 * Hg, M, 2 * He, rng, cfg_.dropout);
  posterior_ = nn::Mlp(store_, "generator.posterior", 4 * He + 2 * Hg, M, 2 * He, rng, cfg_.dropout);
  bow_ = nn::Mlp(store_, "generator.bow", 2 * He, M, V, rng, cfg_.dropout);
  init_ = nn::Linear(store_, "generator.init", cfg_.s2s ? 2 * He : 2 * He + 2 * Hg, Hd, rng);
  decoder_ = nn::HgfuCell(store_, "generator.decoder", E, 2 * He, Hd, V, rng);
  // softplus(ln(e - 1)) = 1
  alpha_ = store_.add("generator.alpha", 1, 1, nn::Init::constant(std::log(std::exp(1.0) - 1.0)), rng);
  alpha_nll_ = store_.add("generator.alpha_nll", 1, 1,
                          nn::Init::constant(std::log(std::exp(1.0) - 1.0)), rng);
}

double Generator::alpha() const { return softplus(store_.value(alpha_)(0, 0)); }

std::vector<TokenId> Generator::s2s_input(const ResponderInput& in) const {
  Tokens t = goal_input_tokens(in.goal, in.goal_masked);
  t.push_back("[SEP]");
  for (const auto& k : in.knowledge) {
    for (auto&& x : linearize(k)) t.push_back(std::move(x));
    t.push_back("[SEP]");
  }
  for (auto&& x : context_tokens(in.context, cfg_.context_utterances, cfg_.max_context_tokens)) {
    t.push_back(std::move(x));
  }
  return vocab_.encode(t);
}

std::vector<TokenId> Generator::target_ids(const std::string& response) const {
  auto ids = vocab_.encode(tokenize(response));
  if (ids.size() > cfg_.max_response_tokens) ids.resize(cfg_.max_response_tokens);
  ids.push_back(Vocab::kEos);
  return ids;
}

Generator::Encoded Generator::encode(const nn::ParamStore& store, const ResponderInput& in,
                                     bool keep_cache) const {
  Encoded e;
  if (cfg_.s2s) {
    e.x_ids = s2s_input(in);
  } else {
    e.x_ids = vocab_.encode(context_tokens(in.context, cfg_.context_utterances, cfg_.max_context_tokens));
  }
  if (e.x_ids.empty()) e.x_ids.push_back(Vocab::kSep);
  e.x = context_enc_.forward(store, emb_.forward(store, e.x_ids), keep_cache ? &e.x_cache : nullptr).summary;
  if (cfg_.s2s) {
    e.K = e.x;
    return e;
  }
  e.g_ids = vocab_.encode(goal_input_tokens(in.goal, in.goal_masked));
  e.g = goal_enc_.forward(store, emb_.forward(store, e.g_ids), keep_cache ? &e.g_cache : nullptr).summary;
  if (in.knowledge.empty()) {
    e.K = store.value(null_knowledge_);
    return e;
  }
  e.K.resize(static_cast<Eigen::Index>(in.knowledge.size()), knowledge_enc_.out_dim());
  e.k_cache.resize(in.knowledge.size());
  for (std::size_t i = 0; i < in.knowledge.size(); ++i) {
    e.k_ids.push_back(vocab_.encode(linearize(in.knowledge[i])));
    e.K.row(static_cast<Eigen::Index>(i)) =
        knowledge_enc_.forward(store, emb_.forward(store, e.k_ids.back()),
                               keep_cache ? &e.k_cache[i] : nullptr)
            .summary;
  }
  return e;
}

Vec Generator::initial_state(const nn::ParamStore& store, const Encoded& e) const {
  const Vec in = cfg_.s2s ? e.x : nn::concat({&e.x, &e.g});
  return init_.forward(store, in).array().tanh().matrix();
}

Vec Generator::encode_context(const ResponderInput& in) const { return encode(store_, in, false).x; }

Vec Generator::encode_goal(const ResponderInput& in) const {
  if (cfg_.s2s) return Vec();
  return goal_enc_.forward(store_, emb_.forward(store_, vocab_.encode(goal_input_tokens(in.goal, in.goal_masked))))
      .summary;
}

Mat Generator::encode_knowledge(const std::vector<KnowledgeTriple>& knowledge) const {
  if (knowledge.empty()) return store_.value(null_knowledge_);
  Mat K(static_cast<Eigen::Index>(knowledge.size()), knowledge_enc_.out_dim());
  for (std::size_t i = 0; i < knowledge.size(); ++i) {
    K.row(static_cast<Eigen::Index>(i)) =
        knowledge_enc_.forward(store_, emb_.forward(store_, vocab_.encode(linearize(knowledge[i])))).summary;
  }
  return K;
}

Vec Generator::encode_response(const std::string& response) const {
  auto ids = vocab_.encode(tokenize(response));
  if (ids.empty()) ids.push_back(Vocab::kUnk);
  return response_enc_.forward(store_, emb_.forward(store_, ids)).summary;
}

Vec Generator::prior_dist(const Vec& x, const Vec& g, const Mat& knowledge) const {
  const Vec q = prior_.forward(store_, nn::concat({&x, &g}));
  return attend_knowledge(knowledge, q).weights;
}

Vec Generator::posterior_dist(const Vec& x, const Vec& y, const Vec& g, const Mat& knowledge,
                              bool training) const {
  if (!training) {
    throw TrainingOnlyError("posterior knowledge distribution needs the gold response (training only)");
  }
  const Vec q = posterior_.forward(store_, nn::concat({&x, &y, &g}));
  return attend_knowledge(knowledge, q).weights;
}

GenerationResult Generator::greedy(const ResponderInput& in, std::size_t max_len) const {
  if (max_len == 0) max_len = cfg_.max_len;
  const auto e = encode(store_, in, false);
  GenerationResult r;
  Vec k_c = e.x;
  if (!cfg_.s2s) {
    r.knowledge_weights = prior_dist(e.x, e.g, e.K);
    k_c = r.knowledge_weights * e.K;
  }
  Vec s = initial_state(store_, e);
  TokenId last = Vocab::kBos;
  double sum = 0.0;
  for (std::size_t t = 0; t < max_len; ++t) {
    const auto st = decoder_.step(store_, s, emb_.forward(store_, {last}).row(0), k_c);
    const Vec lp = nn::log_softmax(st.logits);
    const auto v = static_cast<TokenId>(first_argmax(lp));
    r.ids.push_back(v);
    r.logprobs.push_back(lp(v));
    sum += lp(v);
    s = st.state;
    last = v;
    if (v == Vocab::kEos) break;
  }
  if (r.ids.back() != Vocab::kEos) {
    r.forced_eos = true;
    r.ids.push_back(Vocab::kEos);
  }
  r.score = sum / static_cast<double>(r.logprobs.size());
  r.text = join_tokens(vocab_.decode(r.ids));
  return r;
}

GenerationResult Generator::generate(const ResponderInput& in, std::size_t beam_size,
                                     std::size_t max_len) const {
  if (beam_size == 0) beam_size = cfg_.beam;
  if (max_len == 0) max_len = cfg_.max_len;
  const auto e = encode(store_, in, false);
  Vec weights;
  Vec k_c = e.x;
  if (!cfg_.s2s) {
    weights = prior_dist(e.x, e.g, e.K);
    k_c = weights * e.K;
  }
  struct Hyp {
    std::vector<TokenId> ids;
    std::vector<double> lps;
    double sum = 0.0;
    Vec state;
    bool forced = false;
  };
  std::vector<Hyp> live{Hyp{{}, {}, 0.0, initial_state(store_, e)}};
  std::vector<Hyp> finished;
  const auto V = static_cast<Eigen::Index>(vocab_.size());
  const auto per_hyp = std::min<Eigen::Index>(static_cast<Eigen::Index>(beam_size), V);
  for (std::size_t t = 0; t < max_len && !live.empty(); ++t) {
    struct Cand {
      double sum;
      std::size_t hyp;
      TokenId token;
      double lp;
    };
    std::vector<Cand> cands;
    std::vector<Vec> states;
    for (std::size_t h = 0; h < live.size(); ++h) {
      const TokenId last = live[h].ids.empty() ? Vocab::kBos : live[h].ids.back();
      const auto st = decoder_.step(store_, live[h].state, emb_.forward(store_, {last}).row(0), k_c);
      const Vec lp = nn::log_softmax(st.logits);
      states.push_back(st.state);
      // best tokens of this hypothesis by log-probability, ties to the lower id
      std::vector<TokenId> order(static_cast<std::size_t>(V));
      std::iota(order.begin(), order.end(), 0);
      std::partial_sort(order.begin(), order.begin() + per_hyp, order.end(),
                        [&](TokenId a, TokenId b) { return lp(a) > lp(b) || (lp(a) == lp(b) && a < b); });
      for (Eigen::Index k = 0; k < per_hyp; ++k) {
        const TokenId v = order[static_cast<std::size_t>(k)];
        cands.push_back({live[h].sum + lp(v), h, v, lp(v)});
      }
    }
    std::stable_sort(cands.begin(), cands.end(), [](const Cand& a, const Cand& b) { return a.sum > b.sum; });
    std::vector<Hyp> next;
    const std::size_t slots = beam_size - std::min(beam_size, finished.size());
    for (const auto& c : cands) {
      if (next.size() >= slots) break;
      Hyp h = live[c.hyp];
      h.ids.push_back(c.token);
      h.lps.push_back(c.lp);
      h.sum = c.sum;
      h.state = states[c.hyp];
      if (c.token == Vocab::kEos) {
        finished.push_back(std::move(h));
      } else {
        next.push_back(std::move(h));
      }
    }
    live = std::move(next);
    if (finished.size() >= beam_size) live.clear();
  }
  for (auto& h : live) {
    h.forced = true;
    finished.push_back(std::move(h));
  }
  std::size_t best = 0;
  auto norm = [](const Hyp& h) { return h.sum / static_cast<double>(h.lps.size()); };
  for (std::size_t i = 1; i < finished.size(); ++i) {
    if (norm(finished[i]) > norm(finished[best])) best = i;
  }
  GenerationResult r;
  r.ids = finished[best].ids;
  r.logprobs = finished[best].lps;
  r.forced_eos = finished[best].forced;
  if (r.forced_eos) r.ids.push_back(Vocab::kEos);
  r.score = norm(finished[best]);
  r.knowledge_weights = weights;
  r.text = join_tokens(vocab_.decode(r.ids));
  r.beam = beam_size;
  return r;
}

double Generator::response_nll(const ResponderInput& in, const std::string& response,
                               std::size_t& tokens) const {
  const auto e = encode(store_, in, false);
  Vec k_c = e.x;
  if (!cfg_.s2s) k_c = prior_dist(e.x, e.g, e.K) * e.K;
  const auto targets = target_ids(response);
  Vec s = initial_state(store_, e);
  TokenId last = Vocab::kBos;
  double nll = 0.0;
  for (const TokenId y : targets) {
    const auto st = decoder_.step(store_, s, emb_.forward(store_, {last}).row(0), k_c);
    nll -= nn::log_softmax(st.logits)(y);
    s = st.state;
    last = y;
  }
  tokens = targets.size();
  return nll;
}

double Generator::perplexity(const std::vector<TrainingExample>& examples) const {
  if (examples.empty()) throw SchemaError("perplexity: no examples");
  double nll = 0.0;
  std::size_t tokens = 0;
  for (const auto& ex : examples) {
    std::size_t n = 0;
    nll += response_nll(ResponderInput::from_example(ex), ex.response.text, n);
    tokens += n;
  }
  return std::exp(nll / static_cast<double>(tokens));
}

RankedList Generator::score_candidates_by_ppl(const ResponderInput& in, const CandidatePool& pool) const {
  if (pool.candidates.empty()) throw SchemaError("score_candidates_by_ppl: empty pool");
  const auto e = encode(store_, in, false);
  Vec weights;
  Vec k_c = e.x;
  if (!cfg_.s2s) {
    weights = prior_dist(e.x, e.g, e.K);
    k_c = weights * e.K;
  }
  const Vec s0 = initial_state(store_, e);
  RankedList out;
  for (std::size_t i = 0; i < pool.candidates.size(); ++i) {
    const auto targets = target_ids(pool.candidates[i]);
    Vec s = s0;
    TokenId last = Vocab::kBos;
    double nll = 0.0;
    for (const TokenId y : targets) {
      const auto st = decoder_.step(store_, s, emb_.forward(store_, {last}).row(0), k_c);
      nll -= nn::log_softmax(st.logits)(y);
      s = st.state;
      last = y;
    }
    // 1/PPL: the per-token geometric-mean likelihood
    out.candidates.push_back(
        {i, pool.candidates[i], std::exp(-nll / static_cast<double>(targets.size())), weights});
  }
  std::stable_sort(out.candidates.begin(), out.candidates.end(),
                   [](const auto& a, const auto& b) { return a.prob > b.prob; });
  for (std::size_t r = 0; r < out.candidates.size(); ++r) {
    if (out.candidates[r].index == pool.gold_index) out.gold_rank = r + 1;
  }
  return out;
}

GeneratorLossParts Generator::example_loss(const nn::ParamStore& store, const ResponderInput& in,
                                           const std::string& response, nn::Gradients* grads,
                                           Rng* dropout_rng) const {
  const bool bw = grads != nullptr;
  auto e = encode(store, in, bw);
  const auto targets = target_ids(response);
  GeneratorLossParts parts;
  const double a_kl = store.value(alpha_)(0, 0);
  const double a_nll = cfg_.independent_alpha ? store.value(alpha_nll_)(0, 0) : a_kl;
  const double w_kl = softplus(a_kl);
  const double w_nll = cfg_.s2s ? 1.0 : softplus(a_nll);
  parts.alpha = softplus(a_kl);

  // knowledge fusion from the posterior
  std::vector<TokenId> y_ids;
  nn::BiGru::Cache y_cache;
  Vec y, prior_in, post_in, q_prior, q_post, p_prior, p_post, bow_logits;
  nn::Mlp::Cache prior_cache, post_cache, bow_cache;
  nn::KlLoss kl;
  nn::VecLoss bow;
  Vec k_c;
  std::vector<TokenId> bag(targets.begin(), targets.end() - 1);
  if (cfg_.s2s) {
    k_c = e.x;
  } else {
    y_ids = vocab_.encode(tokenize(response));
    if (y_ids.empty()) y_ids.push_back(Vocab::kUnk);
    y = response_enc_.forward(store, emb_.forward(store, y_ids), bw ? &y_cache : nullptr).summary;
    prior_in = nn::concat({&e.x, &e.g});
    post_in = nn::concat({&e.x, &y, &e.g});
    q_prior = prior_.forward(store, prior_in, &prior_cache, dropout_rng);
    q_post = posterior_.forward(store, post_in, &post_cache, dropout_rng);
    p_prior = attend_knowledge(e.K, q_prior).weights;
    p_post = attend_knowledge(e.K, q_post).weights;
    k_c = p_post * e.K;
    kl = nn::kl_div_loss(p_post, p_prior);
    parts.kl = kl.loss;
    if (!bag.empty()) {
      bow_logits = bow_.forward(store, k_c, &bow_cache, dropout_rng);
      bow = nn::bow_loss(bow_logits, bag);
      parts.bow = bow.loss;
    }
  }

  // teacher-forced decoding
  const Vec s0 = initial_state(store, e);
  const auto T = targets.size();
  std::vector<nn::HgfuCell::StepCache> steps(T);
  std::vector<TokenId> inputs(T);
  Mat logits(static_cast<Eigen::Index>(T), static_cast<Eigen::Index>(vocab_.size()));
  Vec s = s0;
  for (std::size_t t = 0; t < T; ++t) {
    inputs[t] = t == 0 ? Vocab::kBos : targets[t - 1];
    const auto st = decoder_.step(store, s, emb_.forward(store, {inputs[t]}).row(0), k_c,
                                  bw ? &steps[t] : nullptr);
    logits.row(static_cast<Eigen::Index>(t)) = st.logits;
    s = st.state;
  }
  const auto nll = nn::nll_loss(logits, targets);
  parts.nll = nll.loss;
  parts.total = (cfg_.s2s ? 0.0 : w_kl * parts.kl) + w_nll * parts.nll + parts.bow;
  if (!bw) return parts;

  // backward
  auto sigmoid = [](double a) { return 1.0 / (1.0 + std::exp(-a)); };
  if (!cfg_.s2s) {
    if (cfg_.independent_alpha) {
      (*grads)[alpha_](0, 0) += sigmoid(a_kl) * parts.kl;
      (*grads)[alpha_nll_](0, 0) += sigmoid(a_nll) * parts.nll;
    } else {
      (*grads)[alpha_](0, 0) += sigmoid(a_kl) * (parts.kl + parts.nll);
    }
  }
  Vec d_state = Vec::Zero(s0.size());
  Vec d_kc = Vec::Zero(k_c.size());
  Mat d_inputs(static_cast<Eigen::Index>(T), emb_.dim());
  for (std::size_t t = T; t-- > 0;) {
    const Vec d_logits = w_nll * nll.d_logits.row(static_cast<Eigen::Index>(t));
    Vec d_prev, d_e, d_k;
    decoder_.backward_step(store, steps[t], d_state, d_logits, *grads, d_prev, d_e, d_k);
    d_state = d_prev;
    d_kc += d_k;
    d_inputs.row(static_cast<Eigen::Index>(t)) = d_e;
  }
  emb_.backward(inputs, d_inputs, *grads);
  const Vec init_in = cfg_.s2s ? e.x : nn::concat({&e.x, &e.g});
  const Vec d_pre = (d_state.array() * (1.0 - s0.array().square())).matrix();
  const Vec d_init_in = init_.backward(store, init_in, d_pre, *grads);
  const auto Dx = e.x.size();
  Vec d_x = d_init_in.head(Dx);
  if (cfg_.s2s) {
    d_x += d_kc;
  } else {
    Vec d_g = d_init_in.tail(e.g.size());
    if (!bag.empty()) d_kc += bow_.backward(store, bow_cache, bow.d_logits, *grads);
    Mat dK = p_post.transpose() * d_kc;
    Vec d_post = d_kc * e.K.transpose();
    if (!cfg_.detach_posterior) d_post += w_kl * kl.d_posterior;
    const Vec d_prior = w_kl * kl.d_prior;
    const Vec ds_post = nn::softmax_backward(p_post, d_post);
    const Vec ds_prior = nn::softmax_backward(p_prior, d_prior);
    dK += ds_post.transpose() * q_post + ds_prior.transpose() * q_prior;
    const Vec d_post_in = posterior_.backward(store, post_cache, Vec(ds_post * e.K), *grads);
    const Vec d_prior_in = prior_.backward(store, prior_cache, Vec(ds_prior * e.K), *grads);
    const auto Dy = y.size();
    d_x += d_post_in.head(Dx) + d_prior_in.head(Dx);
    const Vec d_y = d_post_in.segment(Dx, Dy);
    d_g += d_post_in.tail(e.g.size()) + d_prior_in.tail(e.g.size());
    emb_.backward(y_ids, response_enc_.backward(store, y_cache, Mat(), d_y, *grads), *grads);
    emb_.backward(e.g_ids, goal_enc_.backward(store, e.g_cache, Mat(), d_g, *grads), *grads);
    if (in.knowledge.empty()) {
      (*grads)[null_knowledge_] += dK;
    } else {
      for (std::size_t i = 0; i < e.k_ids.size(); ++i) {
        const Mat d = knowledge_enc_.backward(store, e.k_cache[i], Mat(),
                                              dK.row(static_cast<Eigen::Index>(i)), *grads);
        emb_.backward(e.k_ids[i], d, *grads);
      }
    }
  }
  emb_.backward(e.x_ids, context_enc_.backward(store, e.x_cache, Mat(), d_x, *grads), *grads);
  return parts;
}

GeneratorTrainLog Generator::train(const std::vector<TrainingExample>& examples) {
  GeneratorTrainLog log;
  if (cfg_.epochs == 0 || examples.empty()) return log;
  nn::Adam adam(store_, {cfg_.lr, 0.9, 0.999, 1e-8, 0.0, cfg_.clip});
  nn::Gradients grads(store_);
  Rng rng(mix_seed(cfg_.seed, 0x3b1));
  Rng drop(mix_seed(cfg_.seed, 0xd0e));
  std::vector<std::size_t> order(examples.size());
  std::iota(order.begin(), order.end(), 0);
  for (std::size_t epoch = 0; epoch < cfg_.epochs; ++epoch) {
    rng.shuffle(order);
    double sum = 0.0;
    for (std::size_t start = 0; start < order.size(); start += cfg_.batch) {
      const std::size_t end = std::min(order.size(), start + cfg_.batch);
      grads.zero();
      GeneratorLossParts mean;
      for (std::size_t i = start; i < end; ++i) {
        const auto& ex = examples[order[i]];
        const auto p = example_loss(store_, ResponderInput::from_example(ex), ex.response.text, &grads,
                                    cfg_.dropout > 0 ? &drop : nullptr);
        mean.kl += p.kl;
        mean.nll += p.nll;
        mean.bow += p.bow;
        mean.total += p.total;
      }
      const double n = static_cast<double>(end - start);
      sum += mean.total;
      mean.kl /= n;
      mean.nll /= n;
      mean.bow /= n;
      mean.total /= n;
      mean.alpha = alpha();
      log.steps.push_back(mean);
      grads.scale(1.0 / n);
      adam.step(store_, grads);
    }
    log.epoch_loss.push_back(sum / static_cast<double>(examples.size()));
  }
  return log;
}

void Generator::save(const std::string& dir) const {
  save_model_dir(dir, {{"kind", "generator"}, {"generator", cfg_.to_json()}}, vocab_, store_);
}

Generator Generator::load(const std::string& dir) {
  auto m = read_model_dir(dir);
  if (m.config.value("kind", "") != "generator") throw SchemaError(dir + " is not a generator model");
  Generator g(m.vocab, GeneratorConfig::from_json(m.config.at("generator")));
  g.store_.load(m.params_path);
  return g;
}

}  // namespace mgcg
