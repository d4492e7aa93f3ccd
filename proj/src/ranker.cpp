#include "mgcg/ranker.hpp"

#include <algorithm>
#include <map>
#include <numeric>

#include "mgcg/errors.hpp"
#include "mgcg/features.hpp"
#include "mgcg/nn/loss.hpp"

namespace mgcg {

using nn::Mat;
using nn::Vec;

nlohmann::json RankerConfig::to_json() const {
  return {{"dim", dim},         {"heads", heads},
          {"layers", layers},   {"ffn", ffn},
          {"max_len", max_len}, {"context_utterances", context_utterances},
          {"knowledge_hidden", knowledge_hidden},
          {"goal_hidden", goal_hidden},
          {"mlp_hidden", mlp_hidden},
          {"dropout", dropout}, {"lr", lr},
          {"weight_decay", weight_decay},
          {"warmup", warmup},   {"batch", batch},
          {"epochs", epochs},   {"negatives", negatives}, {"hard_negative_share", hard_negative_share},
          {"interaction", interaction}, {"seed", seed}};
}

RankerConfig RankerConfig::from_json(const nlohmann::json& j) {
  RankerConfig c;
  c.dim = j.value("dim", c.dim);
  c.heads = j.value("heads", c.heads);
  c.layers = j.value("layers", c.layers);
  c.ffn = j.value("ffn", c.ffn);
  c.max_len = j.value("max_len", c.max_len);
  c.context_utterances = j.value("context_utterances", c.context_utterances);
  c.knowledge_hidden = j.value("knowledge_hidden", c.knowledge_hidden);
  c.goal_hidden = j.value("goal_hidden", c.goal_hidden);
  c.mlp_hidden = j.value("mlp_hidden", c.mlp_hidden);
  c.dropout = j.value("dropout", c.dropout);
  c.lr = j.value("lr", c.lr);
  c.weight_decay = j.value("weight_decay", c.weight_decay);
  c.warmup = j.value("warmup", c.warmup);
  c.batch = j.value("batch", c.batch);
  c.epochs = j.value("epochs", c.epochs);
  c.negatives = j.value("negatives", c.negatives);
  c.hard_negative_share = j.value("hard_negative_share", c.hard_negative_share);
  c.interaction = j.value("interaction", c.interaction);
  c.seed = j.value("seed", c.seed);
  if (c.dim == 0 || c.heads == 0 || c.dim % c.heads != 0) {
    throw ConfigError("ranker config: dim must be a positive multiple of heads");
  }
  if (c.layers == 0 || c.ffn == 0 || c.knowledge_hidden == 0 || c.goal_hidden == 0 ||
      c.mlp_hidden == 0 || c.batch == 0) {
    throw ConfigError("ranker config: sizes must be positive");
  }
  if (c.max_len < 8) throw ConfigError("ranker config: max_len must be at least 8");
  if (c.lr <= 0) throw ConfigError("ranker config: lr must be positive");
  if (c.dropout < 0 || c.dropout >= 1) throw ConfigError("ranker config: dropout must be in [0,1)");
  if (c.warmup < 0 || c.warmup > 1) throw ConfigError("ranker config: warmup must be in [0,1]");
  return c;
}

RankerConfig RankerConfig::full_scale() {
  RankerConfig c;
  c.dim = 768;
  c.heads = 12;
  c.layers = 12;
  c.ffn = 3072;
  c.max_len = 512;
  c.knowledge_hidden = 256;
  c.goal_hidden = 256;
  c.mlp_hidden = 256;
  c.lr = 5e-5;
  c.batch = 32;
  return c;
}

ResponderInput ResponderInput::from_example(const TrainingExample& ex) {
  return {ex.context, ex.goal, ex.goal_masked, ex.knowledge};
}

KnowledgeSelection attend_knowledge(const Mat& knowledge, const Vec& query) {
  if (knowledge.rows() == 0) throw ShapeError("attend_knowledge: empty knowledge");
  if (knowledge.cols() != query.size()) throw ShapeError("attend_knowledge: width mismatch");
  KnowledgeSelection s;
  s.weights = nn::softmax((knowledge * query.transpose()).transpose());
  s.fused = s.weights * knowledge;
  return s;
}

nlohmann::json RankedList::to_json() const {
  auto arr = nlohmann::json::array();
  for (const auto& c : candidates) {
    arr.push_back({{"index", c.index}, {"text", c.text}, {"prob", c.prob}});
  }
  return {{"candidates", arr}, {"gold_rank", gold_rank}};
}

Ranker::Ranker(Vocab vocab, RankerConfig config) : vocab_(std::move(vocab)), cfg_(std::move(config)) {
  Rng rng(mix_seed(cfg_.seed, 0x2a4));
  const auto D = static_cast<Eigen::Index>(cfg_.dim);
  const auto Hk = static_cast<Eigen::Index>(cfg_.knowledge_hidden);
  const auto Hg = static_cast<Eigen::Index>(cfg_.goal_hidden);
  const auto M = static_cast<Eigen::Index>(cfg_.mlp_hidden);
  emb_ = nn::Embedding(store_, "ranker.emb", static_cast<Eigen::Index>(vocab_.size()), D, rng,
                       nn::Init::normal(0.1));
  nn::AttentionConfig ac;
  ac.dim = D;
  ac.heads = static_cast<Eigen::Index>(cfg_.heads);
  ac.ffn = static_cast<Eigen::Index>(cfg_.ffn);
  ac.layers = static_cast<Eigen::Index>(cfg_.layers);
  ac.max_len = static_cast<Eigen::Index>(cfg_.max_len);
  encoder_ = nn::SelfAttentionEncoder(store_, "ranker.encoder", ac, rng);
  knowledge_enc_ = nn::BiGru(store_, "ranker.knowledge", D, Hk, rng);
  goal_enc_ = nn::BiGru(store_, "ranker.goal", D, Hg, rng);
  null_knowledge_ = store_.add("ranker.null_knowledge", 1, 2 * Hk, nn::Init::uniform(), rng);
  selector_ = nn::Mlp(store_, "ranker.selector", D + 2 * Hg, M, 2 * Hk, rng, cfg_.dropout);
  const auto match_in = D + 2 * Hk + 2 * Hg + (cfg_.interaction ? 2 * D : 0);
  matcher_ = nn::Mlp(store_, "ranker.matcher", match_in, M, 2, rng, cfg_.dropout);
}

nn::PairInput Ranker::pair_ids(const std::vector<Utterance>& context,
                               const std::string& response) const {
  auto resp = vocab_.encode(tokenize(response));
  const std::size_t resp_cap = cfg_.max_len / 2;
  if (resp.size() > resp_cap) resp.resize(resp_cap);
  if (resp.empty()) resp.push_back(Vocab::kUnk);
  const std::size_t budget = cfg_.max_len - 3 - resp.size();
  const auto ctx = vocab_.encode(context_tokens(context, cfg_.context_utterances, budget));
  return nn::pack_pair(ctx, resp, cfg_.max_len);
}

nn::Vec Ranker::encode_pair(const std::vector<Utterance>& context, const std::string& response) const {
  const auto p = pair_ids(context, response);
  return encoder_.forward(store_, emb_.forward(store_, p.ids), p.segments).summary;
}

nn::Vec Ranker::encode_goal(const ResponderInput& in) const {
  const auto ids = vocab_.encode(goal_input_tokens(in.goal, in.goal_masked));
  return goal_enc_.forward(store_, emb_.forward(store_, ids)).summary;
}

nn::Mat Ranker::encode_knowledge(const std::vector<KnowledgeTriple>& knowledge) const {
  if (knowledge.empty()) return store_.value(null_knowledge_);
  Mat k(static_cast<Eigen::Index>(knowledge.size()), knowledge_enc_.out_dim());
  for (std::size_t i = 0; i < knowledge.size(); ++i) {
    const auto ids = vocab_.encode(linearize(knowledge[i]));
    k.row(static_cast<Eigen::Index>(i)) =
        knowledge_enc_.forward(store_, emb_.forward(store_, ids)).summary;
  }
  return k;
}

KnowledgeSelection Ranker::select_knowledge(const Vec& xy, const Vec& goal, const Mat& knowledge) const {
  const Vec q = selector_.forward(store_, nn::concat({&xy, &goal}));
  return attend_knowledge(knowledge, q);
}

namespace {

// Mean of the embedding rows, and its backward pass onto those rows.
Vec mean_rows(const Mat& m, Eigen::Index begin, Eigen::Index count) {
  return m.middleRows(begin, count).colwise().mean();
}

}  // namespace

double Ranker::match(const ResponderInput& in, const std::string& response) const {
  std::vector<TurnScore> out;
  turn_scores(store_, in, {response}, nullptr, nullptr, nullptr, &out);
  return out.front().prob;
}

RankedList Ranker::rank(const ResponderInput& in, const CandidatePool& pool) const {
  if (pool.candidates.empty()) throw SchemaError("rank: empty candidate pool");
  std::vector<TurnScore> scores;
  turn_scores(store_, in, pool.candidates, nullptr, nullptr, nullptr, &scores);
  RankedList out;
  for (std::size_t i = 0; i < pool.candidates.size(); ++i) {
    out.candidates.push_back({i, pool.candidates[i], scores[i].prob, scores[i].knowledge_weights});
  }
  std::stable_sort(out.candidates.begin(), out.candidates.end(),
                   [](const auto& a, const auto& b) { return a.prob > b.prob; });
  for (std::size_t r = 0; r < out.candidates.size(); ++r) {
    if (out.candidates[r].index == pool.gold_index) out.gold_rank = r + 1;
  }
  return out;
}

double Ranker::example_loss(const nn::ParamStore& store, const ResponderInput& in,
                            const std::vector<std::string>& responses, const std::vector<int>& labels,
                            nn::Gradients* grads, Rng* dropout_rng) const {
  if (responses.size() != labels.size()) throw ShapeError("ranker loss: labels do not match responses");
  return turn_scores(store, in, responses, &labels, grads, dropout_rng, nullptr);
}

double Ranker::turn_scores(const nn::ParamStore& store, const ResponderInput& in,
                           const std::vector<std::string>& responses, const std::vector<int>* labels,
                           nn::Gradients* grads, Rng* dropout_rng, std::vector<TurnScore>* out) const {
  const bool inter = cfg_.interaction;
  const double scale = static_cast<double>(emb_.dim());
  // goal
  const auto g_ids = vocab_.encode(goal_input_tokens(in.goal, in.goal_masked));
  const Mat g_emb = emb_.forward(store, g_ids);
  nn::BiGru::Cache g_cache;
  const Vec g = goal_enc_.forward(store, g_emb, grads ? &g_cache : nullptr).summary;
  const Vec g_bar = mean_rows(g_emb, 0, g_emb.rows());
  // knowledge: recurrent summaries K and mean token embeddings Kbar
  std::vector<std::vector<TokenId>> k_ids;
  std::vector<Mat> k_emb;
  std::vector<nn::BiGru::Cache> k_cache(in.knowledge.size());
  Mat K;
  Mat K_bar;
  if (in.knowledge.empty()) {
    K = store.value(null_knowledge_);
    K_bar = Mat::Zero(1, emb_.dim());
  } else {
    const auto n = static_cast<Eigen::Index>(in.knowledge.size());
    K.resize(n, knowledge_enc_.out_dim());
    K_bar.resize(n, emb_.dim());
    for (std::size_t i = 0; i < in.knowledge.size(); ++i) {
      const auto r = static_cast<Eigen::Index>(i);
      k_ids.push_back(vocab_.encode(linearize(in.knowledge[i])));
      k_emb.push_back(emb_.forward(store, k_ids.back()));
      K.row(r) = knowledge_enc_.forward(store, k_emb.back(), grads ? &k_cache[i] : nullptr).summary;
      K_bar.row(r) = mean_rows(k_emb.back(), 0, k_emb.back().rows());
    }
  }
  Mat dK = Mat::Zero(K.rows(), K.cols());
  Mat dK_bar = Mat::Zero(K_bar.rows(), K_bar.cols());
  Vec dg = Vec::Zero(g.size());
  Vec dg_bar = Vec::Zero(g_bar.size());
  double loss = 0.0;
  for (std::size_t r = 0; r < responses.size(); ++r) {
    const auto p = pair_ids(in.context, responses[r]);
    const Mat x_emb = emb_.forward(store, p.ids);
    nn::SelfAttentionEncoder::Cache enc_cache;
    Vec xy = encoder_.forward(store, x_emb, p.segments, grads ? &enc_cache : nullptr).summary;
    Vec xy_mask;
    if (dropout_rng && cfg_.dropout > 0) {
      xy_mask = nn::dropout_mask(1, xy.size(), cfg_.dropout, *dropout_rng);
      xy = (xy.array() * xy_mask.array()).matrix();
    }
    const Vec sel_in = nn::concat({&xy, &g});
    nn::Mlp::Cache sel_cache, match_cache;
    const Vec q = selector_.forward(store, sel_in, grads ? &sel_cache : nullptr, dropout_rng);
    const auto sel = attend_knowledge(K, q);
    // response tokens: segment b without its closing [SEP]
    Eigen::Index y_begin = 0;
    while (y_begin < static_cast<Eigen::Index>(p.segments.size()) && p.segments[y_begin] == 0) ++y_begin;
    const Eigen::Index y_count = static_cast<Eigen::Index>(p.ids.size()) - 1 - y_begin;
    Vec m_in;
    Vec y_bar, k_bar;
    if (inter) {
      y_bar = mean_rows(x_emb, y_begin, y_count);
      k_bar = sel.weights * K_bar;
      const Vec hg = (scale * y_bar.array() * g_bar.array()).matrix();
      const Vec hk = (scale * y_bar.array() * k_bar.array()).matrix();
      m_in = nn::concat({&xy, &sel.fused, &g, &hg, &hk});
    } else {
      m_in = nn::concat({&xy, &sel.fused, &g});
    }
    const Vec logits = matcher_.forward(store, m_in, grads ? &match_cache : nullptr, dropout_rng);
    if (out) out->push_back({nn::softmax(logits)(1), sel.weights});
    if (!labels) continue;
    const auto ce = nn::cross_entropy(logits, (*labels)[r] ? 1 : 0);
    loss += ce.loss;
    if (!grads) continue;
    const Vec d_in = matcher_.backward(store, match_cache, ce.d_logits, *grads);
    const auto D = xy.size();
    const auto Kd = K.cols();
    const auto G = g.size();
    Vec d_xy = d_in.head(D);
    const Vec d_fused = d_in.segment(D, Kd);
    dg += d_in.segment(D + Kd, G);
    Vec d_s = Vec::Zero(K.rows());
    Mat d_x_emb_extra = Mat::Zero(x_emb.rows(), x_emb.cols());
    if (inter) {
      const auto E = y_bar.size();
      const Vec d_hg = d_in.segment(D + Kd + G, E);
      const Vec d_hk = d_in.tail(E);
      const Vec d_ybar = (scale * (d_hg.array() * g_bar.array() + d_hk.array() * k_bar.array())).matrix();
      dg_bar += (scale * d_hg.array() * y_bar.array()).matrix();
      const Vec d_kbar = (scale * d_hk.array() * y_bar.array()).matrix();
      // k_bar = w Kbar
      dK_bar += sel.weights.transpose() * d_kbar;
      const Vec d_w_bar = d_kbar * K_bar.transpose();
      d_s += nn::softmax_backward(sel.weights, d_w_bar);
      d_x_emb_extra.middleRows(y_begin, y_count).rowwise() += d_ybar / static_cast<double>(y_count);
    }
    // fused = w K, w = softmax(K q)
    const Vec d_w = d_fused * K.transpose();
    dK += sel.weights.transpose() * d_fused;
    d_s += nn::softmax_backward(sel.weights, d_w);
    dK += d_s.transpose() * q;
    const Vec d_q = d_s * K;
    const Vec d_sel_in = selector_.backward(store, sel_cache, d_q, *grads);
    d_xy += d_sel_in.head(D);
    dg += d_sel_in.tail(G);
    if (xy_mask.size() > 0) d_xy = (d_xy.array() * xy_mask.array()).matrix();
    const Mat d_x_emb = encoder_.backward(store, enc_cache, Mat(), d_xy, *grads);
    emb_.backward(p.ids, d_x_emb + d_x_emb_extra, *grads);
  }
  if (grads) {
    if (in.knowledge.empty()) {
      (*grads)[null_knowledge_] += dK;
    } else {
      for (std::size_t i = 0; i < in.knowledge.size(); ++i) {
        const auto row = static_cast<Eigen::Index>(i);
        Mat d = knowledge_enc_.backward(store, k_cache[i], Mat(), dK.row(row), *grads);
        d.rowwise() += dK_bar.row(row) / static_cast<double>(d.rows());
        emb_.backward(k_ids[i], d, *grads);
      }
    }
    Mat d_g_emb = goal_enc_.backward(store, g_cache, Mat(), dg, *grads);
    d_g_emb.rowwise() += dg_bar / static_cast<double>(d_g_emb.rows());
    emb_.backward(g_ids, d_g_emb, *grads);
  }
  return loss;
}

RankerTrainLog Ranker::train(const std::vector<TrainingExample>& examples,
                             const std::vector<std::string>& bank) {
  RankerTrainLog log;
  if (cfg_.epochs == 0 || examples.empty()) return log;
  if (bank.size() < 2) throw ConfigError("ranker: response bank too small for negatives");
  nn::Adam adam(store_, {cfg_.lr, 0.9, 0.999, 1e-8, cfg_.weight_decay, 0.0});
  nn::Gradients grads(store_);
  Rng rng(mix_seed(cfg_.seed, 0x5e1));
  Rng drop(mix_seed(cfg_.seed, 0xd09));
  std::vector<std::size_t> order(examples.size());
  std::iota(order.begin(), order.end(), 0);
  std::map<std::pair<std::string, std::size_t>, std::vector<std::size_t>> by_dialog;
  for (std::size_t i = 0; i < examples.size(); ++i) {
    by_dialog[{examples[i].seeker_id, examples[i].dialog_index}].push_back(i);
  }
  const long steps_per_epoch = static_cast<long>((examples.size() + cfg_.batch - 1) / cfg_.batch);
  const long total = steps_per_epoch * static_cast<long>(cfg_.epochs);
  const long warmup = static_cast<long>(cfg_.warmup * static_cast<double>(total));
  long step = 0;
  for (std::size_t epoch = 0; epoch < cfg_.epochs; ++epoch) {
    rng.shuffle(order);
    double sum = 0.0;
    std::size_t pairs = 0;
    for (std::size_t start = 0; start < order.size(); start += cfg_.batch) {
      const std::size_t end = std::min(order.size(), start + cfg_.batch);
      grads.zero();
      std::size_t batch_pairs = 0;
      for (std::size_t i = start; i < end; ++i) {
        const auto& ex = examples[order[i]];
        std::vector<std::string> responses{ex.response.text};
        std::vector<int> labels{1};
        for (std::size_t tries = 0; responses.size() <= cfg_.negatives && tries < 20 * cfg_.negatives;
             ++tries) {
          const auto& same = by_dialog[{ex.seeker_id, ex.dialog_index}];
          const auto& cand = rng.uniform() < cfg_.hard_negative_share
                                 ? examples[same[rng.uniform_index(same.size())]].response.text
                                 : bank[rng.uniform_index(bank.size())];
          if (cand == ex.response.text) continue;
          responses.push_back(cand);
          labels.push_back(0);
        }
        sum += example_loss(store_, ResponderInput::from_example(ex), responses, labels, &grads,
                            cfg_.dropout > 0 ? &drop : nullptr);
        batch_pairs += responses.size();
      }
      pairs += batch_pairs;
      grads.scale(1.0 / static_cast<double>(batch_pairs));
      const double lr = nn::warmup_linear(cfg_.lr, step, warmup, total);
      adam.step(store_, grads, lr);
      log.lr_trace.push_back(lr);
      ++step;
    }
    log.epoch_loss.push_back(sum / static_cast<double>(pairs));
  }
  return log;
}

void Ranker::save(const std::string& dir) const {
  save_model_dir(dir, {{"kind", "ranker"}, {"ranker", cfg_.to_json()}}, vocab_, store_);
}

Ranker Ranker::load(const std::string& dir) {
  auto m = read_model_dir(dir);
  if (m.config.value("kind", "") != "ranker") throw SchemaError(dir + " is not a ranker model");
  Ranker r(m.vocab, RankerConfig::from_json(m.config.at("ranker")));
  r.store_.load(m.params_path);
  return r;
}

}  // namespace mgcg
