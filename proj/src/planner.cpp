#include "mgcg/planner.hpp"

#include <algorithm>
#include <set>

#include "mgcg/errors.hpp"
#include "mgcg/features.hpp"
#include "mgcg/nn/loss.hpp"

namespace mgcg {

using nn::Mat;
using nn::Vec;

std::vector<std::string> candidate_topics(const KnowledgeGraph& graph, const SeekerProfile& profile,
                                          const std::vector<Goal>& history, std::size_t cap) {
  const std::set<std::string> rejected(profile.rejected_entities.begin(),
                                       profile.rejected_entities.end());
  std::vector<std::string> anchors;
  for (std::size_t i = history.size() > 2 ? history.size() - 2 : 0; i < history.size(); ++i) {
    if (graph.contains_entity(history[i].topic)) anchors.push_back(history[i].topic);
  }
  if (anchors.empty()) {
    for (const auto& s : profile.seed_entities) {
      if (graph.contains_entity(s)) anchors.push_back(s);
    }
  }
  std::set<std::string> near(anchors.begin(), anchors.end());
  std::set<std::string> far;
  for (const auto& a : anchors) {
    for (const auto& n : graph.neighbors(a, 1)) near.insert(n);
  }
  for (const auto& a : anchors) {
    for (const auto& n : graph.neighbors(a, 2)) {
      if (!near.count(n)) far.insert(n);
    }
  }
  std::set<std::string> own;
  for (const auto* list : {&profile.seed_entities, &profile.accepted_entities}) {
    for (const auto& e : *list) {
      if (graph.contains_entity(e) && !near.count(e) && !far.count(e)) own.insert(e);
    }
  }
  auto by_id = [&](const std::set<std::string>& s) {
    std::vector<std::string> v;
    for (const auto& e : s) {
      if (!rejected.count(e)) v.push_back(e);
    }
    std::sort(v.begin(), v.end(), [&](const auto& a, const auto& b) {
      return *graph.entity_index(a) < *graph.entity_index(b);
    });
    return v;
  };
  std::vector<std::string> out;
  for (const auto& tier : {by_id(near), by_id(far), by_id(own)}) {
    for (const auto& e : tier) {
      if (out.size() < cap) out.push_back(e);
    }
  }
  if (out.empty()) {
    for (const auto& s : profile.seed_entities) {
      if (graph.contains_entity(s) && !rejected.count(s) && out.size() < cap) out.push_back(s);
    }
  }
  std::sort(out.begin(), out.end(), [&](const auto& a, const auto& b) {
    return *graph.entity_index(a) < *graph.entity_index(b);
  });
  return out;
}

nlohmann::json PlannerConfig::to_json() const {
  return {{"emb_dim", emb_dim},
          {"filters", filters},
          {"widths", widths},
          {"hidden", hidden},
          {"topic_dim", topic_dim},
          {"context_utterances", context_utterances},
          {"max_context_tokens", max_context_tokens},
          {"lr", lr},
          {"batch", batch},
          {"epochs", epochs},
          {"dropout", dropout},
          {"fixed_topic_softmax", fixed_topic_softmax},
          {"seed", seed}};
}

PlannerConfig PlannerConfig::from_json(const nlohmann::json& j) {
  PlannerConfig c;
  c.emb_dim = j.value("emb_dim", c.emb_dim);
  c.filters = j.value("filters", c.filters);
  c.widths = j.value("widths", c.widths);
  c.hidden = j.value("hidden", c.hidden);
  c.topic_dim = j.value("topic_dim", c.topic_dim);
  c.context_utterances = j.value("context_utterances", c.context_utterances);
  c.max_context_tokens = j.value("max_context_tokens", c.max_context_tokens);
  c.lr = j.value("lr", c.lr);
  c.batch = j.value("batch", c.batch);
  c.epochs = j.value("epochs", c.epochs);
  c.dropout = j.value("dropout", c.dropout);
  c.fixed_topic_softmax = j.value("fixed_topic_softmax", c.fixed_topic_softmax);
  c.seed = j.value("seed", c.seed);
  if (c.emb_dim == 0 || c.filters == 0 || c.hidden == 0 || c.topic_dim == 0 || c.widths.empty() ||
      c.batch == 0) {
    throw ConfigError("planner config: sizes must be positive");
  }
  if (c.lr <= 0) throw ConfigError("planner config: lr must be positive");
  return c;
}

PlannerConfig PlannerConfig::full_scale() {
  PlannerConfig c;
  c.emb_dim = 256;
  c.filters = 256;
  c.hidden = 256;
  c.topic_dim = 256;
  c.batch = 128;
  c.lr = 0.002;
  return c;
}

nlohmann::json PlannerMetrics::to_json() const {
  return {{"completion_acc", completion_acc},
          {"type_acc", type_acc},
          {"topic_acc", topic_acc},
          {"transition_topic_acc", transition_topic_acc},
          {"examples", examples}};
}

PlannerInput PlannerInput::from_example(const TrainingExample& ex) {
  return {ex.context, ex.previous_goal, ex.goal_history, ex.profile};
}

struct GoalPlanner::Forward {
  std::vector<TokenId> ids;
  Mat embedded;
  nn::CnnTextEncoder::Cache cnn;
  Vec features;
  Vec h;
  double completion_logit = 0.0;
  Vec type_logits;
};

GoalPlanner::GoalPlanner(Vocab vocab, const KnowledgeGraph& graph, PlannerConfig cfg)
    : vocab_(std::move(vocab)), graph_(&graph), cfg_(std::move(cfg)) {
  Rng rng(mix_seed(cfg_.seed, 0x91a));
  const auto E = static_cast<Eigen::Index>(cfg_.emb_dim);
  const auto H = static_cast<Eigen::Index>(cfg_.hidden);
  std::vector<Eigen::Index> widths(cfg_.widths.begin(), cfg_.widths.end());
  emb_ = nn::Embedding(store_, "planner.emb", static_cast<Eigen::Index>(vocab_.size()), E, rng);
  cnn_ = nn::CnnTextEncoder(store_, "planner.cnn", E, widths,
                            static_cast<Eigen::Index>(cfg_.filters), rng);
  hidden_ = nn::Linear(store_, "planner.hidden", cnn_.out_dim(), H, rng);
  completion_head_ = nn::Linear(store_, "planner.completion", H, 1, rng);
  type_head_ = nn::Linear(store_, "planner.type", H, static_cast<Eigen::Index>(kDialogTypes.size()), rng);
  const auto n_entities = std::max<Eigen::Index>(1, static_cast<Eigen::Index>(graph.entities().size()));
  if (cfg_.fixed_topic_softmax) {
    fixed_topic_ = nn::Linear(store_, "planner.topic_fixed", H, n_entities, rng);
  } else {
    const auto D = static_cast<Eigen::Index>(cfg_.topic_dim);
    topic_query_ = nn::Linear(store_, "planner.topic_query", H, D, rng);
    entity_emb_ = store_.add("planner.entity_emb", n_entities, D, nn::Init::uniform(), rng);
    topic_features_ = nn::Linear(store_, "planner.topic_features", 4, 1, rng);
  }
}

std::vector<TokenId> GoalPlanner::encode_input(const PlannerInput& in) const {
  Tokens t = goal_input_tokens(in.previous_goal, false);
  if (auto d = graph_->domain_of(in.previous_goal.topic)) t.push_back(domain_marker(*d));
  t.push_back("[SEP]");
  for (const auto& g : in.goal_history) t.push_back(type_marker(g.type));
  t.push_back("[SEP]");
  for (auto&& x : context_tokens(in.context, cfg_.context_utterances, cfg_.max_context_tokens)) {
    t.push_back(std::move(x));
  }
  t.push_back("[SEP]");
  for (auto&& x : profile_tokens(in.profile)) t.push_back(std::move(x));
  return vocab_.encode(t);
}

GoalPlanner::Forward GoalPlanner::run(const nn::ParamStore& store, const PlannerInput& in,
                                      bool keep_cache) const {
  if (in.previous_goal.topic.empty()) {
    throw MissingGoalError("planner: no previous goal (the first goal comes from the template)");
  }
  if (in.context.empty()) throw SchemaError("planner: empty context");
  Forward f;
  f.ids = encode_input(in);
  f.embedded = emb_.forward(store, f.ids);
  f.features = cnn_.forward(store, f.embedded, keep_cache ? &f.cnn : nullptr);
  f.h = hidden_.forward(store, f.features).array().tanh().matrix();
  f.completion_logit = completion_head_.forward(store, f.h)(0);
  f.type_logits = type_head_.forward(store, f.h);
  return f;
}

std::vector<std::string> GoalPlanner::topic_candidates(const PlannerInput& in) const {
  if (cfg_.fixed_topic_softmax) return graph_->entities();
  return candidate_topics(*graph_, in.profile, in.goal_history);
}

Vec GoalPlanner::topic_scores(const nn::ParamStore& store, const Vec& h, const PlannerInput& in,
                              const std::vector<std::string>& candidates,
                              std::vector<Vec>* features) const {
  const auto n = static_cast<Eigen::Index>(candidates.size());
  if (cfg_.fixed_topic_softmax) return fixed_topic_.forward(store, h);
  const Vec q = topic_query_.forward(store, h);
  const Mat& table = store.value(entity_emb_);
  const auto& prev = in.previous_goal.topic;
  std::set<std::string> hop1, hop2;
  if (graph_->contains_entity(prev)) {
    for (const auto& e : graph_->neighbors(prev, 1)) hop1.insert(e);
    for (const auto& e : graph_->neighbors(prev, 2)) {
      if (!hop1.count(e)) hop2.insert(e);
    }
  }
  const std::set<std::string> own = [&] {
    std::set<std::string> s(in.profile.seed_entities.begin(), in.profile.seed_entities.end());
    s.insert(in.profile.accepted_entities.begin(), in.profile.accepted_entities.end());
    return s;
  }();
  Vec scores(n);
  if (features) features->assign(candidates.size(), Vec());
  for (Eigen::Index i = 0; i < n; ++i) {
    const auto& c = candidates[static_cast<std::size_t>(i)];
    Vec f(4);
    f << (c == prev ? 1.0 : 0.0), (hop1.count(c) ? 1.0 : 0.0), (hop2.count(c) ? 1.0 : 0.0),
        (own.count(c) ? 1.0 : 0.0);
    scores(i) = q.dot(table.row(static_cast<Eigen::Index>(*graph_->entity_index(c)))) +
                topic_features_.forward(store, f)(0);
    if (features) (*features)[static_cast<std::size_t>(i)] = f;
  }
  return scores;
}

double GoalPlanner::estimate_completion(const PlannerInput& in) const {
  return nn::sigmoid(run(store_, in, false).completion_logit);
}

namespace {

Eigen::Index first_argmax(const Vec& v) {
  Eigen::Index best = 0;
  for (Eigen::Index i = 1; i < v.size(); ++i) {
    if (v(i) > v(best)) best = i;
  }
  return best;
}

}  // namespace

GoalPrediction GoalPlanner::predict_goal(const PlannerInput& in) const {
  const auto f = run(store_, in, false);
  GoalPrediction p;
  p.type_probs = nn::softmax(f.type_logits);
  p.candidates = topic_candidates(in);
  if (p.candidates.empty()) throw Error("planner: no topic candidates for this seeker");
  p.topic_probs = nn::softmax(topic_scores(store_, f.h, in, p.candidates));
  p.best.type = kDialogTypes[static_cast<std::size_t>(first_argmax(p.type_probs))];
  p.best.topic = p.candidates[static_cast<std::size_t>(first_argmax(p.topic_probs))];
  return p;
}

PlannerDecision GoalPlanner::plan_next(const PlannerInput& in, const CompletionStub& stub) const {
  PlannerDecision d;
  d.completion_prob = stub ? stub(in) : estimate_completion(in);
  d.prediction = predict_goal(in);
  d.completed = d.completion_prob >= 0.5;
  d.chosen = d.completed ? d.prediction.best : in.previous_goal;
  return d;
}

double GoalPlanner::example_loss(const nn::ParamStore& store, const TrainingExample& ex,
                                 nn::Gradients* grads) const {
  const PlannerInput in = PlannerInput::from_example(ex);
  auto f = run(store, in, grads != nullptr);
  const auto bce = nn::binary_cross_entropy(f.completion_logit, ex.completion_label ? 1.0 : 0.0);
  const auto type_index = static_cast<Eigen::Index>(
      std::find(kDialogTypes.begin(), kDialogTypes.end(), ex.goal.type) - kDialogTypes.begin());
  const auto ce = nn::cross_entropy(f.type_logits, type_index);
  double loss = bce.loss + ce.loss;

  Vec dh = Vec::Zero(f.h.size());
  if (ex.completion_label) {
    const auto candidates = topic_candidates(in);
    const auto it = std::find(candidates.begin(), candidates.end(), ex.goal.topic);
    if (it != candidates.end()) {
      std::vector<Vec> feats;
      const Vec scores = topic_scores(store, f.h, in, candidates, &feats);
      const auto gold = static_cast<Eigen::Index>(it - candidates.begin());
      const auto tce = nn::cross_entropy(scores, cfg_.fixed_topic_softmax
                                                     ? static_cast<Eigen::Index>(*graph_->entity_index(ex.goal.topic))
                                                     : gold);
      loss += tce.loss;
      if (grads) {
        if (cfg_.fixed_topic_softmax) {
          dh += fixed_topic_.backward(store, f.h, tce.d_logits, *grads);
        } else {
          const Vec q = topic_query_.forward(store, f.h);
          const Mat& table = store.value(entity_emb_);
          Vec dq = Vec::Zero(q.size());
          for (std::size_t i = 0; i < candidates.size(); ++i) {
            const double ds = tce.d_logits(static_cast<Eigen::Index>(i));
            if (ds == 0.0) continue;
            const auto row = static_cast<Eigen::Index>(*graph_->entity_index(candidates[i]));
            dq += ds * table.row(row);
            (*grads)[entity_emb_].row(row) += ds * q;
            Vec d1(1);
            d1 << ds;
            topic_features_.backward(store, feats[i], d1, *grads);
          }
          dh += topic_query_.backward(store, f.h, dq, *grads);
        }
      }
    }
  }
  if (grads) {
    Vec dz(1);
    dz << bce.d_logit;
    dh += completion_head_.backward(store, f.h, dz, *grads);
    dh += type_head_.backward(store, f.h, ce.d_logits, *grads);
    const Vec dpre = (dh.array() * (1.0 - f.h.array().square())).matrix();
    const Vec dfeat = hidden_.backward(store, f.features, dpre, *grads);
    const Mat demb = cnn_.backward(store, f.cnn, dfeat, *grads);
    emb_.backward(f.ids, demb, *grads);
  }
  return loss;
}

PlannerTrainLog GoalPlanner::train(const std::vector<TrainingExample>& examples) {
  PlannerTrainLog log;
  if (cfg_.epochs == 0 || examples.empty()) return log;
  nn::Adam adam(store_, {cfg_.lr, 0.9, 0.999, 1e-8, 0.0, 0.0});
  nn::Gradients grads(store_);
  Rng rng(mix_seed(cfg_.seed, 0x7a1));
  std::vector<std::size_t> order(examples.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  for (std::size_t epoch = 0; epoch < cfg_.epochs; ++epoch) {
    rng.shuffle(order);
    double total = 0.0;
    for (std::size_t start = 0; start < order.size(); start += cfg_.batch) {
      const std::size_t end = std::min(order.size(), start + cfg_.batch);
      grads.zero();
      for (std::size_t i = start; i < end; ++i) total += example_loss(store_, examples[order[i]], &grads);
      grads.scale(1.0 / static_cast<double>(end - start));
      adam.step(store_, grads);
    }
    log.epoch_loss.push_back(total / static_cast<double>(examples.size()));
  }
  log.train_metrics = evaluate(examples);
  return log;
}

PlannerMetrics GoalPlanner::evaluate(const std::vector<TrainingExample>& examples) const {
  PlannerMetrics m;
  std::size_t completion = 0, type = 0, topic = 0, transitions = 0, transition_topic = 0;
  for (const auto& ex : examples) {
    const auto d = plan_next(PlannerInput::from_example(ex));
    completion += d.completed == ex.completion_label;
    type += d.chosen.type == ex.goal.type;
    topic += d.chosen.topic == ex.goal.topic;
    if (ex.completion_label) {
      ++transitions;
      transition_topic += d.chosen.topic == ex.goal.topic;
    }
  }
  m.examples = examples.size();
  if (!examples.empty()) {
    const double n = static_cast<double>(examples.size());
    m.completion_acc = static_cast<double>(completion) / n;
    m.type_acc = static_cast<double>(type) / n;
    m.topic_acc = static_cast<double>(topic) / n;
  }
  if (transitions > 0) {
    m.transition_topic_acc = static_cast<double>(transition_topic) / static_cast<double>(transitions);
  }
  return m;
}

void GoalPlanner::save(const std::string& dir) const {
  save_model_dir(dir, {{"kind", "planner"}, {"planner", cfg_.to_json()}}, vocab_, store_);
}

GoalPlanner GoalPlanner::load(const std::string& dir, const KnowledgeGraph& graph) {
  auto m = read_model_dir(dir);
  if (m.config.value("kind", "") != "planner") throw SchemaError(dir + " is not a planner model");
  GoalPlanner p(m.vocab, graph, PlannerConfig::from_json(m.config.at("planner")));
  p.store_.load(m.params_path);
  return p;
}

}  // namespace mgcg
