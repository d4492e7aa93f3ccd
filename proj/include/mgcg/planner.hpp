#pragma once

#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"
#include "mgcg/corpus.hpp"
#include "mgcg/nn/adam.hpp"
#include "mgcg/nn/cnn.hpp"
#include "mgcg/nn/layers.hpp"

namespace mgcg {

inline constexpr std::size_t kDefaultTopicCap = 1000;

/// Candidate next topics: profile seed and accepted entities, the two most
/// recent goal topics (or the seeds when the history is empty) and their 1-
/// and 2-hop neighbours, minus rejected entities. Capped, keeping recent
/// topics and 1-hop neighbours first, then 2-hop, then profile entities;
/// returned in stable entity-id order. Falls back to the non-rejected seeds
/// when the set would be empty.
std::vector<std::string> candidate_topics(const KnowledgeGraph& graph, const SeekerProfile& profile,
                                          const std::vector<Goal>& goal_history,
                                          std::size_t cap = kDefaultTopicCap);

struct PlannerConfig {
  std::size_t emb_dim = 32;
  std::size_t filters = 32;
  std::vector<std::size_t> widths = {2, 3, 4};
  std::size_t hidden = 64;
  std::size_t topic_dim = 32;
  std::size_t context_utterances = 2;
  std::size_t max_context_tokens = 80;
  double lr = 0.002;
  std::size_t batch = 16;
  std::size_t epochs = 12;
  double dropout = 0.0;
  /// Score every graph entity with a fixed softmax layer instead of the
  /// dynamic candidate set.
  bool fixed_topic_softmax = false;
  std::uint64_t seed = 11;

  nlohmann::json to_json() const;
  static PlannerConfig from_json(const nlohmann::json& j);
  /// Full-size model dimensions.
  static PlannerConfig full_scale();
};

/// What the planner reads at one turn.
struct PlannerInput {
  std::vector<Utterance> context;
  Goal previous_goal;
  std::vector<Goal> goal_history;  // g_0 .. g_{t-1}
  SeekerProfile profile;

  static PlannerInput from_example(const TrainingExample& ex);
};

struct GoalPrediction {
  nn::Vec type_probs;  // indexed by DialogType
  std::vector<std::string> candidates;
  nn::Vec topic_probs;  // aligned with candidates
  Goal best;
};

struct PlannerDecision {
  double completion_prob = 0.0;
  bool completed = false;
  Goal chosen;
  GoalPrediction prediction;
};

struct PlannerMetrics {
  double completion_acc = 0.0;
  double type_acc = 0.0;
  double topic_acc = 0.0;
  double transition_topic_acc = 0.0;
  std::size_t examples = 0;

  nlohmann::json to_json() const;
};

struct PlannerTrainLog {
  std::vector<double> epoch_loss;
  PlannerMetrics train_metrics;
};

/// Optional override of the completion head (used for policy tests).
using CompletionStub = std::function<double(const PlannerInput&)>;

class GoalPlanner {
 public:
  GoalPlanner(Vocab vocab, const KnowledgeGraph& graph, PlannerConfig config = {});

  /// P(goal completed | context, previous goal). Throws MissingGoalError
  /// without a previous goal and SchemaError on an empty context.
  double estimate_completion(const PlannerInput& in) const;
  GoalPrediction predict_goal(const PlannerInput& in) const;
  /// Keeps the previous goal when P_GC < 0.5, otherwise takes the argmax of
  /// each head (ties to the lowest index / entity id).
  PlannerDecision plan_next(const PlannerInput& in, const CompletionStub& stub = {}) const;

  PlannerTrainLog train(const std::vector<TrainingExample>& examples);
  PlannerMetrics evaluate(const std::vector<TrainingExample>& examples) const;

  void save(const std::string& dir) const;
  static GoalPlanner load(const std::string& dir, const KnowledgeGraph& graph);

  const nn::ParamStore& params() const { return store_; }
  nn::ParamStore& params() { return store_; }
  const PlannerConfig& config() const { return cfg_; }
  const Vocab& vocab() const { return vocab_; }

  /// Loss and (optionally) gradient for one example; exposed for gradient
  /// checks.
  double example_loss(const nn::ParamStore& store, const TrainingExample& ex,
                      nn::Gradients* grads) const;

 private:
  struct Forward;
  std::vector<TokenId> encode_input(const PlannerInput& in) const;
  Forward run(const nn::ParamStore& store, const PlannerInput& in, bool keep_cache) const;
  std::vector<std::string> topic_candidates(const PlannerInput& in) const;
  nn::Vec topic_scores(const nn::ParamStore& store, const nn::Vec& h, const PlannerInput& in,
                       const std::vector<std::string>& candidates,
                       std::vector<nn::Vec>* features = nullptr) const;

  Vocab vocab_;
  const KnowledgeGraph* graph_;
  PlannerConfig cfg_;
  nn::ParamStore store_;
  nn::Embedding emb_;
  nn::CnnTextEncoder cnn_;
  nn::Linear hidden_;
  nn::Linear completion_head_;
  nn::Linear type_head_;
  nn::Linear topic_query_;
  nn::ParamId entity_emb_;
  nn::Linear topic_features_;
  nn::Linear fixed_topic_;
};

}  // namespace mgcg
