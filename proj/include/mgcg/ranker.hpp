#pragma once

#include <string>
#include <vector>

#include "json.hpp"
#include "mgcg/corpus.hpp"
#include "mgcg/nn/adam.hpp"
#include "mgcg/nn/attention.hpp"
#include "mgcg/nn/gru.hpp"
#include "mgcg/nn/layers.hpp"

namespace mgcg {

struct RankerConfig {
  std::size_t dim = 32;
  std::size_t heads = 4;
  std::size_t layers = 2;
  std::size_t ffn = 64;
  std::size_t max_len = 96;
  std::size_t context_utterances = 4;
  std::size_t knowledge_hidden = 16;
  std::size_t goal_hidden = 16;
  std::size_t mlp_hidden = 32;
  double dropout = 0.1;
  double lr = 0.001;
  double weight_decay = 0.01;
  double warmup = 0.1;
  std::size_t batch = 8;
  std::size_t epochs = 8;
  std::size_t negatives = 3;
  /// Share of negatives drawn from other turns of the same dialog.
  double hard_negative_share = 0.0;
  /// Adds elementwise products of the mean response token embedding with
  /// the mean goal embedding and the selection-weighted mean knowledge
  /// embedding to the matcher input.
  bool interaction = true;
  std::uint64_t seed = 13;

  nlohmann::json to_json() const;
  static RankerConfig from_json(const nlohmann::json& j);
  static RankerConfig full_scale();
};

/// Inputs shared by every candidate of one turn.
struct ResponderInput {
  std::vector<Utterance> context;
  Goal goal;
  bool goal_masked = false;
  std::vector<KnowledgeTriple> knowledge;

  static ResponderInput from_example(const TrainingExample& ex);
};

struct KnowledgeSelection {
  nn::Vec weights;
  nn::Vec fused;
};

/// weights = softmax(K q^T), fused = weights K. ShapeError on an empty K.
KnowledgeSelection attend_knowledge(const nn::Mat& knowledge, const nn::Vec& query);

struct RankedCandidate {
  std::size_t index = 0;  // position in the pool
  std::string text;
  double prob = 0.0;
  nn::Vec knowledge_weights;
};

struct RankedList {
  std::vector<RankedCandidate> candidates;  // by descending prob, ties by index
  std::size_t gold_rank = 0;                // 1-based rank of the pool's gold

  nlohmann::json to_json() const;
};

struct RankerTrainLog {
  std::vector<double> epoch_loss;
  std::vector<double> lr_trace;  // learning rate applied at each step
};

class Ranker {
 public:
  Ranker(Vocab vocab, RankerConfig config = {});

  /// CLS summary of [CLS] context [SEP] response [SEP]; the context is cut
  /// oldest-first to fit max_len.
  nn::Vec encode_pair(const std::vector<Utterance>& context, const std::string& response) const;
  KnowledgeSelection select_knowledge(const nn::Vec& xy, const nn::Vec& goal,
                                      const nn::Mat& knowledge) const;
  /// Goal summary and knowledge matrix (the null vector if none).
  nn::Vec encode_goal(const ResponderInput& in) const;
  nn::Mat encode_knowledge(const std::vector<KnowledgeTriple>& knowledge) const;

  double match(const ResponderInput& in, const std::string& response) const;
  RankedList rank(const ResponderInput& in, const CandidatePool& pool) const;

  RankerTrainLog train(const std::vector<TrainingExample>& examples,
                       const std::vector<std::string>& response_bank);

  /// Sum of pair losses for one turn; gradient accumulated when given.
  double example_loss(const nn::ParamStore& store, const ResponderInput& in,
                      const std::vector<std::string>& responses, const std::vector<int>& labels,
                      nn::Gradients* grads, Rng* dropout_rng = nullptr) const;

  void save(const std::string& dir) const;
  static Ranker load(const std::string& dir);

  const nn::ParamStore& params() const { return store_; }
  nn::ParamStore& params() { return store_; }
  const RankerConfig& config() const { return cfg_; }
  const Vocab& vocab() const { return vocab_; }

 private:
  struct TurnScore {
    double prob = 0.0;
    nn::Vec knowledge_weights;
  };
  /// Shared forward pass of one turn over several responses; returns the
  /// summed loss when labels are given and accumulates gradients.
  double turn_scores(const nn::ParamStore& store, const ResponderInput& in,
                     const std::vector<std::string>& responses, const std::vector<int>* labels,
                     nn::Gradients* grads, Rng* dropout_rng, std::vector<TurnScore>* out) const;
  nn::PairInput pair_ids(const std::vector<Utterance>& context, const std::string& response) const;

  Vocab vocab_;
  RankerConfig cfg_;
  nn::ParamStore store_;
  nn::Embedding emb_;
  nn::SelfAttentionEncoder encoder_;
  nn::BiGru knowledge_enc_;
  nn::BiGru goal_enc_;
  nn::ParamId null_knowledge_;
  nn::Mlp selector_;
  nn::Mlp matcher_;

};

}  // namespace mgcg
