#pragma once

#include <optional>
#include <string>
#include <vector>

#include "json.hpp"
#include "mgcg/corpus.hpp"
#include "mgcg/nn/gru.hpp"
#include "mgcg/nn/hgfu.hpp"
#include "mgcg/nn/layers.hpp"
#include "mgcg/ranker.hpp"

namespace mgcg {

struct GeneratorConfig {
  std::size_t emb_dim = 32;
  std::size_t enc_hidden = 32;   // per direction, context/response/knowledge encoders
  std::size_t goal_hidden = 16;  // per direction
  std::size_t dec_hidden = 64;
  std::size_t mlp_hidden = 64;
  std::size_t context_utterances = 4;
  std::size_t max_context_tokens = 80;
  std::size_t max_response_tokens = 50;
  std::size_t max_len = 50;
  std::size_t beam = 10;
  double dropout = 0.2;
  double lr = 0.002;
  double clip = 5.0;
  std::size_t batch = 16;
  std::size_t epochs = 30;
  /// Goal and selector off, goal/knowledge/context concatenated into one input.
  bool s2s = false;
  /// Separate trainable weights for the KL and NLL terms.
  bool independent_alpha = false;
  /// The KL term trains the prior only; the posterior learns through the
  /// decoder. Off: the KL gradient reaches both (the exact loss gradient).
  bool detach_posterior = true;
  std::uint64_t seed = 17;

  nlohmann::json to_json() const;
  static GeneratorConfig from_json(const nlohmann::json& j);
  static GeneratorConfig full_scale();
};

struct GenerationResult {
  std::vector<TokenId> ids;       // generated tokens, EOS last when emitted
  std::vector<double> logprobs;   // one per scored token
  nn::Vec knowledge_weights;      // prior distribution
  std::string text;
  bool forced_eos = false;        // stopped at max_len
  double score = 0.0;             // length-normalized log-probability
  std::size_t beam = 1;

  nlohmann::json to_json() const;
};

struct GeneratorLossParts {
  double kl = 0.0;
  double nll = 0.0;
  double bow = 0.0;
  double alpha = 0.0;
  double total = 0.0;
};

struct GeneratorTrainLog {
  std::vector<GeneratorLossParts> steps;  // batch means per step
  std::vector<double> epoch_loss;
};

class Generator {
 public:
  Generator(Vocab vocab, GeneratorConfig config = {});

  nn::Vec encode_context(const ResponderInput& in) const;
  nn::Vec encode_goal(const ResponderInput& in) const;
  nn::Mat encode_knowledge(const std::vector<KnowledgeTriple>& knowledge) const;
  nn::Vec encode_response(const std::string& response) const;

  nn::Vec prior_dist(const nn::Vec& x, const nn::Vec& g, const nn::Mat& knowledge) const;
  /// Training only: raises TrainingOnlyError unless `training` is set.
  nn::Vec posterior_dist(const nn::Vec& x, const nn::Vec& y, const nn::Vec& g,
                         const nn::Mat& knowledge, bool training) const;

  GenerationResult generate(const ResponderInput& in, std::size_t beam_size = 0,
                            std::size_t max_len = 0) const;
  GenerationResult greedy(const ResponderInput& in, std::size_t max_len = 0) const;

  /// Teacher-forced per-token negative log-likelihood of `response` with
  /// prior fusion; returns the summed NLL and sets the token count.
  double response_nll(const ResponderInput& in, const std::string& response,
                      std::size_t& tokens) const;
  double perplexity(const std::vector<TrainingExample>& examples) const;
  RankedList score_candidates_by_ppl(const ResponderInput& in, const CandidatePool& pool) const;

  GeneratorLossParts example_loss(const nn::ParamStore& store, const ResponderInput& in,
                                  const std::string& response, nn::Gradients* grads,
                                  Rng* dropout_rng = nullptr) const;
  GeneratorTrainLog train(const std::vector<TrainingExample>& examples);

  void save(const std::string& dir) const;
  static Generator load(const std::string& dir);

  double alpha() const;
  const nn::ParamStore& params() const { return store_; }
  nn::ParamStore& params() { return store_; }
  const GeneratorConfig& config() const { return cfg_; }
  const Vocab& vocab() const { return vocab_; }
  const nn::HgfuCell& decoder() const { return decoder_; }

 private:
  struct Encoded;
  Encoded encode(const nn::ParamStore& store, const ResponderInput& in, bool keep_cache) const;
  nn::Vec initial_state(const nn::ParamStore& store, const Encoded& e) const;
  std::vector<TokenId> target_ids(const std::string& response) const;
  std::vector<TokenId> s2s_input(const ResponderInput& in) const;

  Vocab vocab_;
  GeneratorConfig cfg_;
  nn::ParamStore store_;
  nn::Embedding emb_;
  nn::BiGru context_enc_;
  nn::BiGru knowledge_enc_;
  nn::BiGru goal_enc_;
  nn::BiGru response_enc_;
  nn::ParamId null_knowledge_;
  nn::Mlp prior_;
  nn::Mlp posterior_;
  nn::Mlp bow_;
  nn::Linear init_;
  nn::HgfuCell decoder_;
  nn::ParamId alpha_;
  nn::ParamId alpha_nll_;
};

}  // namespace mgcg
