#pragma once

#include <string>
#include <vector>

#include "json.hpp"
#include "mgcg/corpus.hpp"
#include "mgcg/nn/params.hpp"

namespace mgcg {

/// Goal tokens fed to models: the type marker and topic tokens, or the
/// single [UNK] token when the goal is ablated.
Tokens goal_input_tokens(const Goal& goal, bool masked);

/// "<d:movie>" style token naming an entity domain.
std::string domain_marker(const std::string& domain);

/// Flat profile description: preferences, dislikes, seed/accepted entities.
Tokens profile_tokens(const SeekerProfile& profile);

/// The last `max_utterances` utterances joined by [SEP], keeping at most
/// `max_tokens` of the most recent tokens (oldest dropped first).
Tokens context_tokens(const std::vector<Utterance>& context, std::size_t max_utterances,
                      std::size_t max_tokens);

/// Vocabulary over utterances, goals, profiles and knowledge of `records`.
Vocab build_vocab(const std::vector<DialogRecord>& records, std::size_t min_freq = 1);

nlohmann::json vocab_to_json(const Vocab& vocab);
Vocab vocab_from_json(const nlohmann::json& j);

/// Model directory layout: config.json (model config plus the vocabulary)
/// and params.json (parameter snapshot).
void save_model_dir(const std::string& dir, const nlohmann::json& config, const Vocab& vocab,
                    const nn::ParamStore& store);
struct ModelDir {
  nlohmann::json config;
  Vocab vocab;
  std::string params_path;
};
ModelDir read_model_dir(const std::string& dir);

}  // namespace mgcg
