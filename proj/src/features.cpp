#include "mgcg/features.hpp"

#include <filesystem>
#include <fstream>

#include "mgcg/errors.hpp"

namespace mgcg {

Tokens goal_input_tokens(const Goal& goal, bool masked) {
  if (masked) return {kUnkToken};
  return goal_tokens(goal);
}

std::string domain_marker(const std::string& domain) { return "<d:" + domain + ">"; }

Tokens profile_tokens(const SeekerProfile& p) {
  Tokens out{"<like>"};
  for (const auto& d : p.preferred_domains) out.push_back(d);
  out.push_back("<dislike>");
  for (const auto& d : p.disliked_domains) out.push_back(d);
  out.push_back("<seeds>");
  for (const auto* list : {&p.seed_entities, &p.accepted_entities}) {
    for (const auto& e : *list) {
      for (auto&& t : tokenize(e)) out.push_back(std::move(t));
    }
  }
  return out;
}

Tokens context_tokens(const std::vector<Utterance>& context, std::size_t max_utterances,
                      std::size_t max_tokens) {
  const std::size_t start = context.size() > max_utterances ? context.size() - max_utterances : 0;
  Tokens out;
  for (std::size_t i = start; i < context.size(); ++i) {
    if (i > start) out.push_back("[SEP]");
    for (auto&& t : tokenize(context[i].text)) out.push_back(std::move(t));
  }
  if (out.size() > max_tokens) out.erase(out.begin(), out.end() - static_cast<std::ptrdiff_t>(max_tokens));
  return out;
}

Vocab build_vocab(const std::vector<DialogRecord>& records, std::size_t min_freq) {
  std::vector<Tokens> streams;
  Tokens markers{"<like>", "<dislike>", "<seeds>"};
  for (auto t : kDialogTypes) markers.push_back(type_marker(t));
  for (const auto& d : knowledge_domains()) markers.push_back(domain_marker(d));
  streams.push_back(markers);
  for (const auto& r : records) {
    for (const auto& u : r.turns) streams.push_back(tokenize(u.text));
    for (const auto& g : r.goals) streams.push_back(goal_tokens(g));
    for (const auto& k : r.knowledge) streams.push_back(linearize(k));
    streams.push_back(profile_tokens(r.profile));
  }
  // Markers survive any frequency cut.
  auto cut = Vocab::build(streams, min_freq);
  std::vector<std::string> tokens = cut.tokens();
  for (const auto& m : markers) {
    if (cut.id(m) == Vocab::kUnk) tokens.push_back(m);
  }
  return Vocab::from_tokens(tokens);
}

nlohmann::json vocab_to_json(const Vocab& vocab) { return vocab.tokens(); }

Vocab vocab_from_json(const nlohmann::json& j) {
  return Vocab::from_tokens(j.get<std::vector<std::string>>());
}

void save_model_dir(const std::string& dir, const nlohmann::json& config, const Vocab& vocab,
                    const nn::ParamStore& store) {
  std::filesystem::create_directories(dir);
  nlohmann::json full = config;
  full["vocab"] = vocab_to_json(vocab);
  const std::filesystem::path base(dir);
  std::ofstream out(base / "config.json");
  if (!out) throw Error("cannot write " + (base / "config.json").string());
  out << full.dump(1);
  store.save((base / "params.json").string());
}

ModelDir read_model_dir(const std::string& dir) {
  const std::filesystem::path base(dir);
  std::ifstream in(base / "config.json");
  if (!in) throw Error("cannot read model config in " + dir);
  ModelDir m;
  try {
    m.config = nlohmann::json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(1, std::string("model config: ") + e.what());
  }
  if (!m.config.contains("vocab")) throw SchemaError("model config has no vocabulary");
  m.vocab = vocab_from_json(m.config.at("vocab"));
  m.params_path = (base / "params.json").string();
  return m;
}

}  // namespace mgcg
