#include "mgcg/corpus.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <set>

#include "mgcg/errors.hpp"
#include "mgcg/rng.hpp"

namespace mgcg {

using nlohmann::json;

TaskTemplate DialogRecord::task_template() const {
  TaskTemplate t;
  t.id = seeker_id + "#" + std::to_string(dialog_index);
  t.goals = goals;
  t.initiators = initiators;
  t.operations = operations;
  if (t.initiators.size() != goals.size()) {
    t.initiators.assign(goals.size(), Initiator::Recommender);
    for (std::size_t g = 0; g < goals.size(); ++g) {
      auto it = std::find_if(turns.begin(), turns.end(),
                             [g](const Utterance& u) { return u.goal_index == g; });
      if (it != turns.end() && it->speaker == Speaker::Seeker) t.initiators[g] = Initiator::Seeker;
    }
  }
  if (t.operations.size() != goals.size()) {
    t.operations.assign(goals.size(), InteractionOp::None);
    for (std::size_t g = 0; g < goals.size(); ++g) {
      if (goals[g].type == DialogType::Recommendation) t.operations[g] = InteractionOp::Accept;
    }
  }
  return t;
}

void validate_record(const DialogRecord& record) {
  if (record.seeker_id.empty()) throw SchemaError("seeker_id must be non-empty");
  if (record.goals.empty()) throw SchemaError("goals must be non-empty");
  for (const auto& g : record.goals) {
    if (g.topic.empty()) throw SchemaError("goal topic must be non-empty");
  }
  if (!record.operations.empty() && record.operations.size() != record.goals.size()) {
    throw SchemaError("operations must match goals in length");
  }
  std::size_t last = 0;
  for (std::size_t i = 0; i < record.turns.size(); ++i) {
    const auto& u = record.turns[i];
    if (u.text.empty()) throw SchemaError("turn " + std::to_string(i) + ": empty text");
    if (u.goal_index >= record.goals.size()) {
      throw SchemaError("turn " + std::to_string(i) + ": goal_index out of range");
    }
    if (u.goal_index < last) {
      throw SchemaError("turn " + std::to_string(i) + ": goal_index decreases");
    }
    last = u.goal_index;
  }
  const auto& p = record.profile;
  for (const auto& d : p.preferred_domains) {
    if (std::find(p.disliked_domains.begin(), p.disliked_domains.end(), d) !=
        p.disliked_domains.end()) {
      throw SchemaError("domain both preferred and disliked: " + d);
    }
  }
  for (const auto* prof : {&record.profile, &record.profile_after}) {
    for (const auto& e : prof->accepted_entities) {
      if (std::find(prof->rejected_entities.begin(), prof->rejected_entities.end(), e) !=
          prof->rejected_entities.end()) {
        throw SchemaError("entity both accepted and rejected: " + e);
      }
    }
  }
}

json profile_to_json(const SeekerProfile& p) {
  return json{{"seeker_id", p.seeker_id},
              {"name", p.name},
              {"gender", p.gender},
              {"age_range", p.age_range},
              {"city", p.city},
              {"occupation", std::string(to_string(p.occupation))},
              {"preferred_domains", p.preferred_domains},
              {"disliked_domains", p.disliked_domains},
              {"seed_entities", p.seed_entities},
              {"accepted_entities", p.accepted_entities},
              {"rejected_entities", p.rejected_entities}};
}

namespace {

std::vector<std::string> string_list(const json& j, const char* key) {
  if (!j.contains(key)) return {};
  const auto& v = j.at(key);
  if (!v.is_array()) throw SchemaError(std::string(key) + " must be a list");
  std::vector<std::string> out;
  for (const auto& e : v) {
    if (!e.is_string()) throw SchemaError(std::string(key) + " must hold strings");
    out.push_back(e.get<std::string>());
  }
  return out;
}

std::string required_string(const json& j, const char* key) {
  if (!j.contains(key) || !j.at(key).is_string()) {
    throw SchemaError(std::string("missing string field \"") + key + "\"");
  }
  return j.at(key).get<std::string>();
}

json triples_to_json(const std::vector<KnowledgeTriple>& triples) {
  json arr = json::array();
  for (const auto& t : triples) arr.push_back({t.subject, t.predicate, t.object});
  return arr;
}

std::vector<KnowledgeTriple> triples_from_json(const json& arr) {
  if (!arr.is_array()) throw SchemaError("knowledge must be a list of [s, p, o]");
  std::vector<KnowledgeTriple> out;
  for (const auto& t : arr) {
    if (!t.is_array() || t.size() != 3 || !t[0].is_string() || !t[1].is_string() ||
        !t[2].is_string()) {
      throw SchemaError("knowledge entries must be [s, p, o] string triples");
    }
    out.push_back({t[0].get<std::string>(), t[1].get<std::string>(), t[2].get<std::string>()});
  }
  return out;
}

}  // namespace

SeekerProfile profile_from_json(const json& j) {
  if (!j.is_object()) throw SchemaError("profile must be an object");
  SeekerProfile p;
  p.seeker_id = j.value("seeker_id", std::string{});
  p.name = j.value("name", std::string{});
  p.gender = j.value("gender", std::string{});
  p.age_range = j.value("age_range", std::string{});
  p.city = j.value("city", std::string{});
  p.occupation = parse_occupation(j.value("occupation", std::string("student")));
  p.preferred_domains = string_list(j, "preferred_domains");
  p.disliked_domains = string_list(j, "disliked_domains");
  p.seed_entities = string_list(j, "seed_entities");
  p.accepted_entities = string_list(j, "accepted_entities");
  p.rejected_entities = string_list(j, "rejected_entities");
  return p;
}

json record_to_json(const DialogRecord& r) {
  json goals = json::array();
  for (std::size_t i = 0; i < r.goals.size(); ++i) {
    json g{{"type", std::string(to_string(r.goals[i].type))},
           {"topic", r.goals[i].topic},
           {"description", r.goals[i].description}};
    if (i < r.operations.size() && r.operations[i] != InteractionOp::None) {
      g["operation"] = std::string(to_string(r.operations[i]));
    }
    if (i < r.initiators.size()) {
      g["initiator"] = r.initiators[i] == Initiator::Seeker ? "seeker" : "recommender";
    }
    goals.push_back(std::move(g));
  }
  json turns = json::array();
  for (const auto& u : r.turns) {
    json t{{"speaker", std::string(to_string(u.speaker))},
           {"text", u.text},
           {"goal_index", u.goal_index}};
    if (!u.knowledge.empty()) t["knowledge"] = triples_to_json(u.knowledge);
    turns.push_back(std::move(t));
  }
  return json{{"seeker_id", r.seeker_id},
              {"dialog_index", r.dialog_index},
              {"profile", profile_to_json(r.profile)},
              {"profile_after", profile_to_json(r.profile_after)},
              {"goals", std::move(goals)},
              {"knowledge", triples_to_json(r.knowledge)},
              {"turns", std::move(turns)}};
}

DialogRecord record_from_json(const json& j) {
  if (!j.is_object()) throw SchemaError("record must be an object");
  DialogRecord r;
  r.seeker_id = required_string(j, "seeker_id");
  if (!j.contains("dialog_index") || !j["dialog_index"].is_number_unsigned()) {
    throw SchemaError("dialog_index must be a non-negative integer");
  }
  r.dialog_index = j["dialog_index"].get<std::size_t>();
  r.profile = profile_from_json(j.at("profile"));
  r.profile_after = j.contains("profile_after") ? profile_from_json(j["profile_after"]) : r.profile;
  if (!j.contains("goals") || !j["goals"].is_array()) throw SchemaError("goals must be a list");
  bool any_op = false;
  bool all_init = true;
  for (const auto& g : j["goals"]) {
    Goal goal;
    goal.type = parse_dialog_type(required_string(g, "type"));
    goal.topic = required_string(g, "topic");
    goal.description = g.value("description", std::string{});
    r.goals.push_back(std::move(goal));
    const auto op = parse_interaction_op(g.value("operation", std::string("none")));
    any_op = any_op || op != InteractionOp::None;
    r.operations.push_back(op);
    if (g.contains("initiator")) {
      const auto who = required_string(g, "initiator");
      if (who != "seeker" && who != "recommender") throw SchemaError("bad initiator " + who);
      r.initiators.push_back(who == "seeker" ? Initiator::Seeker : Initiator::Recommender);
    } else {
      all_init = false;
    }
  }
  if (!any_op) r.operations.clear();
  if (!all_init) r.initiators.clear();
  r.knowledge = j.contains("knowledge") ? triples_from_json(j["knowledge"])
                                        : std::vector<KnowledgeTriple>{};
  if (!j.contains("turns") || !j["turns"].is_array()) throw SchemaError("turns must be a list");
  for (const auto& t : j["turns"]) {
    Utterance u;
    u.speaker = parse_speaker(required_string(t, "speaker"));
    u.text = required_string(t, "text");
    if (!t.contains("goal_index") || !t["goal_index"].is_number_unsigned()) {
      throw SchemaError("goal_index must be a non-negative integer");
    }
    u.goal_index = t["goal_index"].get<std::size_t>();
    if (t.contains("knowledge")) u.knowledge = triples_from_json(t["knowledge"]);
    r.turns.push_back(std::move(u));
  }
  validate_record(r);
  return r;
}

namespace {

std::string trim(std::string s) {
  const auto b = s.find_first_not_of(" \t");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t");
  return s.substr(b, e - b + 1);
}

DialogType release_type(const std::string& name) {
  if (name.find("问答") != std::string::npos) return DialogType::QA;
  if (name.find("推荐") != std::string::npos && name.find("请求") == std::string::npos) {
    return DialogType::Recommendation;
  }
  if (name.find("聊") != std::string::npos || name.find("寒暄") != std::string::npos) {
    return DialogType::Chitchat;
  }
  return DialogType::Task;
}

// Parses "[1] 问答 ( User 主动 ... 『 topic 』 ... ) --> [2] ..." goal strings.
std::vector<std::pair<Goal, Initiator>> parse_release_goals(const std::string& text) {
  std::vector<std::pair<Goal, Initiator>> out;
  std::size_t pos = 0;
  while ((pos = text.find('[', pos)) != std::string::npos) {
    const auto close = text.find(']', pos);
    if (close == std::string::npos) break;
    const auto next = text.find("-->", close);
    const std::string body =
        text.substr(close + 1, next == std::string::npos ? std::string::npos : next - close - 1);
    const auto paren = body.find('(');
    Goal g;
    g.type = release_type(trim(body.substr(0, paren)));
    const std::string open_q = "『";
    const std::string close_q = "』";
    const auto a = body.find(open_q);
    const auto b = a == std::string::npos ? a : body.find(close_q, a);
    g.topic = (a != std::string::npos && b != std::string::npos)
                  ? trim(body.substr(a + open_q.size(), b - a - open_q.size()))
                  : trim(body.substr(0, paren));
    if (g.topic.empty()) g.topic = std::string(to_string(g.type));
    g.description = trim(paren == std::string::npos ? std::string{} : body.substr(paren));
    const Initiator who = body.find("User 主动") != std::string::npos ? Initiator::Seeker
                                                                      : Initiator::Recommender;
    out.emplace_back(std::move(g), who);
    if (next == std::string::npos) break;
    pos = next;
  }
  return out;
}

}  // namespace

DialogRecord record_from_release_json(const json& j, std::size_t line) {
  DialogRecord r;
  try {
    const auto& conv = j.at("conversation");
    if (!conv.is_array()) throw SchemaError("conversation must be a list");
    std::vector<std::pair<Goal, Initiator>> goals;
    if (j.contains("goal") && j["goal"].is_string()) {
      goals = parse_release_goals(j["goal"].get<std::string>());
    } else if (j.contains("goal") && j["goal"].is_array()) {
      for (const auto& g : j["goal"]) {
        Goal goal;
        if (g.is_array() && g.size() >= 2) {
          goal.type = release_type(g[0].get<std::string>());
          goal.topic = g[1].is_string() ? g[1].get<std::string>() : g[1].dump();
        } else {
          throw SchemaError("goal list entries must be [type, topic, ...]");
        }
        goals.emplace_back(std::move(goal), Initiator::Recommender);
      }
    }
    if (goals.empty()) goals.emplace_back(Goal{DialogType::Chitchat, "chitchat", ""}, Initiator::Recommender);
    for (auto& [g, who] : goals) {
      r.goals.push_back(g);
      r.initiators.push_back(who);
    }
    const auto& kg = j.contains("knowledge") ? j["knowledge"] : j.value("kg", json::array());
    r.knowledge = triples_from_json(kg);
    if (j.contains("user_profile") && j["user_profile"].is_object()) {
      const auto& up = j["user_profile"];
      for (const char* key : {"姓名", "name"}) {
        if (up.contains(key) && up[key].is_string()) r.profile.name = up[key];
      }
      for (const char* key : {"居住地", "city"}) {
        if (up.contains(key) && up[key].is_string()) r.profile.city = up[key];
      }
      for (const char* key : {"性别", "gender"}) {
        if (up.contains(key) && up[key].is_string()) r.profile.gender = up[key];
      }
      for (const char* key : {"年龄区间", "age_range"}) {
        if (up.contains(key) && up[key].is_string()) r.profile.age_range = up[key];
      }
    }
    r.seeker_id = j.value("seeker_id", r.profile.name.empty() ? std::string("seeker") : r.profile.name);
    r.profile.seeker_id = r.seeker_id;
    r.profile_after = r.profile;

    Speaker speaker =
        r.initiators.front() == Initiator::Seeker ? Speaker::Seeker : Speaker::Recommender;
    std::size_t goal_index = 0;
    for (const auto& item : conv) {
      std::string text = item.get<std::string>();
      std::string t = trim(text);
      if (t.size() > 2 && t[0] == '[') {
        const auto close = t.find(']');
        if (close != std::string::npos) {
          try {
            const auto k = std::stoul(t.substr(1, close - 1));
            if (k >= 1) goal_index = std::max(goal_index, std::min<std::size_t>(k - 1, r.goals.size() - 1));
            t = trim(t.substr(close + 1));
          } catch (const std::exception&) {
          }
        }
      }
      if (t.empty()) t = text;
      r.turns.push_back({speaker, t, goal_index, {}});
      speaker = speaker == Speaker::Seeker ? Speaker::Recommender : Speaker::Seeker;
    }
  } catch (const SchemaError& e) {
    throw SchemaError("line " + std::to_string(line) + ": " + e.what());
  } catch (const json::exception& e) {
    throw SchemaError("line " + std::to_string(line) + ": " + e.what());
  }
  return r;
}

std::vector<DialogRecord> load_corpus(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open corpus " + path);
  std::vector<DialogRecord> records;
  std::map<std::string, std::size_t> release_counter;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    json j;
    try {
      j = json::parse(line);
    } catch (const json::parse_error& e) {
      throw SchemaError("line " + std::to_string(lineno) + ": " + e.what());
    }
    if (j.is_object() && j.contains("conversation")) {
      auto r = record_from_release_json(j, lineno);
      r.dialog_index = release_counter[r.seeker_id]++;
      records.push_back(std::move(r));
      continue;
    }
    try {
      records.push_back(record_from_json(j));
    } catch (const SchemaError& e) {
      throw SchemaError("line " + std::to_string(lineno) + ": " + e.what());
    } catch (const json::exception& e) {
      throw SchemaError("line " + std::to_string(lineno) + ": " + e.what());
    }
  }
  std::stable_sort(records.begin(), records.end(), [](const auto& a, const auto& b) {
    if (a.seeker_id != b.seeker_id) return a.seeker_id < b.seeker_id;
    return a.dialog_index < b.dialog_index;
  });
  return records;
}

void save_corpus(const std::vector<DialogRecord>& records, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw Error("cannot write " + path);
  for (const auto& r : records) out << record_to_json(r).dump() << '\n';
}

CorpusStats corpus_stats(const std::vector<DialogRecord>& records) {
  CorpusStats s;
  std::set<std::string> seekers;
  for (const auto& r : records) {
    ++s.dialogs;
    s.utterances += r.turns.size();
    seekers.insert(r.seeker_id);
    for (const auto& g : r.goals) ++s.sub_dialogs[g.type];
    for (const auto& g : r.goals) {
      if (g.type == DialogType::Recommendation) ++s.recommended;
    }
    s.accepted += r.profile_after.accepted_entities.size() -
                  std::min(r.profile_after.accepted_entities.size(),
                           r.profile.accepted_entities.size());
    s.rejected += r.profile_after.rejected_entities.size() -
                  std::min(r.profile_after.rejected_entities.size(),
                           r.profile.rejected_entities.size());
  }
  s.seekers = seekers.size();
  return s;
}

CorpusSplit split_by_seeker(const std::vector<DialogRecord>& records, SplitRatios ratios,
                            std::uint64_t seed) {
  if (std::abs(ratios.train + ratios.dev + ratios.test - 1.0) > 1e-9) {
    throw ConfigError("split ratios must sum to 1");
  }
  if (ratios.train <= 0 || ratios.dev <= 0 || ratios.test <= 0) {
    throw ConfigError("every split ratio must be positive; a split would be empty");
  }
  std::set<std::string> unique;
  for (const auto& r : records) unique.insert(r.seeker_id);
  std::vector<std::string> seekers(unique.begin(), unique.end());
  const std::size_t n = seekers.size();
  if (n < 3) throw ConfigError("need at least 3 seekers to populate train/dev/test");

  Rng rng(mix_seed(seed, 0x5b1e));
  rng.shuffle(seekers);
  auto floor_count = [n](double r) {
    return std::max<std::size_t>(1, static_cast<std::size_t>(std::floor(r * static_cast<double>(n) + 1e-9)));
  };
  const std::size_t n_dev = floor_count(ratios.dev);
  const std::size_t n_test = floor_count(ratios.test);
  if (n_dev + n_test >= n) throw ConfigError("split leaves the training set empty");

  CorpusSplit split;
  split.dev_seekers.assign(seekers.begin(), seekers.begin() + static_cast<std::ptrdiff_t>(n_dev));
  split.test_seekers.assign(seekers.begin() + static_cast<std::ptrdiff_t>(n_dev),
                            seekers.begin() + static_cast<std::ptrdiff_t>(n_dev + n_test));
  split.train_seekers.assign(seekers.begin() + static_cast<std::ptrdiff_t>(n_dev + n_test),
                             seekers.end());
  for (auto* v : {&split.train_seekers, &split.dev_seekers, &split.test_seekers}) {
    std::sort(v->begin(), v->end());
  }
  const std::set<std::string> dev(split.dev_seekers.begin(), split.dev_seekers.end());
  const std::set<std::string> test(split.test_seekers.begin(), split.test_seekers.end());
  for (const auto& r : records) {
    if (dev.count(r.seeker_id)) {
      split.dev.push_back(r);
    } else if (test.count(r.seeker_id)) {
      split.test.push_back(r);
    } else {
      split.train.push_back(r);
    }
  }
  return split;
}

std::vector<TrainingExample> extract_training_examples(const DialogRecord& record,
                                                       std::size_t knowledge_limit) {
  std::vector<TrainingExample> out;
  const auto subset = KnowledgeGraph::from_triples(record.knowledge);
  for (std::size_t j = 1; j < record.turns.size(); ++j) {
    const auto& y = record.turns[j];
    if (y.speaker != Speaker::Recommender) continue;
    TrainingExample ex;
    ex.seeker_id = record.seeker_id;
    ex.dialog_index = record.dialog_index;
    ex.turn_index = j;
    ex.context.assign(record.turns.begin(), record.turns.begin() + static_cast<std::ptrdiff_t>(j));
    ex.response = y;
    ex.goal = record.goals[y.goal_index];
    const auto prev_index = record.turns[j - 1].goal_index;
    ex.previous_goal = record.goals[prev_index];
    ex.goal_history.assign(record.goals.begin(),
                           record.goals.begin() + static_cast<std::ptrdiff_t>(prev_index + 1));
    ex.completion_label = y.goal_index != prev_index;
    ex.knowledge = candidate_knowledge(subset, DialogueContext{ex.context}, ex.goal, knowledge_limit);
    ex.profile = record.profile;
    out.push_back(std::move(ex));
  }
  return out;
}

std::vector<TrainingExample> extract_training_examples(const std::vector<DialogRecord>& records,
                                                       std::size_t knowledge_limit) {
  std::vector<TrainingExample> out;
  for (const auto& r : records) {
    auto ex = extract_training_examples(r, knowledge_limit);
    out.insert(out.end(), std::make_move_iterator(ex.begin()), std::make_move_iterator(ex.end()));
  }
  return out;
}

CandidatePool build_candidate_pool(const TrainingExample& example,
                                   const std::vector<std::string>& train_responses,
                                   std::uint64_t seed) {
  const std::string& gold = example.response.text;
  std::set<std::string> distinct(train_responses.begin(), train_responses.end());
  distinct.erase(gold);
  if (distinct.size() < kPoolSize - 1) {
    throw ConfigError("candidate pool needs at least 9 distinct distractors, have " +
                      std::to_string(distinct.size()));
  }
  // Shuffle the raw list (repeats kept, so frequent responses are drawn
  // proportionally) and take the first nine distinct non-gold texts.
  Rng rng(mix_seed(seed, 0xca4d));
  std::vector<std::size_t> order(train_responses.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  rng.shuffle(order);
  std::vector<std::string> usable;
  std::set<std::string> seen{gold};
  for (const auto i : order) {
    if (usable.size() == kPoolSize - 1) break;
    if (seen.insert(train_responses[i]).second) usable.push_back(train_responses[i]);
  }
  CandidatePool pool;
  pool.candidates.assign(usable.begin(), usable.begin() + static_cast<std::ptrdiff_t>(kPoolSize - 1));
  pool.gold_index = rng.uniform_index(kPoolSize);
  pool.candidates.insert(pool.candidates.begin() + static_cast<std::ptrdiff_t>(pool.gold_index), gold);
  return pool;
}

std::vector<std::string> response_bank(const std::vector<TrainingExample>& examples) {
  std::vector<std::string> out;
  out.reserve(examples.size());
  for (const auto& ex : examples) out.push_back(ex.response.text);
  return out;
}

TrainingExample ablate(const TrainingExample& example, bool drop_goal, bool drop_knowledge) {
  TrainingExample out = example;
  if (drop_goal) {
    out.goal.topic = kUnkToken;
    out.goal.description.clear();
    out.goal_masked = true;
  }
  if (drop_knowledge) {
    out.knowledge.clear();
    out.knowledge_masked = true;
  }
  return out;
}

}  // namespace mgcg
