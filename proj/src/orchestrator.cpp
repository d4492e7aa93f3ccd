#include "mgcg/orchestrator.hpp"

#include <algorithm>
#include <set>

#include "mgcg/errors.hpp"
#include "mgcg/synth.hpp"

namespace mgcg {

namespace {

nlohmann::json triple_json(const KnowledgeTriple& t) {
  return {{"subject", t.subject}, {"predicate", t.predicate}, {"object", t.object},
          {"text", join_tokens(linearize(t))}};
}

nlohmann::json goal_json(const Goal& g) {
  return {{"type", std::string(to_string(g.type))}, {"topic", g.topic}};
}

bool mentions(const Tokens& text, const std::string& phrase) {
  const auto p = tokenize(phrase);
  return !p.empty() && contains_subsequence(text, p);
}

int ranged(const nlohmann::json& j, const char* key, int lo, int hi, bool required) {
  if (!j.contains(key)) {
    if (required) throw SchemaError(std::string("rating: missing ") + key);
    return 0;
  }
  const auto& v = j.at(key);
  if (!v.is_number_integer()) throw SchemaError(std::string("rating: ") + key + " must be an integer");
  const int x = v.get<int>();
  if (x < lo || x > hi) {
    throw SchemaError(std::string("rating: ") + key + " must be in [" + std::to_string(lo) + "," +
                      std::to_string(hi) + "]");
  }
  return x;
}

/// Bank entries sharing the most tokens with the goal topic and the turn's
/// knowledge, stable in bank order; distinct texts only.
std::vector<std::string> prefilter(const std::vector<std::string>& bank, const Goal& goal,
                                   const std::vector<KnowledgeTriple>& knowledge, std::size_t n) {
  std::set<std::string> cue;
  for (auto&& t : tokenize(goal.topic)) cue.insert(t);
  for (const auto& k : knowledge) {
    for (auto&& t : tokenize(k.subject)) cue.insert(t);
    for (auto&& t : tokenize(k.object)) cue.insert(t);
  }
  std::vector<std::pair<std::size_t, std::size_t>> scored;  // (score, bank index)
  std::set<std::string> seen;
  for (std::size_t i = 0; i < bank.size(); ++i) {
    if (!seen.insert(bank[i]).second) continue;
    std::set<std::string> toks;
    for (auto&& t : tokenize(bank[i])) toks.insert(t);
    std::size_t s = 0;
    for (const auto& t : toks) s += cue.count(t);
    scored.push_back({s, i});
  }
  std::stable_sort(scored.begin(), scored.end(), [](const auto& a, const auto& b) { return a.first > b.first; });
  std::vector<std::string> out;
  for (std::size_t i = 0; i < scored.size() && out.size() < n; ++i) out.push_back(bank[scored[i].second]);
  return out;
}

}  // namespace

void Pipeline::check() const {
  if (!graph || !planner) throw ConfigError("pipeline: graph and planner are required");
  if ((ranker != nullptr) == (generator != nullptr)) {
    throw ConfigError("pipeline: bind exactly one responder");
  }
  if (ranker && response_bank.empty()) throw ConfigError("pipeline: retrieval needs a response bank");
}

std::string Pipeline::responder_name() const { return ranker ? "retrieval" : "generation"; }

nlohmann::json TurnRecord::to_json() const {
  nlohmann::json j{{"speaker", std::string(to_string(speaker))}, {"text", text}};
  if (goal) {
    j["goal"] = goal_json(*goal);
    j["template_index"] = template_index;
    j["completion_prob"] = completion_prob;
    j["planned"] = planned;
    auto kn = nlohmann::json::array();
    for (const auto& k : knowledge) kn.push_back(triple_json(k));
    j["knowledge"] = kn;
    j["knowledge_weights"] = knowledge_weights;
    auto used = nlohmann::json::array();
    for (const auto& k : used_knowledge) used.push_back(triple_json(k));
    j["used_knowledge"] = used;
  }
  return j;
}

Rating Rating::from_json(const nlohmann::json& j) {
  if (!j.is_object()) throw SchemaError("rating: expected an object");
  Rating r;
  r.goal_success = ranged(j, "goal_success", 0, 2, true);
  r.coherence = ranged(j, "coherence", 0, 2, true);
  if (j.contains("turns")) {
    if (!j.at("turns").is_array()) throw SchemaError("rating: turns must be an array");
    for (const auto& t : j.at("turns")) {
      if (!t.is_object() || !t.contains("turn") || !t.at("turn").is_number_integer() ||
          t.at("turn").get<long long>() < 0) {
        throw SchemaError("rating: each turn rating needs a non-negative turn index");
      }
      TurnRating tr;
      tr.turn = t.at("turn").get<std::size_t>();
      tr.fluency = ranged(t, "fluency", 0, 2, true);
      tr.appropriateness = ranged(t, "appropriateness", 0, 2, true);
      tr.informativeness = ranged(t, "informativeness", 0, 2, true);
      tr.proactivity = ranged(t, "proactivity", -1, 1, true);
      r.turns.push_back(tr);
    }
  }
  return r;
}

nlohmann::json Rating::to_json() const {
  nlohmann::json j{{"goal_success", goal_success}, {"coherence", coherence}};
  if (!turns.empty()) {
    auto arr = nlohmann::json::array();
    for (const auto& t : turns) {
      arr.push_back({{"turn", t.turn},
                     {"fluency", t.fluency},
                     {"appropriateness", t.appropriateness},
                     {"informativeness", t.informativeness},
                     {"proactivity", t.proactivity}});
    }
    j["turns"] = arr;
  }
  return j;
}

Session::Session(std::string id, std::string model, TaskTemplate tmpl, SeekerProfile profile)
    : id_(std::move(id)), model_(std::move(model)), template_(std::move(tmpl)), profile_(std::move(profile)) {
  if (template_.goals.empty()) throw ConfigError("session: template has no goals");
}

void Session::set_rating(Rating r) {
  if (rating_) throw ConflictError("session " + id_ + " is already rated");
  rating_ = std::move(r);
}

bool Session::bot_opens() const {
  return !template_.initiators.empty() && template_.initiators.front() == Initiator::Recommender;
}

nlohmann::json Session::state_json() const {
  auto turns = nlohmann::json::array();
  for (const auto& t : transcript_) turns.push_back(t.to_json());
  nlohmann::json j{{"session_id", id_},
                   {"model", model_},
                   {"template_id", template_.id},
                   {"template_cursor", cursor_},
                   {"transcript", turns},
                   {"closed", closed_},
                   {"rated", rating_.has_value()}};
  if (active_) j["active_goal"] = goal_json(*active_);
  return j;
}

namespace {

TurnRecord bot_turn(Session& s, const Pipeline& p, std::vector<Utterance>& context,
                    std::vector<Goal>& history, std::optional<Goal>& active, std::size_t& cursor,
                    const TaskTemplate& tmpl, const SeekerProfile& profile) {
  TurnRecord r;
  r.speaker = Speaker::Recommender;
  if (!active) {
    r.goal = tmpl.goals.front();
    cursor = 0;
  } else {
    const PlannerInput in{context, *active, history, profile};
    const auto d = p.planner->plan_next(in, p.completion_stub);
    r.completion_prob = d.completion_prob;
    r.planned = true;
    r.goal = d.chosen;
    for (std::size_t j = cursor; j < tmpl.goals.size(); ++j) {
      if (tmpl.goals[j] == d.chosen) {
        cursor = j;
        break;
      }
    }
  }
  if (!active || !(*active == *r.goal)) history.push_back(*r.goal);
  active = r.goal;
  r.template_index = cursor;
  r.knowledge = candidate_knowledge(*p.graph, DialogueContext{context}, *r.goal, p.knowledge_limit);
  const ResponderInput in{context, *r.goal, false, r.knowledge};
  if (p.generator) {
    const auto g = p.generator->generate(in, p.beam);
    r.text = g.text;
    r.knowledge_weights.assign(g.knowledge_weights.data(), g.knowledge_weights.data() + g.knowledge_weights.size());
  } else {
    CandidatePool pool{prefilter(p.response_bank, *r.goal, r.knowledge, p.retrieval_candidates), 0};
    const auto ranked = p.ranker->rank(in, pool);
    const auto& top = ranked.candidates.front();
    r.text = top.text;
    r.knowledge_weights.assign(top.knowledge_weights.data(),
                               top.knowledge_weights.data() + top.knowledge_weights.size());
  }
  const auto reply = tokenize(r.text);
  for (const auto& k : r.knowledge) {
    if (knowledge_used(reply, k)) r.used_knowledge.push_back(k);
  }
  context.push_back({Speaker::Recommender, r.text, cursor, r.used_knowledge});
  (void)s;
  return r;
}

}  // namespace

TurnRecord respond(Session& s, const Pipeline& p, const std::string& user_utterance) {
  if (s.closed_) throw SessionClosedError("session " + s.id_ + " is closed");
  p.check();
  TurnRecord user;
  user.speaker = Speaker::Seeker;
  user.text = user_utterance;
  s.context_.push_back({Speaker::Seeker, user_utterance, s.cursor_, {}});
  s.transcript_.push_back(user);
  auto r = bot_turn(s, p, s.context_, s.history_, s.active_, s.cursor_, s.template_, s.profile_);
  s.transcript_.push_back(r);
  return r;
}

TurnRecord open_turn(Session& s, const Pipeline& p) {
  if (s.closed_) throw SessionClosedError("session " + s.id_ + " is closed");
  p.check();
  auto r = bot_turn(s, p, s.context_, s.history_, s.active_, s.cursor_, s.template_, s.profile_);
  s.transcript_.push_back(r);
  return r;
}

namespace {

std::vector<KnowledgeTriple> facts(const KnowledgeGraph& g, const std::string& e) {
  std::vector<KnowledgeTriple> out;
  if (!g.contains_entity(e)) return out;
  for (const auto id : g.subject_triples(e)) out.push_back(g.triples()[id]);
  return out;
}

}  // namespace

RolloutResult run_simulated_dialog(const Pipeline& p, const TaskTemplate& tmpl, const SeekerProfile& profile,
                                   std::uint64_t seed, std::size_t turn_cap, std::size_t patience) {
  p.check();
  Rng rng(mix_seed(seed, 0x5ee4));
  Session session("rollout", p.responder_name(), tmpl, profile);
  RolloutResult out;
  out.template_id = tmpl.id;
  for (const auto& g : tmpl.goals) out.goals.push_back({g.type, g.topic, false, false});
  const std::size_t n = tmpl.goals.size();
  auto op_of = [&](std::size_t i) {
    return i < tmpl.operations.size() ? tmpl.operations[i] : InteractionOp::Accept;
  };

  std::size_t gi = 0, tries = 0, utterances = 0;
  int stage = 0;  // per-goal script position
  std::optional<KnowledgeTriple> asked;
  auto ask = [&](const std::string& topic) {
    auto f = facts(*p.graph, topic);
    if (f.empty()) return std::string("Tell me more about ") + topic + " .";
    asked = rng.pick(f);
    return phrases::seeker_question(*asked);
  };
  auto opening = [&](std::size_t i) -> std::string {
    const auto& g = tmpl.goals[i];
    switch (g.type) {
      case DialogType::QA: stage = 1; return ask(g.topic);
      case DialogType::Task:
        stage = 1;
        return phrases::seeker_task_request(p.graph->domain_of(g.topic).value_or("poi"), g.topic);
      default: return phrases::seeker_greeting();
    }
  };
  std::string next = session.bot_opens() ? "" : opening(0);
  if (session.bot_opens()) {
    out.transcript.push_back(open_turn(session, p));
    ++utterances;
    next = phrases::seeker_greeting();
  }

  auto finish = [&](bool completed, std::string transition) {
    out.goals[gi].completed = completed;
    out.events.push_back({utterances, completed ? "completed" : "failed", gi, tmpl.goals[gi].topic});
    ++gi;
    tries = 0;
    stage = 0;
    asked.reset();
    next = std::move(transition);
  };

  while (gi < n) {
    if (utterances + 2 > turn_cap) {
      out.capped = true;
      out.events.push_back({utterances, "cap", gi, tmpl.goals[gi].topic});
      break;
    }
    const auto bot = respond(session, p, next);
    const auto& turns = session.transcript();
    out.transcript.push_back(turns[turns.size() - 2]);
    out.transcript.push_back(bot);
    utterances += 2;
    ++tries;

    const auto& goal = tmpl.goals[gi];
    const auto& T = goal.topic;
    const auto reply = tokenize(bot.text);
    for (const auto& k : bot.used_knowledge) {
      if (k.subject == T || k.object == T) out.goals[gi].knowledge_used = true;
    }
    bool on_topic = mentions(reply, T);
    if (!on_topic) {
      for (const auto& f : facts(*p.graph, T)) on_topic = on_topic || mentions(reply, f.object);
    }
    const bool last = gi + 1 == n;
    auto closing = [&] { return last ? std::string() : phrases::seeker_closing(goal.type, T, rng); };

    bool advanced = false;
    switch (goal.type) {
      case DialogType::QA:
        if (stage == 1 && asked && mentions(reply, asked->object)) {
          finish(true, closing());
          advanced = true;
        } else if (stage == 0) {
          stage = 1;
          next = ask(T);
        } else {
          next = phrases::seeker_question(*asked);
        }
        break;
      case DialogType::Chitchat:
        if (stage == 1) {
          finish(true, closing());
          advanced = true;
        } else if (on_topic) {
          stage = 1;
          next = phrases::seeker_more(T, rng);
        } else {
          next = "Tell me more about " + T + " .";
        }
        break;
      case DialogType::Task:
        if (mentions(reply, T) && stage == 1) {
          finish(true, closing());
          advanced = true;
        } else if (mentions(reply, T)) {
          stage = 1;
          next = "Yes , please .";
        } else {
          stage = 1;
          next = phrases::seeker_task_request(p.graph->domain_of(T).value_or("poi"), T);
        }
        break;
      case DialogType::Recommendation:
        if (stage == 1) {
          // answer to the follow-up question received
          finish(true, phrases::seeker_accept(T, rng));
          advanced = true;
        } else if (mentions(reply, T)) {
          switch (op_of(gi)) {
            case InteractionOp::RejectInitial:
              out.events.push_back({utterances, "rejection", gi, T});
              finish(true, phrases::seeker_reject(T, rng));
              advanced = true;
              break;
            case InteractionOp::NewTopic:
              finish(true, last ? phrases::seeker_accept(T, rng) : phrases::seeker_new_topic(tmpl.goals[gi + 1].topic));
              advanced = true;
              break;
            case InteractionOp::AskQuestion:
              out.goals[gi].completed = true;
              stage = 1;
              next = ask(T);
              break;
            default:
              finish(true, phrases::seeker_accept(T, rng));
              advanced = true;
          }
        } else {
          next = "Do you have anything to recommend ?";
        }
        break;
    }
    if (!advanced && tries >= patience) {
      finish(out.goals[gi].completed, closing());
    }
  }
  // the seeker's last reaction gets one closing bot turn
  if (!out.capped && !next.empty() && utterances + 2 <= turn_cap) {
    const auto bot = respond(session, p, next);
    const auto& turns = session.transcript();
    out.transcript.push_back(turns[turns.size() - 2]);
    out.transcript.push_back(bot);
  }
  if (out.capped) {
    for (std::size_t i = gi; i < n; ++i) out.events.push_back({utterances, "failed", i, tmpl.goals[i].topic});
  }
  return out;
}

}  // namespace mgcg
