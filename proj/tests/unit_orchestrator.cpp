#include <filesystem>
#include <fstream>
#include <thread>

#include "doctest.h"
#include "mgcg/errors.hpp"
#include "mgcg/features.hpp"
#include "mgcg/orchestrator.hpp"
#include "mgcg/serve/service.hpp"
#include "mgcg/synth.hpp"

// kept after the Eigen-based headers: the reverse order breaks Eigen's product kernels with g++ 11
#include "httplib.h"

using namespace mgcg;
using nlohmann::json;

namespace {

struct Fixture {
  SyntheticCorpus corpus;
  std::vector<TrainingExample> examples;
  Vocab vocab;
  std::unique_ptr<GoalPlanner> planner;
  std::unique_ptr<Ranker> ranker;
  std::unique_ptr<Generator> generator;

  Fixture() {
    SynthConfig cfg;
    cfg.n_seekers = 4;
    cfg.dialogs_per_seeker = 2;
    cfg.graph_size = 60;
    corpus = generate_synthetic_corpus(cfg);
    examples = extract_training_examples(corpus.records);
    vocab = build_vocab(corpus.records);
    PlannerConfig pc;
    pc.emb_dim = 8;
    pc.filters = 4;
    pc.hidden = 8;
    pc.topic_dim = 4;
    planner = std::make_unique<GoalPlanner>(vocab, corpus.graph, pc);
    RankerConfig rc;
    rc.dim = 8;
    rc.heads = 2;
    rc.layers = 1;
    rc.ffn = 8;
    rc.knowledge_hidden = 4;
    rc.goal_hidden = 4;
    rc.mlp_hidden = 8;
    ranker = std::make_unique<Ranker>(vocab, rc);
    GeneratorConfig gc;
    gc.emb_dim = 8;
    gc.enc_hidden = 4;
    gc.goal_hidden = 4;
    gc.dec_hidden = 8;
    gc.mlp_hidden = 8;
    gc.max_len = 10;
    gc.beam = 2;
    generator = std::make_unique<Generator>(vocab, gc);
  }

  Pipeline retrieval(CompletionStub stub = {}) const {
    Pipeline p;
    p.graph = &corpus.graph;
    p.planner = planner.get();
    p.ranker = ranker.get();
    p.response_bank = response_bank(examples);
    p.completion_stub = std::move(stub);
    return p;
  }

  Pipeline generation(CompletionStub stub = {}) const {
    Pipeline p;
    p.graph = &corpus.graph;
    p.planner = planner.get();
    p.generator = generator.get();
    p.completion_stub = std::move(stub);
    return p;
  }

  const DialogRecord& seeker_opened() const {
    for (const auto& r : corpus.records) {
      if (!r.initiators.empty() && r.initiators.front() == Initiator::Seeker) return r;
    }
    return corpus.records.front();
  }
};

const Fixture& fixture() {
  static const Fixture f;
  return f;
}

CompletionStub constant(double p) {
  return [p](const PlannerInput&) { return p; };
}

serve::ChatService make_service(const std::string& ratings_path = "") {
  const auto& f = fixture();
  std::map<std::string, Pipeline> models{{"MGCG_R", f.retrieval()}, {"MGCG_G", f.generation()}};
  std::vector<serve::ServiceTask> tasks;
  for (std::size_t i = 0; i < 3; ++i) {
    const auto& r = f.corpus.records[i];
    tasks.push_back({r.task_template(), r.profile});
  }
  serve::ServiceConfig cfg;
  cfg.ratings_path = ratings_path;
  return serve::ChatService(std::move(models), std::move(tasks), cfg);
}

json rating_body(int goal_success, int coherence) {
  return {{"goal_success", goal_success},
          {"coherence", coherence},
          {"turns", json::array({{{"turn", 1}, {"fluency", 2}, {"appropriateness", 1},
                                  {"informativeness", 0}, {"proactivity", -1}}})}};
}

}  // namespace

TEST_SUITE("orchestrator") {
  TEST_CASE("pipeline wiring is checked") {
    const auto& f = fixture();
    auto p = f.retrieval();
    CHECK_NOTHROW(p.check());
    CHECK(p.responder_name() == "retrieval");
    p.generator = f.generator.get();
    CHECK_THROWS_AS(p.check(), ConfigError);
    p.generator = nullptr;
    p.response_bank.clear();
    CHECK_THROWS_AS(p.check(), ConfigError);
    auto g = f.generation();
    g.planner = nullptr;
    CHECK_THROWS_AS(g.check(), ConfigError);
  }

  TEST_CASE("first turn takes the template's first goal") {
    const auto& f = fixture();
    const auto& rec = f.seeker_opened();
    Session s("s", "MGCG_R", rec.task_template(), rec.profile);
    const auto p = f.retrieval();
    const auto bot = respond(s, p, "hello");
    REQUIRE(bot.goal);
    CHECK(*bot.goal == rec.goals.front());
    CHECK(bot.completion_prob == 0.5);
    CHECK_FALSE(bot.planned);
    CHECK(bot.template_index == 0);
    CHECK_FALSE(bot.text.empty());
    CHECK(s.transcript().size() == 2);
    CHECK(s.context().size() == 2);
    CHECK(s.context().back().text == bot.text);
    for (const auto& k : bot.used_knowledge) {
      CHECK(knowledge_used(tokenize(bot.text), k));
    }
  }

  TEST_CASE("a low completion probability keeps the goal") {
    const auto& f = fixture();
    const auto& rec = f.seeker_opened();
    for (const auto& p : {f.retrieval(constant(0.2)), f.generation(constant(0.2))}) {
      Session s("s", "m", rec.task_template(), rec.profile);
      respond(s, p, "hello");
      for (int i = 0; i < 4; ++i) {
        const auto bot = respond(s, p, "tell me more");
        CHECK(bot.completion_prob == 0.2);
        CHECK(bot.planned);
        CHECK(*bot.goal == rec.goals.front());
        CHECK(bot.template_index == 0);
      }
      CHECK(s.goal_history().size() == 1);
    }
  }

  TEST_CASE("goals change on completion and template progress never goes back") {
    const auto& f = fixture();
    const auto& rec = f.seeker_opened();
    Session s("s", "m", rec.task_template(), rec.profile);
    const auto p = f.retrieval(constant(0.9));
    std::size_t last = 0;
    for (int i = 0; i < 6; ++i) {
      const auto bot = respond(s, p, "ok");
      CHECK(bot.template_index >= last);
      last = bot.template_index;
      CHECK(s.template_cursor() == bot.template_index);
    }
    CHECK(s.goal_history().size() >= 1);
  }

  TEST_CASE("closed sessions refuse new turns") {
    const auto& f = fixture();
    const auto& rec = f.seeker_opened();
    Session s("s", "m", rec.task_template(), rec.profile);
    s.close();
    CHECK_THROWS_AS(respond(s, f.retrieval(), "hi"), SessionClosedError);
    CHECK_THROWS_AS(open_turn(s, f.retrieval()), SessionClosedError);
    Rating r;
    s.set_rating(r);
    CHECK_THROWS_AS(s.set_rating(r), ConflictError);
    CHECK_THROWS_AS(Session("x", "m", TaskTemplate{}, SeekerProfile{}), ConfigError);
  }

  TEST_CASE("rating payloads are range checked") {
    CHECK_NOTHROW(Rating::from_json(rating_body(2, 0)));
    CHECK_THROWS_AS(Rating::from_json(rating_body(3, 0)), SchemaError);
    CHECK_THROWS_AS(Rating::from_json(rating_body(0, -1)), SchemaError);
    CHECK_THROWS_AS(Rating::from_json(json{{"coherence", 1}}), SchemaError);
    auto bad = rating_body(1, 1);
    bad["turns"][0]["proactivity"] = 2;
    CHECK_THROWS_AS(Rating::from_json(bad), SchemaError);
    const auto r = Rating::from_json(rating_body(1, 2));
    CHECK(Rating::from_json(r.to_json()).to_json() == r.to_json());
  }

  TEST_CASE("simulated rollout with a rejection") {
    const auto& f = fixture();
    // two linked entities: a chitchat topic and the recommendation after it
    std::string a, b;
    for (const auto& rec : f.corpus.records) {
      for (std::size_t i = 1; i < rec.goals.size() && a.empty(); ++i) {
        if (rec.goals[i].type == DialogType::Recommendation && f.corpus.graph.contains_entity(rec.goals[i - 1].topic)) {
          a = rec.goals[i - 1].topic;
          b = rec.goals[i].topic;
        }
      }
    }
    REQUIRE_FALSE(a.empty());
    TaskTemplate tmpl{"t", {{DialogType::Chitchat, a, ""}, {DialogType::Recommendation, b, ""}},
                      {Initiator::Seeker, Initiator::Recommender},
                      {InteractionOp::None, InteractionOp::RejectInitial}};
    auto p = f.retrieval(constant(0.9));
    p.response_bank.clear();
    for (int i = 0; i < 12; ++i) {
      p.response_bank.push_back(a + " is lovely , and I recommend " + b + " too , option " + std::to_string(i) + " .");
    }
    const auto out = run_simulated_dialog(p, tmpl, {}, 5);
    REQUIRE(out.goals.size() == 2);
    CHECK(out.goals[0].completed);
    CHECK(out.goals[1].completed);
    bool rejection = false;
    for (const auto& e : out.events) rejection |= e.kind == "rejection" && e.topic == b;
    CHECK(rejection);
    CHECK_FALSE(out.capped);
    CHECK(out.transcript.size() <= kTurnCap);
    const auto again = run_simulated_dialog(p, tmpl, {}, 5);
    CHECK(again.transcript.size() == out.transcript.size());
    for (std::size_t i = 0; i < out.transcript.size(); ++i) CHECK(again.transcript[i].text == out.transcript[i].text);
  }

  TEST_CASE("the utterance cap fails every open goal") {
    const auto& f = fixture();
    const auto& rec = f.corpus.records.front();
    const auto p = f.generation(constant(0.1));
    const auto out = run_simulated_dialog(p, rec.task_template(), rec.profile, 3, 6, 100);
    CHECK(out.capped);
    CHECK(out.transcript.size() <= 6);
    std::size_t failed = 0;
    bool cap = false;
    for (const auto& e : out.events) {
      failed += e.kind == "failed";
      cap |= e.kind == "cap";
    }
    CHECK(cap);
    std::size_t open = 0;
    for (const auto& g : out.goals) open += !g.completed;
    CHECK(open >= 1);
    const auto t = goal_completion_analysis({out.goals});
    CHECK(t.overall.completed + t.overall.failed == out.goals.size());
  }
}

TEST_SUITE("orchestrator") {
  TEST_CASE("session protocol over handle()") {
    auto svc = make_service();
    const auto tmpl_id = fixture().corpus.records[1].task_template().id;
    auto created = svc.handle("POST", "/api/session", json{{"model", "MGCG_R"}, {"template_id", tmpl_id}}.dump());
    REQUIRE(created.status == 201);
    CHECK(created.body["v"] == serve::kProtocolVersion);
    CHECK(created.body["template_id"] == tmpl_id);
    CHECK(created.body["session_id"].get<std::string>().size() == 16);
    const auto id = created.body["session_id"].get<std::string>();

    auto msg = svc.handle("POST", "/api/session/" + id + "/message", json{{"text", "hello there"}}.dump());
    REQUIRE(msg.status == 200);
    CHECK(msg.body["v"] == 1);
    CHECK(msg.body["reply"].is_string());
    CHECK(msg.body.contains("active_goal"));
    CHECK(msg.body["completion_prob"].is_number());
    CHECK(msg.body["used_knowledge"].is_array());

    auto state = svc.handle("GET", "/api/session/" + id + "/state", "");
    REQUIRE(state.status == 200);
    CHECK(state.body["transcript"].size() >= 2);
    CHECK(state.body["closed"] == false);

    CHECK(svc.handle("POST", "/api/session/" + id + "/rating", rating_body(3, 1).dump()).status == 400);
    CHECK(svc.handle("POST", "/api/session/" + id + "/rating", rating_body(2, 1).dump()).status == 201);
    const auto again = svc.handle("POST", "/api/session/" + id + "/rating", rating_body(2, 1).dump());
    CHECK(again.status == 409);
    CHECK(again.body["v"] == 1);
    CHECK(again.body.contains("error"));
    CHECK(svc.handle("POST", "/api/session/" + id + "/message", json{{"text", "hi"}}.dump()).status == 409);
    CHECK(svc.handle("GET", "/api/session/" + id + "/state", "").body["closed"] == true);
  }

  TEST_CASE("protocol errors") {
    auto svc = make_service();
    CHECK(svc.handle("POST", "/api/session", json{{"model", "nope"}}.dump()).status == 400);
    CHECK(svc.handle("POST", "/api/session", "{not json").status == 400);
    CHECK(svc.handle("POST", "/api/session", json{{"model", "MGCG_R"}, {"template_id", "missing"}}.dump()).status == 404);
    CHECK(svc.handle("GET", "/api/session/0000000000000000/state", "").status == 404);
    CHECK(svc.handle("POST", "/api/session/0000000000000000/message", json{{"text", "x"}}.dump()).status == 404);
    CHECK(svc.handle("GET", "/api/session", "").status == 405);
    CHECK(svc.handle("GET", "/api/unknown", "").status == 404);
    const auto id = svc.handle("POST", "/api/session", json{{"model", "MGCG_G"}}.dump()).body["session_id"].get<std::string>();
    CHECK(svc.handle("POST", "/api/session/" + id + "/message", json{{"text", "   "}}.dump()).status == 400);
    CHECK(svc.handle("POST", "/api/session/" + id + "/message", json{{"words", "x"}}.dump()).status == 400);
    auto far = rating_body(1, 1);
    far["turns"][0]["turn"] = 99;
    CHECK(svc.handle("POST", "/api/session/" + id + "/rating", far.dump()).status == 400);
  }

  TEST_CASE("rating summary averages and persists") {
    const auto path = (std::filesystem::temp_directory_path() / "mgcg_ratings.jsonl").string();
    std::filesystem::remove(path);
    {
      auto svc = make_service(path);
      const std::vector<std::pair<int, int>> scores{{2, 1}, {1, 1}, {0, 2}};
      for (const auto& [gs, coh] : scores) {
        const auto id = svc.handle("POST", "/api/session", json{{"model", "MGCG_R"}}.dump()).body["session_id"].get<std::string>();
        svc.handle("POST", "/api/session/" + id + "/message", json{{"text", "hello"}}.dump());
        REQUIRE(svc.handle("POST", "/api/session/" + id + "/rating", rating_body(gs, coh).dump()).status == 201);
      }
      const auto s = svc.handle("GET", "/api/ratings/summary", "");
      REQUIRE(s.status == 200);
      const auto& m = s.body["models"]["MGCG_R"];
      CHECK(m["ratings"] == 3);
      CHECK(m["goal_success"].get<double>() == doctest::Approx(1.0));
      CHECK(m["coherence"].get<double>() == doctest::Approx(4.0 / 3.0));
      CHECK(m["turn_level"]["fluency"].get<double>() == doctest::Approx(2.0));
      CHECK(m["turn_level"]["proactivity"].get<double>() == doctest::Approx(-1.0));
      CHECK_FALSE(s.body["models"].contains("MGCG_G"));
    }
    auto reloaded = make_service(path);
    const auto sum = reloaded.summary();
    REQUIRE(sum.count("MGCG_R"));
    CHECK(sum.at("MGCG_R").ratings == 3);
    std::ifstream in(path);
    std::string line;
    std::getline(in, line);
    const auto rec = json::parse(line);
    CHECK(rec["v"] == 1);
    CHECK(rec["transcript"].is_array());
    { std::ofstream(path, std::ios::app) << "{broken\n"; }
    CHECK_THROWS_AS(make_service(path), ParseError);
  }

  TEST_CASE("concurrent sessions stay independent") {
    auto svc = make_service();
    std::vector<std::string> ids;
    for (int i = 0; i < 2; ++i) {
      ids.push_back(svc.handle("POST", "/api/session", json{{"model", "MGCG_R"}}.dump()).body["session_id"].get<std::string>());
    }
    CHECK(ids[0] != ids[1]);
    std::vector<std::thread> threads;
    std::vector<int> ok(2, 0);
    for (int t = 0; t < 2; ++t) {
      threads.emplace_back([&, t] {
        for (int i = 0; i < 4; ++i) {
          const auto r = svc.handle("POST", "/api/session/" + ids[t] + "/message",
                                    json{{"text", "thread " + std::to_string(t) + " turn " + std::to_string(i)}}.dump());
          ok[t] += r.status == 200;
        }
      });
    }
    for (auto& th : threads) th.join();
    CHECK(ok[0] == 4);
    CHECK(ok[1] == 4);
    for (int t = 0; t < 2; ++t) {
      const auto st = svc.handle("GET", "/api/session/" + ids[t] + "/state", "").body;
      std::size_t seeker_turns = 0;
      for (const auto& turn : st["transcript"]) {
        if (turn["speaker"] == "seeker") {
          CHECK(turn["text"].get<std::string>().rfind("thread " + std::to_string(t), 0) == 0);
          ++seeker_turns;
        }
      }
      CHECK(seeker_turns == 4);
    }
    CHECK(svc.session_count() == 2);
  }

  TEST_CASE("live HTTP round trip") {
    auto svc = make_service();
    const int port = svc.bind_any_port("127.0.0.1");
    REQUIRE(port > 0);
    std::thread server([&] { svc.listen_bound(); });
    struct Joiner {
      serve::ChatService& svc;
      std::thread& t;
      ~Joiner() {
        svc.stop();
        if (t.joinable()) t.join();
      }
    } joiner{svc, server};
    httplib::Client client("127.0.0.1", port);
    client.set_read_timeout(60, 0);
    auto created = client.Post("/api/session", json{{"model", "MGCG_R"}}.dump(), "application/json");
    REQUIRE(created);
    CHECK(created->status == 201);
    CHECK(created->get_header_value("Access-Control-Allow-Origin") == "*");
    const auto id = json::parse(created->body)["session_id"].get<std::string>();
    auto msg = client.Post("/api/session/" + id + "/message", json{{"text", "hello"}}.dump(), "application/json");
    REQUIRE(msg);
    CHECK(msg->status == 200);
    CHECK(json::parse(msg->body)["v"] == 1);
    auto opts = client.Options("/api/session");
    REQUIRE(opts);
    CHECK(opts->status == 204);
    auto missing = client.Get("/api/session/ffffffffffffffff/state");
    REQUIRE(missing);
    CHECK(missing->status == 404);
    auto put = client.Put("/api/session", "{}", "application/json");
    REQUIRE(put);
    CHECK(put->status == 405);
  }
}
