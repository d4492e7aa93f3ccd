#include <filesystem>
#include <fstream>
#include <set>

#include "doctest.h"
#include "mgcg/corpus.hpp"
#include "mgcg/errors.hpp"
#include "mgcg/features.hpp"

using namespace mgcg;
namespace fs = std::filesystem;

namespace {

DialogRecord hand_record(const std::string& seeker, std::size_t index, bool bot_first = false) {
  DialogRecord r;
  r.seeker_id = seeker;
  r.dialog_index = index;
  r.profile.seeker_id = seeker;
  r.profile.name = "Name " + seeker;
  r.profile.preferred_domains = {"movie"};
  r.profile_after = r.profile;
  r.profile_after.accepted_entities = {"The message"};
  r.goals = {{DialogType::QA, "Stolen life", "ask the rating"},
             {DialogType::Chitchat, "Xun Zhou", ""},
             {DialogType::Recommendation, "The message", ""}};
  r.operations = {InteractionOp::None, InteractionOp::None, InteractionOp::Accept};
  r.initiators = {Initiator::Seeker, Initiator::Recommender, Initiator::Recommender};
  r.knowledge = {{"Stolen life", "rating", "8.1"},
                 {"Stolen life", "star", "Xun Zhou"},
                 {"Xun Zhou", "representative work", "The message"}};
  const Speaker first = bot_first ? Speaker::Recommender : Speaker::Seeker;
  const Speaker second = bot_first ? Speaker::Seeker : Speaker::Recommender;
  r.turns = {{first, "What is the rating of Stolen life ?", 0, {}},
             {second, "Stolen life has a rating of 8.1 .", 0, {r.knowledge[0]}},
             {first, "Great , thanks .", 0, {}},
             {second, "Xun Zhou stars in Stolen life .", 1, {r.knowledge[1]}},
             {first, "Sure , anything to watch ?", 1, {}},
             {second, "I recommend The message .", 2, {r.knowledge[2]}}};
  return r;
}

std::vector<DialogRecord> seekers(std::size_t n) {
  std::vector<DialogRecord> out;
  for (std::size_t i = 0; i < n; ++i) {
    out.push_back(hand_record("s" + std::to_string(100 + i), 0));
    out.push_back(hand_record("s" + std::to_string(100 + i), 1));
  }
  return out;
}

fs::path temp_file(const std::string& name) {
  const auto dir = fs::temp_directory_path() / "mgcg_corpus_tests";
  fs::create_directories(dir);
  return dir / name;
}

}  // namespace

TEST_SUITE("corpus") {
  TEST_CASE("six-turn dialog gives three nested examples") {
    const auto r = hand_record("s1", 0);
    const auto xs = extract_training_examples(r);
    REQUIRE(xs.size() == 3);
    CHECK(xs[0].goal.topic == "Stolen life");
    CHECK(xs[1].goal.topic == "Xun Zhou");
    CHECK(xs[2].goal.topic == "The message");
    for (std::size_t i = 0; i < xs.size(); ++i) {
      CHECK(xs[i].response.speaker == Speaker::Recommender);
      CHECK(xs[i].context.size() == 2 * i + 1);
      if (i > 0) {
        for (std::size_t j = 0; j < xs[i - 1].context.size(); ++j) {
          CHECK(xs[i].context[j].text == xs[i - 1].context[j].text);
        }
        CHECK(xs[i].context.size() > xs[i - 1].context.size());
      }
    }
    // completion labels fire exactly at the goal boundaries
    CHECK_FALSE(xs[0].completion_label);
    CHECK(xs[1].completion_label);
    CHECK(xs[2].completion_label);
    CHECK(xs[1].previous_goal.topic == "Stolen life");
    CHECK(xs[2].goal_history.size() == 2);
  }

  TEST_CASE("completion labels reconstruct goal boundaries") {
    auto r = hand_record("s1", 0);
    const auto xs = extract_training_examples(r);
    std::size_t idx = r.turns[0].goal_index;
    for (const auto& ex : xs) {
      if (ex.completion_label) ++idx;
      CHECK(idx == ex.response.goal_index);
    }
  }

  TEST_CASE("a recommender opening turn is skipped") {
    const auto xs = extract_training_examples(hand_record("s1", 0, true));
    // bot speaks at turns 0, 2, 4; turn 0 has no context
    REQUIRE(xs.size() == 2);
    CHECK(xs[0].turn_index == 2);
  }

  TEST_CASE("split by seeker") {
    const auto recs = seekers(20);
    const auto s = split_by_seeker(recs, {}, 7);
    CHECK(s.train_seekers.size() == 13);
    CHECK(s.dev_seekers.size() == 2);
    CHECK(s.test_seekers.size() == 5);
    CHECK(s.train.size() + s.dev.size() + s.test.size() == recs.size());
    std::set<std::string> seen;
    for (const auto* part : {&s.train_seekers, &s.dev_seekers, &s.test_seekers}) {
      for (const auto& id : *part) CHECK(seen.insert(id).second);
    }
    auto owner = [&](const std::string& id) {
      for (const auto& r : s.train) if (r.seeker_id == id) return 0;
      for (const auto& r : s.dev) if (r.seeker_id == id) return 1;
      return 2;
    };
    for (const auto& r : s.test) CHECK(owner(r.seeker_id) == 2);
    const auto again = split_by_seeker(recs, {}, 7);
    CHECK(again.test_seekers == s.test_seekers);
    CHECK(again.dev_seekers == s.dev_seekers);
    const auto other = split_by_seeker(recs, {}, 8);
    CHECK((other.test_seekers != s.test_seekers || other.dev_seekers != s.dev_seekers));
    CHECK_THROWS_AS(split_by_seeker(seekers(1), {}, 7), ConfigError);
  }

  TEST_CASE("candidate pools") {
    const auto ex = extract_training_examples(hand_record("s1", 0))[0];
    std::vector<std::string> bank;
    for (int i = 0; i < 30; ++i) bank.push_back("response " + std::to_string(i % 15));
    bank.push_back(ex.response.text);
    const auto p = build_candidate_pool(ex, bank, 1);
    CHECK(p.candidates.size() == kPoolSize);
    CHECK(p.candidates[p.gold_index] == ex.response.text);
    CHECK(std::count(p.candidates.begin(), p.candidates.end(), ex.response.text) == 1);
    std::set<std::string> uniq(p.candidates.begin(), p.candidates.end());
    CHECK(uniq.size() == kPoolSize);
    const auto q = build_candidate_pool(ex, bank, 1);
    CHECK(q.candidates == p.candidates);
    const auto r = build_candidate_pool(ex, bank, 2);
    CHECK(r.candidates[r.gold_index] == ex.response.text);
    std::set<std::string> dp, dr;
    for (std::size_t i = 0; i < kPoolSize; ++i) {
      if (i != p.gold_index) dp.insert(p.candidates[i]);
      if (i != r.gold_index) dr.insert(r.candidates[i]);
    }
    CHECK(dp != dr);
    std::vector<std::string> small;
    for (int i = 0; i < 8; ++i) small.push_back("r" + std::to_string(i));
    CHECK_THROWS_AS(build_candidate_pool(ex, small, 1), ConfigError);
    small.push_back(ex.response.text);
    CHECK_THROWS_AS(build_candidate_pool(ex, small, 1), ConfigError);
  }

  TEST_CASE("repeats in the bank raise a response's draw rate") {
    const auto ex = extract_training_examples(hand_record("s1", 0))[0];
    std::vector<std::string> bank;
    for (int i = 0; i < 20; ++i) bank.push_back("rare " + std::to_string(i));
    for (int i = 0; i < 60; ++i) bank.push_back("common");
    int hits = 0;
    for (std::uint64_t seed = 0; seed < 200; ++seed) {
      const auto p = build_candidate_pool(ex, bank, seed);
      hits += std::count(p.candidates.begin(), p.candidates.end(), "common") > 0;
    }
    CHECK(hits > 190);
  }

  TEST_CASE("ablation") {
    const auto ex = extract_training_examples(hand_record("s1", 0))[1];
    const auto same = ablate(ex, false, false);
    CHECK(same.goal == ex.goal);
    CHECK(same.knowledge == ex.knowledge);
    CHECK_FALSE(same.goal_masked);
    const auto g = ablate(ex, true, false);
    CHECK(g.goal_masked);
    CHECK(goal_input_tokens(g.goal, g.goal_masked) == Tokens{kUnkToken});
    CHECK(g.knowledge == ex.knowledge);
    const auto both = ablate(ex, true, true);
    CHECK(both.goal_masked);
    CHECK(both.knowledge.empty());
    CHECK(both.response.text == ex.response.text);
    CHECK(both.context.size() == ex.context.size());
  }

  TEST_CASE("corpus file round trip") {
    const auto path = temp_file("two.jsonl").string();
    const std::vector<DialogRecord> recs{hand_record("b", 0), hand_record("a", 1)};
    save_corpus(recs, path);
    const auto back = load_corpus(path);
    REQUIRE(back.size() == 2);
    CHECK(back[0].seeker_id == "a");  // sorted by seeker
    CHECK(record_to_json(back[0]) == record_to_json(recs[1]));
    CHECK(record_to_json(back[1]) == record_to_json(recs[0]));
    { std::ofstream(temp_file("empty.jsonl").string()); }
    CHECK(load_corpus(temp_file("empty.jsonl").string()).empty());
  }

  TEST_CASE("schema errors carry the line") {
    const auto path = temp_file("bad.jsonl").string();
    {
      std::ofstream out(path);
      out << record_to_json(hand_record("a", 0)).dump() << "\n";
      auto bad = record_to_json(hand_record("a", 1));
      bad["turns"][0]["goal_index"] = 9;
      out << bad.dump() << "\n";
    }
    try {
      load_corpus(path);
      FAIL("expected a schema error");
    } catch (const SchemaError& e) {
      CHECK(std::string(e.what()).find("line 2") != std::string::npos);
    }
    auto r = hand_record("a", 0);
    r.turns[3].goal_index = 0;
    r.turns[5].goal_index = 0;
    r.turns[4].goal_index = 2;
    CHECK_THROWS_AS(validate_record(r), SchemaError);
  }

  TEST_CASE("release-format records are adapted") {
    nlohmann::json j{{"goal", "[1] 问答 ( Stolen life ) --> [2] 电影推荐 ( The message )"},
                     {"user_profile", {{"姓名", "Zhou"}}},
                     {"knowledge", {{"Stolen life", "rating", "8.1"}}},
                     {"conversation", {"[1] hello", "hi there", "[2] I recommend The message"}}};
    const auto r = record_from_release_json(j, 1);
    CHECK(r.turns.size() == 3);
    CHECK(r.knowledge.size() == 1);
    CHECK(r.seeker_id == "Zhou");
    REQUIRE(r.goals.size() == 2);
    CHECK(r.goals[0].type == DialogType::QA);
    CHECK(r.goals[1].type == DialogType::Recommendation);
    CHECK(r.turns[0].goal_index == 0);
    CHECK(r.turns[1].goal_index == 0);
    CHECK(r.turns[2].goal_index == 1);
    CHECK(r.turns[2].text == "I recommend The message");
  }

  TEST_CASE("corpus statistics") {
    const auto s = corpus_stats(seekers(3));
    CHECK(s.dialogs == 6);
    CHECK(s.utterances == 36);
    CHECK(s.seekers == 3);
  }
}
