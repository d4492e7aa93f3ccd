#include <algorithm>

#include "doctest.h"
#include "mgcg/dialog.hpp"
#include "mgcg/errors.hpp"
#include "mgcg/knowledge.hpp"
#include "mgcg/rng.hpp"

using namespace mgcg;

namespace {

KnowledgeGraph figure_graph() {
  return KnowledgeGraph::from_triples({{"Stolen life", "star", "Xun Zhou"},
                                       {"Xun Zhou", "representative work", "The message"},
                                       {"Xun Zhou", "representative work", "Don't cry, Nanking!"},
                                       {"The message", "rating", "7.6"}},
                                      {{"Don't cry, Nanking!", "movie"}});
}

// Chain a - b - c - d - e.
KnowledgeGraph chain_graph() {
  return KnowledgeGraph::from_triples(
      {{"a", "link", "b"}, {"b", "link", "c"}, {"c", "link", "d"}, {"d", "link", "e"}},
      {{"e", "poi"}});
}

}  // namespace

TEST_SUITE("dialog") {
  TEST_CASE("enum names round trip") {
    for (auto t : {DialogType::QA, DialogType::Chitchat, DialogType::Recommendation, DialogType::Task}) {
      CHECK(parse_dialog_type(to_string(t)) == t);
    }
    for (auto s : {Speaker::Seeker, Speaker::Recommender}) CHECK(parse_speaker(to_string(s)) == s);
    for (auto o : {Occupation::Student, Occupation::Worker, Occupation::Retirement}) {
      CHECK(parse_occupation(to_string(o)) == o);
    }
    for (auto op : {InteractionOp::None, InteractionOp::Accept, InteractionOp::RejectInitial,
                    InteractionOp::NewTopic, InteractionOp::AskQuestion}) {
      CHECK(parse_interaction_op(to_string(op)) == op);
    }
    CHECK_THROWS_AS(parse_dialog_type("smalltalk"), SchemaError);
  }

  TEST_CASE("goals compare by type and topic") {
    CHECK(Goal{DialogType::QA, "x", "ask"} == Goal{DialogType::QA, "x", "other text"});
    CHECK_FALSE(Goal{DialogType::QA, "x", ""} == Goal{DialogType::Chitchat, "x", ""});
    CHECK(goal_tokens({DialogType::Recommendation, "The message", ""}) ==
          Tokens{type_marker(DialogType::Recommendation), "The", "message"});
  }

  TEST_CASE("figure sequence validates cleanly") {
    const auto g = figure_graph();
    const GoalSequence seq({{DialogType::QA, "Stolen life", ""},
                            {DialogType::Chitchat, "Xun Zhou", ""},
                            {DialogType::Recommendation, "The message", ""},
                            {DialogType::Recommendation, "Don't cry, Nanking!", ""}});
    const auto r = validate_goal_sequence(seq, g, {});
    CHECK(r.ok());
    CHECK(validate_goal_sequence(seq, g, {}) == r);
  }

  TEST_CASE("single chitchat goal is not a valid template") {
    const auto r = validate_goal_sequence(GoalSequence({{DialogType::Chitchat, "Xun Zhou", ""}}), figure_graph(), {});
    CHECK(r.has(ViolationKind::FinalGoalNotRecommendation));
    CHECK(r.violations.size() == 1);
  }

  TEST_CASE("transitions beyond two hops are unnatural") {
    const auto g = chain_graph();
    const auto near = validate_goal_sequence(
        GoalSequence({{DialogType::Chitchat, "a", ""}, {DialogType::Recommendation, "c", ""}}), g, {});
    CHECK(near.ok());
    const auto far = validate_goal_sequence(
        GoalSequence({{DialogType::Chitchat, "a", ""}, {DialogType::Recommendation, "d", ""}}), g, {});
    REQUIRE(far.violations.size() == 1);
    CHECK(far.violations[0].kind == ViolationKind::UnnaturalTransition);
    CHECK(far.violations[0].goal_index == 1);
    // brute force: the violation fires exactly when the path distance exceeds 2
    const std::vector<std::string> nodes{"a", "b", "c", "d", "e"};
    for (std::size_t i = 0; i < nodes.size(); ++i) {
      for (std::size_t j = 0; j < nodes.size(); ++j) {
        if (i == j) continue;
        const auto r = validate_goal_sequence(
            GoalSequence({{DialogType::Chitchat, nodes[i], ""}, {DialogType::Recommendation, nodes[j], ""}}), g, {});
        const auto dist = i > j ? i - j : j - i;
        CHECK(r.has(ViolationKind::UnnaturalTransition) == (dist > 2));
      }
    }
  }

  TEST_CASE("unknown topics and rejected recommendations are reported") {
    SeekerProfile p;
    p.rejected_entities = {"The message"};
    const auto r = validate_goal_sequence(
        GoalSequence({{DialogType::Chitchat, "Nobody", ""}, {DialogType::Recommendation, "The message", ""}}),
        figure_graph(), p);
    CHECK(r.has(ViolationKind::TopicNotInGraph));
    CHECK(r.has(ViolationKind::RecommendsRejectedEntity));
  }

  TEST_CASE("update_profile") {
    const SeekerProfile empty;
    const auto a = update_profile(empty, {{"The message", Outcome::Accepted}});
    CHECK(a.accepted_entities == std::vector<std::string>{"The message"});
    CHECK(update_profile(a, {}) == a);
    auto r = empty;
    r.rejected_entities = {"The message"};
    const auto moved = update_profile(r, {{"The message", Outcome::Accepted}});
    CHECK(moved.rejected_entities.empty());
    CHECK(moved.accepted_entities == std::vector<std::string>{"The message"});
    CHECK_THROWS_AS(update_profile(empty, {{"x", Outcome::Accepted}, {"x", Outcome::Rejected}}), ConflictError);
    const auto g = figure_graph();
    CHECK_THROWS_AS(update_profile(empty, {{"Nobody", Outcome::Accepted}}, &g), UnknownEntityError);
  }

  TEST_CASE("accepted and rejected stay disjoint under random updates") {
    Rng rng(3);
    const std::vector<std::string> ents{"a", "b", "c", "d"};
    SeekerProfile p;
    for (int step = 0; step < 500; ++step) {
      const auto& e = rng.pick(ents);
      p = update_profile(p, {{e, rng.bernoulli(0.5) ? Outcome::Accepted : Outcome::Rejected}});
      for (const auto& x : p.accepted_entities) {
        CHECK(std::find(p.rejected_entities.begin(), p.rejected_entities.end(), x) == p.rejected_entities.end());
      }
    }
  }

  TEST_CASE("advance_goal") {
    GoalSequence s({{DialogType::QA, "a", ""}, {DialogType::Chitchat, "b", ""},
                    {DialogType::Recommendation, "c", ""}, {DialogType::Recommendation, "d", ""}});
    CHECK(s.cursor() == 0);
    auto s1 = advance_goal(s);
    CHECK(s1.cursor() == 1);
    CHECK(s1.history().size() == 1);
    CHECK(s.cursor() == 0);
    GoalSequence s3(s.goals(), 3);
    const auto s4 = advance_goal(s3);
    CHECK(s4.cursor() == 4);
    CHECK(s4.exhausted());
    CHECK_THROWS_AS(advance_goal(s4), AtEndError);
    CHECK_THROWS_AS(s4.current(), AtEndError);
  }
}
