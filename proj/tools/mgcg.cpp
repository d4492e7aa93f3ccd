#include <CLI11.hpp>

#include <csignal>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>

#include "mgcg/errors.hpp"
#include "mgcg/evaluation.hpp"
#include "mgcg/features.hpp"
#include "mgcg/orchestrator.hpp"
#include "mgcg/serve/service.hpp"
#include "mgcg/synth.hpp"

namespace fs = std::filesystem;
using namespace mgcg;

namespace {

struct Globals {
  std::uint64_t seed = 7;
  std::string config;
  std::string corpus;
  std::string out;
};

/// Config section for `key`: the named member when present, else the whole
/// file (empty object without --config).
nlohmann::json config_section(const Globals& g, const std::string& key) {
  if (g.config.empty()) return nlohmann::json::object();
  std::ifstream in(g.config);
  if (!in) throw ConfigError("cannot read config " + g.config);
  const auto j = nlohmann::json::parse(in, nullptr, false);
  if (j.is_discarded() || !j.is_object()) throw ConfigError(g.config + ": expected a JSON object");
  return j.contains(key) ? j.at(key) : j;
}

struct Workspace {
  SyntheticCorpus corpus;
  CorpusSplit split;
  std::vector<TrainingExample> train;
  std::vector<TrainingExample> test;
  std::vector<std::string> bank;
};

Workspace open_workspace(const Globals& g) {
  if (g.corpus.empty()) throw ConfigError("--corpus is required");
  Workspace w;
  w.corpus = load_synthetic_corpus(g.corpus);
  w.split = split_by_seeker(w.corpus.records, {}, g.seed);
  w.train = extract_training_examples(w.split.train);
  w.test = extract_training_examples(w.split.test);
  w.bank = response_bank(w.train);
  return w;
}

std::vector<TrainingExample> ablated(std::vector<TrainingExample> xs, bool goal, bool knowledge) {
  if (goal || knowledge) {
    for (auto& x : xs) x = ablate(x, goal, knowledge);
  }
  return xs;
}

void write_text(const std::string& path, const std::string& text) {
  if (path.empty() || path == "-") {
    std::cout << text;
    return;
  }
  if (fs::path(path).has_parent_path()) fs::create_directories(fs::path(path).parent_path());
  std::ofstream out(path);
  if (!out) throw ConfigError("cannot write " + path);
  out << text;
}

std::vector<serve::ServiceTask> tasks_of(const std::vector<DialogRecord>& records) {
  std::vector<serve::ServiceTask> out;
  for (const auto& r : records) out.push_back({r.task_template(), r.profile});
  return out;
}

serve::ChatService* g_service = nullptr;
void on_signal(int) {
  if (g_service) g_service->stop();
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Multi-goal conversational recommendation: synthesis, training, evaluation and serving"};
  app.require_subcommand(1);
  app.fallthrough();
  app.failure_message(CLI::FailureMessage::help);
  Globals g;
  app.add_option("--seed", g.seed, "Random seed (corpus generation and data split)");
  app.add_option("--config", g.config, "JSON config file");
  app.add_option("--corpus", g.corpus, "Corpus directory (dialogs.jsonl, knowledge.jsonl, entities.jsonl)");
  app.add_option("--out", g.out, "Output path");

  // synth
  auto* synth = app.add_subcommand("synth", "Generate a synthetic corpus");
  SynthConfig sc;
  synth->add_option("--seekers", sc.n_seekers, "Number of seekers");
  synth->add_option("--dialogs", sc.dialogs_per_seeker, "Dialogs per seeker");
  synth->add_option("--graph-size", sc.graph_size, "Number of graph entities");

  // train
  auto* train = app.add_subcommand("train", "Train one model on the training split");
  std::string kind;
  bool train_ablate_goal = false, train_ablate_knowledge = false;
  std::optional<std::size_t> epochs;
  train->add_option("model", kind, "planner | ranker | generator")
      ->required()
      ->check(CLI::IsMember({"planner", "ranker", "generator"}));
  train->add_flag("--ablate-goal", train_ablate_goal, "Train without goals");
  train->add_flag("--ablate-knowledge", train_ablate_knowledge, "Train without knowledge");
  train->add_option("--epochs", epochs, "Override the configured epoch count");

  // eval
  auto* eval = app.add_subcommand("eval", "Evaluate models on the test split");
  std::string planner_dir, ranker_dir, generator_dir;
  bool ablate_goal = false, ablate_knowledge = false, planner_goals = false;
  std::size_t rollouts = 0, limit = 0, beam = 0;
  eval->add_option("--planner", planner_dir, "Planner model directory");
  eval->add_option("--ranker", ranker_dir, "Ranker model directory");
  eval->add_option("--generator", generator_dir, "Generator model directory");
  eval->add_flag("--ablate-goal", ablate_goal, "Mask the goal (UNK)");
  eval->add_flag("--ablate-knowledge", ablate_knowledge, "Drop the knowledge");
  eval->add_flag("--planner-goals", planner_goals, "Condition responders on planner goals");
  eval->add_option("--rollouts", rollouts, "Simulated dialogs per responder for goal completion");
  eval->add_option("--limit", limit, "Evaluate only the first n test turns");
  eval->add_option("--beam", beam, "Beam size for generation (0: config)");

  // chat
  auto* chat = app.add_subcommand("chat", "Terminal conversation with a pipeline");
  std::string template_id;
  chat->add_option("--planner", planner_dir, "Planner model directory")->required();
  chat->add_option("--ranker", ranker_dir, "Ranker model directory");
  chat->add_option("--generator", generator_dir, "Generator model directory");
  chat->add_option("--template", template_id, "Task template id (default: first test dialog)");

  // serve
  auto* srv = app.add_subcommand("serve", "HTTP session service");
  std::string host = "127.0.0.1", ratings;
  int port = 8080;
  srv->add_option("--planner", planner_dir, "Planner model directory")->required();
  srv->add_option("--ranker", ranker_dir, "Ranker model directory");
  srv->add_option("--generator", generator_dir, "Generator model directory");
  srv->add_option("--host", host, "Bind address");
  srv->add_option("--port", port, "Port");
  srv->add_option("--ratings", ratings, "Rating log (JSON Lines)");

  CLI11_PARSE(app, argc, argv);

  try {
    if (synth->parsed()) {
      if (g.out.empty()) throw ConfigError("synth needs --out DIR");
      sc.seed = g.seed;
      const auto c = config_section(g, "synth");
      sc.n_seekers = c.value("n_seekers", sc.n_seekers);
      sc.dialogs_per_seeker = c.value("dialogs_per_seeker", sc.dialogs_per_seeker);
      sc.graph_size = c.value("graph_size", sc.graph_size);
      const auto corpus = generate_synthetic_corpus(sc);
      save_synthetic_corpus(corpus, g.out);
      std::cout << "wrote " << corpus.stats.dialogs << " dialogs, " << corpus.stats.utterances
                << " utterances, " << corpus.graph.triples().size() << " triples to " << g.out << "\n";
      return 0;
    }

    if (train->parsed()) {
      if (g.out.empty()) throw ConfigError("train needs --out DIR");
      auto w = open_workspace(g);
      const auto vocab = build_vocab(w.split.train);
      auto cfg = config_section(g, kind);
      if (epochs) cfg["epochs"] = *epochs;
      if (kind == "planner") {
        GoalPlanner p(vocab, w.corpus.graph, PlannerConfig::from_json(cfg));
        const auto log = p.train(w.train);
        p.save(g.out);
        std::cout << nlohmann::json{{"epoch_loss", log.epoch_loss},
                                    {"train", log.train_metrics.to_json()},
                                    {"test", p.evaluate(w.test).to_json()}}
                         .dump()
                  << "\n";
      } else if (kind == "ranker") {
        Ranker r(vocab, RankerConfig::from_json(cfg));
        const auto log = r.train(ablated(w.train, train_ablate_goal, train_ablate_knowledge), w.bank);
        r.save(g.out);
        std::cout << nlohmann::json{{"epoch_loss", log.epoch_loss}}.dump() << "\n";
      } else {
        Generator gen(vocab, GeneratorConfig::from_json(cfg));
        const auto log = gen.train(ablated(w.train, train_ablate_goal, train_ablate_knowledge));
        gen.save(g.out);
        std::cout << nlohmann::json{{"epoch_loss", log.epoch_loss}, {"alpha", gen.alpha()}}.dump() << "\n";
      }
      return 0;
    }

    if (eval->parsed()) {
      if (ranker_dir.empty() && generator_dir.empty() && planner_dir.empty()) {
        throw ConfigError("eval needs --planner, --ranker or --generator");
      }
      auto w = open_workspace(g);
      std::optional<GoalPlanner> planner;
      if (!planner_dir.empty()) planner.emplace(GoalPlanner::load(planner_dir, w.corpus.graph));
      if (planner_goals && !planner) throw ConfigError("--planner-goals needs --planner");
      std::optional<Ranker> ranker;
      std::optional<Generator> generator;
      if (!ranker_dir.empty()) ranker.emplace(Ranker::load(ranker_dir));
      if (!generator_dir.empty()) generator.emplace(Generator::load(generator_dir));

      EvalOptions o;
      o.ablate_goal = ablate_goal;
      o.ablate_knowledge = ablate_knowledge;
      o.planner = planner_goals ? &*planner : nullptr;
      o.limit = limit;
      o.beam = beam;
      std::vector<MetricReport> reports;
      nlohmann::json out = nlohmann::json::object();
      if (planner) out["planner"] = planner->evaluate(w.test).to_json();

      auto with_rollouts = [&](MetricReport& r, const Pipeline& p) {
        if (!rollouts) return;
        std::vector<Rollout> all;
        for (std::size_t i = 0; i < rollouts; ++i) {
          const auto& rec = w.split.test[i % w.split.test.size()];
          all.push_back(run_simulated_dialog(p, rec.task_template(), rec.profile, g.seed + i).goals);
        }
        r.goals = goal_completion_analysis(all);
      };
      if (ranker) {
        auto r = evaluate_ranker(*ranker, w.test, w.bank, o);
        if (rollouts && planner) {
          Pipeline p;
          p.graph = &w.corpus.graph;
          p.planner = &*planner;
          p.ranker = &*ranker;
          p.response_bank = w.bank;
          with_rollouts(r, p);
        }
        reports.push_back(r);
      }
      if (generator) {
        auto r = evaluate_generator(*generator, w.test, w.bank, o);
        if (rollouts && planner) {
          Pipeline p;
          p.graph = &w.corpus.graph;
          p.planner = &*planner;
          p.generator = &*generator;
          p.beam = beam;
          with_rollouts(r, p);
        }
        reports.push_back(r);
      }
      std::string csv = MetricReport::csv_header() + "\n";
      auto rows = nlohmann::json::array();
      for (const auto& r : reports) {
        csv += r.csv_row() + "\n";
        rows.push_back(r.to_json());
      }
      out["reports"] = rows;
      std::cout << csv;
      if (!g.out.empty()) write_text(g.out, out.dump(2) + "\n");
      return 0;
    }

    if (chat->parsed() || srv->parsed()) {
      if (ranker_dir.empty() == generator_dir.empty() && chat->parsed()) {
        throw ConfigError("chat needs exactly one of --ranker and --generator");
      }
      if (ranker_dir.empty() && generator_dir.empty()) throw ConfigError("serve needs --ranker or --generator");
      auto w = open_workspace(g);
      const auto planner = GoalPlanner::load(planner_dir, w.corpus.graph);
      std::optional<Ranker> ranker;
      std::optional<Generator> generator;
      if (!ranker_dir.empty()) ranker.emplace(Ranker::load(ranker_dir));
      if (!generator_dir.empty()) generator.emplace(Generator::load(generator_dir));
      Pipeline base;
      base.graph = &w.corpus.graph;
      base.planner = &planner;

      if (chat->parsed()) {
        Pipeline p = base;
        if (ranker) {
          p.ranker = &*ranker;
          p.response_bank = w.bank;
        } else {
          p.generator = &*generator;
        }
        const DialogRecord* rec = &w.split.test.front();
        if (!template_id.empty()) {
          rec = nullptr;
          for (const auto& r : w.corpus.records) {
            if (r.task_template().id == template_id) rec = &r;
          }
          if (!rec) throw NotFoundError("unknown template " + template_id);
        }
        Session s("chat", p.responder_name(), rec->task_template(), rec->profile);
        std::cout << "template " << rec->task_template().id << ":";
        for (const auto& goal : rec->goals) std::cout << " [" << to_string(goal.type) << " " << goal.topic << "]";
        std::cout << "\n(empty line or /quit ends the session)\n";
        auto show = [](const TurnRecord& t) {
          std::cout << "bot [" << to_string(t.goal->type) << " " << t.goal->topic << ", P_GC "
                    << t.completion_prob << "]: " << t.text << "\n";
        };
        if (s.bot_opens()) show(open_turn(s, p));
        std::string line;
        while (std::cout << "> " << std::flush, std::getline(std::cin, line)) {
          if (line.empty() || line == "/quit") break;
          show(respond(s, p, line));
        }
        if (!g.out.empty()) write_text(g.out, s.state_json().dump(2) + "\n");
        return 0;
      }

      std::map<std::string, Pipeline> models;
      if (ranker) {
        Pipeline p = base;
        p.ranker = &*ranker;
        p.response_bank = w.bank;
        models.emplace("retrieval", p);
      }
      if (generator) {
        Pipeline p = base;
        p.generator = &*generator;
        models.emplace("generation", p);
      }
      serve::ServiceConfig sc2;
      sc2.ratings_path = ratings;
      sc2.seed = g.seed;
      serve::ChatService service(models, tasks_of(w.split.test), sc2);
      g_service = &service;
      std::signal(SIGINT, on_signal);
      std::signal(SIGTERM, on_signal);
      std::cout << "serving on http://" << host << ":" << port << "\n" << std::flush;
      if (!service.listen(host, port)) throw ConfigError("cannot bind " + host + ":" + std::to_string(port));
      return 0;
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
