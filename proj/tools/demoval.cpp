// demoval: demonstration valuation for in-context learning.
//
// Subcommands: value, baseline {condacc|influence|loo|random}, select,
// exp-add, exp-remove, exp-fairness, exp-ood, noise {inject|report},
// cache {stats|gc}. Exit codes: 0 ok, 2 config error, 3 backend error,
// 4 partial results.

#include <algorithm>
#include <filesystem>
#include <iostream>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "demoval/baselines.hpp"
#include "demoval/config.hpp"
#include "demoval/digest.hpp"
#include "demoval/engine.hpp"
#include "demoval/error.hpp"
#include "demoval/fairness.hpp"
#include "demoval/harness.hpp"
#include "demoval/io.hpp"
#include "demoval/noise.hpp"

namespace {

namespace fs = std::filesystem;
using nlohmann::json;
using namespace demoval;

struct GlobalArgs {
  std::string config_path;
  std::string out_dir = "out";
  std::string backend_override;
  std::uint64_t seed_override = 0;
  bool seed_set = false;
};

RunConfig load_config(const GlobalArgs& args) {
  if (args.config_path.empty()) {
    throw ConfigError("--config <json> is required for this command");
  }
  ConfigOverrides overrides;
  if (args.seed_set) overrides.seed = args.seed_override;
  if (!args.backend_override.empty()) overrides.backend_kind = args.backend_override;
  return load_run_config(args.config_path, overrides);
}

Dataset load_examples_or_config_error(const fs::path& path) {
  try {
    return load_examples_jsonl(path);
  } catch (const IoError& e) {
    throw ConfigError(e.what());  // a missing/unreadable input is a config problem
  }
}

CandidatePool load_pool(const RunConfig& config) {
  if (config.pool_path.empty()) throw ConfigError("config: data.pool not set");
  CandidatePool pool =
      pool_from_examples(load_examples_or_config_error(config.pool_path));
  pool.validate(config.task);
  return pool;
}

Dataset load_dev(const RunConfig& config) {
  if (config.dev_path.empty()) throw ConfigError("config: data.dev not set");
  return load_examples_or_config_error(config.dev_path);
}

std::vector<Demonstration> demos_by_ids(const CandidatePool& pool,
                                        const std::vector<std::string>& ids) {
  std::vector<Demonstration> out;
  out.reserve(ids.size());
  for (const auto& id : ids) {
    const Demonstration* demo = pool.find(id);
    if (demo == nullptr) {
      throw ConfigError("unknown demo id '" + id + "'");
    }
    out.push_back(*demo);
  }
  return out;
}

std::string ids_to_json(const std::vector<std::string>& ids) {
  return json{{"demo_ids", ids}}.dump(2) + "\n";
}

int cmd_value(const GlobalArgs& args, bool resume) {
  RunConfig config = load_config(args);
  const CandidatePool pool = load_pool(config);
  const Dataset dev = load_dev(config);
  auto evaluator = make_evaluator(config);

  harness::RunDir run(args.out_dir, config.config_hash);
  config.engine.checkpoint_path = run.dir() / "values.csv";
  if (config.engine.checkpoint_interval == 0) {
    config.engine.checkpoint_interval = std::max<std::int64_t>(
        1, config.engine.N / 10);
  }

  const ValueTable table =
      resume && fs::exists(config.engine.checkpoint_path)
          ? engine::resume_from_checkpoint(config.engine, pool, config.task,
                                           dev, *evaluator)
          : engine::compute_values(config.engine, pool, config.task, dev,
                                   *evaluator);
  (void)table;
  run.register_file(run.dir() / "values.csv", "value_table");
  run.register_file(run.dir() / "values.csv.meta.json", "checkpoint_meta");
  run.finalize();
  std::cout << "values written to " << (run.dir() / "values.csv").string()
            << "\n";
  return kExitOk;
}

int cmd_baseline_log_scorer(const GlobalArgs& args, const std::string& which,
                            const std::string& log_path) {
  RunConfig config = load_config(args);
  const CandidatePool pool = load_pool(config);
  const Dataset dev = load_dev(config);
  auto evaluator = make_evaluator(config);

  harness::RunDir run(args.out_dir, config.config_hash);
  baselines::PromptLog log;
  if (!log_path.empty()) {
    log = baselines::load_prompt_log(log_path);
  } else {
    log = baselines::build_prompt_log(pool, config.engine.K,
                                      config.log_entries, config.task, dev,
                                      *evaluator, config.engine.seed);
    baselines::save_prompt_log(run.dir() / "prompt_log.jsonl", log);
    run.register_file(run.dir() / "prompt_log.jsonl", "prompt_log");
  }

  const baselines::ScoreTable scores =
      which == "condacc" ? baselines::condacc_scores(pool, log)
                         : baselines::influence_scores(pool, log);
  std::map<std::string, std::int64_t> counts;
  for (const auto& entry : log.entries) {
    for (const auto& id : entry.demo_ids) counts[id] += 1;
  }
  baselines::save_score_table_csv(run.dir() / (which + ".csv"), scores, counts);
  run.register_file(run.dir() / (which + ".csv"), "score_table");
  run.finalize();

  std::size_t undefined = 0;
  for (const auto& [id, score] : scores) {
    if (!score.has_value()) ++undefined;
  }
  if (undefined > 0) {
    std::cerr << "note: " << undefined
              << " demos have undefined scores (never/always sampled)\n";
  }
  std::cout << which << " scores written\n";
  return kExitOk;
}

int cmd_baseline_loo(const GlobalArgs& args, std::vector<std::string> ids) {
  RunConfig config = load_config(args);
  const CandidatePool pool = load_pool(config);
  const Dataset dev = load_dev(config);
  auto evaluator = make_evaluator(config);

  if (ids.empty()) {
    ids = baselines::random_select(pool, std::min<std::size_t>(10, pool.size()),
                                   derive_seed(config.engine.seed, 3000));
  }
  const auto demos = demos_by_ids(pool, ids);
  const auto scores =
      baselines::loo_scores(demos, config.task, dev, *evaluator);

  harness::RunDir run(args.out_dir, config.config_hash);
  std::map<std::string, std::int64_t> counts;
  for (const auto& id : ids) counts[id] = 1;
  baselines::save_score_table_csv(run.dir() / "loo.csv", scores, counts);
  run.register_file(run.dir() / "loo.csv", "score_table");
  run.finalize();
  std::cout << "loo scores written\n";
  return kExitOk;
}

int cmd_baseline_random(const GlobalArgs& args, std::size_t k) {
  RunConfig config = load_config(args);
  const CandidatePool pool = load_pool(config);
  if (k == 0) k = static_cast<std::size_t>(config.engine.K);
  const auto ids = baselines::random_select(pool, k, config.engine.seed);

  harness::RunDir run(args.out_dir, config.config_hash);
  run.write_report("random_selection", ids_to_json(ids));
  run.finalize();
  std::cout << "random selection written\n";
  return kExitOk;
}

int cmd_select(const GlobalArgs& args, const std::string& values_path,
               std::size_t k, const std::string& direction) {
  RunConfig config = load_config(args);
  const ValueTable values = read_value_table_csv(
      values_path.empty() ? (fs::path(args.out_dir) / "values.csv").string()
                          : values_path);
  const auto ids = harness::select_by_value(
      values, harness::direction_from_string(direction), k);

  harness::RunDir run(args.out_dir, config.config_hash);
  run.write_report("selected", ids_to_json(ids));
  run.finalize();
  std::cout << "selection written\n";
  return kExitOk;
}

int cmd_exp_add(const GlobalArgs& args, const std::string& values_path,
                const std::string& direction) {
  RunConfig config = load_config(args);
  const CandidatePool pool = load_pool(config);
  const Dataset dev = load_dev(config);
  auto evaluator = make_evaluator(config);
  const ValueTable values = read_value_table_csv(
      values_path.empty() ? (fs::path(args.out_dir) / "values.csv").string()
                          : values_path);

  const auto dir = harness::direction_from_string(direction);
  const int max_k =
      std::min<int>(config.max_k, static_cast<int>(pool.size()));
  const harness::Curve curve = harness::run_add_experiment(
      values, dir, max_k, pool, config.task, dev, *evaluator);

  harness::RunDir run(args.out_dir, config.config_hash);
  run.write_curve("add_" + direction, curve);
  run.finalize();
  std::cout << "add-" << direction << " curve written\n";
  return curve.truncated ? kExitPartialResults : kExitOk;
}

int cmd_exp_remove(const GlobalArgs& args, const std::string& values_path,
                   const std::string& direction,
                   std::vector<std::string> base_ids) {
  RunConfig config = load_config(args);
  const CandidatePool pool = load_pool(config);
  const Dataset dev = load_dev(config);
  auto evaluator = make_evaluator(config);
  const ValueTable values = read_value_table_csv(
      values_path.empty() ? (fs::path(args.out_dir) / "values.csv").string()
                          : values_path);

  if (base_ids.empty()) {
    base_ids = baselines::random_select(pool, 10,
                                        derive_seed(config.engine.seed, 3000));
  }
  const auto base = demos_by_ids(pool, base_ids);
  const harness::Curve curve = harness::run_remove_experiment(
      values, base, harness::direction_from_string(direction), config.task,
      dev, *evaluator);

  harness::RunDir run(args.out_dir, config.config_hash);
  run.write_curve("remove_" + direction, curve);
  run.finalize();
  std::cout << "remove-" << direction << " curve written\n";
  return curve.truncated ? kExitPartialResults : kExitOk;
}

int cmd_exp_fairness(const GlobalArgs& args) {
  RunConfig config = load_config(args);
  if (config.positive_label.empty()) {
    throw ConfigError("fairness: experiments.positive_label is required");
  }
  if (config.test_path.empty()) {
    throw ConfigError("fairness: config data.test must point to a sensitive dataset");
  }
  const Dataset source = load_examples_or_config_error(config.pool_path);
  const Dataset test_source = load_examples_or_config_error(config.test_path);
  const Dataset dev = load_dev(config);
  auto evaluator = make_evaluator(config);

  // bpt fixed at 0: observed prediction bias is attributable to the context
  const Dataset test = fairness::construct_parity_split(
      test_source, config.fairness_test_size, 0.0, config.positive_label,
      derive_seed(config.engine.seed, 2000));

  harness::RunDir run(args.out_dir, config.config_hash);
  for (std::size_t i = 0; i < config.bpc_levels.size(); ++i) {
    const double bpc = config.bpc_levels[i];
    const Dataset context = fairness::construct_parity_split(
        source, config.fairness_context_size, bpc, config.positive_label,
        derive_seed(config.engine.seed, 1000 + i));
    CandidatePool context_pool = pool_from_examples(context);
    context_pool.validate(config.task);

    engine::EngineConfig engine_config = config.engine;
    engine_config.K =
        std::min<int>(engine_config.K, static_cast<int>(context_pool.size()));
    engine_config.checkpoint_path.clear();
    const ValueTable values = engine::compute_values(
        engine_config, context_pool, config.task, dev, *evaluator);

    for (const int shots : config.shots) {
      const auto report = harness::run_fairness_experiment(
          values, context_pool, test, config.positive_label, bpc, 0.0, shots,
          config.task, *evaluator);
      const std::string name = "fairness_bpc" + format_double(bpc) + "_shots" +
                               std::to_string(shots);
      run.write_report(name, harness::fairness_report_to_json(report));
    }
  }
  run.finalize();
  std::cout << "fairness reports written\n";
  return kExitOk;
}

int cmd_exp_ood(const GlobalArgs& args, const std::string& values_path,
                const std::string& ood_path) {
  RunConfig config = load_config(args);
  const CandidatePool pool = load_pool(config);
  auto evaluator = make_evaluator(config);
  const ValueTable values = read_value_table_csv(
      values_path.empty() ? (fs::path(args.out_dir) / "values.csv").string()
                          : values_path);
  if (ood_path.empty()) throw ConfigError("--ood <jsonl> is required");
  const Dataset ood_test = load_examples_or_config_error(ood_path);

  const auto accuracy = harness::run_ood_experiment(
      values, pool, config.ood_k, ood_test, config.task, *evaluator);

  harness::RunDir run(args.out_dir, config.config_hash);
  run.write_report("ood", harness::ood_report_to_json(accuracy));
  run.finalize();
  std::cout << "ood report written\n";
  return kExitOk;
}

int cmd_noise_inject(const GlobalArgs& args, double rate) {
  RunConfig config = load_config(args);
  const CandidatePool pool = load_pool(config);
  const auto noisy = noise::inject_label_noise(pool, config.task, rate,
                                               config.engine.seed);

  harness::RunDir run(args.out_dir, config.config_hash);
  Dataset as_examples;
  for (const auto& demo : noisy.pool.demos) {
    as_examples.push_back(LabeledExample{demo.id, demo.input, demo.label, {}});
  }
  save_examples_jsonl(run.dir() / "noisy_pool.jsonl", as_examples);
  run.register_file(run.dir() / "noisy_pool.jsonl", "pool");
  const std::vector<std::string> flipped(noisy.flipped_ids.begin(),
                                         noisy.flipped_ids.end());
  run.write_report("flipped", json{{"flipped_ids", flipped}}.dump(2) + "\n");
  run.finalize();
  std::cout << flipped.size() << " labels flipped\n";
  return kExitOk;
}

int cmd_noise_report(const GlobalArgs& args, const std::string& values_path,
                     const std::string& flipped_path) {
  RunConfig config = load_config(args);
  const ValueTable values = read_value_table_csv(
      values_path.empty() ? (fs::path(args.out_dir) / "values.csv").string()
                          : values_path);
  const std::string flipped_file =
      flipped_path.empty() ? (fs::path(args.out_dir) / "flipped.json").string()
                           : flipped_path;
  json parsed = json::parse(read_file(flipped_file), nullptr, false);
  if (parsed.is_discarded() || !parsed.contains("flipped_ids")) {
    throw ConfigError(flipped_file + ": expected {\"flipped_ids\": [...]}");
  }
  std::set<std::string> flipped;
  for (const auto& id : parsed["flipped_ids"]) {
    flipped.insert(id.get<std::string>());
  }

  const auto report = noise::detection_report(values, flipped, config.cutoffs);
  harness::RunDir run(args.out_dir, config.config_hash);
  run.write_report("noise_report", noise::report_to_json(report));
  run.finalize();
  std::cout << "noise report written\n";
  return kExitOk;
}

fs::path cache_path_from(const GlobalArgs& args, const std::string& explicit_path) {
  if (!explicit_path.empty()) return explicit_path;
  RunConfig config = load_config(args);
  if (config.llm.cache_path.empty()) {
    throw ConfigError("no cache path: pass --cache or set backend.llm.cache_path");
  }
  return config.llm.cache_path;
}

int cmd_cache_stats(const GlobalArgs& args, const std::string& path) {
  const auto stats = ResponseCache::stats(cache_path_from(args, path));
  std::cout << json{{"lines", stats.lines},
                    {"unique_keys", stats.unique_keys},
                    {"bytes", stats.bytes}}
                   .dump(2)
            << "\n";
  return kExitOk;
}

int cmd_cache_gc(const GlobalArgs& args, const std::string& path) {
  const std::size_t kept = ResponseCache::gc(cache_path_from(args, path));
  std::cout << "cache compacted; " << kept << " entries kept\n";
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"demoval: demonstration valuation for in-context learning"};
  app.require_subcommand(1);

  GlobalArgs args;
  app.add_option("--config", args.config_path, "run configuration JSON");
  app.add_option("--out", args.out_dir, "output directory")
      ->capture_default_str();
  app.add_option("--backend", args.backend_override,
                 "backend override: synthetic|llm")
      ->check(CLI::IsMember({"synthetic", "llm"}));
  auto* seed_opt = app.add_option("--seed", args.seed_override, "seed override");

  bool resume = false;
  auto* value = app.add_subcommand("value", "estimate demonstration Shapley values");
  value->add_flag("--resume", resume, "resume from an existing checkpoint");

  auto* baseline = app.add_subcommand("baseline", "baseline scorers");
  baseline->require_subcommand(1);
  std::string log_path;
  auto* condacc = baseline->add_subcommand("condacc", "mean score of prompts containing each demo");
  condacc->add_option("--log", log_path, "reuse an existing prompt log");
  auto* influence = baseline->add_subcommand("influence", "mean with minus mean without each demo");
  influence->add_option("--log", log_path, "reuse an existing prompt log");
  std::vector<std::string> loo_ids;
  auto* loo = baseline->add_subcommand("loo", "leave-one-out over a fixed prompt");
  loo->add_option("--demo-ids", loo_ids, "prompt demo ids (default: 10 random)");
  std::size_t random_k = 0;
  auto* random = baseline->add_subcommand("random", "seeded random selection");
  random->add_option("--k", random_k, "selection size (default: engine K)");

  std::string values_path, direction = "high";
  std::size_t select_k = 0;
  auto* select = app.add_subcommand("select", "pick top/bottom demos by value");
  select->add_option("--values", values_path, "value table CSV");
  select->add_option("--k", select_k, "selection size")->required();
  select->add_option("--direction", direction, "high|low")
      ->check(CLI::IsMember({"high", "low"}));

  auto* exp_add = app.add_subcommand("exp-add", "progressive addition curve");
  exp_add->add_option("--values", values_path, "value table CSV");
  exp_add->add_option("--direction", direction, "high|low")
      ->check(CLI::IsMember({"high", "low"}));

  std::vector<std::string> base_ids;
  auto* exp_remove = app.add_subcommand("exp-remove", "progressive removal curve");
  exp_remove->add_option("--values", values_path, "value table CSV");
  exp_remove->add_option("--direction", direction, "high|low")
      ->check(CLI::IsMember({"high", "low"}));
  exp_remove->add_option("--demo-ids", base_ids, "base prompt ids (default: 10 random)");

  auto* exp_fairness =
      app.add_subcommand("exp-fairness", "parity-controlled fairness grid");

  std::string ood_path;
  auto* exp_ood = app.add_subcommand("exp-ood", "out-of-distribution accuracy");
  exp_ood->add_option("--values", values_path, "source value table CSV");
  exp_ood->add_option("--ood", ood_path, "OOD test set JSONL")->required();

  auto* noise_cmd = app.add_subcommand("noise", "label-noise tools");
  noise_cmd->require_subcommand(1);
  double noise_rate = 0.1;
  auto* inject = noise_cmd->add_subcommand("inject", "flip a fraction of pool labels");
  inject->add_option("--rate", noise_rate, "flip fraction")->capture_default_str();
  std::string flipped_path;
  auto* report = noise_cmd->add_subcommand("report", "rank-based detection report");
  report->add_option("--values", values_path, "value table CSV");
  report->add_option("--flipped", flipped_path, "flipped ids JSON");

  auto* cache = app.add_subcommand("cache", "response cache maintenance");
  cache->require_subcommand(1);
  std::string cache_path;
  auto* stats = cache->add_subcommand("stats", "print cache statistics");
  stats->add_option("--cache", cache_path, "cache JSONL path");
  auto* gc = cache->add_subcommand("gc", "drop superseded cache lines");
  gc->add_option("--cache", cache_path, "cache JSONL path");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kExitOk : kExitConfigError;
  }
  args.seed_set = seed_opt->count() > 0;

  try {
    if (value->parsed()) return cmd_value(args, resume);
    if (condacc->parsed()) return cmd_baseline_log_scorer(args, "condacc", log_path);
    if (influence->parsed()) return cmd_baseline_log_scorer(args, "influence", log_path);
    if (loo->parsed()) return cmd_baseline_loo(args, loo_ids);
    if (random->parsed()) return cmd_baseline_random(args, random_k);
    if (select->parsed()) return cmd_select(args, values_path, select_k, direction);
    if (exp_add->parsed()) return cmd_exp_add(args, values_path, direction);
    if (exp_remove->parsed()) return cmd_exp_remove(args, values_path, direction, base_ids);
    if (exp_fairness->parsed()) return cmd_exp_fairness(args);
    if (exp_ood->parsed()) return cmd_exp_ood(args, values_path, ood_path);
    if (inject->parsed()) return cmd_noise_inject(args, noise_rate);
    if (report->parsed()) return cmd_noise_report(args, values_path, flipped_path);
    if (stats->parsed()) return cmd_cache_stats(args, cache_path);
    if (gc->parsed()) return cmd_cache_gc(args, cache_path);
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return e.exit_code();
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitFailure;
  }
  return kExitConfigError;
}
