#pragma once

#include <cstdint>
#include <filesystem>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "demoval/engine.hpp"
#include "demoval/evaluator.hpp"
#include "demoval/llm_client.hpp"
#include "demoval/synthetic.hpp"
#include "demoval/types.hpp"

namespace demoval {

// Full run configuration parsed from the --config JSON file. See
// README.md for the schema.
struct RunConfig {
  TaskSpec task;

  std::filesystem::path pool_path;
  std::filesystem::path dev_path;
  std::filesystem::path test_path;

  engine::EngineConfig engine;

  std::string backend_kind = "synthetic";  // "synthetic" | "llm"
  SyntheticModelSpec synthetic;
  std::string synthetic_mode = "utility";  // "utility" | "classifier"
  std::uint64_t classifier_salt = 0;
  LlmBackendSpec llm;
  double llm_failure_ceiling = 0.0;

  // experiment parameters
  int max_k = 10;
  std::vector<int> shots = {16, 32};
  std::vector<double> bpc_levels = {0.0, 0.5, 1.0};
  std::vector<int> cutoffs = {10, 20};
  std::vector<int> ood_k = {16, 32};
  std::string positive_label;  // defaults to label_set[1] for binary tasks
  std::size_t fairness_context_size = 64;
  std::size_t fairness_test_size = 200;
  std::int64_t log_entries = 1000;  // baseline prompt-log size M

  std::string config_hash;  // sha256 of the effective canonical config
};

struct ConfigOverrides {
  std::optional<std::uint64_t> seed;
  std::optional<std::string> backend_kind;
};

RunConfig load_run_config(const std::filesystem::path& path,
                          const ConfigOverrides& overrides = {});

// Builds the configured evaluation backend.
std::unique_ptr<Evaluator> make_evaluator(const RunConfig& config);

}  // namespace demoval
