#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "demoval/evaluator.hpp"
#include "demoval/types.hpp"

namespace demoval::baselines {

// A population of evaluated random prompts shared by CondAcc and Influence.
struct PromptLogEntry {
  std::vector<std::string> demo_ids;  // ordered
  double score = 0.0;
};

struct PromptLog {
  std::vector<PromptLogEntry> entries;
  std::int64_t skipped = 0;  // failed evaluations skipped during the build
  std::size_t size() const { return entries.size(); }
};

// Per-demo baseline score; nullopt marks an undefined score (demo never
// sampled, or sampled in every prompt for Influence).
using ScoreTable = std::map<std::string, std::optional<double>>;

struct LogBuildOptions {
  // When true, a failed prompt evaluation is skipped and recorded instead
  // of aborting the build.
  bool skip_failures = false;
};

// M uniformly sampled ordered K-prompts, each scored on the dev set.
// Entry m draws from substream derive_seed(seed, m), so the log is
// reproducible and entries are independent.
PromptLog build_prompt_log(const CandidatePool& pool, int k, std::int64_t m,
                           const TaskSpec& task, const Dataset& dev,
                           Evaluator& evaluator, std::uint64_t seed,
                           const LogBuildOptions& options = {});

// s_ca(i) = mean score over log entries containing demo i.
ScoreTable condacc_scores(const CandidatePool& pool, const PromptLog& log);

// I(i) = mean score of entries with i minus mean score of entries without.
ScoreTable influence_scores(const CandidatePool& pool, const PromptLog& log);

// For each demo of the fixed prompt: V(full) - V(prompt with it removed,
// residual order preserved).
ScoreTable loo_scores(const std::vector<Demonstration>& prompt_demos,
                      const TaskSpec& task, const Dataset& dev,
                      Evaluator& evaluator);

// Uniform sample without replacement (draw order retained).
std::vector<std::string> random_select(const CandidatePool& pool,
                                       std::size_t k, std::uint64_t seed);

// Ids ranked by score for selection: defined scores sort by value (ties by
// id); undefined scores take the median defined value, so they land in the
// middle. `descending` = most valuable first.
std::vector<std::string> ranked_ids(const ScoreTable& scores, bool descending);

// JSON Lines {"demo_ids":[...],"score":...} per entry.
void save_prompt_log(const std::filesystem::path& path, const PromptLog& log);
PromptLog load_prompt_log(const std::filesystem::path& path);

// Baseline tables reuse the value-table CSV schema; an undefined score is
// an empty value cell with count 0. The count column holds the number of
// log entries the score was computed from.
void save_score_table_csv(const std::filesystem::path& path,
                          const ScoreTable& scores,
                          const std::map<std::string, std::int64_t>& counts);
ScoreTable load_score_table_csv(const std::filesystem::path& path);

}  // namespace demoval::baselines
