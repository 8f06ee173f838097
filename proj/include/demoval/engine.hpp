#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "demoval/evaluator.hpp"
#include "demoval/rng.hpp"
#include "demoval/types.hpp"
#include "demoval/value_table.hpp"

namespace demoval::engine {

// Monte Carlo estimation parameters. Pass i draws its permutation from a
// substream seeded by derive_seed(seed, i), so the permutation stream
// depends only on the seed (not on scores, mu, or thread count) and runs
// can be split, resumed, or parallelized without changing what is sampled.
struct EngineConfig {
  int K = 10;
  std::int64_t N = 1000;
  double mu = 0.0;  // truncation threshold, >= 0; 0 disables the gate
  std::uint64_t seed = 0;
  int threads = 1;
  std::int64_t checkpoint_interval = 0;  // passes between checkpoints; 0 = off
  std::filesystem::path checkpoint_path;
};

// One sampled permutation pass: the permutation, the K+1 prefix scores
// (index 0 = the run's cached zero-shot score), the per-step marginals
// v'_c, and which of them passed the |v'| >= mu gate.
struct PermutationPass {
  std::vector<std::string> permutation;
  std::vector<double> prefix_scores;
  std::vector<double> marginals;
  std::vector<bool> accepted;
};

// V(empty, f) on the dev set. Computed once per run and reused.
double zero_shot_score(const TaskSpec& task, const Dataset& dev,
                       Evaluator& evaluator);

// Uniform ordered K-sample from the pool: subset without replacement, then
// uniform order.
std::vector<std::string> sample_permutation(const CandidatePool& pool, int k,
                                            Rng& rng);

// Folds the t_new-th sample into a running mean:
//   ((t_new-1)/t_new) * phi_prev + (1/t_new) * v_prime
// phi_prev must be the mean of the first t_new-1 samples (0 if none).
double update_running_mean(double phi_prev, std::int64_t t_new, double v_prime);

// One pass: evaluates each prefix of a sampled permutation on the same dev
// set, gates each marginal by |v'| >= mu, and folds accepted marginals into
// the table. The previous-score variable advances after every prefix
// evaluation regardless of gating, so the prefix scores telescope.
PermutationPass run_pass(const TaskSpec& task, const CandidatePool& pool,
                         const Dataset& dev, Evaluator& evaluator,
                         const EngineConfig& config, double zero_shot,
                         Rng& pass_rng, ValueTable& table);

// N passes; deterministic for a fixed (seed, threads) and a deterministic
// backend. With threads > 1, passes split into contiguous blocks with
// private tables merged in block order (checkpointing stays sequential-only).
ValueTable compute_values(const EngineConfig& config, const CandidatePool& pool,
                          const TaskSpec& task, const Dataset& dev,
                          Evaluator& evaluator);

// Resumes a sequential run from its checkpoint; the result is identical to
// an uninterrupted run with the same config.
ValueTable resume_from_checkpoint(const EngineConfig& config,
                                  const CandidatePool& pool,
                                  const TaskSpec& task, const Dataset& dev,
                                  Evaluator& evaluator);

struct ExactOptions {
  std::int64_t budget = 1'000'000;  // max ordered K-arrangements
};

// Ground-truth oracle: for each demo, the average over every ordered
// K-arrangement containing it of V(prefix through it) - V(prefix before
// it); count is the number of such occurrences. Refuses (BudgetError) when
// the arrangement count exceeds the budget.
ValueTable exact_values(const CandidatePool& pool, int k, const TaskSpec& task,
                        const Dataset& dev, Evaluator& evaluator,
                        const ExactOptions& options = {});

// Per demo: count = c_a + c_b, value = count-weighted mean. The id
// universes must match.
ValueTable merge_tables(const ValueTable& a, const ValueTable& b);

struct CheckpointMeta {
  std::uint64_t seed = 0;
  std::int64_t passes_completed = 0;
  double mu = 0.0;
  int K = 0;
};

// Checkpoint = value table CSV at `csv_path` plus a JSON sidecar
// {seed, passes_completed, mu, K} at csv_path + ".meta.json".
void write_checkpoint(const std::filesystem::path& csv_path,
                      const ValueTable& table, const CheckpointMeta& meta);
std::pair<ValueTable, CheckpointMeta> read_checkpoint(
    const std::filesystem::path& csv_path);

}  // namespace demoval::engine
