#include "demoval/engine.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <stdexcept>
#include <thread>

#include <json.hpp>

#include "demoval/digest.hpp"
#include "demoval/error.hpp"
#include "demoval/io.hpp"

namespace demoval::engine {

using nlohmann::json;

namespace {

void validate_config(const EngineConfig& config, const CandidatePool& pool) {
  if (config.K < 1 || static_cast<std::size_t>(config.K) > pool.size()) {
    throw ConfigError("engine: K must satisfy 1 <= K <= pool size (K=" +
                      std::to_string(config.K) + ", pool=" +
                      std::to_string(pool.size()) + ")");
  }
  if (config.N < 1) throw ConfigError("engine: N must be >= 1");
  if (config.mu < 0.0) throw ConfigError("engine: mu must be >= 0");
}

double evaluate_score(const TaskSpec& task, Evaluator& evaluator,
                      const std::vector<Demonstration>& demos,
                      const Dataset& dev) {
  return evaluator.evaluate(task, demos, dev).score;
}

// Number of ordered d-arrangements of n items, capped at `cap`.
std::int64_t arrangements_capped(std::size_t n, int d, std::int64_t cap) {
  std::int64_t out = 1;
  for (int i = 0; i < d; ++i) {
    out *= static_cast<std::int64_t>(n - static_cast<std::size_t>(i));
    if (out > cap) return cap + 1;
  }
  return out;
}

}  // namespace

double zero_shot_score(const TaskSpec& task, const Dataset& dev,
                       Evaluator& evaluator) {
  if (dev.empty()) throw ConfigError("engine: dev set is empty");
  return evaluate_score(task, evaluator, {}, dev);
}

std::vector<std::string> sample_permutation(const CandidatePool& pool, int k,
                                            Rng& rng) {
  if (k < 1 || static_cast<std::size_t>(k) > pool.size()) {
    throw ConfigError("sample_permutation: K must satisfy 1 <= K <= pool size");
  }
  const auto indices =
      rng.sample_arrangement(pool.size(), static_cast<std::size_t>(k));
  std::vector<std::string> out;
  out.reserve(indices.size());
  for (const std::size_t i : indices) out.push_back(pool.demos[i].id);
  return out;
}

double update_running_mean(double phi_prev, std::int64_t t_new,
                           double v_prime) {
  if (t_new < 1) {
    throw std::invalid_argument("update_running_mean: t_new must be >= 1");
  }
  const double t = static_cast<double>(t_new);
  return ((t - 1.0) / t) * phi_prev + v_prime / t;
}

PermutationPass run_pass(const TaskSpec& task, const CandidatePool& pool,
                         const Dataset& dev, Evaluator& evaluator,
                         const EngineConfig& config, double zero_shot,
                         Rng& pass_rng, ValueTable& table) {
  PermutationPass pass;
  pass.permutation = sample_permutation(pool, config.K, pass_rng);
  pass.prefix_scores.reserve(static_cast<std::size_t>(config.K) + 1);
  pass.prefix_scores.push_back(zero_shot);

  std::vector<Demonstration> prefix;
  prefix.reserve(static_cast<std::size_t>(config.K));
  double prev = zero_shot;
  for (const auto& id : pass.permutation) {
    prefix.push_back(*pool.find(id));
    const double score = evaluate_score(task, evaluator, prefix, dev);
    const double v_prime = score - prev;
    const bool accept = std::abs(v_prime) >= config.mu;
    if (accept) {
      ValueEntry& entry = table.at(id);
      entry.count += 1;
      entry.value = update_running_mean(entry.value, entry.count, v_prime);
    }
    pass.prefix_scores.push_back(score);
    pass.marginals.push_back(v_prime);
    pass.accepted.push_back(accept);
    prev = score;  // advances even when the update was gated
  }
  return pass;
}

namespace {

std::vector<std::string> pool_ids(const CandidatePool& pool) {
  std::vector<std::string> ids;
  ids.reserve(pool.size());
  for (const auto& demo : pool.demos) ids.push_back(demo.id);
  return ids;
}

ValueTable run_pass_range(const EngineConfig& config, const CandidatePool& pool,
                          const TaskSpec& task, const Dataset& dev,
                          Evaluator& evaluator, double zero_shot,
                          std::int64_t first_pass, std::int64_t last_pass,
                          ValueTable table) {
  for (std::int64_t i = first_pass; i < last_pass; ++i) {
    Rng pass_rng(derive_seed(config.seed, static_cast<std::uint64_t>(i)));
    run_pass(task, pool, dev, evaluator, config, zero_shot, pass_rng, table);
    if (config.threads <= 1 && config.checkpoint_interval > 0 &&
        !config.checkpoint_path.empty() &&
        (i + 1) % config.checkpoint_interval == 0) {
      write_checkpoint(config.checkpoint_path, table,
                       CheckpointMeta{config.seed, i + 1, config.mu, config.K});
    }
  }
  return table;
}

ValueTable compute_values_from(const EngineConfig& config,
                               const CandidatePool& pool, const TaskSpec& task,
                               const Dataset& dev, Evaluator& evaluator,
                               std::int64_t start_pass, ValueTable table) {
  validate_config(config, pool);
  const double zero_shot = zero_shot_score(task, dev, evaluator);

  if (config.threads <= 1) {
    table = run_pass_range(config, pool, task, dev, evaluator, zero_shot,
                           start_pass, config.N, std::move(table));
  } else {
    const int workers = static_cast<int>(
        std::min<std::int64_t>(config.threads, config.N - start_pass));
    std::vector<ValueTable> partials(static_cast<std::size_t>(workers));
    std::vector<std::thread> threads;
    threads.reserve(static_cast<std::size_t>(workers));
    const std::int64_t total = config.N - start_pass;
    for (int w = 0; w < workers; ++w) {
      const std::int64_t begin = start_pass + total * w / workers;
      const std::int64_t end = start_pass + total * (w + 1) / workers;
      threads.emplace_back([&, w, begin, end] {
        partials[static_cast<std::size_t>(w)] =
            run_pass_range(config, pool, task, dev, evaluator, zero_shot,
                           begin, end, ValueTable(pool_ids(pool)));
      });
    }
    for (auto& t : threads) t.join();
    for (const auto& partial : partials) table = merge_tables(table, partial);
  }

  if (!config.checkpoint_path.empty()) {
    write_checkpoint(config.checkpoint_path, table,
                     CheckpointMeta{config.seed, config.N, config.mu, config.K});
  }
  return table;
}

}  // namespace

ValueTable compute_values(const EngineConfig& config, const CandidatePool& pool,
                          const TaskSpec& task, const Dataset& dev,
                          Evaluator& evaluator) {
  return compute_values_from(config, pool, task, dev, evaluator, 0,
                             ValueTable(pool_ids(pool)));
}

ValueTable resume_from_checkpoint(const EngineConfig& config,
                                  const CandidatePool& pool,
                                  const TaskSpec& task, const Dataset& dev,
                                  Evaluator& evaluator) {
  if (config.checkpoint_path.empty()) {
    throw ConfigError("resume: no checkpoint path configured");
  }
  auto [table, meta] = read_checkpoint(config.checkpoint_path);
  if (meta.seed != config.seed || meta.mu != config.mu || meta.K != config.K) {
    throw ConfigError("resume: checkpoint (seed,mu,K) does not match config");
  }
  if (meta.passes_completed >= config.N) return table;
  EngineConfig sequential = config;
  sequential.threads = 1;
  return compute_values_from(sequential, pool, task, dev, evaluator,
                             meta.passes_completed, std::move(table));
}

ValueTable exact_values(const CandidatePool& pool, int k, const TaskSpec& task,
                        const Dataset& dev, Evaluator& evaluator,
                        const ExactOptions& options) {
  const std::size_t n = pool.size();
  if (k < 1 || static_cast<std::size_t>(k) > n) {
    throw ConfigError("exact_values: K must satisfy 1 <= K <= pool size");
  }
  const std::int64_t total =
      arrangements_capped(n, k, options.budget);
  if (total > options.budget) {
    throw BudgetError("exact_values: " + std::to_string(n) + "P" +
                      std::to_string(k) + " ordered arrangements exceed the " +
                      std::to_string(options.budget) + " budget");
  }

  // Appending demo i to a depth-d prefix is shared by all arrangements
  // completing that prefix, so each such marginal carries integer weight
  // P(n-d-1, k-d-1).
  std::vector<std::int64_t> weight(static_cast<std::size_t>(k));
  for (int d = 0; d < k; ++d) {
    weight[static_cast<std::size_t>(d)] =
        arrangements_capped(n - static_cast<std::size_t>(d) - 1, k - d - 1,
                            options.budget);
  }

  // Per (demo, depth) accumulators keep symmetric demos bit-identical: the
  // final combination happens in a fixed depth order.
  std::vector<std::vector<double>> depth_sum(
      n, std::vector<double>(static_cast<std::size_t>(k), 0.0));

  std::vector<Demonstration> prefix;
  prefix.reserve(static_cast<std::size_t>(k));
  std::vector<bool> used(n, false);

  auto walk = [&](auto&& self, double prefix_score, int depth) -> void {
    for (std::size_t i = 0; i < n; ++i) {
      if (used[i]) continue;
      prefix.push_back(pool.demos[i]);
      const double score = evaluator.evaluate(task, prefix, dev).score;
      depth_sum[i][static_cast<std::size_t>(depth)] += score - prefix_score;
      if (depth + 1 < k) {
        used[i] = true;
        self(self, score, depth + 1);
        used[i] = false;
      }
      prefix.pop_back();
    }
  };
  const double zero_shot = evaluator.evaluate(task, {}, dev).score;
  walk(walk, zero_shot, 0);

  // Occurrences of each demo across all arrangements: k * P(n,k) / n.
  const std::int64_t per_demo_count = total / static_cast<std::int64_t>(n) *
                                      static_cast<std::int64_t>(k);
  ValueTable table;
  for (std::size_t i = 0; i < n; ++i) {
    double weighted = 0.0;
    for (int d = 0; d < k; ++d) {
      weighted += static_cast<double>(weight[static_cast<std::size_t>(d)]) *
                  depth_sum[i][static_cast<std::size_t>(d)];
    }
    table.set(pool.demos[i].id, weighted / static_cast<double>(per_demo_count),
              per_demo_count);
  }
  return table;
}

ValueTable merge_tables(const ValueTable& a, const ValueTable& b) {
  if (a.ids() != b.ids()) {
    throw MergeError("merge_tables: demo id universes differ");
  }
  ValueTable out;
  for (const auto& [id, ea] : a.entries()) {
    const ValueEntry& eb = b.at(id);
    const std::int64_t count = ea.count + eb.count;
    const double value =
        count == 0 ? 0.0
                   : (static_cast<double>(ea.count) * ea.value +
                      static_cast<double>(eb.count) * eb.value) /
                         static_cast<double>(count);
    out.set(id, value, count);
  }
  return out;
}

void write_checkpoint(const std::filesystem::path& csv_path,
                      const ValueTable& table, const CheckpointMeta& meta) {
  write_value_table_csv(csv_path, table);
  json sidecar{{"seed", meta.seed},
               {"passes_completed", meta.passes_completed},
               {"mu", meta.mu},
               {"K", meta.K}};
  write_file_atomic(csv_path.string() + ".meta.json", sidecar.dump(2) + "\n");
}

std::pair<ValueTable, CheckpointMeta> read_checkpoint(
    const std::filesystem::path& csv_path) {
  ValueTable table = read_value_table_csv(csv_path);
  json sidecar;
  try {
    sidecar = json::parse(read_file(csv_path.string() + ".meta.json"));
  } catch (const json::exception& e) {
    throw IoError("checkpoint sidecar: invalid JSON: " + std::string(e.what()));
  }
  CheckpointMeta meta;
  meta.seed = sidecar.at("seed").get<std::uint64_t>();
  meta.passes_completed = sidecar.at("passes_completed").get<std::int64_t>();
  meta.mu = sidecar.at("mu").get<double>();
  meta.K = sidecar.at("K").get<int>();
  return {std::move(table), meta};
}

}  // namespace demoval::engine
