#include "demoval/baselines.hpp"

#include <algorithm>
#include <charconv>
#include <fstream>
#include <set>

#include <json.hpp>

#include "demoval/digest.hpp"
#include "demoval/engine.hpp"
#include "demoval/error.hpp"
#include "demoval/io.hpp"
#include "demoval/rng.hpp"

namespace demoval::baselines {

using nlohmann::json;

PromptLog build_prompt_log(const CandidatePool& pool, int k, std::int64_t m,
                           const TaskSpec& task, const Dataset& dev,
                           Evaluator& evaluator, std::uint64_t seed,
                           const LogBuildOptions& options) {
  if (m < 1) throw ConfigError("prompt log: M must be >= 1");
  if (k < 1 || static_cast<std::size_t>(k) > pool.size()) {
    throw ConfigError("prompt log: K must satisfy 1 <= K <= pool size");
  }
  PromptLog log;
  log.entries.reserve(static_cast<std::size_t>(m));
  for (std::int64_t i = 0; i < m; ++i) {
    Rng rng(derive_seed(seed, static_cast<std::uint64_t>(i)));
    PromptLogEntry entry;
    entry.demo_ids = engine::sample_permutation(pool, k, rng);
    std::vector<Demonstration> demos;
    demos.reserve(entry.demo_ids.size());
    for (const auto& id : entry.demo_ids) demos.push_back(*pool.find(id));
    try {
      entry.score = evaluator.evaluate(task, demos, dev).score;
    } catch (const BackendError&) {
      if (!options.skip_failures) throw;
      ++log.skipped;
      continue;
    }
    log.entries.push_back(std::move(entry));
  }
  return log;
}

ScoreTable condacc_scores(const CandidatePool& pool, const PromptLog& log) {
  std::map<std::string, double> sum;
  std::map<std::string, std::int64_t> count;
  for (const auto& entry : log.entries) {
    for (const auto& id : entry.demo_ids) {
      sum[id] += entry.score;
      count[id] += 1;
    }
  }
  ScoreTable out;
  for (const auto& demo : pool.demos) {
    const auto it = count.find(demo.id);
    if (it == count.end() || it->second == 0) {
      out[demo.id] = std::nullopt;  // never sampled: undefined, not 0
    } else {
      out[demo.id] = sum[demo.id] / static_cast<double>(it->second);
    }
  }
  return out;
}

ScoreTable influence_scores(const CandidatePool& pool, const PromptLog& log) {
  const std::int64_t m = static_cast<std::int64_t>(log.size());
  double total = 0.0;
  for (const auto& entry : log.entries) total += entry.score;

  std::map<std::string, double> sum_in;
  std::map<std::string, std::int64_t> count_in;
  for (const auto& entry : log.entries) {
    for (const auto& id : entry.demo_ids) {
      sum_in[id] += entry.score;
      count_in[id] += 1;
    }
  }
  ScoreTable out;
  for (const auto& demo : pool.demos) {
    const std::int64_t n_i = count_in.count(demo.id) ? count_in[demo.id] : 0;
    if (n_i == 0 || n_i == m) {
      out[demo.id] = std::nullopt;
      continue;
    }
    const double mean_in = sum_in[demo.id] / static_cast<double>(n_i);
    const double mean_out =
        (total - sum_in[demo.id]) / static_cast<double>(m - n_i);
    out[demo.id] = mean_in - mean_out;
  }
  return out;
}

ScoreTable loo_scores(const std::vector<Demonstration>& prompt_demos,
                      const TaskSpec& task, const Dataset& dev,
                      Evaluator& evaluator) {
  if (prompt_demos.size() < 2) {
    throw ConfigError("loo: prompt must contain at least 2 demonstrations");
  }
  std::set<std::string> ids;
  for (const auto& demo : prompt_demos) {
    if (!ids.insert(demo.id).second) {
      throw ConfigError("loo: duplicate demo id '" + demo.id + "'");
    }
  }
  const double full = evaluator.evaluate(task, prompt_demos, dev).score;
  ScoreTable out;
  for (std::size_t i = 0; i < prompt_demos.size(); ++i) {
    std::vector<Demonstration> reduced;
    reduced.reserve(prompt_demos.size() - 1);
    for (std::size_t j = 0; j < prompt_demos.size(); ++j) {
      if (j != i) reduced.push_back(prompt_demos[j]);
    }
    out[prompt_demos[i].id] =
        full - evaluator.evaluate(task, reduced, dev).score;
  }
  return out;
}

std::vector<std::string> random_select(const CandidatePool& pool,
                                       std::size_t k, std::uint64_t seed) {
  if (k > pool.size()) {
    throw ConfigError("random_select: k exceeds pool size");
  }
  Rng rng(seed);
  const auto indices = rng.sample_arrangement(pool.size(), k);
  std::vector<std::string> out;
  out.reserve(k);
  for (const std::size_t i : indices) out.push_back(pool.demos[i].id);
  return out;
}

std::vector<std::string> ranked_ids(const ScoreTable& scores, bool descending) {
  std::vector<double> defined;
  for (const auto& [id, score] : scores) {
    if (score.has_value()) defined.push_back(*score);
  }
  double median = 0.0;
  if (!defined.empty()) {
    std::sort(defined.begin(), defined.end());
    const std::size_t mid = defined.size() / 2;
    median = defined.size() % 2 == 1
                 ? defined[mid]
                 : 0.5 * (defined[mid - 1] + defined[mid]);
  }
  std::vector<std::pair<double, std::string>> keyed;
  keyed.reserve(scores.size());
  for (const auto& [id, score] : scores) {
    keyed.emplace_back(score.value_or(median), id);
  }
  std::sort(keyed.begin(), keyed.end(),
            [descending](const auto& a, const auto& b) {
              if (a.first != b.first) {
                return descending ? a.first > b.first : a.first < b.first;
              }
              return a.second < b.second;
            });
  std::vector<std::string> out;
  out.reserve(keyed.size());
  for (const auto& [value, id] : keyed) out.push_back(id);
  return out;
}

void save_prompt_log(const std::filesystem::path& path, const PromptLog& log) {
  std::string buf;
  for (const auto& entry : log.entries) {
    json obj{{"demo_ids", entry.demo_ids}, {"score", entry.score}};
    buf += obj.dump();
    buf += '\n';
  }
  write_file_atomic(path, buf);
}

PromptLog load_prompt_log(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open for reading: " + path.string());
  PromptLog log;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    json obj = json::parse(line, nullptr, false);
    if (obj.is_discarded() || !obj.contains("demo_ids") ||
        !obj.contains("score")) {
      throw IoError(path.string() + ":" + std::to_string(lineno) +
                    ": malformed prompt log entry");
    }
    PromptLogEntry entry;
    entry.demo_ids = obj["demo_ids"].get<std::vector<std::string>>();
    entry.score = obj["score"].get<double>();
    log.entries.push_back(std::move(entry));
  }
  return log;
}

void save_score_table_csv(const std::filesystem::path& path,
                          const ScoreTable& scores,
                          const std::map<std::string, std::int64_t>& counts) {
  std::string buf = "demo_id,value,count\n";
  for (const auto& [id, score] : scores) {
    const auto it = counts.find(id);
    const std::int64_t count = it == counts.end() ? 0 : it->second;
    buf += id;
    buf += ',';
    if (score.has_value()) buf += format_double(*score);
    buf += ',';
    buf += std::to_string(score.has_value() ? count : 0);
    buf += '\n';
  }
  write_file_atomic(path, buf);
}

ScoreTable load_score_table_csv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open for reading: " + path.string());
  std::string line;
  if (!std::getline(in, line) || line != "demo_id,value,count") {
    throw IoError(path.string() + ": expected header demo_id,value,count");
  }
  ScoreTable out;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const auto first = line.find(',');
    const auto second = line.rfind(',');
    if (first == std::string::npos || second == first) {
      throw IoError(path.string() + ": malformed row: " + line);
    }
    const std::string id = line.substr(0, first);
    const std::string value_str = line.substr(first + 1, second - first - 1);
    if (value_str.empty()) {
      out[id] = std::nullopt;
      continue;
    }
    double value = 0.0;
    const auto res = std::from_chars(
        value_str.data(), value_str.data() + value_str.size(), value);
    if (res.ec != std::errc{}) {
      throw IoError(path.string() + ": malformed number: " + value_str);
    }
    out[id] = value;
  }
  return out;
}

}  // namespace demoval::baselines
