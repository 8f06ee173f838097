#include "demoval/harness.hpp"

#include <fcntl.h>
#include <unistd.h>

#include <algorithm>
#include <set>

#include <json.hpp>

#include "demoval/digest.hpp"
#include "demoval/error.hpp"
#include "demoval/io.hpp"

namespace demoval::harness {

using nlohmann::json;

Direction direction_from_string(const std::string& s) {
  if (s == "high") return Direction::kHigh;
  if (s == "low") return Direction::kLow;
  throw ConfigError("direction must be 'high' or 'low', got '" + s + "'");
}

std::vector<std::string> select_by_value(const ValueTable& values,
                                         Direction direction, std::size_t k) {
  if (k > values.size()) {
    throw ConfigError("select: k=" + std::to_string(k) + " exceeds " +
                      std::to_string(values.size()) + " scored demos");
  }
  std::vector<std::string> order = values.ids_by_value_ascending();
  if (direction == Direction::kHigh) {
    std::reverse(order.begin(), order.end());
  }
  order.resize(k);
  return order;
}

namespace {

void require_coverage(const ValueTable& values, const CandidatePool& pool) {
  for (const auto& demo : pool.demos) {
    if (!values.has(demo.id)) {
      throw ConfigError("experiment: demo '" + demo.id +
                        "' has no value; the table must cover the pool");
    }
  }
}

}  // namespace

Curve run_add_experiment(const ValueTable& values, Direction direction,
                         int max_k, const CandidatePool& pool,
                         const TaskSpec& task, const Dataset& dev,
                         Evaluator& evaluator) {
  if (max_k < 0 || static_cast<std::size_t>(max_k) > pool.size()) {
    throw ConfigError("add experiment: max_k must be in [0, pool size]");
  }
  require_coverage(values, pool);
  const std::vector<std::string> order =
      select_by_value(values, direction, static_cast<std::size_t>(max_k));

  Curve curve;
  std::vector<Demonstration> demos;
  try {
    curve.accuracy.push_back(evaluator.evaluate(task, demos, dev).score);
    for (const auto& id : order) {
      demos.push_back(*pool.find(id));
      curve.accuracy.push_back(evaluator.evaluate(task, demos, dev).score);
    }
  } catch (const BackendError&) {
    curve.truncated = true;
  }
  return curve;
}

Curve run_remove_experiment(const ValueTable& values,
                            const std::vector<Demonstration>& base_prompt,
                            Direction direction, const TaskSpec& task,
                            const Dataset& dev, Evaluator& evaluator) {
  if (base_prompt.size() != 10) {
    throw ConfigError("remove experiment: base prompt must hold exactly 10 demos");
  }
  ValueTable base_values;
  for (const auto& demo : base_prompt) {
    if (!values.has(demo.id)) {
      throw ConfigError("remove experiment: base demo '" + demo.id +
                        "' is not scored");
    }
    const auto& entry = values.at(demo.id);
    base_values.set(demo.id, entry.value, entry.count);
  }
  // removal order over the base prompt only
  const std::vector<std::string> removal =
      select_by_value(base_values, direction, 5);

  Curve curve;
  std::vector<Demonstration> demos = base_prompt;
  try {
    curve.accuracy.push_back(evaluator.evaluate(task, demos, dev).score);
    for (const auto& id : removal) {
      demos.erase(std::find_if(demos.begin(), demos.end(),
                               [&](const Demonstration& d) { return d.id == id; }));
      curve.accuracy.push_back(evaluator.evaluate(task, demos, dev).score);
    }
  } catch (const BackendError&) {
    curve.truncated = true;
  }
  return curve;
}

fairness::FairnessReport run_fairness_experiment(
    const ValueTable& context_values, const CandidatePool& context_pool,
    const Dataset& test, const std::string& positive_label, double bpc,
    double bpt, int shots, const TaskSpec& task, Evaluator& evaluator) {
  if (!evaluator.capabilities().per_example) {
    throw ConfigError("fairness experiment: backend must be per-example capable");
  }
  if (shots < 1 || static_cast<std::size_t>(shots) > context_pool.size()) {
    throw ConfigError("fairness experiment: shots must be in [1, context pool size]");
  }
  require_coverage(context_values, context_pool);

  const std::vector<std::string> selected =
      select_by_value(context_values, Direction::kHigh,
                      static_cast<std::size_t>(shots));
  std::vector<Demonstration> demos;
  demos.reserve(selected.size());
  for (const auto& id : selected) demos.push_back(*context_pool.find(id));

  const EvalOutcome outcome = evaluator.evaluate(task, demos, test);

  std::map<std::string, int> sensitive_by_id;
  for (const auto& ex : test) {
    if (!ex.sensitive.has_value()) {
      throw ConfigError("fairness experiment: test example '" + ex.id +
                        "' lacks a sensitive attribute");
    }
    sensitive_by_id[ex.id] = *ex.sensitive;
  }
  std::vector<fairness::PredictionRow> rows;
  rows.reserve(outcome.predictions.size());
  for (const auto& rec : outcome.predictions) {
    fairness::PredictionRow row;
    row.gold = rec.gold;
    row.predicted = rec.predicted.value_or("");
    row.sensitive = sensitive_by_id.at(rec.example_id);
    rows.push_back(std::move(row));
  }
  const auto preds = fairness::binarize(rows, positive_label);

  fairness::FairnessReport report;
  report.acc = outcome.score;
  report.m_dpd = fairness::demographic_parity_difference(preds);
  report.m_eod = fairness::equalized_odds_difference(preds);
  report.bpc = bpc;
  report.bpt = bpt;
  report.shots = shots;
  report.refusals = outcome.refusals;
  return report;
}

std::map<int, double> run_ood_experiment(const ValueTable& source_values,
                                         const CandidatePool& source_pool,
                                         const std::vector<int>& k_list,
                                         const Dataset& ood_test,
                                         const TaskSpec& task,
                                         Evaluator& evaluator) {
  require_coverage(source_values, source_pool);
  std::set<std::string> labels;
  for (const auto& label : task.label_set) labels.insert(normalize_label(label));
  for (const auto& ex : ood_test) {
    if (!labels.count(normalize_label(ex.label))) {
      throw ConfigError("ood experiment: test example '" + ex.id +
                        "' label '" + ex.label +
                        "' is outside the task label set");
    }
  }
  std::map<int, double> out;
  for (const int k : k_list) {
    if (k < 1 || static_cast<std::size_t>(k) > source_pool.size()) {
      throw ConfigError("ood experiment: k=" + std::to_string(k) +
                        " must be in [1, source pool size]");
    }
    const auto selected = select_by_value(source_values, Direction::kHigh,
                                          static_cast<std::size_t>(k));
    std::vector<Demonstration> demos;
    demos.reserve(selected.size());
    for (const auto& id : selected) demos.push_back(*source_pool.find(id));
    out[k] = evaluator.evaluate(task, demos, ood_test).score;
  }
  return out;
}

std::string fairness_report_to_json(const fairness::FairnessReport& report) {
  json obj{{"acc", report.acc},       {"m_dpd", report.m_dpd},
           {"m_eod", report.m_eod},   {"bpc", report.bpc},
           {"bpt", report.bpt},       {"shots", report.shots},
           {"refusals", report.refusals}};
  return obj.dump(2) + "\n";
}

std::string ood_report_to_json(const std::map<int, double>& accuracy_by_k) {
  json rows = json::array();
  for (const auto& [k, acc] : accuracy_by_k) {
    rows.push_back(json{{"k", k}, {"accuracy", acc}});
  }
  return json{{"accuracy_by_k", rows}}.dump(2) + "\n";
}

RunDir::RunDir(std::filesystem::path dir, std::string config_hash)
    : dir_(std::move(dir)), config_hash_(std::move(config_hash)) {
  std::filesystem::create_directories(dir_);
  lock_path_ = dir_ / ".lock";
  const int fd = ::open(lock_path_.c_str(), O_CREAT | O_EXCL | O_WRONLY, 0644);
  if (fd < 0) {
    throw IoError("run directory is locked by another writer: " +
                  dir_.string());
  }
  const std::string pid = std::to_string(::getpid()) + "\n";
  (void)!::write(fd, pid.data(), pid.size());
  ::close(fd);

  const std::filesystem::path manifest = dir_ / "manifest.json";
  if (std::filesystem::exists(manifest)) {
    json parsed = json::parse(read_file(manifest), nullptr, false);
    if (!parsed.is_discarded() && parsed.contains("files")) {
      for (const auto& file : parsed["files"]) {
        Entry entry;
        entry.path = file.value("path", "");
        entry.kind = file.value("kind", "");
        entry.sha256 = file.value("sha256", "");
        entry.config_hash = file.value("config_hash", "");
        if (!entry.path.empty()) entries_[entry.path] = entry;
      }
    }
  }
}

RunDir::~RunDir() {
  std::error_code ec;
  std::filesystem::remove(lock_path_, ec);
}

std::filesystem::path RunDir::write_curve(const std::string& name,
                                          const Curve& curve) {
  std::string buf = "step,accuracy\n";
  for (std::size_t i = 0; i < curve.accuracy.size(); ++i) {
    buf += std::to_string(i);
    buf += ',';
    buf += format_double(curve.accuracy[i]);
    buf += '\n';
  }
  const std::filesystem::path path = dir_ / (name + ".csv");
  write_file_atomic(path, buf);
  entries_[name + ".csv"] =
      Entry{name + ".csv", curve.truncated ? "curve(truncated)" : "curve",
            sha256_hex(buf), config_hash_};
  return path;
}

std::filesystem::path RunDir::write_report(const std::string& name,
                                           const std::string& json_text) {
  const std::filesystem::path path = dir_ / (name + ".json");
  write_file_atomic(path, json_text);
  entries_[name + ".json"] =
      Entry{name + ".json", "report", sha256_hex(json_text), config_hash_};
  return path;
}

std::filesystem::path RunDir::write_table(const std::string& name,
                                          const ValueTable& table) {
  const std::filesystem::path path = dir_ / (name + ".csv");
  write_value_table_csv(path, table);
  entries_[name + ".csv"] =
      Entry{name + ".csv", "value_table", sha256_hex(read_file(path)),
            config_hash_};
  return path;
}

void RunDir::register_file(const std::filesystem::path& path,
                           const std::string& kind) {
  const std::string rel =
      std::filesystem::relative(path, dir_).generic_string();
  entries_[rel] = Entry{rel, kind, sha256_hex(read_file(path)), config_hash_};
}

void RunDir::finalize() {
  json files = json::array();
  for (const auto& [rel, entry] : entries_) {
    files.push_back(json{{"path", entry.path},
                         {"kind", entry.kind},
                         {"sha256", entry.sha256},
                         {"config_hash", entry.config_hash}});
  }
  json manifest{{"config_hash", config_hash_}, {"files", files}};
  write_file_atomic(dir_ / "manifest.json", manifest.dump(2) + "\n");
}

}  // namespace demoval::harness
