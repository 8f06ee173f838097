#pragma once

#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "demoval/evaluator.hpp"
#include "demoval/fairness.hpp"
#include "demoval/types.hpp"
#include "demoval/value_table.hpp"

namespace demoval::harness {

enum class Direction { kHigh, kLow };

Direction direction_from_string(const std::string& s);

// Top-k (kHigh) or bottom-k (kLow) demo ids. The returned order is the
// composition order: most valuable first for kHigh, least first for kLow.
// Ties break by id so selection is a pure function of its inputs.
std::vector<std::string> select_by_value(const ValueTable& values,
                                         Direction direction, std::size_t k);

struct Curve {
  std::vector<double> accuracy;
  bool truncated = false;
};

// Starts zero-shot and appends demos one at a time in value order
// (descending for kHigh, ascending for kLow), recording accuracy after
// each addition. Curve length max_k+1; index 0 is the zero-shot score.
// A backend failure marks the curve truncated instead of aborting.
Curve run_add_experiment(const ValueTable& values, Direction direction,
                         int max_k, const CandidatePool& pool,
                         const TaskSpec& task, const Dataset& dev,
                         Evaluator& evaluator);

// Starts with the 10-demo base prompt and removes one demo per step
// (highest-value first for kHigh, lowest first for kLow) down to 5
// remaining, preserving the residual order. Curve length 6.
Curve run_remove_experiment(const ValueTable& values,
                            const std::vector<Demonstration>& base_prompt,
                            Direction direction, const TaskSpec& task,
                            const Dataset& dev, Evaluator& evaluator);

// Selects the `shots` most valuable demos from the parity-constructed
// context pool and measures accuracy and group-fairness metrics on the
// test set. The evaluator must be per-example capable.
fairness::FairnessReport run_fairness_experiment(
    const ValueTable& context_values, const CandidatePool& context_pool,
    const Dataset& test, const std::string& positive_label, double bpc,
    double bpt, int shots, const TaskSpec& task, Evaluator& evaluator);

// Top-k selection from source values, accuracy measured on the
// out-of-distribution test set for each k.
std::map<int, double> run_ood_experiment(const ValueTable& source_values,
                                         const CandidatePool& source_pool,
                                         const std::vector<int>& k_list,
                                         const Dataset& ood_test,
                                         const TaskSpec& task,
                                         Evaluator& evaluator);

std::string fairness_report_to_json(const fairness::FairnessReport& report);
std::string ood_report_to_json(const std::map<int, double>& accuracy_by_k);

// Output directory with an exclusive lock and an index manifest. Files are
// registered as they are written; finalize() persists manifest.json, which
// lists every output with its sha256 and the producing config hash.
// Reopening an existing directory merges with its manifest.
class RunDir {
 public:
  RunDir(std::filesystem::path dir, std::string config_hash);
  ~RunDir();

  RunDir(const RunDir&) = delete;
  RunDir& operator=(const RunDir&) = delete;

  const std::filesystem::path& dir() const { return dir_; }

  std::filesystem::path write_curve(const std::string& name, const Curve& curve);
  std::filesystem::path write_report(const std::string& name,
                                     const std::string& json_text);
  std::filesystem::path write_table(const std::string& name,
                                    const ValueTable& table);
  // Registers a file written by other means (cache, prompt log, ...).
  void register_file(const std::filesystem::path& path,
                     const std::string& kind);

  void finalize();

 private:
  struct Entry {
    std::string path;  // relative to dir
    std::string kind;
    std::string sha256;
    std::string config_hash;
  };

  std::filesystem::path dir_;
  std::string config_hash_;
  std::filesystem::path lock_path_;
  std::map<std::string, Entry> entries_;  // keyed by relative path
};

}  // namespace demoval::harness
