#pragma once

#include <optional>
#include <string>
#include <vector>

namespace demoval {

// One candidate input/label pair with a stable identifier.
struct Demonstration {
  std::string id;
  std::string input;
  std::string label;
};

// Task configuration: instruction text, verbalized label set, and the
// templates used to render demonstrations and queries.
// demo_template must contain {input} and {label}; query_template must
// contain {input}.
struct TaskSpec {
  std::string instruction;
  std::vector<std::string> label_set;
  std::string demo_template = "Input: {input}\nLabel: {label}\n";
  std::string query_template = "Input: {input}\nLabel:";
  std::string separator = "\n";
};

// Validates templates and label set; throws ConfigError/TemplateError.
void validate_task(const TaskSpec& task);

// A labeled evaluation example. `sensitive` is the binary attribute A and
// is present only for fairness datasets.
struct LabeledExample {
  std::string id;
  std::string input;
  std::string label;
  std::optional<int> sensitive;
};

using Dataset = std::vector<LabeledExample>;

// Ordered demonstration pool. Ids must be unique.
struct CandidatePool {
  std::vector<Demonstration> demos;

  std::size_t size() const { return demos.size(); }
  // Throws ConfigError on duplicate ids or labels outside the task set.
  void validate(const TaskSpec& task) const;
  const Demonstration* find(const std::string& id) const;
};

// A fully specified prompt: task + ordered demos (possibly empty for
// zero-shot) + the query input.
struct PromptSpec {
  const TaskSpec* task = nullptr;
  std::vector<Demonstration> demos;
  std::string query_input;
};

// Label normalization: trim whitespace, case-fold ASCII.
std::string normalize_label(const std::string& raw);

// Verbalizer matching for model output: exact normalized match first,
// then "starts with verbalizer at a word boundary". First matching entry
// of label_set wins. Returns nullopt when nothing matches (a refusal).
std::optional<std::string> match_label(const std::string& raw,
                                       const std::vector<std::string>& label_set);

}  // namespace demoval
