#include "demoval/types.hpp"

#include <algorithm>
#include <cctype>
#include <set>

#include "demoval/error.hpp"

namespace demoval {

namespace {

bool contains_placeholder(const std::string& tmpl, const std::string& name) {
  return tmpl.find("{" + name + "}") != std::string::npos;
}

bool is_boundary(char c) {
  return !(std::isalnum(static_cast<unsigned char>(c)));
}

}  // namespace

void validate_task(const TaskSpec& task) {
  if (task.label_set.empty()) {
    throw ConfigError("task: label_set is empty");
  }
  std::set<std::string> normalized;
  for (const auto& label : task.label_set) {
    if (!normalized.insert(normalize_label(label)).second) {
      throw ConfigError("task: label set not distinct after normalization: '" +
                        label + "'");
    }
  }
  if (!contains_placeholder(task.demo_template, "input") ||
      !contains_placeholder(task.demo_template, "label")) {
    throw TemplateError("task: demo_template must contain {input} and {label}");
  }
  if (!contains_placeholder(task.query_template, "input")) {
    throw TemplateError("task: query_template must contain {input}");
  }
  if (contains_placeholder(task.query_template, "label")) {
    throw TemplateError("task: query_template must not contain {label}");
  }
}

void CandidatePool::validate(const TaskSpec& task) const {
  std::set<std::string> ids;
  std::set<std::string> labels;
  for (const auto& label : task.label_set) labels.insert(normalize_label(label));
  for (const auto& demo : demos) {
    if (demo.id.empty()) throw ConfigError("pool: demo with empty id");
    if (!ids.insert(demo.id).second) {
      throw ConfigError("pool: duplicate demo id '" + demo.id + "'");
    }
    if (!labels.count(normalize_label(demo.label))) {
      throw ConfigError("pool: demo '" + demo.id + "' has label '" +
                        demo.label + "' outside the task label set");
    }
  }
}

const Demonstration* CandidatePool::find(const std::string& id) const {
  for (const auto& demo : demos) {
    if (demo.id == id) return &demo;
  }
  return nullptr;
}

std::string normalize_label(const std::string& raw) {
  std::size_t begin = 0;
  std::size_t end = raw.size();
  while (begin < end && std::isspace(static_cast<unsigned char>(raw[begin]))) {
    ++begin;
  }
  while (end > begin && std::isspace(static_cast<unsigned char>(raw[end - 1]))) {
    --end;
  }
  std::string out = raw.substr(begin, end - begin);
  std::transform(out.begin(), out.end(), out.begin(), [](unsigned char c) {
    return static_cast<char>(std::tolower(c));
  });
  return out;
}

std::optional<std::string> match_label(
    const std::string& raw, const std::vector<std::string>& label_set) {
  const std::string norm = normalize_label(raw);
  for (const auto& label : label_set) {
    if (norm == normalize_label(label)) return label;
  }
  for (const auto& label : label_set) {
    const std::string nl = normalize_label(label);
    if (nl.empty() || norm.size() <= nl.size()) continue;
    if (norm.compare(0, nl.size(), nl) == 0 && is_boundary(norm[nl.size()])) {
      return label;
    }
  }
  return std::nullopt;
}

}  // namespace demoval
