#include "demoval/synthetic.hpp"

#include <algorithm>
#include <cmath>

#include "demoval/digest.hpp"
#include "demoval/error.hpp"

namespace demoval {

double synthetic_score(const SyntheticModelSpec& spec,
                       const std::vector<Demonstration>& sequence) {
  if (spec.gamma <= 0.0 || spec.gamma > 1.0) {
    throw ConfigError("synthetic: gamma must be in (0,1]");
  }
  double v = spec.v0;
  double discount = 1.0;
  for (const auto& demo : sequence) {
    const auto it = spec.weights.find(demo.id);
    if (it != spec.weights.end()) {
      v += discount * it->second;
    } else if (spec.has_default_weight) {
      v += discount * spec.default_weight;
    } else {
      throw ConfigError("synthetic: no weight for demo id '" + demo.id + "'");
    }
    discount *= spec.gamma;
  }
  if (!spec.interactions.empty()) {
    for (std::size_t i = 0; i < sequence.size(); ++i) {
      for (std::size_t j = i + 1; j < sequence.size(); ++j) {
        const auto it =
            spec.interactions.find({sequence[i].id, sequence[j].id});
        if (it != spec.interactions.end()) v += it->second;
      }
    }
  }
  return std::clamp(v, 0.0, 1.0);
}

EvalOutcome SyntheticEvaluator::evaluate(const TaskSpec&,
                                         const std::vector<Demonstration>& demos,
                                         const Dataset&) {
  EvalOutcome outcome;
  outcome.score = synthetic_score(spec_, demos);
  return outcome;
}

EvalOutcome SyntheticClassifier::evaluate(const TaskSpec& task,
                                          const std::vector<Demonstration>& demos,
                                          const Dataset& dev) {
  const double p = synthetic_score(spec_, demos);
  EvalOutcome outcome;
  outcome.predictions.reserve(dev.size());
  int correct = 0;
  for (const auto& ex : dev) {
    PredictionRecord rec;
    rec.example_id = ex.id;
    rec.gold = ex.label;
    rec.correct = hash01(salt_, ex.id) < p;
    if (rec.correct) {
      rec.predicted = ex.label;
    } else {
      // deterministic wrong label: next entry of the label set, cyclically
      const auto& labels = task.label_set;
      std::size_t idx = 0;
      for (std::size_t i = 0; i < labels.size(); ++i) {
        if (normalize_label(labels[i]) == normalize_label(ex.label)) {
          idx = i;
          break;
        }
      }
      rec.predicted = labels[(idx + 1) % labels.size()];
    }
    rec.raw = *rec.predicted;
    if (rec.correct) ++correct;
    outcome.predictions.push_back(std::move(rec));
  }
  outcome.score = dev.empty() ? 0.0
                              : static_cast<double>(correct) /
                                    static_cast<double>(dev.size());
  return outcome;
}

}  // namespace demoval
