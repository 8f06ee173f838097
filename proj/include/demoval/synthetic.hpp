#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include "demoval/evaluator.hpp"

namespace demoval {

// Deterministic closed-form utility standing in for an LLM's V:
//   V(sequence) = clamp(v0 + sum_c gamma^(c-1) * w[pi_c]
//                          + sum of interaction deltas for ordered pairs
//                            (i precedes j) present in the sequence, 0, 1)
struct SyntheticModelSpec {
  double v0 = 0.5;
  double gamma = 1.0;  // position discount in (0,1]
  std::map<std::string, double> weights;
  double default_weight = 0.0;
  bool has_default_weight = false;
  // (earlier id, later id) -> delta applied when the first precedes the
  // second anywhere in the sequence.
  std::map<std::pair<std::string, std::string>, double> interactions;
};

// Throws ConfigError when a demo id has no weight (and no default).
double synthetic_score(const SyntheticModelSpec& spec,
                       const std::vector<Demonstration>& sequence);

// direct_utility backend: returns synthetic_score of the demo sequence;
// the dev set is ignored by construction.
class SyntheticEvaluator : public Evaluator {
 public:
  explicit SyntheticEvaluator(SyntheticModelSpec spec) : spec_(std::move(spec)) {}

  EvalCapabilities capabilities() const override { return {true, false}; }
  EvalOutcome evaluate(const TaskSpec& task,
                       const std::vector<Demonstration>& demos,
                       const Dataset& dev) override;

  const SyntheticModelSpec& spec() const { return spec_; }

 private:
  SyntheticModelSpec spec_;
};

// per_example backend on the same closed-form utility: example e is
// predicted correctly iff hash01(salt, e.id) < V(demos), with a
// deterministic wrong label otherwise. Aggregate accuracy tracks the
// synthetic utility while still yielding per-example predictions, which
// the fairness and OOD experiments need.
class SyntheticClassifier : public Evaluator {
 public:
  SyntheticClassifier(SyntheticModelSpec spec, std::uint64_t salt)
      : spec_(std::move(spec)), salt_(salt) {}

  EvalCapabilities capabilities() const override { return {false, true}; }
  EvalOutcome evaluate(const TaskSpec& task,
                       const std::vector<Demonstration>& demos,
                       const Dataset& dev) override;

 private:
  SyntheticModelSpec spec_;
  std::uint64_t salt_;
};

}  // namespace demoval
