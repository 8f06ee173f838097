#pragma once

#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "demoval/types.hpp"

namespace demoval {

// What a backend can do. direct_utility backends score a demo sequence
// analytically and must be deterministic; per_example backends predict a
// label for each assembled prompt.
struct EvalCapabilities {
  bool direct_utility = false;
  bool per_example = false;
};

struct PredictionRecord {
  std::string example_id;
  std::string gold;
  std::string raw;
  std::optional<std::string> predicted;  // nullopt = unparseable output
  bool correct = false;
};

// A prompt's performance on a dev set plus per-example predictions.
// Direct-utility backends leave `predictions` empty.
struct EvalOutcome {
  double score = 0.0;  // accuracy in [0,1]
  std::vector<PredictionRecord> predictions;
  int refusals = 0;
  std::vector<std::string> failed_example_ids;
  bool partial = false;

  int failures() const { return static_cast<int>(failed_example_ids.size()); }
};

// The V(P, f) slot: score an ordered demo sequence against a dev set.
// Implementations must tolerate concurrent evaluate() calls.
class Evaluator {
 public:
  virtual ~Evaluator() = default;
  virtual EvalCapabilities capabilities() const = 0;
  virtual EvalOutcome evaluate(const TaskSpec& task,
                               const std::vector<Demonstration>& demos,
                               const Dataset& dev) = 0;
};

// A raw text-in/text-out completion model; the per-example evaluator is
// built on top of this. Implementations must be safe to call concurrently.
class TextCompletionModel {
 public:
  virtual ~TextCompletionModel() = default;
  virtual std::string complete(const std::string& prompt) = 0;
};

// Per-example evaluator: assembles one prompt per dev example (same demos,
// that example as query), parses each prediction by normalized verbalizer
// matching, and scores accuracy = correct/total. Unparseable outputs count
// as incorrect and increment the refusal counter. Per-example failures are
// recorded; the outcome is marked partial when any occur, and the whole
// evaluation aborts once the failure fraction exceeds `failure_ceiling`.
class PerExampleEvaluator : public Evaluator {
 public:
  PerExampleEvaluator(std::shared_ptr<TextCompletionModel> model,
                      double failure_ceiling = 0.0, int concurrency = 1);

  EvalCapabilities capabilities() const override { return {false, true}; }
  EvalOutcome evaluate(const TaskSpec& task,
                       const std::vector<Demonstration>& demos,
                       const Dataset& dev) override;

 private:
  std::shared_ptr<TextCompletionModel> model_;
  double failure_ceiling_;
  int concurrency_;
};

}  // namespace demoval
