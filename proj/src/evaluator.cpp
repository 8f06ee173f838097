#include "demoval/evaluator.hpp"

#include <atomic>
#include <thread>

#include "demoval/error.hpp"
#include "demoval/prompt.hpp"

namespace demoval {

namespace {

struct Slot {
  PredictionRecord record;
  bool failed = false;
  std::string error;
};

}  // namespace

PerExampleEvaluator::PerExampleEvaluator(
    std::shared_ptr<TextCompletionModel> model, double failure_ceiling,
    int concurrency)
    : model_(std::move(model)),
      failure_ceiling_(failure_ceiling),
      concurrency_(concurrency < 1 ? 1 : concurrency) {}

EvalOutcome PerExampleEvaluator::evaluate(
    const TaskSpec& task, const std::vector<Demonstration>& demos,
    const Dataset& dev) {
  std::vector<Slot> slots(dev.size());

  auto run_one = [&](std::size_t i) {
    Slot& slot = slots[i];
    const LabeledExample& ex = dev[i];
    slot.record.example_id = ex.id;
    slot.record.gold = ex.label;
    try {
      PromptSpec spec{&task, demos, ex.input};
      slot.record.raw = model_->complete(assemble_prompt(spec));
      slot.record.predicted = match_label(slot.record.raw, task.label_set);
      slot.record.correct =
          slot.record.predicted.has_value() &&
          normalize_label(*slot.record.predicted) == normalize_label(ex.label);
    } catch (const std::exception& e) {
      slot.failed = true;
      slot.error = e.what();
    }
  };

  if (concurrency_ <= 1 || dev.size() <= 1) {
    for (std::size_t i = 0; i < dev.size(); ++i) run_one(i);
  } else {
    std::atomic<std::size_t> next{0};
    const int workers =
        std::min<int>(concurrency_, static_cast<int>(dev.size()));
    std::vector<std::thread> pool;
    pool.reserve(workers);
    for (int w = 0; w < workers; ++w) {
      pool.emplace_back([&] {
        for (;;) {
          const std::size_t i = next.fetch_add(1);
          if (i >= dev.size()) return;
          run_one(i);
        }
      });
    }
    for (auto& t : pool) t.join();
  }

  EvalOutcome outcome;
  int correct = 0;
  for (auto& slot : slots) {
    if (slot.failed) {
      outcome.failed_example_ids.push_back(slot.record.example_id);
      continue;
    }
    if (!slot.record.predicted.has_value()) ++outcome.refusals;
    if (slot.record.correct) ++correct;
    outcome.predictions.push_back(std::move(slot.record));
  }
  outcome.partial = !outcome.failed_example_ids.empty();
  const double total = static_cast<double>(dev.size());
  outcome.score = total > 0 ? static_cast<double>(correct) / total : 0.0;
  if (total > 0 &&
      static_cast<double>(outcome.failures()) / total > failure_ceiling_) {
    throw BackendError(
        "per-example evaluation: " + std::to_string(outcome.failures()) +
        " of " + std::to_string(dev.size()) +
        " examples failed (first: " + outcome.failed_example_ids.front() + ")");
  }
  return outcome;
}

}  // namespace demoval
