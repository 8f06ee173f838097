#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <cstdlib>
#include <fstream>
#include <thread>

#include "demoval/error.hpp"
#include "demoval/io.hpp"
#include "demoval/llm_client.hpp"
#include "demoval/prompt.hpp"
#include "demoval/synthetic.hpp"
#include "stub_server.hpp"
#include "test_util.hpp"

using namespace demoval;
using namespace testutil;

namespace {

std::vector<Demonstration> demos_by_index(const CandidatePool& pool,
                                          std::initializer_list<int> idx) {
  std::vector<Demonstration> out;
  for (const int i : idx) out.push_back(pool.demos[static_cast<std::size_t>(i)]);
  return out;
}

LlmBackendSpec stub_spec(const StubServer& server,
                         const std::filesystem::path& cache = {}) {
  LlmBackendSpec spec;
  spec.base_url = server.base_url();
  spec.model = "stub-model";
  spec.max_retries = 4;
  spec.initial_backoff_ms = 2;
  spec.cache_path = cache;
  return spec;
}

}  // namespace

TEST_CASE("synthetic_score closed form") {
  const CandidatePool pool = make_pool(3);
  const TaskSpec task = fixture_task();
  const Dataset dev = make_dev(2);

  SUBCASE("empty sequence returns v0") {
    SyntheticEvaluator eval(additive_spec(pool, {0.1, -0.05, 0.0}, 0.5));
    CHECK(eval.evaluate(task, {}, dev).score == 0.5);
  }
  SUBCASE("position discount") {
    SyntheticEvaluator eval(additive_spec(pool, {0.1, -0.05, 0.0}, 0.5, 0.5));
    const double v =
        eval.evaluate(task, demos_by_index(pool, {0, 1}), dev).score;
    CHECK(v == doctest::Approx(0.575).epsilon(1e-12));
  }
  SUBCASE("clamp at the upper bound") {
    SyntheticEvaluator eval(additive_spec(pool, {0.2, 0.0, 0.0}, 0.95));
    CHECK(eval.evaluate(task, demos_by_index(pool, {0}), dev).score == 1.0);
  }
  SUBCASE("unknown id is an error") {
    SyntheticModelSpec spec;
    spec.weights["other"] = 0.1;
    CHECK_THROWS_AS(
        synthetic_score(spec, {Demonstration{"missing", "x", "POS"}}),
        ConfigError);
  }
}

TEST_CASE("synthetic_score order sensitivity tracks gamma and interactions") {
  const CandidatePool pool = make_pool(3);
  const auto seq_ab = demos_by_index(pool, {0, 1});
  const auto seq_ba = demos_by_index(pool, {1, 0});

  SyntheticModelSpec flat = additive_spec(pool, {0.1, -0.05, 0.0}, 0.5, 1.0);
  CHECK(synthetic_score(flat, seq_ab) ==
        doctest::Approx(synthetic_score(flat, seq_ba)).epsilon(1e-15));

  SyntheticModelSpec discounted =
      additive_spec(pool, {0.1, -0.05, 0.0}, 0.5, 0.8);
  CHECK(std::abs(synthetic_score(discounted, seq_ab) -
                 synthetic_score(discounted, seq_ba)) > 1e-6);

  SyntheticModelSpec interacting = flat;
  interacting.interactions[{pool.demos[0].id, pool.demos[1].id}] = 0.07;
  CHECK(synthetic_score(interacting, seq_ab) ==
        doctest::Approx(synthetic_score(flat, seq_ab) + 0.07));
  CHECK(synthetic_score(interacting, seq_ba) ==
        doctest::Approx(synthetic_score(flat, seq_ba)));
}

TEST_CASE("order sensitivity on generated specs, both directions") {
  const CandidatePool pool = make_pool(5);
  std::mt19937_64 gen(404);
  for (int trial = 0; trial < 25; ++trial) {
    SyntheticModelSpec spec = random_spec(pool, gen, 4, trial % 3 == 0);
    // pick two demos with distinct weights and swap their positions
    const auto& a = pool.demos[0];
    const auto& b = pool.demos[1];
    const std::vector<Demonstration> ab{a, b, pool.demos[2]};
    const std::vector<Demonstration> ba{b, a, pool.demos[2]};

    SyntheticModelSpec flat = spec;
    flat.gamma = 1.0;
    flat.interactions.clear();
    CHECK(synthetic_score(flat, ab) ==
          doctest::Approx(synthetic_score(flat, ba)).epsilon(1e-14));

    SyntheticModelSpec discounted = spec;
    discounted.gamma = 0.7;
    discounted.interactions.clear();
    if (std::abs(spec.weights[a.id] - spec.weights[b.id]) > 1e-6) {
      CHECK(synthetic_score(discounted, ab) != synthetic_score(discounted, ba));
    }

    SyntheticModelSpec interacting = spec;
    interacting.gamma = 1.0;
    interacting.interactions.clear();
    interacting.interactions[{a.id, b.id}] = 0.03;
    CHECK(std::abs(synthetic_score(interacting, ab) -
                   synthetic_score(interacting, ba)) > 1e-6);
  }
}

TEST_CASE("synthetic classifier accuracy tracks the utility") {
  const CandidatePool pool = make_pool(4);
  const TaskSpec task = fixture_task();
  const Dataset dev = make_dev(400);
  SyntheticClassifier eval(additive_spec(pool, {0.3, 0.0, 0.0, 0.0}, 0.5), 99);

  const double base = eval.evaluate(task, {}, dev).score;
  const double boosted =
      eval.evaluate(task, demos_by_index(pool, {0}), dev).score;
  CHECK(base == doctest::Approx(0.5).epsilon(0.2));
  CHECK(boosted == doctest::Approx(0.8).epsilon(0.15));
  CHECK(boosted > base);

  // deterministic: same inputs, same outcome
  const auto a = eval.evaluate(task, demos_by_index(pool, {0}), dev);
  const auto b = eval.evaluate(task, demos_by_index(pool, {0}), dev);
  REQUIRE(a.predictions.size() == b.predictions.size());
  for (std::size_t i = 0; i < a.predictions.size(); ++i) {
    CHECK(a.predictions[i].predicted == b.predictions[i].predicted);
  }
}

TEST_CASE("per-example evaluator: constant model on a half-positive dev set") {
  const TaskSpec task = fixture_task();
  const Dataset dev = make_dev(8);  // alternating NEG/POS
  PerExampleEvaluator eval(std::make_shared<ConstantModel>("NEG"));
  const EvalOutcome outcome = eval.evaluate(task, {}, dev);
  CHECK(outcome.score == 0.5);
  CHECK(outcome.refusals == 0);
  CHECK(outcome.predictions.size() == 8);
}

TEST_CASE("per-example evaluator: scripted accuracy and order invariance") {
  const TaskSpec task = fixture_task();
  Dataset dev = make_dev(4);
  // answer correctly for queries 0..2, wrong for query 3
  auto model = std::make_shared<ScriptedModel>([&](const std::string& prompt) {
    for (std::size_t i = 0; i < dev.size(); ++i) {
      if (prompt.find("Input: " + dev[i].input + "\nLabel:") != std::string::npos) {
        return i < 3 ? dev[i].label : std::string(i % 2 == 0 ? "POS" : "NEG");
      }
    }
    return std::string("???");
  });
  PerExampleEvaluator eval(model);
  CHECK(eval.evaluate(task, {}, dev).score == 0.75);

  Dataset shuffled{dev[2], dev[0], dev[3], dev[1]};
  CHECK(eval.evaluate(task, {}, shuffled).score == 0.75);
}

TEST_CASE("per-example evaluator: unparseable output is a refusal and incorrect") {
  const TaskSpec task = fixture_task();
  const Dataset dev = make_dev(4);
  PerExampleEvaluator eval(std::make_shared<ConstantModel>("no idea"));
  const EvalOutcome outcome = eval.evaluate(task, {}, dev);
  CHECK(outcome.score == 0.0);
  CHECK(outcome.refusals == 4);
}

TEST_CASE("per-example evaluator failure handling") {
  const TaskSpec task = fixture_task();
  const Dataset dev = make_dev(4);
  auto flaky = std::make_shared<ScriptedModel>([&](const std::string& prompt) {
    if (prompt.find(dev[1].input) != std::string::npos) {
      throw BackendError("boom");
    }
    return std::string("POS");
  });

  SUBCASE("default ceiling 0 aborts on any failure") {
    PerExampleEvaluator strict(flaky);
    CHECK_THROWS_AS(strict.evaluate(task, {}, dev), BackendError);
  }
  SUBCASE("a loose ceiling records the failure and marks the outcome partial") {
    PerExampleEvaluator loose(flaky, 0.5);
    const EvalOutcome outcome = loose.evaluate(task, {}, dev);
    CHECK(outcome.partial);
    CHECK(outcome.failures() == 1);
    CHECK(outcome.failed_example_ids ==
          std::vector<std::string>{dev[1].id});
    CHECK(outcome.predictions.size() == 3);
    // only e03 is POS among the surviving examples; failures count against
    CHECK(outcome.score == 0.25);
  }
}

TEST_CASE("per-example evaluator is consistent under concurrency") {
  const TaskSpec task = fixture_task();
  const Dataset dev = make_dev(64);
  auto echo_gold = std::make_shared<ScriptedModel>([&](const std::string& p) {
    for (const auto& ex : dev) {
      if (p.find("Input: " + ex.input + "\nLabel:") != std::string::npos) {
        return ex.label;
      }
    }
    return std::string("?");
  });
  PerExampleEvaluator sequential(echo_gold, 0.0, 1);
  PerExampleEvaluator parallel(echo_gold, 0.0, 8);
  CHECK(sequential.evaluate(task, {}, dev).score == 1.0);
  CHECK(parallel.evaluate(task, {}, dev).score == 1.0);
}

TEST_CASE("llm client round trip against the stub") {
  setenv("DEMOVAL_API_KEY", "test-key", 1);
  StubServer server([](const std::string&) { return "POS"; });
  OpenAiClient client(stub_spec(server));
  CHECK(client.complete("Classify:\nInput: hi\nLabel:") == "POS");
  CHECK(server.requests() == 1);
}

TEST_CASE("llm client caches: one network call for identical prompts") {
  setenv("DEMOVAL_API_KEY", "test-key", 1);
  const auto dir = scratch_dir("cache1");
  StubServer server([](const std::string&) { return "NEG"; });
  OpenAiClient client(stub_spec(server, dir / "cache.jsonl"));
  CHECK(client.complete("same prompt") == "NEG");
  CHECK(client.complete("same prompt") == "NEG");
  CHECK(server.requests() == 1);

  // a fresh client reuses the persisted cache: zero network calls
  OpenAiClient fresh(stub_spec(server, dir / "cache.jsonl"));
  CHECK(fresh.complete("same prompt") == "NEG");
  CHECK(server.requests() == 1);
}

TEST_CASE("llm client rejects an empty prompt before any network call") {
  setenv("DEMOVAL_API_KEY", "test-key", 1);
  StubServer server([](const std::string&) { return "POS"; });
  OpenAiClient client(stub_spec(server));
  CHECK_THROWS_AS(client.complete(""), ConfigError);
  CHECK(server.requests() == 0);
}

TEST_CASE("llm client retries injected 429s and then succeeds") {
  setenv("DEMOVAL_API_KEY", "test-key", 1);
  StubServer server([](const std::string&) { return "POS"; }, 2, 429);
  OpenAiClient client(stub_spec(server));
  CHECK(client.complete("p") == "POS");
  CHECK(server.requests() == 3);
}

TEST_CASE("llm client gives up after max retries") {
  setenv("DEMOVAL_API_KEY", "test-key", 1);
  StubServer server([](const std::string&) { return "POS"; }, 1000, 503);
  LlmBackendSpec spec = stub_spec(server);
  spec.max_retries = 2;
  OpenAiClient client(spec);
  CHECK_THROWS_AS(client.complete("p"), BackendError);
  CHECK(server.requests() == 3);  // initial try + 2 retries
}

TEST_CASE("llm client rejects a non-retryable status outright") {
  setenv("DEMOVAL_API_KEY", "test-key", 1);
  StubServer server([](const std::string&) { return "POS"; }, 1000, 400);
  OpenAiClient client(stub_spec(server));
  CHECK_THROWS_AS(client.complete("p"), BackendError);
  CHECK(server.requests() == 1);
}

TEST_CASE("cache recovers from a corrupt trailing line") {
  const auto dir = scratch_dir("cache2");
  const auto path = dir / "cache.jsonl";
  {
    ResponseCache cache(path);
    cache.insert("k1", "sha1", "m", "first");
    cache.insert("k2", "sha2", "m", "second");
  }
  {
    std::ofstream out(path, std::ios::app | std::ios::binary);
    out << "{\"key\":\"k3\",\"resp";  // torn write
  }
  ResponseCache recovered(path);
  CHECK(recovered.unique_keys() == 2);
  CHECK(recovered.lookup("k1") == "first");
  CHECK(recovered.lookup("k2") == "second");
  CHECK_FALSE(recovered.lookup("k3").has_value());

  // the file itself was truncated back to the valid prefix
  ResponseCache again(path);
  CHECK(again.unique_keys() == 2);
  CHECK(ResponseCache::stats(path).lines == 2);
}

TEST_CASE("corruption followed by valid data is an error, not a torn tail") {
  const auto dir = scratch_dir("cache3");
  const auto path = dir / "cache.jsonl";
  {
    std::ofstream out(path, std::ios::binary);
    out << "garbage line\n";
    out << R"({"key":"k1","prompt_sha":"s","model":"m","response":"r","timestamp":1})"
        << "\n";
  }
  CHECK_THROWS_AS(ResponseCache{path}, IoError);
}

TEST_CASE("cache gc keeps the last entry per key") {
  const auto dir = scratch_dir("cache4");
  const auto path = dir / "cache.jsonl";
  {
    ResponseCache cache(path);
    cache.insert("k1", "sha", "m", "old");
    cache.insert("k1", "sha", "m", "new");
    cache.insert("k2", "sha", "m", "x");
  }
  CHECK(ResponseCache::stats(path).lines == 3);
  CHECK(ResponseCache::gc(path) == 2);
  CHECK(ResponseCache::stats(path).lines == 2);
  ResponseCache cache(path);
  CHECK(cache.lookup("k1") == "new");
}

TEST_CASE("llm-backed per-example evaluation produces a cached, repeatable outcome") {
  setenv("DEMOVAL_API_KEY", "test-key", 1);
  const TaskSpec task = fixture_task();
  const Dataset dev = make_dev(6);
  const auto dir = scratch_dir("cache5");
  // stub answers POS iff the query index is odd (which is the gold label)
  StubServer server([](const std::string& prompt) {
    const auto pos = prompt.rfind("query ");
    const int idx = std::stoi(prompt.substr(pos + 6));
    return idx % 2 == 1 ? "POS" : "NEG";
  });
  auto client =
      std::make_shared<OpenAiClient>(stub_spec(server, dir / "c.jsonl"));
  PerExampleEvaluator eval(client, 0.0, 4);

  const EvalOutcome first = eval.evaluate(task, {}, dev);
  CHECK(first.score == 1.0);
  const int calls_after_first = server.requests();
  CHECK(calls_after_first == 6);

  const EvalOutcome second = eval.evaluate(task, {}, dev);
  CHECK(second.score == first.score);
  CHECK(server.requests() == calls_after_first);  // all cache hits
}
