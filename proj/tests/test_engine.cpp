#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>

#include "demoval/digest.hpp"
#include "demoval/engine.hpp"
#include "demoval/error.hpp"
#include "demoval/io.hpp"
#include "demoval/synthetic.hpp"
#include "test_util.hpp"

using namespace demoval;
using namespace testutil;
namespace eng = demoval::engine;

namespace {

std::vector<std::string> pool_ids_for_test(const CandidatePool& pool) {
  std::vector<std::string> ids;
  for (const auto& demo : pool.demos) ids.push_back(demo.id);
  return ids;
}

// Finds a seed whose first sampled permutation equals `want`.
std::uint64_t seed_for_permutation(const CandidatePool& pool, int k,
                                   const std::vector<std::string>& want) {
  for (std::uint64_t seed = 0; seed < 100000; ++seed) {
    Rng rng(seed);
    if (eng::sample_permutation(pool, k, rng) == want) return seed;
  }
  throw std::runtime_error("no seed found for the requested permutation");
}

eng::EngineConfig basic_config(int k, std::int64_t n, double mu = 0.0,
                               std::uint64_t seed = 42) {
  eng::EngineConfig config;
  config.K = k;
  config.N = n;
  config.mu = mu;
  config.seed = seed;
  return config;
}

}  // namespace

TEST_CASE("update_running_mean matches the arithmetic mean") {
  CHECK(eng::update_running_mean(0.0, 1, 0.4) == 0.4);
  CHECK(eng::update_running_mean(0.2, 2, 0.4) == doctest::Approx(0.3).epsilon(1e-15));

  double phi = 0.0;
  std::int64_t t = 0;
  for (const double v : {0.1, 0.2, 0.6}) {
    phi = eng::update_running_mean(phi, ++t, v);
  }
  CHECK(phi == doctest::Approx(0.3).epsilon(1e-15));

  CHECK_THROWS_AS(eng::update_running_mean(0.0, 0, 0.1), std::invalid_argument);
}

TEST_CASE("sample_permutation basics") {
  const CandidatePool pool = make_pool(5);

  SUBCASE("K equal to the pool size permutes the whole pool") {
    Rng rng(7);
    auto perm = eng::sample_permutation(pool, 5, rng);
    std::sort(perm.begin(), perm.end());
    std::vector<std::string> all;
    for (const auto& d : pool.demos) all.push_back(d.id);
    std::sort(all.begin(), all.end());
    CHECK(perm == all);
  }
  SUBCASE("same stream advances, fresh stream repeats") {
    Rng rng(123);
    const auto first = eng::sample_permutation(pool, 3, rng);
    const auto second = eng::sample_permutation(pool, 3, rng);
    CHECK(first != second);
    Rng fresh(123);
    CHECK(eng::sample_permutation(pool, 3, fresh) == first);
  }
  SUBCASE("K larger than the pool is a configuration error") {
    Rng rng(1);
    CHECK_THROWS_AS(eng::sample_permutation(pool, 6, rng), ConfigError);
  }
}

TEST_CASE("sample_permutation draws ordered pairs uniformly") {
  const CandidatePool pool = make_pool(4);
  constexpr int kDraws = 10000;
  std::map<std::pair<std::string, std::string>, int> freq;
  Rng rng(2024);
  for (int i = 0; i < kDraws; ++i) {
    const auto perm = eng::sample_permutation(pool, 2, rng);
    freq[{perm[0], perm[1]}] += 1;
  }
  CHECK(freq.size() == 12);
  const double expected = kDraws / 12.0;
  const double sigma = std::sqrt(kDraws * (1.0 / 12.0) * (11.0 / 12.0));
  for (const auto& [pair, count] : freq) {
    CHECK(std::abs(count - expected) <= 3.0 * sigma);
  }
}

TEST_CASE("zero_shot_score") {
  const TaskSpec task = fixture_task();
  const CandidatePool pool = make_pool(2);
  const Dataset dev = make_dev(4);

  SyntheticEvaluator half(additive_spec(pool, {}, 0.5));
  CHECK(eng::zero_shot_score(task, dev, half) == 0.5);

  SyntheticEvaluator high(additive_spec(pool, {}, 0.9));
  CHECK(eng::zero_shot_score(task, dev, high) == 0.9);

  PerExampleEvaluator constant(std::make_shared<ConstantModel>("NEG"));
  CHECK(eng::zero_shot_score(task, dev, constant) == 0.5);

  CHECK_THROWS_AS(eng::zero_shot_score(task, {}, half), ConfigError);
}

TEST_CASE("run_pass records marginals and gates updates by mu") {
  const TaskSpec task = fixture_task();
  CandidatePool pool;
  pool.demos = {Demonstration{"d1", "a", "POS"}, Demonstration{"d2", "b", "NEG"}};
  const Dataset dev = make_dev(2);
  SyntheticEvaluator eval(additive_spec(pool, {0.1, -0.05}, 0.5, 1.0));
  const std::uint64_t seed = seed_for_permutation(pool, 2, {"d1", "d2"});

  SUBCASE("mu = 0 accepts both marginals") {
    auto config = basic_config(2, 1, 0.0);
    ValueTable table({"d1", "d2"});
    Rng rng(seed);
    const auto pass = eng::run_pass(task, pool, dev, eval, config, 0.5, rng, table);

    REQUIRE(pass.permutation == std::vector<std::string>{"d1", "d2"});
    REQUIRE(pass.prefix_scores.size() == 3);
    CHECK(pass.prefix_scores[0] == 0.5);
    CHECK(pass.prefix_scores[1] == doctest::Approx(0.6).epsilon(1e-12));
    CHECK(pass.prefix_scores[2] == doctest::Approx(0.55).epsilon(1e-12));
    CHECK(pass.marginals[0] == doctest::Approx(0.1).epsilon(1e-12));
    CHECK(pass.marginals[1] == doctest::Approx(-0.05).epsilon(1e-12));
    CHECK(pass.accepted == std::vector<bool>{true, true});
    CHECK(table.at("d1").count == 1);
    CHECK(table.at("d2").count == 1);
  }
  SUBCASE("mu = 0.08 gates the small negative step but still advances") {
    auto config = basic_config(2, 1, 0.08);
    ValueTable table({"d1", "d2"});
    Rng rng(seed);
    const auto pass = eng::run_pass(task, pool, dev, eval, config, 0.5, rng, table);

    CHECK(pass.accepted == std::vector<bool>{true, false});
    CHECK(table.at("d1").count == 1);
    CHECK(table.at("d2").count == 0);
    CHECK(table.at("d2").value == 0.0);
    // the comparison baseline advanced anyway: the marginal is vs 0.6
    CHECK(pass.marginals[1] == doctest::Approx(-0.05).epsilon(1e-12));
  }
}

TEST_CASE("run_pass on all-zero weights") {
  const TaskSpec task = fixture_task();
  const CandidatePool pool = make_pool(3);
  const Dataset dev = make_dev(2);
  SyntheticEvaluator eval(additive_spec(pool, {0.0, 0.0, 0.0}, 0.5));

  auto gated = basic_config(3, 1, 0.01);
  ValueTable table_gated({"d00", "d01", "d02"});
  Rng rng1(5);
  eng::run_pass(task, pool, dev, eval, gated, 0.5, rng1, table_gated);
  for (const auto& id : table_gated.ids()) {
    CHECK(table_gated.at(id).count == 0);
  }

  auto open = basic_config(3, 1, 0.0);
  ValueTable table_open({"d00", "d01", "d02"});
  Rng rng2(5);
  eng::run_pass(task, pool, dev, eval, open, 0.5, rng2, table_open);
  for (const auto& id : table_open.ids()) {
    CHECK(table_open.at(id).count == 1);
    CHECK(table_open.at(id).value == 0.0);
  }
}

TEST_CASE("a failing evaluator aborts the pass at the last consistent update") {
  const TaskSpec task = fixture_task();
  const CandidatePool pool = make_pool(3);
  const Dataset dev = make_dev(2);

  struct FailAtLength : Evaluator {
    SyntheticEvaluator inner;
    std::size_t fail_len;
    FailAtLength(SyntheticModelSpec spec, std::size_t n)
        : inner(std::move(spec)), fail_len(n) {}
    EvalCapabilities capabilities() const override { return {true, false}; }
    EvalOutcome evaluate(const TaskSpec& t, const std::vector<Demonstration>& d,
                         const Dataset& dv) override {
      if (d.size() == fail_len) throw BackendError("injected");
      return inner.evaluate(t, d, dv);
    }
  } eval(additive_spec(pool, {0.1, 0.1, 0.1}, 0.5), 2);

  auto config = basic_config(3, 1, 0.0);
  ValueTable table({"d00", "d01", "d02"});
  Rng rng(9);
  CHECK_THROWS_AS(
      eng::run_pass(task, pool, dev, eval, config, 0.5, rng, table),
      BackendError);
  std::int64_t total = 0;
  for (const auto& id : table.ids()) total += table.at(id).count;
  CHECK(total == 1);  // exactly the first prefix update survived
}

TEST_CASE("compute_values on the flat additive model recovers the weights") {
  const TaskSpec task = fixture_task();
  CandidatePool pool;
  pool.demos = {Demonstration{"d1", "a", "POS"},
                Demonstration{"d2", "b", "NEG"},
                Demonstration{"d3", "c", "POS"}};
  const Dataset dev = make_dev(2);
  SyntheticEvaluator eval(additive_spec(pool, {0.1, -0.05, 0.0}, 0.5, 1.0));

  const auto table =
      eng::compute_values(basic_config(2, 60), pool, task, dev, eval);
  CHECK(table.at("d1").value == doctest::Approx(0.1).epsilon(1e-12));
  CHECK(table.at("d2").value == doctest::Approx(-0.05).epsilon(1e-12));
  CHECK(table.at("d3").value == doctest::Approx(0.0).epsilon(1e-12));
  std::int64_t total = 0;
  for (const auto& id : table.ids()) total += table.at(id).count;
  CHECK(total == 60 * 2);
}

TEST_CASE("discounted additive model: MC matches the enumerated targets") {
  const TaskSpec task = fixture_task();
  CandidatePool pool;
  pool.demos = {Demonstration{"d1", "a", "POS"},
                Demonstration{"d2", "b", "NEG"},
                Demonstration{"d3", "c", "POS"}};
  const Dataset dev = make_dev(2);
  SyntheticEvaluator eval(additive_spec(pool, {0.1, -0.05, 0.0}, 0.5, 0.5));

  // six ordered pairs; demo-1 marginals {0.1, 0.1, 0.05, 0.05} mean 0.075
  const auto exact = eng::exact_values(pool, 2, task, dev, eval);
  CHECK(exact.at("d1").value == doctest::Approx(0.075).epsilon(1e-12));
  CHECK(exact.at("d2").value == doctest::Approx(-0.0375).epsilon(1e-12));
  CHECK(exact.at("d3").value == doctest::Approx(0.0).epsilon(1e-12));
  CHECK(exact.at("d1").count == 4);

  const auto mc =
      eng::compute_values(basic_config(2, 2000), pool, task, dev, eval);
  for (const auto& id : {"d1", "d2", "d3"}) {
    CHECK(std::abs(mc.at(id).value - exact.at(id).value) < 0.01);
  }
}

TEST_CASE("single pass bookkeeping and invalid N") {
  const TaskSpec task = fixture_task();
  const CandidatePool pool = make_pool(4);
  const Dataset dev = make_dev(2);
  SyntheticEvaluator eval(additive_spec(pool, {0.1, 0.2, 0.3, 0.4}, 0.3));

  CHECK_THROWS_AS(
      eng::compute_values(basic_config(1, 0), pool, task, dev, eval),
      ConfigError);

  const auto table =
      eng::compute_values(basic_config(1, 1), pool, task, dev, eval);
  int with_count = 0;
  for (const auto& id : table.ids()) {
    if (table.at(id).count > 0) {
      ++with_count;
      CHECK(table.at(id).count == 1);
    }
  }
  CHECK(with_count == 1);
}

TEST_CASE("exact_values matches the flat brute-force oracle") {
  const TaskSpec task = fixture_task();
  const CandidatePool pool = make_pool(6);
  const Dataset dev = make_dev(2);
  std::mt19937_64 gen(77);
  SyntheticEvaluator eval(random_spec(pool, gen, 3, /*with_interactions=*/true));

  const auto exact = eng::exact_values(pool, 3, task, dev, eval);
  const auto oracle = brute_force_values(pool, 3, task, dev, eval);
  for (const auto& demo : pool.demos) {
    CHECK(exact.at(demo.id).value ==
          doctest::Approx(oracle.value.at(demo.id)).epsilon(1e-12));
    CHECK(exact.at(demo.id).count == oracle.count.at(demo.id));
  }
}

TEST_CASE("exact_values: dummies are exactly zero, twins exactly equal") {
  const TaskSpec task = fixture_task();
  const CandidatePool pool = make_pool(6);
  const Dataset dev = make_dev(2);
  // d00 and d01 are twins; d02 is a dummy
  SyntheticEvaluator eval(
      additive_spec(pool, {0.08, 0.08, 0.0, -0.03, 0.05, -0.07}, 0.5, 0.8));

  const auto exact = eng::exact_values(pool, 3, task, dev, eval);
  CHECK(exact.at("d02").value == 0.0);
  CHECK(exact.at("d00").value == exact.at("d01").value);
}

TEST_CASE("exact_values refuses when the enumeration exceeds the budget") {
  const TaskSpec task = fixture_task();
  const CandidatePool pool = make_pool(30);
  const Dataset dev = make_dev(2);
  SyntheticEvaluator eval(additive_spec(pool, {}, 0.5));
  CHECK_THROWS_AS(eng::exact_values(pool, 8, task, dev, eval), BudgetError);

  eng::ExactOptions tiny;
  tiny.budget = 10;
  CHECK_THROWS_AS(eng::exact_values(pool, 2, task, dev, eval, tiny), BudgetError);
}

TEST_CASE("merge_tables") {
  SUBCASE("weighted mean of two singletons") {
    ValueTable a({"x"});
    a.set("x", 0.4, 1);
    ValueTable b({"x"});
    b.set("x", 0.2, 1);
    const auto merged = eng::merge_tables(a, b);
    CHECK(merged.at("x").count == 2);
    CHECK(merged.at("x").value == doctest::Approx(0.3).epsilon(1e-15));
  }
  SUBCASE("empty table is the identity element") {
    ValueTable a({"x", "y"});
    a.set("x", 0.25, 4);
    const ValueTable empty({"x", "y"});
    CHECK(eng::merge_tables(a, empty) == a);
    CHECK(eng::merge_tables(empty, a) == a);
  }
  SUBCASE("id mismatch is a merge error") {
    const ValueTable a({"x"});
    const ValueTable b({"y"});
    CHECK_THROWS_AS(eng::merge_tables(a, b), MergeError);
  }
  SUBCASE("merging singletons equals sequential folding") {
    std::mt19937_64 gen(5);
    std::uniform_real_distribution<double> unit(-1.0, 1.0);
    for (int trial = 0; trial < 50; ++trial) {
      const int k = 2 + static_cast<int>(gen() % 12);
      std::vector<double> samples;
      for (int i = 0; i < k; ++i) samples.push_back(unit(gen));

      ValueTable merged({"x"});
      double folded = 0.0;
      for (int i = 0; i < k; ++i) {
        ValueTable single({"x"});
        single.set("x", samples[static_cast<std::size_t>(i)], 1);
        merged = eng::merge_tables(merged, single);
        folded = eng::update_running_mean(
            folded, i + 1, samples[static_cast<std::size_t>(i)]);
      }
      CHECK(merged.at("x").count == k);
      CHECK(merged.at("x").value == doctest::Approx(folded).epsilon(1e-12));
    }
  }
}

TEST_CASE("telescoping: pass marginals sum to V(full) - V(zero-shot)") {
  const TaskSpec task = fixture_task();
  const CandidatePool pool = make_pool(7);
  const Dataset dev = make_dev(2);
  std::mt19937_64 gen(11);
  for (int trial = 0; trial < 20; ++trial) {
    SyntheticEvaluator eval(random_spec(pool, gen, 4, trial % 2 == 0));
    auto config = basic_config(4, 1, 0.0, 1000 + static_cast<unsigned>(trial));
    const double zero = eng::zero_shot_score(task, dev, eval);
    ValueTable table(pool_ids_for_test(pool));
    Rng rng(config.seed);
    const auto pass =
        eng::run_pass(task, pool, dev, eval, config, zero, rng, table);
    const double sum =
        std::accumulate(pass.marginals.begin(), pass.marginals.end(), 0.0);
    CHECK(std::abs(sum - (pass.prefix_scores.back() - zero)) <= 1e-9);
  }
}

TEST_CASE("running means equal direct means of the accepted marginals") {
  const TaskSpec task = fixture_task();
  const CandidatePool pool = make_pool(6);
  const Dataset dev = make_dev(2);
  std::mt19937_64 gen(13);
  SyntheticEvaluator eval(random_spec(pool, gen, 3, true));
  auto config = basic_config(3, 1, 0.02, 0);
  const double zero = eng::zero_shot_score(task, dev, eval);

  ValueTable table(pool_ids_for_test(pool));
  std::map<std::string, std::vector<double>> accepted;
  for (int i = 0; i < 200; ++i) {
    Rng rng(derive_seed(4242, static_cast<std::uint64_t>(i)));
    const auto pass =
        eng::run_pass(task, pool, dev, eval, config, zero, rng, table);
    for (std::size_t c = 0; c < pass.permutation.size(); ++c) {
      if (pass.accepted[c]) {
        accepted[pass.permutation[c]].push_back(pass.marginals[c]);
      }
    }
  }
  for (const auto& [id, samples] : accepted) {
    const double direct =
        std::accumulate(samples.begin(), samples.end(), 0.0) /
        static_cast<double>(samples.size());
    CHECK(table.at(id).count == static_cast<std::int64_t>(samples.size()));
    CHECK(std::abs(table.at(id).value - direct) <= 1e-12);
  }
}

TEST_CASE("raising mu never increases any count on a fixed stream") {
  const TaskSpec task = fixture_task();
  const CandidatePool pool = make_pool(6);
  const Dataset dev = make_dev(2);
  SyntheticEvaluator eval(
      additive_spec(pool, {0.1, -0.05, 0.0, 0.02, -0.01, 0.07}, 0.5, 0.9));

  std::map<std::string, std::int64_t> prev_counts;
  bool first = true;
  for (const double mu : {0.0, 0.005, 0.02, 0.05, 0.2}) {
    const auto table = eng::compute_values(basic_config(3, 40, mu, 31), pool,
                                           task, dev, eval);
    if (!first) {
      for (const auto& id : table.ids()) {
        CHECK(table.at(id).count <= prev_counts[id]);
      }
    }
    for (const auto& id : table.ids()) prev_counts[id] = table.at(id).count;
    first = false;
  }
}

TEST_CASE("compute_values is deterministic and thread-count invariant") {
  const TaskSpec task = fixture_task();
  const CandidatePool pool = make_pool(8);
  const Dataset dev = make_dev(2);
  std::mt19937_64 gen(17);
  SyntheticEvaluator eval(random_spec(pool, gen, 4, true));

  const auto once =
      eng::compute_values(basic_config(4, 120), pool, task, dev, eval);
  const auto twice =
      eng::compute_values(basic_config(4, 120), pool, task, dev, eval);
  CHECK(once == twice);

  auto threaded_config = basic_config(4, 120);
  threaded_config.threads = 4;
  const auto threaded =
      eng::compute_values(threaded_config, pool, task, dev, eval);
  for (const auto& id : once.ids()) {
    CHECK(threaded.at(id).count == once.at(id).count);
    CHECK(threaded.at(id).value ==
          doctest::Approx(once.at(id).value).epsilon(1e-12));
  }
}

TEST_CASE("checkpoint round trip and resume equivalence") {
  const TaskSpec task = fixture_task();
  const CandidatePool pool = make_pool(6);
  const Dataset dev = make_dev(2);
  SyntheticEvaluator eval(
      additive_spec(pool, {0.1, -0.05, 0.0, 0.02, -0.01, 0.07}, 0.5, 0.9));
  const auto dir = scratch_dir("ckpt");

  auto full = basic_config(3, 50, 0.0, 7);
  const auto expected = eng::compute_values(full, pool, task, dev, eval);

  auto partial = full;
  partial.N = 20;
  partial.checkpoint_path = dir / "values.csv";
  eng::compute_values(partial, pool, task, dev, eval);

  const auto [loaded, meta] = eng::read_checkpoint(partial.checkpoint_path);
  CHECK(meta.passes_completed == 20);
  CHECK(meta.seed == 7);
  CHECK(meta.K == 3);

  auto resumed_config = full;
  resumed_config.checkpoint_path = dir / "values.csv";
  const auto resumed =
      eng::resume_from_checkpoint(resumed_config, pool, task, dev, eval);
  CHECK(resumed == expected);
}

TEST_CASE("affine transform of V scales values and preserves ranking") {
  const TaskSpec task = fixture_task();
  const CandidatePool pool = make_pool(6);
  const Dataset dev = make_dev(2);
  SyntheticEvaluator base(
      additive_spec(pool, {0.1, -0.05, 0.0, 0.02, -0.01, 0.07}, 0.5, 0.9));
  AffineEvaluator scaled(base, 0.5, 0.2);

  const auto config = basic_config(3, 300, 0.0, 99);
  const auto phi = eng::compute_values(config, pool, task, dev, base);
  const auto phi_scaled = eng::compute_values(config, pool, task, dev, scaled);

  for (const auto& id : phi.ids()) {
    CHECK(phi_scaled.at(id).count == phi.at(id).count);
    const double want = 0.5 * phi.at(id).value;
    CHECK(phi_scaled.at(id).value ==
          doctest::Approx(want).epsilon(1e-9));
  }
  CHECK(phi.ids_by_value_ascending() == phi_scaled.ids_by_value_ascending());
}
