#include "demoval/config.hpp"

#include <json.hpp>

#include "demoval/digest.hpp"
#include "demoval/error.hpp"
#include "demoval/io.hpp"

namespace demoval {

using nlohmann::json;

namespace {

json parse_config_file(const std::filesystem::path& path) {
  std::string text;
  try {
    text = read_file(path);
  } catch (const IoError& e) {
    throw ConfigError(e.what());
  }
  json parsed = json::parse(text, nullptr, false);
  if (parsed.is_discarded() || !parsed.is_object()) {
    throw ConfigError("config: " + path.string() + " is not a JSON object");
  }
  return parsed;
}

template <typename T>
T get_or(const json& obj, const std::string& key, T fallback) {
  if (!obj.contains(key)) return fallback;
  try {
    return obj.at(key).get<T>();
  } catch (const json::exception& e) {
    throw ConfigError("config: bad value for '" + key + "': " + e.what());
  }
}

TaskSpec parse_task(const json& obj) {
  if (!obj.contains("task")) throw ConfigError("config: missing 'task'");
  const json& t = obj.at("task");
  TaskSpec task;
  task.instruction = get_or<std::string>(t, "instruction", "");
  task.label_set = get_or<std::vector<std::string>>(t, "label_set", {});
  task.demo_template = get_or<std::string>(t, "demo_template", task.demo_template);
  task.query_template =
      get_or<std::string>(t, "query_template", task.query_template);
  task.separator = get_or<std::string>(t, "separator", task.separator);
  validate_task(task);
  return task;
}

SyntheticModelSpec parse_synthetic(const json& obj) {
  SyntheticModelSpec spec;
  spec.v0 = get_or<double>(obj, "v0", spec.v0);
  spec.gamma = get_or<double>(obj, "gamma", spec.gamma);
  if (obj.contains("weights")) {
    for (const auto& [id, w] : obj.at("weights").items()) {
      spec.weights[id] = w.get<double>();
    }
  }
  if (obj.contains("default_weight")) {
    spec.default_weight = obj.at("default_weight").get<double>();
    spec.has_default_weight = true;
  }
  if (obj.contains("interactions")) {
    for (const auto& row : obj.at("interactions")) {
      spec.interactions[{row.at("first").get<std::string>(),
                         row.at("second").get<std::string>()}] =
          row.at("delta").get<double>();
    }
  }
  return spec;
}

}  // namespace

RunConfig load_run_config(const std::filesystem::path& path,
                          const ConfigOverrides& overrides) {
  json obj = parse_config_file(path);

  // apply CLI overrides before hashing so the hash names the effective run
  if (overrides.seed.has_value()) {
    obj["engine"]["seed"] = *overrides.seed;
  }
  if (overrides.backend_kind.has_value()) {
    obj["backend"]["kind"] = *overrides.backend_kind;
  }

  RunConfig config;
  config.config_hash = sha256_hex(obj.dump());
  config.task = parse_task(obj);

  const json data = get_or<json>(obj, "data", json::object());
  const auto base = path.parent_path();
  const auto resolve = [&](const std::string& key) -> std::filesystem::path {
    const std::string p = get_or<std::string>(data, key, "");
    if (p.empty()) return {};
    const std::filesystem::path fp(p);
    return fp.is_absolute() ? fp : base / fp;
  };
  config.pool_path = resolve("pool");
  config.dev_path = resolve("dev");
  config.test_path = resolve("test");

  const json eng = get_or<json>(obj, "engine", json::object());
  config.engine.K = get_or<int>(eng, "K", config.engine.K);
  config.engine.N = get_or<std::int64_t>(eng, "N", config.engine.N);
  config.engine.mu = get_or<double>(eng, "mu", config.engine.mu);
  config.engine.seed = get_or<std::uint64_t>(eng, "seed", config.engine.seed);
  config.engine.threads = get_or<int>(eng, "threads", config.engine.threads);
  config.engine.checkpoint_interval = get_or<std::int64_t>(
      eng, "checkpoint_interval", config.engine.checkpoint_interval);
  if (config.engine.N < 1) throw ConfigError("config: engine.N must be >= 1");
  if (config.engine.mu < 0) throw ConfigError("config: engine.mu must be >= 0");

  const json backend = get_or<json>(obj, "backend", json::object());
  config.backend_kind = get_or<std::string>(backend, "kind", config.backend_kind);
  if (config.backend_kind != "synthetic" && config.backend_kind != "llm") {
    throw ConfigError("config: backend.kind must be 'synthetic' or 'llm'");
  }
  if (backend.contains("synthetic")) {
    config.synthetic = parse_synthetic(backend.at("synthetic"));
    config.synthetic_mode = get_or<std::string>(backend.at("synthetic"), "mode",
                                                config.synthetic_mode);
    config.classifier_salt = get_or<std::uint64_t>(
        backend.at("synthetic"), "classifier_salt", config.classifier_salt);
    if (config.synthetic_mode != "utility" &&
        config.synthetic_mode != "classifier") {
      throw ConfigError("config: synthetic.mode must be 'utility' or 'classifier'");
    }
  }
  if (backend.contains("llm")) {
    const json& llm = backend.at("llm");
    config.llm.base_url = get_or<std::string>(llm, "base_url", "");
    config.llm.model = get_or<std::string>(llm, "model", "");
    config.llm.max_tokens = get_or<int>(llm, "max_tokens", config.llm.max_tokens);
    config.llm.timeout_ms = get_or<int>(llm, "timeout_ms", config.llm.timeout_ms);
    config.llm.max_retries =
        get_or<int>(llm, "max_retries", config.llm.max_retries);
    config.llm.initial_backoff_ms =
        get_or<int>(llm, "initial_backoff_ms", config.llm.initial_backoff_ms);
    config.llm.backoff_factor =
        get_or<double>(llm, "backoff_factor", config.llm.backoff_factor);
    config.llm.max_backoff_ms =
        get_or<int>(llm, "max_backoff_ms", config.llm.max_backoff_ms);
    const std::string cache = get_or<std::string>(llm, "cache_path", "");
    if (!cache.empty()) {
      const std::filesystem::path cp(cache);
      config.llm.cache_path = cp.is_absolute() ? cp : base / cp;
    }
    config.llm.max_concurrency =
        get_or<int>(llm, "max_concurrency", config.llm.max_concurrency);
    config.llm_failure_ceiling =
        get_or<double>(llm, "failure_ceiling", config.llm_failure_ceiling);
  }

  const json exp = get_or<json>(obj, "experiments", json::object());
  config.max_k = get_or<int>(exp, "max_k", config.max_k);
  config.shots = get_or<std::vector<int>>(exp, "shots", config.shots);
  config.bpc_levels =
      get_or<std::vector<double>>(exp, "bpc", config.bpc_levels);
  config.cutoffs = get_or<std::vector<int>>(exp, "cutoffs", config.cutoffs);
  config.ood_k = get_or<std::vector<int>>(exp, "ood_k", config.ood_k);
  config.positive_label =
      get_or<std::string>(exp, "positive_label", config.positive_label);
  config.fairness_context_size = get_or<std::size_t>(
      exp, "fairness_context_size", config.fairness_context_size);
  config.fairness_test_size =
      get_or<std::size_t>(exp, "fairness_test_size", config.fairness_test_size);
  config.log_entries =
      get_or<std::int64_t>(exp, "log_entries", config.log_entries);

  if (config.positive_label.empty() && config.task.label_set.size() == 2) {
    config.positive_label = config.task.label_set[1];
  }
  if (!config.positive_label.empty()) {
    bool found = false;
    for (const auto& label : config.task.label_set) {
      if (normalize_label(label) == normalize_label(config.positive_label)) {
        found = true;
      }
    }
    if (!found) {
      throw ConfigError("config: positive_label '" + config.positive_label +
                        "' is not in the task label set");
    }
  }
  return config;
}

std::unique_ptr<Evaluator> make_evaluator(const RunConfig& config) {
  if (config.backend_kind == "synthetic") {
    if (config.synthetic_mode == "classifier") {
      return std::make_unique<SyntheticClassifier>(config.synthetic,
                                                   config.classifier_salt);
    }
    return std::make_unique<SyntheticEvaluator>(config.synthetic);
  }
  auto model = std::make_shared<OpenAiClient>(config.llm);
  return std::make_unique<PerExampleEvaluator>(std::move(model),
                                               config.llm_failure_ceiling,
                                               config.llm.max_concurrency);
}

}  // namespace demoval
