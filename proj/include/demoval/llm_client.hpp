#pragma once

#include <condition_variable>
#include <cstdint>
#include <filesystem>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>

#include "demoval/evaluator.hpp"

namespace demoval {

// OpenAI-compatible endpoint configuration. Temperature is fixed at 0 for
// reproducibility and is not configurable. The API key is read from the
// DEMOVAL_API_KEY environment variable and never persisted; the base URL
// falls back to DEMOVAL_API_BASE when empty here.
struct LlmBackendSpec {
  std::string base_url;
  std::string model;
  int max_tokens = 16;
  int timeout_ms = 30000;
  int max_retries = 5;
  int initial_backoff_ms = 500;
  double backoff_factor = 2.0;
  int max_backoff_ms = 60000;
  std::filesystem::path cache_path;  // empty disables caching
  int max_concurrency = 4;
};

// Append-only JSON Lines response cache:
//   {"key","prompt_sha","model","response","timestamp"}
// A corrupt trailing line (torn write from a crash) is truncated on open;
// corruption anywhere else is an error.
class ResponseCache {
 public:
  explicit ResponseCache(std::filesystem::path path);

  std::optional<std::string> lookup(const std::string& key) const;
  void insert(const std::string& key, const std::string& prompt_sha,
              const std::string& model, const std::string& response);
  std::size_t unique_keys() const;

  struct Stats {
    std::size_t lines = 0;
    std::size_t unique_keys = 0;
    std::uintmax_t bytes = 0;
  };
  static Stats stats(const std::filesystem::path& path);
  // Rewrites the file keeping the last entry per key; returns entries kept.
  static std::size_t gc(const std::filesystem::path& path);

 private:
  std::filesystem::path path_;
  std::map<std::string, std::string> by_key_;
  mutable std::mutex mutex_;
};

// Chat-completions client. Consults the cache before any network call;
// retries 429/5xx and transport errors with exponential backoff; bounds
// in-flight requests by max_concurrency.
class OpenAiClient : public TextCompletionModel {
 public:
  explicit OpenAiClient(LlmBackendSpec spec);

  std::string complete(const std::string& prompt) override;

  // Canonical decode-parameter fingerprint used in cache keys.
  std::string decode_params() const;

  ResponseCache* cache() { return cache_.get(); }

 private:
  std::string post_with_retries(const std::string& body);

  LlmBackendSpec spec_;
  std::string api_key_;
  std::unique_ptr<ResponseCache> cache_;

  // bounded in-flight request slots
  std::mutex slots_mutex_;
  std::condition_variable slots_cv_;
  int free_slots_;
};

}  // namespace demoval
