#include "demoval/llm_client.hpp"

#include <algorithm>
#include <chrono>
#include <cstdlib>
#include <fstream>
#include <thread>
#include <vector>

#include <httplib.h>
#include <json.hpp>

#include "demoval/digest.hpp"
#include "demoval/error.hpp"
#include "demoval/io.hpp"
#include "demoval/prompt.hpp"

namespace demoval {

using nlohmann::json;

namespace {

constexpr const char* kCompletionsPath = "/v1/chat/completions";

std::int64_t now_unix_seconds() {
  return std::chrono::duration_cast<std::chrono::seconds>(
             std::chrono::system_clock::now().time_since_epoch())
      .count();
}

bool retryable_status(int status) {
  return status == 429 || (status >= 500 && status < 600);
}

struct RaiiSlot {
  std::mutex& mutex;
  std::condition_variable& cv;
  int& free_slots;

  RaiiSlot(std::mutex& m, std::condition_variable& c, int& slots)
      : mutex(m), cv(c), free_slots(slots) {
    std::unique_lock lock(mutex);
    cv.wait(lock, [&] { return free_slots > 0; });
    --free_slots;
  }
  ~RaiiSlot() {
    {
      std::lock_guard lock(mutex);
      ++free_slots;
    }
    cv.notify_one();
  }
};

}  // namespace

ResponseCache::ResponseCache(std::filesystem::path path)
    : path_(std::move(path)) {
  std::ifstream in(path_, std::ios::binary);
  if (!in) return;  // fresh cache
  std::string line;
  std::streamoff line_start = 0;
  std::optional<std::streamoff> first_corrupt;
  while (std::getline(in, line)) {
    if (!line.empty()) {
      json obj = json::parse(line, nullptr, false);
      const bool valid = !obj.is_discarded() && obj.contains("key") &&
                         obj.contains("response") && obj["key"].is_string() &&
                         obj["response"].is_string();
      if (!valid) {
        if (!first_corrupt.has_value()) first_corrupt = line_start;
      } else if (first_corrupt.has_value()) {
        // valid data after corruption is not a torn tail
        throw IoError(path_.string() + ": corrupt cache line at offset " +
                      std::to_string(*first_corrupt));
      } else {
        by_key_[obj["key"].get<std::string>()] =
            obj["response"].get<std::string>();
      }
    }
    line_start += static_cast<std::streamoff>(line.size()) + 1;
  }
  in.close();
  if (first_corrupt.has_value()) {
    std::filesystem::resize_file(path_,
                                 static_cast<std::uintmax_t>(*first_corrupt));
  }
}

std::optional<std::string> ResponseCache::lookup(const std::string& key) const {
  std::lock_guard lock(mutex_);
  const auto it = by_key_.find(key);
  if (it == by_key_.end()) return std::nullopt;
  return it->second;
}

void ResponseCache::insert(const std::string& key,
                           const std::string& prompt_sha,
                           const std::string& model,
                           const std::string& response) {
  std::lock_guard lock(mutex_);
  by_key_[key] = response;
  json obj{{"key", key},
           {"prompt_sha", prompt_sha},
           {"model", model},
           {"response", response},
           {"timestamp", now_unix_seconds()}};
  std::ofstream out(path_, std::ios::binary | std::ios::app);
  if (!out) throw IoError("cannot append to cache: " + path_.string());
  out << obj.dump() << '\n';
  out.flush();
  if (!out) throw IoError("cache append failed: " + path_.string());
}

std::size_t ResponseCache::unique_keys() const {
  std::lock_guard lock(mutex_);
  return by_key_.size();
}

ResponseCache::Stats ResponseCache::stats(const std::filesystem::path& path) {
  Stats stats;
  std::ifstream in(path, std::ios::binary);
  if (!in) return stats;
  std::map<std::string, int> keys;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    json obj = json::parse(line, nullptr, false);
    if (obj.is_discarded() || !obj.contains("key")) continue;
    ++stats.lines;
    ++keys[obj["key"].get<std::string>()];
  }
  stats.unique_keys = keys.size();
  std::error_code ec;
  stats.bytes = std::filesystem::file_size(path, ec);
  if (ec) stats.bytes = 0;
  return stats;
}

std::size_t ResponseCache::gc(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) return 0;
  std::map<std::string, std::string> last_line_by_key;
  std::vector<std::string> key_order;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    json obj = json::parse(line, nullptr, false);
    if (obj.is_discarded() || !obj.contains("key") || !obj["key"].is_string()) {
      continue;  // drop corrupt or foreign lines
    }
    const std::string key = obj["key"].get<std::string>();
    if (!last_line_by_key.count(key)) key_order.push_back(key);
    last_line_by_key[key] = line;
  }
  in.close();
  std::string buf;
  for (const auto& key : key_order) {
    buf += last_line_by_key[key];
    buf += '\n';
  }
  write_file_atomic(path, buf);
  return last_line_by_key.size();
}

OpenAiClient::OpenAiClient(LlmBackendSpec spec)
    : spec_(std::move(spec)), free_slots_(std::max(1, spec_.max_concurrency)) {
  if (const char* key = std::getenv("DEMOVAL_API_KEY")) api_key_ = key;
  if (spec_.base_url.empty()) {
    if (const char* base = std::getenv("DEMOVAL_API_BASE")) {
      spec_.base_url = base;
    }
  }
  if (spec_.base_url.empty()) {
    throw ConfigError("llm backend: base_url not set (and DEMOVAL_API_BASE unset)");
  }
  if (spec_.model.empty()) throw ConfigError("llm backend: model not set");
  if (!spec_.cache_path.empty()) {
    cache_ = std::make_unique<ResponseCache>(spec_.cache_path);
  }
}

std::string OpenAiClient::decode_params() const {
  json params{{"temperature", 0}, {"max_tokens", spec_.max_tokens}};
  return params.dump();
}

std::string OpenAiClient::complete(const std::string& prompt) {
  if (prompt.empty()) throw ConfigError("llm backend: empty prompt");
  const std::string key = canonical_key(prompt, spec_.model, decode_params());
  if (cache_) {
    if (auto hit = cache_->lookup(key)) return *hit;
  }

  json body{{"model", spec_.model},
            {"messages", json::array({json{{"role", "user"}, {"content", prompt}}})},
            {"temperature", 0},
            {"max_tokens", spec_.max_tokens}};
  const std::string response_body = post_with_retries(body.dump());

  json parsed = json::parse(response_body, nullptr, false);
  if (parsed.is_discarded()) {
    throw ProtocolError("llm backend: response is not valid JSON");
  }
  std::string content;
  try {
    content = parsed.at("choices").at(0).at("message").at("content")
                  .get<std::string>();
  } catch (const json::exception& e) {
    throw ProtocolError(std::string("llm backend: unexpected response shape: ") +
                        e.what());
  }
  if (cache_) {
    cache_->insert(key, sha256_hex(prompt), spec_.model, content);
  }
  return content;
}

std::string OpenAiClient::post_with_retries(const std::string& body) {
  RaiiSlot slot(slots_mutex_, slots_cv_, free_slots_);

  httplib::Headers headers;
  if (!api_key_.empty()) {
    headers.emplace("Authorization", "Bearer " + api_key_);
  }

  double backoff_ms = static_cast<double>(spec_.initial_backoff_ms);
  std::string last_error;
  for (int attempt = 0; attempt <= spec_.max_retries; ++attempt) {
    if (attempt > 0) {
      std::this_thread::sleep_for(std::chrono::milliseconds(
          static_cast<std::int64_t>(
              std::min(backoff_ms, static_cast<double>(spec_.max_backoff_ms)))));
      backoff_ms *= spec_.backoff_factor;
    }
    // one connection per request; requests stay independent under
    // concurrent callers
    httplib::Client client(spec_.base_url);
    const time_t timeout_s = spec_.timeout_ms / 1000;
    const time_t timeout_us = (spec_.timeout_ms % 1000) * 1000L;
    client.set_connection_timeout(timeout_s, timeout_us);
    client.set_read_timeout(timeout_s, timeout_us);
    client.set_write_timeout(timeout_s, timeout_us);

    auto res = client.Post(kCompletionsPath, headers, body, "application/json");
    if (!res) {
      last_error = "transport error: " + httplib::to_string(res.error());
      continue;
    }
    if (res->status == 200) return res->body;
    if (retryable_status(res->status)) {
      last_error = "HTTP " + std::to_string(res->status);
      continue;
    }
    throw BackendError("llm backend: HTTP " + std::to_string(res->status) +
                       ": " + res->body.substr(0, 256));
  }
  throw BackendError("llm backend: exhausted " +
                     std::to_string(spec_.max_retries) + " retries (" +
                     last_error + ")");
}

}  // namespace demoval
