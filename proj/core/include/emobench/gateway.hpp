#pragma once

// Submission of rendered prompts to model backends: chat-completions and
// generate-endpoint HTTP protocols plus an in-process mock, with retry,
// bounded concurrency, rate limiting and an on-disk response cache.

#include <atomic>
#include <chrono>
#include <cstdint>
#include <filesystem>
#include <memory>
#include <mutex>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "emobench/prompt.hpp"

namespace emobench {

class MockResponder;

enum class Protocol { chat, generate, mock };

std::string_view protocol_name(Protocol p);
std::optional<Protocol> protocol_from_name(std::string_view name);

enum class TransportErrorKind {
  timeout,
  http_429,
  http_5xx,
  connection,
  auth,          // 401/403 or a rejected key; never retried
  http_4xx,      // any other client error
  protocol,      // unparseable or unexpected response body
  scripted_gap,  // mock asked about a sample it does not know
  cancelled,     // request budget exhausted before the call was made
};

std::string_view transport_error_name(TransportErrorKind k);
std::optional<TransportErrorKind> transport_error_from_name(std::string_view name);

struct TransportError {
  TransportErrorKind kind = TransportErrorKind::connection;
  std::string message;
  int http_status = 0;

  std::string describe() const;
  bool operator==(const TransportError&) const = default;
};

struct RetryPolicy {
  int max_attempts = 3;
  std::chrono::milliseconds base_backoff{500};
  double backoff_factor = 2.0;
  std::set<TransportErrorKind> retry_on = {TransportErrorKind::timeout, TransportErrorKind::http_429,
                                           TransportErrorKind::http_5xx, TransportErrorKind::connection};

  /// Delay before retry number `attempt` (1-based, counting failed attempts):
  /// base_backoff * factor^(attempt-1).
  std::chrono::milliseconds delay(int attempt) const;
  bool retries(TransportErrorKind kind) const { return retry_on.contains(kind); }
  /// Throws ConfigError unless max_attempts >= 1, backoff >= 0, factor >= 1.
  void validate() const;
};

struct BackendConfig {
  std::string name;
  Protocol protocol = Protocol::mock;
  std::string base_url;
  std::string model;
  std::string auth_env;  // environment variable holding the API key; empty for none
  double temperature = 0.0;
  int max_new_tokens = 64;
  bool use_tools = false;
  std::chrono::milliseconds timeout{60000};
  ModelDialect dialect;
  std::shared_ptr<MockResponder> mock;  // protocol == mock only

  /// Throws ConfigError when the combination of fields is invalid.
  void validate() const;
};

struct RawResponse {
  std::uint64_t sample_id = 0;
  std::optional<std::string> text;
  std::chrono::microseconds latency{0};
  int attempts = 0;
  std::optional<TransportError> error;
  bool from_cache = false;

  bool ok() const { return text.has_value(); }
};

struct CachedReply {
  std::string text;
  int attempts = 1;  // attempts the original request took
  bool operator==(const CachedReply&) const = default;
};

/// One file per key under `dir`: the attempt count on the first line, then
/// the raw reply bytes. Concurrent readers; writes are serialised and atomic
/// (write then rename).
class ResponseCache {
 public:
  explicit ResponseCache(std::filesystem::path dir);

  /// SHA-256 over backend name, model, sample id and the prompt bytes. The
  /// sample id keeps duplicate texts with different gold labels apart for
  /// backends whose reply depends on the sample.
  static std::string key(const BackendConfig& backend, std::uint64_t sample_id, const RenderedPrompt& prompt);

  std::optional<CachedReply> get(const std::string& key) const;
  void put(const std::string& key, std::string_view text, int attempts = 1);
  const std::filesystem::path& dir() const { return dir_; }

 private:
  std::filesystem::path dir_;
  mutable std::mutex write_mutex_;
};

/// Throttles request starts to `rate` per second (burst of one). rate <= 0
/// disables throttling.
class TokenBucket {
 public:
  explicit TokenBucket(double rate);
  void acquire();

 private:
  using Clock = std::chrono::steady_clock;
  std::chrono::nanoseconds interval_{0};
  Clock::time_point next_{};
  std::mutex mutex_;
};

/// Reads the API key named by backend.auth_env. Throws ConfigError when the
/// variable is set in the config but missing from the environment.
std::optional<std::string> resolve_api_key(const BackendConfig& backend);

/// One prompt, retried per policy. Transport failures are reported in the
/// response; only configuration problems throw.
RawResponse submit(const BackendConfig& backend, std::uint64_t sample_id, const RenderedPrompt& prompt,
                   const RetryPolicy& policy, TokenBucket* limiter = nullptr);

struct BatchItem {
  std::uint64_t sample_id = 0;
  RenderedPrompt prompt;
};

struct BatchOptions {
  int parallelism = 8;
  double rate_limit_rps = 0;  // 0: unlimited
  RetryPolicy policy;
  ResponseCache* cache = nullptr;
  /// Shared budget of network submissions; when it reaches zero further
  /// uncached items come back `cancelled`. Null means unlimited.
  std::atomic<std::int64_t>* fresh_budget = nullptr;
  /// Shared limiter; when null run_batch makes its own from rate_limit_rps.
  TokenBucket* limiter = nullptr;
};

struct BatchStats {
  std::uint64_t cache_hits = 0;
  std::uint64_t fresh_requests = 0;
  std::uint64_t attempts = 0;
  std::uint64_t transport_errors = 0;
  std::uint64_t cancelled = 0;
};

/// Exactly one response per item, in input order, whatever the completion
/// order. At most `parallelism` submissions are in flight.
std::vector<RawResponse> run_batch(const BackendConfig& backend, std::span<const BatchItem> items,
                                   const BatchOptions& options, BatchStats* stats = nullptr);

enum class HealthStatus { ok, unreachable, unauthorized };
std::string_view health_status_name(HealthStatus s);

/// One request, never retried: GET /v1/models (chat) or GET /health (generate).
HealthStatus health_check(const BackendConfig& backend);

/// Request body for the chat protocol.
std::string chat_request_body(const BackendConfig& backend, const RenderedPrompt& prompt);
/// Request body for the generate protocol.
std::string generate_request_body(const BackendConfig& backend, const RenderedPrompt& prompt);

/// Reply text from a chat-completions body; the `emotion` argument of the
/// first tool call wins over message content. Nullopt when the body does not
/// have the expected shape.
std::optional<std::string> parse_chat_response(std::string_view body);
std::optional<std::string> parse_generate_response(std::string_view body);

/// Value of the grammar extension header: "<grammar-kind>;k=<k>".
std::string grammar_header(const RenderedPrompt& prompt);

inline constexpr std::string_view kSampleIdHeader = "X-Emobench-Sample-Id";
inline constexpr std::string_view kGrammarHeader = "X-Emobench-Grammar";

}  // namespace emobench
