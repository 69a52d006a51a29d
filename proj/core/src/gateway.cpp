#include "emobench/gateway.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdlib>
#include <fstream>
#include <sstream>
#include <thread>

#include <httplib.h>
#include <nlohmann/json.hpp>

#include "emobench/errors.hpp"
#include "emobench/hashing.hpp"
#include "emobench/mock.hpp"

namespace emobench {
namespace {

using json = nlohmann::json;

constexpr std::array<std::string_view, 3> kProtocolNames = {"chat", "generate", "mock"};
constexpr std::array<std::string_view, 9> kErrorNames = {"timeout",  "http-429", "http-5xx",     "connection", "auth",
                                                         "http-4xx", "protocol", "scripted-gap", "cancelled"};
constexpr std::array<std::string_view, 3> kHealthNames = {"ok", "unreachable", "unauthorized"};

struct Url {
  std::string origin;  // scheme://host[:port]
  std::string prefix;  // path without trailing slash
};

Url split_url(std::string_view url) {
  const auto scheme_end = url.find("://");
  const auto host_start = scheme_end == std::string_view::npos ? 0 : scheme_end + 3;
  const auto slash = url.find('/', host_start);
  if (slash == std::string_view::npos) return {std::string(url), {}};
  std::string prefix(url.substr(slash));
  while (prefix.ends_with('/')) prefix.pop_back();
  return {std::string(url.substr(0, slash)), prefix};
}

bool uses_tools(const BackendConfig& backend, const RenderedPrompt& prompt) {
  return backend.use_tools &&
         (prompt.strategy == PromptStrategy::basic || prompt.strategy == PromptStrategy::inverse);
}

TransportError classify_http_error(httplib::Error err) {
  switch (err) {
    case httplib::Error::ConnectionTimeout:
    case httplib::Error::Read:
    case httplib::Error::Write:
      return {TransportErrorKind::timeout, httplib::to_string(err), 0};
    default:
      return {TransportErrorKind::connection, httplib::to_string(err), 0};
  }
}

std::optional<TransportError> classify_status(int status) {
  if (status >= 200 && status < 300) return std::nullopt;
  const std::string msg = "HTTP " + std::to_string(status);
  if (status == 401 || status == 403) return TransportError{TransportErrorKind::auth, msg, status};
  if (status == 429) return TransportError{TransportErrorKind::http_429, msg, status};
  if (status >= 500) return TransportError{TransportErrorKind::http_5xx, msg, status};
  return TransportError{TransportErrorKind::http_4xx, msg, status};
}

std::unique_ptr<httplib::Client> make_client(const BackendConfig& backend, const Url& url) {
  auto client = std::make_unique<httplib::Client>(url.origin);
  const auto secs = std::chrono::duration_cast<std::chrono::seconds>(backend.timeout);
  const auto usecs = std::chrono::duration_cast<std::chrono::microseconds>(backend.timeout - secs);
  client->set_connection_timeout(secs.count(), usecs.count());
  client->set_read_timeout(secs.count(), usecs.count());
  client->set_write_timeout(secs.count(), usecs.count());
  return client;
}

MockReply http_attempt(const BackendConfig& backend, std::uint64_t sample_id, const RenderedPrompt& prompt,
                       const std::optional<std::string>& key) {
  const auto url = split_url(backend.base_url);
  auto client = make_client(backend, url);
  httplib::Headers headers = {
      {std::string(kSampleIdHeader), std::to_string(sample_id)},
      {std::string(kGrammarHeader), grammar_header(prompt)},
  };
  if (key) headers.emplace("Authorization", "Bearer " + *key);

  const bool chat = backend.protocol == Protocol::chat;
  const auto path = url.prefix + (chat ? "/v1/chat/completions" : "/generate");
  const auto body = chat ? chat_request_body(backend, prompt) : generate_request_body(backend, prompt);
  auto res = client->Post(path, headers, body, "application/json");
  if (!res) return {std::nullopt, classify_http_error(res.error())};
  if (auto err = classify_status(res->status)) return {std::nullopt, err};
  auto text = chat ? parse_chat_response(res->body) : parse_generate_response(res->body);
  if (!text) return {std::nullopt, TransportError{TransportErrorKind::protocol, "unexpected response body", res->status}};
  return {std::move(text), std::nullopt};
}

}  // namespace

std::string_view protocol_name(Protocol p) { return kProtocolNames[static_cast<std::size_t>(p)]; }

std::optional<Protocol> protocol_from_name(std::string_view name) {
  for (std::size_t i = 0; i < kProtocolNames.size(); ++i) {
    if (kProtocolNames[i] == name) return static_cast<Protocol>(i);
  }
  return std::nullopt;
}

std::string_view transport_error_name(TransportErrorKind k) { return kErrorNames[static_cast<std::size_t>(k)]; }

std::optional<TransportErrorKind> transport_error_from_name(std::string_view name) {
  for (std::size_t i = 0; i < kErrorNames.size(); ++i) {
    if (kErrorNames[i] == name) return static_cast<TransportErrorKind>(i);
  }
  return std::nullopt;
}

std::string TransportError::describe() const {
  std::string out(transport_error_name(kind));
  if (!message.empty()) out += ": " + message;
  return out;
}

std::chrono::milliseconds RetryPolicy::delay(int attempt) const {
  const double ms = static_cast<double>(base_backoff.count()) * std::pow(backoff_factor, std::max(0, attempt - 1));
  return std::chrono::milliseconds(static_cast<std::int64_t>(std::llround(ms)));
}

void RetryPolicy::validate() const {
  if (max_attempts < 1) throw ConfigError("retry policy: max_attempts must be at least 1");
  if (base_backoff.count() < 0) throw ConfigError("retry policy: base_backoff must not be negative");
  if (!(backoff_factor >= 1.0)) throw ConfigError("retry policy: backoff_factor must be at least 1");
}

void BackendConfig::validate() const {
  const std::string who = "backend '" + name + "': ";
  if (name.empty()) throw ConfigError("backend without a name");
  if (protocol != Protocol::mock && base_url.empty()) throw ConfigError(who + "base_url is required");
  if (protocol != Protocol::mock && !base_url.starts_with("http://") && !base_url.starts_with("https://")) {
    throw ConfigError(who + "base_url must start with http:// or https://");
  }
  if (protocol == Protocol::mock && !mock) throw ConfigError(who + "mock protocol without a mock behaviour");
  if (use_tools && protocol != Protocol::chat) throw ConfigError(who + "use_tools requires the chat protocol");
  if (temperature < 0) throw ConfigError(who + "temperature must not be negative");
  if (max_new_tokens < 1) throw ConfigError(who + "max_new_tokens must be positive");
  if (timeout.count() <= 0) throw ConfigError(who + "timeout must be positive");
}

// --- cache ----------------------------------------------------------------

ResponseCache::ResponseCache(std::filesystem::path dir) : dir_(std::move(dir)) {
  std::filesystem::create_directories(dir_);
}

std::string ResponseCache::key(const BackendConfig& backend, std::uint64_t sample_id, const RenderedPrompt& prompt) {
  Sha256 h;
  h.field(backend.name).field(backend.model).field(std::to_string(sample_id));
  for (const auto& seg : prompt.segments) h.field(role_name(seg.role)).field(seg.content);
  h.field(grammar_header(prompt));
  return h.hex();
}

std::optional<CachedReply> ResponseCache::get(const std::string& key) const {
  std::ifstream in(dir_ / key, std::ios::binary);
  if (!in) return std::nullopt;
  std::ostringstream ss;
  ss << in.rdbuf();
  const auto bytes = ss.str();
  const auto nl = bytes.find('\n');
  CachedReply reply;
  // An entry without a valid header line is treated as a miss.
  if (nl == std::string::npos) return std::nullopt;
  const auto [end, ec] = std::from_chars(bytes.data(), bytes.data() + nl, reply.attempts);
  if (ec != std::errc{} || end != bytes.data() + nl || reply.attempts < 1) return std::nullopt;
  reply.text = bytes.substr(nl + 1);
  return reply;
}

void ResponseCache::put(const std::string& key, std::string_view text, int attempts) {
  std::lock_guard lock(write_mutex_);
  const auto tmp = dir_ / (key + ".tmp");
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    out << attempts << '\n';
    out.write(text.data(), static_cast<std::streamsize>(text.size()));
  }
  std::filesystem::rename(tmp, dir_ / key);
}

// --- rate limiting ----------------------------------------------------------

TokenBucket::TokenBucket(double rate) {
  if (rate > 0) interval_ = std::chrono::nanoseconds(static_cast<std::int64_t>(1e9 / rate));
}

void TokenBucket::acquire() {
  if (interval_.count() == 0) return;
  Clock::time_point slot;
  {
    std::lock_guard lock(mutex_);
    const auto now = Clock::now();
    slot = std::max(now, next_);
    next_ = slot + interval_;
  }
  std::this_thread::sleep_until(slot);
}

// --- wire formats -----------------------------------------------------------

std::string grammar_header(const RenderedPrompt& prompt) {
  return std::string(grammar_kind_name(prompt.answer_grammar.kind)) + ";k=" + std::to_string(prompt.scheme.k());
}

std::string chat_request_body(const BackendConfig& backend, const RenderedPrompt& prompt) {
  json messages = json::array();
  for (const auto& seg : prompt.segments) {
    messages.push_back({{"role", std::string(role_name(seg.role))}, {"content", seg.content}});
  }
  json body = {{"model", backend.model},
               {"messages", messages},
               {"temperature", backend.temperature},
               {"max_tokens", backend.max_new_tokens}};
  if (uses_tools(backend, prompt)) {
    const auto schema = tool_schema(prompt.scheme);
    json params = {{"type", "object"},
                   {"properties", {{"emotion", {{"type", "string"}, {"enum", schema.emotion_values}}}}},
                   {"required", {"emotion"}}};
    body["tools"] = json::array(
        {{{"type", "function"},
          {"function", {{"name", schema.name}, {"description", schema.description}, {"parameters", params}}}}});
    body["tool_choice"] = {{"type", "function"}, {"function", {{"name", schema.name}}}};
  }
  return body.dump();
}

std::string generate_request_body(const BackendConfig& backend, const RenderedPrompt& prompt) {
  json body = {{"inputs", prompt.flat()},
               {"parameters", {{"max_new_tokens", backend.max_new_tokens}, {"temperature", backend.temperature}}}};
  return body.dump();
}

std::optional<std::string> parse_chat_response(std::string_view body) {
  const auto j = json::parse(body, nullptr, false);
  if (j.is_discarded() || !j.is_object()) return std::nullopt;
  const auto choices = j.find("choices");
  if (choices == j.end() || !choices->is_array() || choices->empty()) return std::nullopt;
  const auto& first = (*choices)[0];
  if (!first.is_object() || !first.contains("message") || !first["message"].is_object()) return std::nullopt;
  const auto& message = first["message"];
  if (const auto calls = message.find("tool_calls"); calls != message.end() && calls->is_array() && !calls->empty()) {
    const auto& fn = (*calls)[0].value("function", json::object());
    const auto args_it = fn.find("arguments");
    if (args_it == fn.end()) return std::nullopt;
    // Arguments arrive as a JSON-encoded string; some servers send an object.
    json args = args_it->is_string() ? json::parse(args_it->get<std::string>(), nullptr, false) : *args_it;
    if (args.is_object() && args.contains("emotion") && args["emotion"].is_string()) {
      return args["emotion"].get<std::string>();
    }
    return std::nullopt;
  }
  const auto content = message.find("content");
  if (content == message.end() || !content->is_string()) return std::nullopt;
  return content->get<std::string>();
}

std::optional<std::string> parse_generate_response(std::string_view body) {
  const auto j = json::parse(body, nullptr, false);
  if (j.is_discarded()) return std::nullopt;
  // Servers answer either an object or a one-element array of objects.
  const json* obj = &j;
  if (j.is_array() && !j.empty()) obj = &j[0];
  if (!obj->is_object()) return std::nullopt;
  const auto it = obj->find("generated_text");
  if (it == obj->end() || !it->is_string()) return std::nullopt;
  return it->get<std::string>();
}

// --- submission -------------------------------------------------------------

std::optional<std::string> resolve_api_key(const BackendConfig& backend) {
  if (backend.auth_env.empty()) return std::nullopt;
  const char* value = std::getenv(backend.auth_env.c_str());
  if (value == nullptr || *value == '\0') {
    throw ConfigError("backend '" + backend.name + "': environment variable " + backend.auth_env + " is not set");
  }
  return std::string(value);
}

RawResponse submit(const BackendConfig& backend, std::uint64_t sample_id, const RenderedPrompt& prompt,
                   const RetryPolicy& policy, TokenBucket* limiter) {
  const auto key = backend.protocol == Protocol::mock ? std::nullopt : resolve_api_key(backend);
  RawResponse out;
  out.sample_id = sample_id;
  const auto start = std::chrono::steady_clock::now();
  for (int attempt = 1; attempt <= policy.max_attempts; ++attempt) {
    if (limiter != nullptr) limiter->acquire();
    out.attempts = attempt;
    MockReply reply;
    if (backend.protocol == Protocol::mock) {
      reply = backend.mock->respond(sample_id, prompt.answer_grammar.kind, prompt.scheme, attempt);
    } else {
      reply = http_attempt(backend, sample_id, prompt, key);
    }
    if (reply.text) {
      out.text = std::move(reply.text);
      out.error.reset();
      break;
    }
    out.error = std::move(reply.error);
    if (!out.error || !policy.retries(out.error->kind) || attempt == policy.max_attempts) break;
    std::this_thread::sleep_for(policy.delay(attempt));
  }
  out.latency = std::chrono::duration_cast<std::chrono::microseconds>(std::chrono::steady_clock::now() - start);
  return out;
}

std::vector<RawResponse> run_batch(const BackendConfig& backend, std::span<const BatchItem> items,
                                   const BatchOptions& options, BatchStats* stats) {
  if (options.parallelism < 1) throw ConfigError("parallelism must be at least 1");
  backend.validate();
  options.policy.validate();
  // Fail before any request when the key is missing.
  if (backend.protocol != Protocol::mock) resolve_api_key(backend);

  std::vector<RawResponse> results(items.size());
  TokenBucket own_limiter(options.rate_limit_rps);
  TokenBucket* limiter = options.limiter != nullptr ? options.limiter : &own_limiter;

  std::atomic<std::size_t> next{0};
  std::atomic<std::uint64_t> hits{0}, fresh{0}, attempts{0}, errors{0}, cancelled{0};

  auto work = [&] {
    for (std::size_t i = next++; i < items.size(); i = next++) {
      const auto& item = items[i];
      auto& out = results[i];
      std::string key;
      if (options.cache != nullptr) {
        key = ResponseCache::key(backend, item.sample_id, item.prompt);
        if (auto cached = options.cache->get(key)) {
          out.sample_id = item.sample_id;
          out.text = std::move(cached->text);
          out.attempts = cached->attempts;
          out.from_cache = true;
          ++hits;
          continue;
        }
      }
      if (options.fresh_budget != nullptr && options.fresh_budget->fetch_sub(1) <= 0) {
        out.sample_id = item.sample_id;
        out.error = TransportError{TransportErrorKind::cancelled, "request budget exhausted", 0};
        ++cancelled;
        ++errors;
        continue;
      }
      ++fresh;
      out = submit(backend, item.sample_id, item.prompt, options.policy, limiter);
      attempts += static_cast<std::uint64_t>(out.attempts);
      if (!out.ok()) {
        ++errors;
      } else if (options.cache != nullptr) {
        options.cache->put(key, *out.text, out.attempts);
      }
    }
  };

  const auto workers = std::min<std::size_t>(static_cast<std::size_t>(options.parallelism), items.size());
  {
    std::vector<std::jthread> pool;
    pool.reserve(workers);
    for (std::size_t w = 0; w < workers; ++w) pool.emplace_back(work);
  }

  if (stats != nullptr) {
    stats->cache_hits += hits;
    stats->fresh_requests += fresh;
    stats->attempts += attempts;
    stats->transport_errors += errors;
    stats->cancelled += cancelled;
  }
  return results;
}

std::string_view health_status_name(HealthStatus s) { return kHealthNames[static_cast<std::size_t>(s)]; }

HealthStatus health_check(const BackendConfig& backend) {
  if (backend.protocol == Protocol::mock) return HealthStatus::ok;
  std::optional<std::string> key;
  try {
    key = resolve_api_key(backend);
  } catch (const ConfigError&) {
    return HealthStatus::unauthorized;
  }
  const auto url = split_url(backend.base_url);
  auto client = make_client(backend, url);
  httplib::Headers headers;
  if (key) headers.emplace("Authorization", "Bearer " + *key);
  const auto path = url.prefix + (backend.protocol == Protocol::chat ? "/v1/models" : "/health");
  auto res = client->Get(path, headers);
  if (!res) return HealthStatus::unreachable;
  if (res->status == 401 || res->status == 403) return HealthStatus::unauthorized;
  return HealthStatus::ok;
}

}  // namespace emobench
