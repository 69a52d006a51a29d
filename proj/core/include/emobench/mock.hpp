#pragma once

// Deterministic test doubles: an in-process responder used by the mock
// protocol and an HTTP server speaking both wire protocols.

#include <atomic>
#include <chrono>
#include <cstdint>
#include <map>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <thread>
#include <unordered_map>

#include "emobench/dataset.hpp"
#include "emobench/gateway.hpp"
#include "emobench/prompt.hpp"
#include "emobench/taxonomy.hpp"

namespace emobench {

enum class MockKind { oracle, fixed, malformed, flaky, scripted };

std::string_view mock_kind_name(MockKind k);
std::optional<MockKind> mock_kind_from_name(std::string_view name);

struct MockBehavior {
  MockKind kind = MockKind::oracle;
  Emotion label = Emotion::sadness;                // fixed
  double rate = 0.0;                               // malformed, flaky
  std::uint64_t seed = 0;                          // malformed, flaky
  std::map<std::uint64_t, std::string> script;     // scripted: sample id -> raw reply
  std::chrono::microseconds latency{0};

  static MockBehavior oracle() { return {}; }
  static MockBehavior fixed(Emotion e) {
    MockBehavior b;
    b.kind = MockKind::fixed;
    b.label = e;
    return b;
  }
  static MockBehavior malformed(double rate, std::uint64_t seed) { return with_rate(MockKind::malformed, rate, seed); }
  static MockBehavior flaky(double rate, std::uint64_t seed) { return with_rate(MockKind::flaky, rate, seed); }
  static MockBehavior scripted(std::map<std::uint64_t, std::string> script) {
    MockBehavior b;
    b.kind = MockKind::scripted;
    b.script = std::move(script);
    return b;
  }

  /// Throws ConfigError unless rate is in [0,1].
  void validate() const;

 private:
  static MockBehavior with_rate(MockKind kind, double rate, std::uint64_t seed) {
    MockBehavior b;
    b.kind = kind;
    b.rate = rate;
    b.seed = seed;
    return b;
  }
};

/// The reply text malformed mocks send; it violates every answer grammar.
inline constexpr std::string_view kMalformedReply = "Sorry, I cannot help with that.";

/// The well-formed answer for `label` in the given grammar.
std::string oracle_answer(Emotion label, GrammarKind grammar, const GroupingScheme& scheme, const Involution& inv);

struct MockReply {
  std::optional<std::string> text;
  std::optional<TransportError> error;
};

class MockResponder {
 public:
  MockResponder(MockBehavior behavior, std::span<const Sample> corpus,
                Involution inv = Involution::default_pairing());

  /// Reply for attempt `attempt` (1-based) at one sample. Sleeps for the
  /// configured latency while counted as in flight.
  MockReply respond(std::uint64_t sample_id, GrammarKind grammar, const GroupingScheme& scheme, int attempt);

  /// Sample id of a corpus text, for requests that carry no id header.
  std::optional<std::uint64_t> id_for_text(std::string_view text) const;

  const MockBehavior& behavior() const { return behavior_; }
  std::uint64_t calls() const { return calls_.load(); }
  int max_in_flight() const { return max_in_flight_.load(); }
  void reset_counters();

 private:
  MockBehavior behavior_;
  Involution inv_;
  std::unordered_map<std::uint64_t, Emotion> gold_;
  std::unordered_map<std::string, std::uint64_t> by_text_;
  std::atomic<std::uint64_t> calls_{0};
  std::atomic<int> in_flight_{0};
  std::atomic<int> max_in_flight_{0};
};

BackendConfig mock_backend(const MockBehavior& behavior, std::span<const Sample> corpus,
                           std::string name = "mock", ModelDialect dialect = {});

/// HTTP front end over a MockResponder: POST /v1/chat/completions,
/// POST /generate, GET /v1/models, GET /health. Flaky attempts are counted
/// per sample id on the server side.
class MockHttpServer {
 public:
  struct Options {
    std::string host = "127.0.0.1";
    int port = 0;  // 0 picks a free port
    std::string api_key;  // empty: no authentication
  };

  MockHttpServer(std::shared_ptr<MockResponder> responder, Options options);
  ~MockHttpServer();
  MockHttpServer(const MockHttpServer&) = delete;
  MockHttpServer& operator=(const MockHttpServer&) = delete;

  /// Binds and serves on a background thread. Throws std::runtime_error when
  /// the port cannot be bound.
  void start();
  /// Starts if needed, then blocks until stop().
  void run();
  void stop();

  int port() const { return port_; }
  std::string base_url() const;

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
  int port_ = 0;
};

}  // namespace emobench
