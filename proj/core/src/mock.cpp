#include "emobench/mock.hpp"

#include <mutex>
#include <stdexcept>

#include <httplib.h>
#include <nlohmann/json.hpp>

#include "emobench/errors.hpp"
#include "emobench/hashing.hpp"

namespace emobench {
namespace {

using json = nlohmann::json;

constexpr std::array<std::string_view, 5> kMockNames = {"oracle", "fixed", "malformed", "flaky", "scripted"};

struct InFlight {
  std::atomic<int>& count;
  explicit InFlight(std::atomic<int>& c, std::atomic<int>& peak) : count(c) {
    const int now = ++count;
    int prev = peak.load();
    while (now > prev && !peak.compare_exchange_weak(prev, now)) {
    }
  }
  ~InFlight() { --count; }
};

struct GrammarSpec {
  GrammarKind kind = GrammarKind::single_label;
  int k = 6;
};

std::optional<GrammarSpec> parse_grammar_header(std::string_view value) {
  const auto semi = value.find(";k=");
  if (semi == std::string_view::npos) return std::nullopt;
  const auto kind = grammar_kind_from_name(value.substr(0, semi));
  if (!kind) return std::nullopt;
  try {
    return GrammarSpec{*kind, std::stoi(std::string(value.substr(semi + 3)))};
  } catch (const std::exception&) {
    return std::nullopt;
  }
}

void send_json(httplib::Response& res, int status, const json& body) {
  res.status = status;
  res.set_content(body.dump(), "application/json");
}

void send_error(httplib::Response& res, int status, std::string_view message) {
  send_json(res, status, {{"error", {{"message", std::string(message)}, {"code", status}}}});
}

int status_for(const TransportError& err) {
  switch (err.kind) {
    case TransportErrorKind::http_429:
      return 429;
    case TransportErrorKind::scripted_gap:
      return 404;
    default:
      return err.http_status != 0 ? err.http_status : 503;
  }
}

}  // namespace

std::string_view mock_kind_name(MockKind k) { return kMockNames[static_cast<std::size_t>(k)]; }

std::optional<MockKind> mock_kind_from_name(std::string_view name) {
  for (std::size_t i = 0; i < kMockNames.size(); ++i) {
    if (kMockNames[i] == name) return static_cast<MockKind>(i);
  }
  return std::nullopt;
}

void MockBehavior::validate() const {
  if (!(rate >= 0.0 && rate <= 1.0)) throw ConfigError("mock rate must lie in [0, 1]");
  if (latency.count() < 0) throw ConfigError("mock latency must not be negative");
}

std::string oracle_answer(Emotion label, GrammarKind grammar, const GroupingScheme& scheme, const Involution& inv) {
  const auto cls = scheme.class_of(label);
  switch (grammar) {
    case GrammarKind::single_label:
      return cls ? scheme.class_names()[*cls] : std::string(label_name(label));
    case GrammarKind::bitstring: {
      std::string bits(scheme.k(), '0');
      if (cls) bits[scheme.k() - 1 - *cls] = '1';
      return bits;
    }
    case GrammarKind::percent_object: {
      nlohmann::ordered_json obj = nlohmann::ordered_json::object();
      for (std::size_t c = 0; c < scheme.k(); ++c) obj[scheme.class_names()[c]] = (cls && *cls == c) ? 100 : 0;
      return obj.dump();
    }
    case GrammarKind::integer_code:
      return cls ? std::to_string(*cls + 1) : "0";
    case GrammarKind::single_label_inverse:
      return std::string(label_name(inv(label)));
  }
  return {};
}

MockResponder::MockResponder(MockBehavior behavior, std::span<const Sample> corpus, Involution inv)
    : behavior_(std::move(behavior)), inv_(inv) {
  behavior_.validate();
  gold_.reserve(corpus.size());
  for (const auto& s : corpus) {
    gold_.emplace(s.id, s.gold);
    by_text_.emplace(s.text, s.id);
  }
}

MockReply MockResponder::respond(std::uint64_t sample_id, GrammarKind grammar, const GroupingScheme& scheme,
                                 int attempt) {
  ++calls_;
  InFlight guard(in_flight_, max_in_flight_);
  if (behavior_.latency.count() > 0) std::this_thread::sleep_for(behavior_.latency);

  auto gap = [&] {
    return MockReply{std::nullopt, TransportError{TransportErrorKind::scripted_gap,
                                                  "unknown sample id " + std::to_string(sample_id), 0}};
  };
  switch (behavior_.kind) {
    case MockKind::scripted: {
      const auto it = behavior_.script.find(sample_id);
      if (it == behavior_.script.end()) return gap();
      return {it->second, std::nullopt};
    }
    case MockKind::fixed:
      return {oracle_answer(behavior_.label, grammar, scheme, inv_), std::nullopt};
    case MockKind::malformed:
      if (keyed_unit(behavior_.seed, sample_id, 0) < behavior_.rate) return {std::string(kMalformedReply), std::nullopt};
      break;
    case MockKind::flaky:
      if (keyed_unit(behavior_.seed, sample_id, static_cast<std::uint64_t>(attempt)) < behavior_.rate) {
        return {std::nullopt, TransportError{TransportErrorKind::http_5xx, "HTTP 503", 503}};
      }
      break;
    case MockKind::oracle:
      break;
  }
  const auto it = gold_.find(sample_id);
  if (it == gold_.end()) return gap();
  return {oracle_answer(it->second, grammar, scheme, inv_), std::nullopt};
}

std::optional<std::uint64_t> MockResponder::id_for_text(std::string_view text) const {
  const auto it = by_text_.find(std::string(text));
  if (it == by_text_.end()) return std::nullopt;
  return it->second;
}

void MockResponder::reset_counters() {
  calls_ = 0;
  max_in_flight_ = 0;
}

BackendConfig mock_backend(const MockBehavior& behavior, std::span<const Sample> corpus, std::string name,
                           ModelDialect dialect) {
  BackendConfig b;
  b.name = std::move(name);
  b.protocol = Protocol::mock;
  b.model = std::string(mock_kind_name(behavior.kind));
  b.dialect = std::move(dialect);
  b.mock = std::make_shared<MockResponder>(behavior, corpus);
  return b;
}

// --- HTTP server ------------------------------------------------------------

struct MockHttpServer::Impl {
  std::shared_ptr<MockResponder> responder;
  Options options;
  httplib::Server server;
  std::thread thread;
  std::mutex attempts_mutex;
  std::unordered_map<std::uint64_t, int> attempts;

  bool authorized(const httplib::Request& req, httplib::Response& res) {
    if (options.api_key.empty()) return true;
    if (req.get_header_value("Authorization") == "Bearer " + options.api_key) return true;
    send_error(res, 401, "invalid api key");
    return false;
  }

  std::optional<std::uint64_t> sample_id(const httplib::Request& req, std::string_view prompt_text) {
    const std::string header(kSampleIdHeader);
    if (req.has_header(header)) {
      try {
        return std::stoull(req.get_header_value(header));
      } catch (const std::exception&) {
        return std::nullopt;
      }
    }
    if (auto id = responder->id_for_text(extract_sentence(prompt_text))) return id;
    auto last = prompt_text;
    if (const auto nl = last.rfind('\n'); nl != std::string_view::npos) last = last.substr(nl + 1);
    return responder->id_for_text(last);
  }

  int next_attempt(std::uint64_t id) {
    std::lock_guard lock(attempts_mutex);
    return ++attempts[id];
  }

  // Common path: resolves id and grammar, asks the responder. Returns the
  // reply text or writes an error response and returns nullopt.
  std::optional<std::string> answer(const httplib::Request& req, httplib::Response& res, std::string_view prompt) {
    const auto id = sample_id(req, prompt);
    if (!id) {
      send_error(res, 404, "cannot identify the sample");
      return std::nullopt;
    }
    GrammarSpec spec;
    if (req.has_header(std::string(kGrammarHeader))) {
      const auto parsed = parse_grammar_header(req.get_header_value(std::string(kGrammarHeader)));
      if (!parsed) {
        send_error(res, 400, "bad grammar header");
        return std::nullopt;
      }
      spec = *parsed;
    }
    std::optional<GroupingScheme> scheme;
    try {
      scheme = scheme_for(spec.k);
    } catch (const ConfigError& e) {
      send_error(res, 400, e.what());
      return std::nullopt;
    }
    auto reply = responder->respond(*id, spec.kind, *scheme, next_attempt(*id));
    if (!reply.text) {
      send_error(res, status_for(*reply.error), reply.error->describe());
      return std::nullopt;
    }
    return reply.text;
  }

  void install() {
    server.Post("/v1/chat/completions", [this](const httplib::Request& req, httplib::Response& res) {
      if (!authorized(req, res)) return;
      const auto body = json::parse(req.body, nullptr, false);
      if (body.is_discarded() || !body.is_object() || !body.contains("messages") || !body["messages"].is_array()) {
        send_error(res, 400, "malformed request");
        return;
      }
      std::string user;
      for (const auto& m : body["messages"]) {
        if (m.is_object() && m.value("role", "") == "user" && m.contains("content") && m["content"].is_string()) {
          user = m["content"].get<std::string>();
        }
      }
      const auto text = answer(req, res, user);
      if (!text) return;
      json message = {{"role", "assistant"}};
      if (body.contains("tools")) {
        message["content"] = nullptr;
        message["tool_calls"] = json::array(
            {{{"id", "call_0"},
              {"type", "function"},
              {"function", {{"name", std::string(kToolName)}, {"arguments", json{{"emotion", *text}}.dump()}}}}});
      } else {
        message["content"] = *text;
      }
      send_json(res, 200,
                {{"object", "chat.completion"},
                 {"model", body.value("model", "mock")},
                 {"choices", json::array({{{"index", 0}, {"message", message}, {"finish_reason", "stop"}}})}});
    });

    server.Post("/generate", [this](const httplib::Request& req, httplib::Response& res) {
      if (!authorized(req, res)) return;
      const auto body = json::parse(req.body, nullptr, false);
      if (body.is_discarded() || !body.is_object() || !body.contains("inputs") || !body["inputs"].is_string()) {
        send_error(res, 400, "malformed request");
        return;
      }
      const auto text = answer(req, res, body["inputs"].get<std::string>());
      if (!text) return;
      send_json(res, 200, {{"generated_text", *text}});
    });

    server.Get("/v1/models", [this](const httplib::Request& req, httplib::Response& res) {
      if (!authorized(req, res)) return;
      send_json(res, 200, {{"object", "list"}, {"data", json::array({{{"id", "mock"}, {"object", "model"}}})}});
    });

    server.Get("/health", [this](const httplib::Request& req, httplib::Response& res) {
      if (!authorized(req, res)) return;
      send_json(res, 200, {{"status", "ok"}});
    });
  }
};

MockHttpServer::MockHttpServer(std::shared_ptr<MockResponder> responder, Options options)
    : impl_(std::make_unique<Impl>()) {
  impl_->responder = std::move(responder);
  impl_->options = std::move(options);
  impl_->install();
}

MockHttpServer::~MockHttpServer() { stop(); }

void MockHttpServer::start() {
  auto& opts = impl_->options;
  if (opts.port == 0) {
    port_ = impl_->server.bind_to_any_port(opts.host);
  } else {
    port_ = impl_->server.bind_to_port(opts.host, opts.port) ? opts.port : -1;
  }
  if (port_ <= 0) throw std::runtime_error("cannot bind " + opts.host + ":" + std::to_string(opts.port));
  impl_->thread = std::thread([this] { impl_->server.listen_after_bind(); });
  impl_->server.wait_until_ready();
}

void MockHttpServer::run() {
  if (!impl_->thread.joinable()) start();
  if (impl_->thread.joinable()) impl_->thread.join();
}

void MockHttpServer::stop() {
  if (!impl_) return;
  impl_->server.stop();
  if (impl_->thread.joinable() && impl_->thread.get_id() != std::this_thread::get_id()) impl_->thread.join();
}

std::string MockHttpServer::base_url() const { return "http://" + impl_->options.host + ":" + std::to_string(port_); }

}  // namespace emobench
