#include "emobench/runner.hpp"

#include <algorithm>
#include <charconv>
#include <fstream>
#include <sstream>

#include "emobench/errors.hpp"
#include "emobench/hashing.hpp"

namespace emobench {
namespace {

using json = nlohmann::json;
namespace fs = std::filesystem;

constexpr std::array<std::string_view, 3> kStatusNames = {"complete", "aborted", "interrupted"};
constexpr std::array<std::string_view, 3> kLabelFormats = {"integer", "name", "auto"};
constexpr std::array<std::string_view, 2> kSplitStrategies = {"head_tail", "stratified_random"};

// --- config reading ---------------------------------------------------------

std::string join_key(const std::string& where, std::string_view key) {
  return where.empty() ? std::string(key) : where + "." + std::string(key);
}

[[noreturn]] void bad(const std::string& key, const std::string& message) {
  throw ConfigError("config key '" + key + "': " + message);
}

template <std::size_t N>
std::string list_names(const std::array<std::string_view, N>& names) {
  std::string out;
  for (const auto n : names) out += (out.empty() ? "" : ", ") + std::string(n);
  return out;
}

void check_keys(const json& obj, const std::string& where, std::initializer_list<std::string_view> allowed) {
  if (!obj.is_object()) bad(where.empty() ? "<root>" : where, "expected an object");
  for (const auto& [key, _] : obj.items()) {
    if (std::find(allowed.begin(), allowed.end(), key) == allowed.end()) bad(join_key(where, key), "unknown key");
  }
}

const json* find_key(const json& obj, std::string_view key) {
  const auto it = obj.find(key);
  return it == obj.end() ? nullptr : &*it;
}

const json& require(const json& obj, const std::string& where, std::string_view key) {
  const auto* v = find_key(obj, key);
  if (v == nullptr) bad(join_key(where, key), "is required");
  return *v;
}

std::string as_string(const json& v, const std::string& key) {
  if (!v.is_string()) bad(key, "expected a string");
  return v.get<std::string>();
}

double as_double(const json& v, const std::string& key) {
  if (!v.is_number()) bad(key, "expected a number");
  return v.get<double>();
}

std::int64_t as_int(const json& v, const std::string& key) {
  if (!v.is_number_integer() && !v.is_number_unsigned()) bad(key, "expected an integer");
  return v.get<std::int64_t>();
}

bool as_bool(const json& v, const std::string& key) {
  if (!v.is_boolean()) bad(key, "expected true or false");
  return v.get<bool>();
}

std::string opt_string(const json& obj, const std::string& where, std::string_view key, std::string def) {
  const auto* v = find_key(obj, key);
  return v ? as_string(*v, join_key(where, key)) : def;
}

double opt_double(const json& obj, const std::string& where, std::string_view key, double def) {
  const auto* v = find_key(obj, key);
  return v ? as_double(*v, join_key(where, key)) : def;
}

std::int64_t opt_int(const json& obj, const std::string& where, std::string_view key, std::int64_t def) {
  const auto* v = find_key(obj, key);
  return v ? as_int(*v, join_key(where, key)) : def;
}

fs::path resolve_path(const fs::path& base, const std::string& p) {
  fs::path path(p);
  if (path.is_relative()) path = base / path;
  return fs::absolute(path).lexically_normal();
}

Emotion parse_label(const json& v, const std::string& key) {
  const auto name = as_string(v, key);
  const auto label = label_from_name(name);
  if (!label) bad(key, "unknown label '" + name + "' (valid: sadness, joy, love, anger, fear, surprise)");
  return *label;
}

std::string label_format_name(LabelFormat f) { return std::string(kLabelFormats[static_cast<std::size_t>(f)]); }

DatasetSpec parse_dataset(const json& obj, const fs::path& base) {
  const std::string where = "dataset";
  check_keys(obj, where, {"path", "label_format", "split", "subsample"});
  DatasetSpec d;
  d.path = resolve_path(base, as_string(require(obj, where, "path"), "dataset.path"));
  if (!fs::is_regular_file(d.path)) bad("dataset.path", "file '" + d.path.string() + "' does not exist");
  const auto fmt = opt_string(obj, where, "label_format", "auto");
  const auto fi = std::find(kLabelFormats.begin(), kLabelFormats.end(), fmt);
  if (fi == kLabelFormats.end()) bad("dataset.label_format", "unknown value '" + fmt + "' (valid: " + list_names(kLabelFormats) + ")");
  d.format = static_cast<LabelFormat>(fi - kLabelFormats.begin());

  if (const auto* s = find_key(obj, "split")) {
    const std::string sw = "dataset.split";
    check_keys(*s, sw, {"finetune_size", "eval_size", "seed", "strategy"});
    SplitSpec spec;
    spec.finetune_size = static_cast<std::size_t>(opt_int(*s, sw, "finetune_size", 2000));
    spec.eval_size = static_cast<std::size_t>(opt_int(*s, sw, "eval_size", 16000));
    spec.seed = static_cast<std::uint64_t>(opt_int(*s, sw, "seed", 0));
    const auto strat = opt_string(*s, sw, "strategy", "head_tail");
    const auto si = std::find(kSplitStrategies.begin(), kSplitStrategies.end(), strat);
    if (si == kSplitStrategies.end()) bad(sw + ".strategy", "unknown value '" + strat + "' (valid: " + list_names(kSplitStrategies) + ")");
    spec.strategy = static_cast<SplitStrategy>(si - kSplitStrategies.begin());
    d.split = spec;
  }
  if (const auto* s = find_key(obj, "subsample")) {
    const std::string sw = "dataset.subsample";
    check_keys(*s, sw, {"n", "seed"});
    const auto n = as_int(require(*s, sw, "n"), sw + ".n");
    if (n < 1) bad(sw + ".n", "must be positive");
    d.subsample = Subsample{static_cast<std::size_t>(n), static_cast<std::uint64_t>(opt_int(*s, sw, "seed", 0))};
  }
  return d;
}

MockBehavior parse_mock(const json& obj, const std::string& where) {
  check_keys(obj, where, {"behavior", "label", "rate", "seed", "script", "latency_ms"});
  const auto name = opt_string(obj, where, "behavior", "oracle");
  const auto kind = mock_kind_from_name(name);
  if (!kind) bad(join_key(where, "behavior"), "unknown mock behaviour '" + name + "' (valid: oracle, fixed, malformed, flaky, scripted)");
  MockBehavior b;
  b.kind = *kind;
  if (b.kind == MockKind::fixed) b.label = parse_label(require(obj, where, "label"), join_key(where, "label"));
  b.rate = opt_double(obj, where, "rate", 0.0);
  if (!(b.rate >= 0.0 && b.rate <= 1.0)) bad(join_key(where, "rate"), "must lie in [0, 1]");
  b.seed = static_cast<std::uint64_t>(opt_int(obj, where, "seed", 0));
  b.latency = std::chrono::microseconds(static_cast<std::int64_t>(opt_double(obj, where, "latency_ms", 0.0) * 1000.0));
  if (b.latency.count() < 0) bad(join_key(where, "latency_ms"), "must not be negative");
  if (b.kind == MockKind::scripted) {
    const auto& script = require(obj, where, "script");
    const auto sk = join_key(where, "script");
    if (!script.is_object()) bad(sk, "expected an object of sample id -> reply");
    for (const auto& [id, reply] : script.items()) {
      std::uint64_t n = 0;
      const auto [ptr, ec] = std::from_chars(id.data(), id.data() + id.size(), n);
      if (ec != std::errc{} || ptr != id.data() + id.size()) bad(sk + "." + id, "keys must be sample ids");
      b.script[n] = as_string(reply, sk + "." + id);
    }
  }
  return b;
}

BackendSpec parse_backend(const json& obj, const std::string& where) {
  check_keys(obj, where,
             {"name", "protocol", "base_url", "model", "auth_env", "temperature", "max_new_tokens", "use_tools",
              "timeout_ms", "dialect", "family", "mock"});
  BackendSpec spec;
  auto& b = spec.config;
  b.name = as_string(require(obj, where, "name"), join_key(where, "name"));
  const auto proto = opt_string(obj, where, "protocol", "mock");
  const auto p = protocol_from_name(proto);
  if (!p) bad(join_key(where, "protocol"), "unknown protocol '" + proto + "' (valid: chat, generate, mock)");
  b.protocol = *p;
  b.base_url = opt_string(obj, where, "base_url", "");
  b.model = opt_string(obj, where, "model", b.name);
  b.auth_env = opt_string(obj, where, "auth_env", "");
  b.temperature = opt_double(obj, where, "temperature", 0.0);
  b.max_new_tokens = static_cast<int>(opt_int(obj, where, "max_new_tokens", 64));
  if (const auto* v = find_key(obj, "use_tools")) b.use_tools = as_bool(*v, join_key(where, "use_tools"));
  b.timeout = std::chrono::milliseconds(opt_int(obj, where, "timeout_ms", 60000));
  const auto dialect = opt_string(obj, where, "dialect", "plain-instruct");
  const auto d = dialect_from_name(dialect);
  if (!d) bad(join_key(where, "dialect"), "unknown dialect '" + dialect + "' (valid: plain-instruct, quoted-input, header-delimited)");
  b.dialect = ModelDialect{*d, b.model};
  spec.family = opt_string(obj, where, "family", "llm");
  if (spec.family.empty()) bad(join_key(where, "family"), "must not be empty");

  if (const auto* m = find_key(obj, "mock")) {
    if (b.protocol != Protocol::mock) bad(join_key(where, "mock"), "only valid with protocol 'mock'");
    spec.mock = parse_mock(*m, join_key(where, "mock"));
  } else if (b.protocol == Protocol::mock) {
    spec.mock = MockBehavior::oracle();
  }
  // validate() needs a responder for mock backends; that is attached later.
  BackendConfig probe = b;
  if (probe.protocol == Protocol::mock) probe.mock = std::make_shared<MockResponder>(MockBehavior{}, std::span<const Sample>{});
  try {
    probe.validate();
  } catch (const ConfigError& e) {
    bad(where, e.what());
  }
  if (!b.auth_env.empty()) {
    try {
      resolve_api_key(b);
    } catch (const ConfigError& e) {
      bad(join_key(where, "auth_env"), e.what());
    }
  }
  return spec;
}

RetryPolicy parse_policy(const json& obj) {
  const std::string where = "policy";
  check_keys(obj, where, {"max_attempts", "base_backoff_ms", "backoff_factor", "retry_on"});
  RetryPolicy p;
  p.max_attempts = static_cast<int>(opt_int(obj, where, "max_attempts", p.max_attempts));
  p.base_backoff = std::chrono::milliseconds(opt_int(obj, where, "base_backoff_ms", p.base_backoff.count()));
  p.backoff_factor = opt_double(obj, where, "backoff_factor", p.backoff_factor);
  if (const auto* r = find_key(obj, "retry_on")) {
    if (!r->is_array()) bad("policy.retry_on", "expected an array");
    p.retry_on.clear();
    for (const auto& item : *r) {
      const auto name = as_string(item, "policy.retry_on");
      const auto kind = transport_error_from_name(name);
      if (!kind || (*kind != TransportErrorKind::timeout && *kind != TransportErrorKind::http_429 &&
                    *kind != TransportErrorKind::http_5xx && *kind != TransportErrorKind::connection)) {
        bad("policy.retry_on", "unknown error class '" + name + "' (valid: timeout, http-429, http-5xx, connection)");
      }
      p.retry_on.insert(*kind);
    }
  }
  try {
    p.validate();
  } catch (const ConfigError& e) {
    bad(where, e.what());
  }
  return p;
}

GroupingScheme parse_scheme_def(const json& groups, const std::string& where) {
  if (!groups.is_array()) bad(where, "expected an array of groups");
  std::vector<GroupingScheme::Group> out;
  for (std::size_t i = 0; i < groups.size(); ++i) {
    const auto gw = where + "[" + std::to_string(i) + "]";
    check_keys(groups[i], gw, {"name", "members"});
    GroupingScheme::Group g;
    g.name = as_string(require(groups[i], gw, "name"), gw + ".name");
    const auto& members = require(groups[i], gw, "members");
    if (!members.is_array()) bad(gw + ".members", "expected an array of labels");
    for (const auto& m : members) g.members.push_back(parse_label(m, gw + ".members"));
    out.push_back(std::move(g));
  }
  try {
    return GroupingScheme(std::move(out));
  } catch (const ConfigError& e) {
    bad(where, e.what());
  }
}

json scheme_to_json(const GroupingScheme& s) {
  json groups = json::array();
  for (const auto& g : s.groups()) {
    json members = json::array();
    for (const auto m : g.members) members.push_back(std::string(label_name(m)));
    groups.push_back({{"name", g.name}, {"members", members}});
  }
  return groups;
}

json involution_to_json(const Involution& inv) {
  json pairs = json::array();
  for (const auto& [a, b] : inv.pairs()) {
    if (a != b) pairs.push_back({std::string(label_name(a)), std::string(label_name(b))});
  }
  return pairs;
}

json canonical_config(const ExperimentPlan& plan) {
  json dataset = {{"path", plan.dataset.path.string()}, {"label_format", label_format_name(plan.dataset.format)}};
  if (plan.dataset.split) {
    const auto& s = *plan.dataset.split;
    dataset["split"] = {{"finetune_size", s.finetune_size},
                        {"eval_size", s.eval_size},
                        {"seed", s.seed},
                        {"strategy", std::string(kSplitStrategies[static_cast<std::size_t>(s.strategy)])}};
  }
  if (plan.dataset.subsample) dataset["subsample"] = {{"n", plan.dataset.subsample->n}, {"seed", plan.dataset.subsample->seed}};

  json backends = json::array();
  for (const auto& spec : plan.backends) {
    const auto& b = spec.config;
    json j = {{"name", b.name},
              {"protocol", std::string(protocol_name(b.protocol))},
              {"base_url", b.base_url},
              {"model", b.model},
              {"auth_env", b.auth_env},
              {"temperature", b.temperature},
              {"max_new_tokens", b.max_new_tokens},
              {"use_tools", b.use_tools},
              {"timeout_ms", b.timeout.count()},
              {"dialect", std::string(dialect_name(b.dialect.kind))},
              {"family", spec.family}};
    if (spec.mock) {
      const auto& m = *spec.mock;
      json mock = {{"behavior", std::string(mock_kind_name(m.kind))},
                   {"rate", m.rate},
                   {"seed", m.seed},
                   {"latency_ms", static_cast<double>(m.latency.count()) / 1000.0}};
      if (m.kind == MockKind::fixed) mock["label"] = std::string(label_name(m.label));
      if (m.kind == MockKind::scripted) {
        json script = json::object();
        for (const auto& [id, reply] : m.script) script[std::to_string(id)] = reply;
        mock["script"] = script;
      }
      j["mock"] = mock;
    }
    backends.push_back(j);
  }

  json strategies = json::array();
  for (const auto s : plan.strategies) strategies.push_back(std::string(strategy_name(s)));
  json groupings = json::object();
  for (const auto& [k, scheme] : plan.scheme_defs) groupings[std::to_string(k)] = scheme_to_json(scheme);
  json retry_on = json::array();
  for (const auto k : plan.policy.retry_on) retry_on.push_back(std::string(transport_error_name(k)));

  json out = {{"dataset", dataset},
              {"backends", backends},
              {"strategies", strategies},
              {"schemes", plan.schemes},
              {"grouping_schemes", groupings},
              {"involution", involution_to_json(plan.involution)},
              {"policy",
               {{"max_attempts", plan.policy.max_attempts},
                {"base_backoff_ms", plan.policy.base_backoff.count()},
                {"backoff_factor", plan.policy.backoff_factor},
                {"retry_on", retry_on}}},
              {"parallelism", plan.parallelism},
              {"rate_limit_rps", plan.rate_limit_rps},
              {"scoring_mode", std::string(scoring_mode_name(plan.scoring_mode))},
              {"averaging", std::string(averaging_name(plan.averaging))},
              {"run_dir", plan.run_dir.string()}};
  if (plan.synonyms_path) out["synonyms_path"] = plan.synonyms_path->string();
  if (plan.templates_dir) out["templates_dir"] = plan.templates_dir->string();
  if (!plan.cleanup_rules.empty()) {
    json rules = json::object();
    for (const auto& [d, p] : plan.cleanup_rules) rules[std::string(dialect_name(d))] = p.string();
    out["cleanup_rules"] = rules;
  }
  return out;
}

std::string read_bytes(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot read '" + path.string() + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_atomic(const fs::path& path, std::string_view content) {
  const auto tmp = fs::path(path.string() + ".tmp");
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error("cannot write '" + tmp.string() + "'");
    out.write(content.data(), static_cast<std::streamsize>(content.size()));
  }
  fs::rename(tmp, path);
}

json matrix_counts(const ConfusionMatrix& m) {
  json rows = json::array();
  for (std::size_t g = 0; g < m.k(); ++g) {
    json row = json::array();
    for (std::size_t p = 0; p < m.k(); ++p) row.push_back(m.at(g, p));
    rows.push_back(row);
  }
  return rows;
}

json metrics_to_json(const MetricSet& s) {
  return {{"accuracy", s.accuracy},   {"recall", s.recall},   {"precision", s.precision},
          {"f_score", s.f_score},     {"failure_rate", s.failure_rate},
          {"averaging", std::string(averaging_name(s.averaging))}};
}

MetricSet metrics_from_json(const json& j) {
  MetricSet s;
  s.accuracy = j.at("accuracy").get<double>();
  s.recall = j.at("recall").get<double>();
  s.precision = j.at("precision").get<double>();
  s.f_score = j.at("f_score").get<double>();
  s.failure_rate = j.at("failure_rate").get<double>();
  s.averaging = averaging_from_name(j.at("averaging").get<std::string>()).value();
  return s;
}

CellKey cell_key_from_json(const json& j) {
  CellKey key;
  key.backend = j.at("backend").get<std::string>();
  key.strategy = strategy_from_name(j.at("strategy").get<std::string>()).value();
  key.k = j.at("k").get<int>();
  return key;
}

std::optional<MetricSet> safe_metrics(const ConfusionMatrix& m, Averaging avg, ScoringMode mode) {
  try {
    return compute_metrics(m, avg, mode);
  } catch (const std::domain_error&) {
    return std::nullopt;
  }
}

struct LoadedData {
  std::vector<Sample> eval;
  std::size_t rows = 0;
  std::size_t row_errors = 0;
};

LoadedData load_eval_samples(const DatasetSpec& spec) {
  auto loaded = load_csv(spec.path, spec.format);
  if (loaded.samples.empty()) throw DatasetError("dataset '" + spec.path.string() + "' has no usable rows");
  LoadedData out;
  out.rows = loaded.data_rows;
  out.row_errors = loaded.errors.size();
  out.eval = std::move(loaded.samples);
  if (spec.split) out.eval = split(out.eval, *spec.split).eval;
  if (spec.subsample) out.eval = stratified_subsample(out.eval, spec.subsample->n, spec.subsample->seed);
  return out;
}

std::string stats_json(const RunStats& s) {
  json cells = json::object();
  for (const auto& [k, v] : s.cell_seconds) cells[k] = v;
  json inflight = json::object();
  for (const auto& [k, v] : s.max_in_flight) inflight[k] = v;
  return json{{"wall_seconds", s.wall_seconds},
              {"cache_hits", s.batch.cache_hits},
              {"fresh_requests", s.batch.fresh_requests},
              {"attempts", s.batch.attempts},
              {"transport_errors", s.batch.transport_errors},
              {"cancelled", s.batch.cancelled},
              {"dataset_rows", s.dataset_rows},
              {"dataset_row_errors", s.dataset_row_errors},
              {"cell_seconds", cells},
              {"max_in_flight", inflight}}
             .dump(2) +
         "\n";
}

void persist(const fs::path& run_dir, const RunRecord& record) {
  write_atomic(run_dir / "record.json", record_to_json(record).dump(2) + "\n");
  std::string lines;
  for (const auto& p : record.predictions) lines += prediction_to_json(p).dump() + "\n";
  write_atomic(run_dir / "predictions.ndjson", lines);
  write_atomic(run_dir / "run_stats.json", stats_json(record.stats));
}

}  // namespace

// --- planning ---------------------------------------------------------------

ExperimentPlan plan_from_json(const json& config, const fs::path& base_dir) {
  check_keys(config, "",
             {"dataset", "backends", "strategies", "schemes", "grouping_schemes", "policy", "parallelism",
              "rate_limit_rps", "scoring_mode", "averaging", "run_dir", "involution", "synonyms_path",
              "cleanup_rules", "templates_dir", "$schema"});
  ExperimentPlan plan;
  plan.dataset = parse_dataset(require(config, "", "dataset"), base_dir);

  const auto& backends = require(config, "", "backends");
  if (!backends.is_array() || backends.empty()) bad("backends", "expected a non-empty array");
  for (std::size_t i = 0; i < backends.size(); ++i) {
    auto spec = parse_backend(backends[i], "backends[" + std::to_string(i) + "]");
    for (const auto& other : plan.backends) {
      if (other.config.name == spec.config.name) bad("backends[" + std::to_string(i) + "].name", "duplicate backend name '" + spec.config.name + "'");
    }
    plan.backends.push_back(std::move(spec));
  }

  const auto& strategies = require(config, "", "strategies");
  if (!strategies.is_array() || strategies.empty()) bad("strategies", "expected a non-empty array");
  for (const auto& s : strategies) {
    const auto name = as_string(s, "strategies");
    const auto st = strategy_from_name(name);
    if (!st) bad("strategies", "unknown strategy '" + name + "' (valid: basic, mask, percent, numeric, inverse)");
    if (std::find(plan.strategies.begin(), plan.strategies.end(), *st) != plan.strategies.end()) {
      bad("strategies", "duplicate strategy '" + name + "'");
    }
    plan.strategies.push_back(*st);
  }

  const auto& schemes = require(config, "", "schemes");
  if (!schemes.is_array() || schemes.empty()) bad("schemes", "expected a non-empty array");
  std::map<int, GroupingScheme> custom;
  if (const auto* g = find_key(config, "grouping_schemes")) {
    if (!g->is_object()) bad("grouping_schemes", "expected an object keyed by class count");
    for (const auto& [key, groups] : g->items()) {
      int k = 0;
      const auto [ptr, ec] = std::from_chars(key.data(), key.data() + key.size(), k);
      if (ec != std::errc{} || ptr != key.data() + key.size()) bad("grouping_schemes." + key, "keys must be class counts");
      auto scheme = parse_scheme_def(groups, "grouping_schemes." + key);
      if (static_cast<int>(scheme.k()) != k) bad("grouping_schemes." + key, "defines " + std::to_string(scheme.k()) + " groups");
      custom.emplace(k, std::move(scheme));
    }
  }
  for (const auto& s : schemes) {
    const auto k = static_cast<int>(as_int(s, "schemes"));
    if (std::find(plan.schemes.begin(), plan.schemes.end(), k) != plan.schemes.end()) bad("schemes", "duplicate scheme " + std::to_string(k));
    if (auto it = custom.find(k); it != custom.end()) {
      plan.scheme_defs.emplace(k, it->second);
    } else {
      try {
        plan.scheme_defs.emplace(k, scheme_for(k));
      } catch (const ConfigError&) {
        bad("schemes", "no grouping for k=" + std::to_string(k) + " (built in: 6, 3, 2; others need grouping_schemes)");
      }
    }
    plan.schemes.push_back(k);
  }
  const bool has_inverse = std::find(plan.strategies.begin(), plan.strategies.end(), PromptStrategy::inverse) != plan.strategies.end();
  if (has_inverse) {
    const auto six = plan.scheme_defs.find(6);
    if (six == plan.scheme_defs.end()) bad("strategies", "the inverse strategy needs scheme 6 in the grid (it is only defined on the six labels)");
    if (!six->second.is_identity()) bad("grouping_schemes.6", "the inverse strategy needs the identity grouping at k=6");
  }

  if (const auto* p = find_key(config, "policy")) plan.policy = parse_policy(*p);
  plan.parallelism = static_cast<int>(opt_int(config, "", "parallelism", plan.parallelism));
  if (plan.parallelism < 1) bad("parallelism", "must be at least 1");
  plan.rate_limit_rps = opt_double(config, "", "rate_limit_rps", 0.0);
  if (plan.rate_limit_rps < 0) bad("rate_limit_rps", "must not be negative");
  const auto mode = opt_string(config, "", "scoring_mode", "strict");
  if (auto m = scoring_mode_from_name(mode)) plan.scoring_mode = *m;
  else bad("scoring_mode", "unknown value '" + mode + "' (valid: strict, exclude)");
  const auto avg = opt_string(config, "", "averaging", "macro");
  if (auto a = averaging_from_name(avg)) plan.averaging = *a;
  else bad("averaging", "unknown value '" + avg + "' (valid: macro, weighted)");
  plan.run_dir = resolve_path(base_dir, as_string(require(config, "", "run_dir"), "run_dir"));

  if (const auto* inv = find_key(config, "involution")) {
    if (!inv->is_array()) bad("involution", "expected an array of label pairs");
    std::vector<std::pair<Emotion, Emotion>> pairs;
    for (const auto& pr : *inv) {
      if (!pr.is_array() || pr.size() != 2) bad("involution", "each entry must be a pair of labels");
      pairs.emplace_back(parse_label(pr[0], "involution"), parse_label(pr[1], "involution"));
    }
    try {
      plan.involution = Involution::from_pairs(pairs);
    } catch (const ConfigError& e) {
      bad("involution", e.what());
    }
  }
  if (const auto* p = find_key(config, "synonyms_path")) {
    plan.synonyms_path = resolve_path(base_dir, as_string(*p, "synonyms_path"));
    try {
      SynonymDictionary::load(*plan.synonyms_path);
    } catch (const ConfigError& e) {
      bad("synonyms_path", e.what());
    }
  }
  if (const auto* p = find_key(config, "templates_dir")) {
    plan.templates_dir = resolve_path(base_dir, as_string(*p, "templates_dir"));
    try {
      TemplateSet::load_dir(*plan.templates_dir);
    } catch (const ConfigError& e) {
      bad("templates_dir", e.what());
    }
  }
  if (const auto* r = find_key(config, "cleanup_rules")) {
    if (!r->is_object()) bad("cleanup_rules", "expected an object keyed by dialect");
    for (const auto& [name, path] : r->items()) {
      const auto d = dialect_from_name(name);
      if (!d) bad("cleanup_rules." + name, "unknown dialect");
      const auto resolved = resolve_path(base_dir, as_string(path, "cleanup_rules." + name));
      try {
        CleanupRules::load(resolved);
      } catch (const ConfigError& e) {
        bad("cleanup_rules." + name, e.what());
      }
      plan.cleanup_rules.emplace(*d, resolved);
    }
  }
  plan.canonical = canonical_config(plan);
  return plan;
}

ExperimentPlan plan_from_config(const fs::path& path) {
  std::string text;
  try {
    text = read_bytes(path);
  } catch (const ConfigError&) {
    throw ConfigError("cannot read config '" + path.string() + "'");
  }
  const auto j = json::parse(text, nullptr, false);
  if (j.is_discarded()) throw ConfigError("config '" + path.string() + "' is not valid JSON");
  return plan_from_json(j, fs::absolute(path).parent_path());
}

std::string plan_fingerprint(const ExperimentPlan& plan) {
  json c = canonical_config(plan);
  c.erase("run_dir");
  c.erase("parallelism");
  c.erase("rate_limit_rps");
  Sha256 h;
  h.field(c.dump());
  h.field(sha256_hex(read_bytes(plan.dataset.path)));
  return h.hex();
}

std::string CellKey::describe() const {
  return backend + "/" + std::string(strategy_name(strategy)) + "/k" + std::to_string(k);
}

std::vector<CellKey> plan_cells(const ExperimentPlan& plan) {
  std::vector<CellKey> cells;
  for (const auto& b : plan.backends) {
    for (const auto s : plan.strategies) {
      for (const auto k : plan.schemes) {
        if (s == PromptStrategy::inverse && k != 6) continue;
        cells.push_back({b.config.name, s, k});
      }
    }
  }
  return cells;
}

std::string_view cell_status_name(CellStatus s) { return kStatusNames[static_cast<std::size_t>(s)]; }

std::optional<CellStatus> cell_status_from_name(std::string_view name) {
  for (std::size_t i = 0; i < kStatusNames.size(); ++i) {
    if (kStatusNames[i] == name) return static_cast<CellStatus>(i);
  }
  return std::nullopt;
}

bool RunRecord::any_aborted() const {
  return std::any_of(cells.begin(), cells.end(), [](const CellResult& c) { return c.status == CellStatus::aborted; });
}

bool RunRecord::operator==(const RunRecord& o) const {
  return fingerprint == o.fingerprint && cells == o.cells && predictions == o.predictions &&
         eval_histogram == o.eval_histogram && schemes == o.schemes && families == o.families &&
         scoring_mode == o.scoring_mode && averaging == o.averaging && interrupted == o.interrupted;
}

// --- execution --------------------------------------------------------------

RunRecord execute(const ExperimentPlan& plan, const ExecuteOptions& options) {
  const auto started = std::chrono::steady_clock::now();
  const auto fingerprint = plan_fingerprint(plan);

  fs::create_directories(plan.run_dir);
  const auto fp_path = plan.run_dir / "fingerprint";
  if (fs::exists(fp_path)) {
    auto existing = read_bytes(fp_path);
    while (!existing.empty() && (existing.back() == '\n' || existing.back() == '\r')) existing.pop_back();
    if (existing != fingerprint) {
      throw FingerprintMismatch("run directory '" + plan.run_dir.string() + "' was produced by a different plan (fingerprint " +
                                existing.substr(0, 12) + " vs " + fingerprint.substr(0, 12) +
                                "); the config or the dataset changed. Use a fresh run_dir.");
    }
  }
  write_atomic(plan.run_dir / "plan.json", plan.canonical.dump(2) + "\n");
  write_atomic(fp_path, fingerprint + "\n");

  const auto data = load_eval_samples(plan.dataset);

  SynonymDictionary dict = plan.synonyms_path ? SynonymDictionary::load(*plan.synonyms_path) : SynonymDictionary::builtin();
  std::map<DialectKind, CleanupRules> rules;
  for (const auto& [d, p] : plan.cleanup_rules) rules.emplace(d, CleanupRules::load(p));
  const ResponseNormalizer normalizer(std::move(dict), std::move(rules), plan.involution);
  const PromptRenderer renderer(plan.templates_dir ? TemplateSet::load_dir(*plan.templates_dir) : TemplateSet::builtin(),
                                plan.involution);

  RunRecord record;
  record.fingerprint = fingerprint;
  record.eval_histogram = class_histogram(data.eval);
  record.schemes = plan.scheme_defs;
  record.scoring_mode = plan.scoring_mode;
  record.averaging = plan.averaging;
  record.stats.dataset_rows = data.rows;
  record.stats.dataset_row_errors = data.row_errors;

  std::map<std::string, BackendConfig> backends;
  std::map<std::string, HealthStatus> health;
  for (const auto& spec : plan.backends) {
    auto cfg = spec.config;
    if (spec.mock) cfg.mock = std::make_shared<MockResponder>(*spec.mock, data.eval, plan.involution);
    health[cfg.name] = health_check(cfg);
    record.families[cfg.name] = spec.family;
    backends.emplace(cfg.name, std::move(cfg));
  }

  ResponseCache cache(plan.run_dir / "cache");
  std::optional<std::atomic<std::int64_t>> budget;
  if (options.max_fresh_requests) budget.emplace(*options.max_fresh_requests);
  TokenBucket limiter(plan.rate_limit_rps);

  for (const auto& key : plan_cells(plan)) {
    const auto cell_start = std::chrono::steady_clock::now();
    const auto& scheme = plan.scheme(key.k);
    const auto& backend = backends.at(key.backend);
    CellResult cell{key, ConfusionMatrix(scheme.class_names()), std::nullopt, CellStatus::complete, {}, 0};

    const auto samples = filter_for_scheme(data.eval, scheme);
    cell.samples = samples.size();
    if (health[key.backend] != HealthStatus::ok) {
      cell.status = CellStatus::aborted;
      cell.note = "backend " + std::string(health_status_name(health[key.backend]));
      record.cells.push_back(std::move(cell));
      persist(plan.run_dir, record);
      continue;
    }

    std::vector<BatchItem> items;
    items.reserve(samples.size());
    for (const auto& s : samples) items.push_back({s.id, renderer.render(key.strategy, backend.dialect, scheme, s.text)});

    BatchOptions bo;
    bo.parallelism = plan.parallelism;
    bo.policy = plan.policy;
    bo.cache = &cache;
    bo.fresh_budget = budget ? &*budget : nullptr;
    bo.limiter = &limiter;
    const auto responses = run_batch(backend, items, bo, &record.stats.batch);

    for (std::size_t i = 0; i < samples.size(); ++i) {
      const auto& r = responses[i];
      if (r.error && r.error->kind == TransportErrorKind::cancelled) {
        cell.status = CellStatus::interrupted;
        continue;
      }
      const auto gold = scheme.class_names()[*scheme.class_of(samples[i].gold)];
      auto outcome = r.ok() ? normalizer.decode(*r.text, items[i].prompt)
                            : ParseOutcome::transport_failure(r.error ? r.error->describe() : "no reply");
      accumulate(cell.matrix, gold, outcome);
      record.predictions.push_back({key, samples[i].id, gold, std::move(outcome), r.attempts});
    }
    if (cell.status == CellStatus::interrupted) {
      record.interrupted = true;
      cell.note = "request budget exhausted";
    }
    cell.metrics = safe_metrics(cell.matrix, plan.averaging, plan.scoring_mode);
    record.stats.cell_seconds[key.describe()] =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - cell_start).count();
    record.cells.push_back(std::move(cell));
    persist(plan.run_dir, record);
  }

  for (const auto& [name, cfg] : backends) {
    if (cfg.mock) record.stats.max_in_flight[name] = cfg.mock->max_in_flight();
  }
  record.stats.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
  persist(plan.run_dir, record);
  return record;
}

RunRecord resume(const fs::path& run_dir, const ExecuteOptions& options) {
  const auto plan_path = run_dir / "plan.json";
  const auto fp_path = run_dir / "fingerprint";
  if (!fs::exists(plan_path) || !fs::exists(fp_path)) {
    throw ConfigError("'" + run_dir.string() + "' is not a run directory (plan.json or fingerprint missing)");
  }
  auto plan = plan_from_config(plan_path);
  plan.run_dir = fs::absolute(run_dir).lexically_normal();
  plan.canonical = canonical_config(plan);
  return execute(plan, options);
}

// --- serialisation ----------------------------------------------------------

json prediction_to_json(const Prediction& p) {
  return {{"backend", p.key.backend},
          {"strategy", std::string(strategy_name(p.key.strategy))},
          {"k", p.key.k},
          {"id", p.sample_id},
          {"gold", p.gold},
          {"kind", std::string(outcome_kind_name(p.outcome.kind))},
          {"value", p.outcome.value},
          {"raw", p.outcome.raw},
          {"attempts", p.attempts}};
}

Prediction prediction_from_json(const json& j) {
  Prediction p;
  p.key = cell_key_from_json(j);
  p.sample_id = j.at("id").get<std::uint64_t>();
  p.gold = j.at("gold").get<std::string>();
  p.outcome.kind = outcome_kind_from_name(j.at("kind").get<std::string>()).value();
  p.outcome.value = j.at("value").get<std::string>();
  p.outcome.raw = j.at("raw").get<std::string>();
  p.attempts = j.at("attempts").get<int>();
  return p;
}

json record_to_json(const RunRecord& record) {
  json cells = json::array();
  for (const auto& c : record.cells) {
    json failures = json::array();
    for (std::size_t g = 0; g < c.matrix.k(); ++g) failures.push_back(c.matrix.failure_row(g));
    cells.push_back({{"backend", c.key.backend},
                     {"strategy", std::string(strategy_name(c.key.strategy))},
                     {"k", c.key.k},
                     {"status", std::string(cell_status_name(c.status))},
                     {"note", c.note},
                     {"samples", c.samples},
                     {"classes", c.matrix.classes()},
                     {"counts", matrix_counts(c.matrix)},
                     {"failures", failures},
                     {"metrics", c.metrics ? metrics_to_json(*c.metrics) : json(nullptr)}});
  }
  json schemes = json::object();
  for (const auto& [k, s] : record.schemes) schemes[std::to_string(k)] = scheme_to_json(s);
  return {{"fingerprint", record.fingerprint},
          {"scoring_mode", std::string(scoring_mode_name(record.scoring_mode))},
          {"averaging", std::string(averaging_name(record.averaging))},
          {"interrupted", record.interrupted},
          {"eval_histogram", {{"classes", record.eval_histogram.classes()}, {"counts", record.eval_histogram.counts()}}},
          {"schemes", schemes},
          {"families", record.families},
          {"cells", cells}};
}

RunRecord record_from_json(const json& j) {
  RunRecord r;
  r.fingerprint = j.at("fingerprint").get<std::string>();
  r.scoring_mode = scoring_mode_from_name(j.at("scoring_mode").get<std::string>()).value();
  r.averaging = averaging_from_name(j.at("averaging").get<std::string>()).value();
  r.interrupted = j.at("interrupted").get<bool>();
  const auto& hist = j.at("eval_histogram");
  r.eval_histogram = LabelDistribution(hist.at("classes").get<std::vector<std::string>>(),
                                       hist.at("counts").get<std::vector<std::uint64_t>>());
  for (const auto& [k, groups] : j.at("schemes").items()) r.schemes.emplace(std::stoi(k), parse_scheme_def(groups, "schemes." + k));
  r.families = j.at("families").get<std::map<std::string, std::string>>();
  for (const auto& c : j.at("cells")) {
    CellResult cell;
    cell.key = cell_key_from_json(c);
    cell.status = cell_status_from_name(c.at("status").get<std::string>()).value();
    cell.note = c.at("note").get<std::string>();
    cell.samples = c.at("samples").get<std::uint64_t>();
    cell.matrix = ConfusionMatrix(c.at("classes").get<std::vector<std::string>>());
    const auto& counts = c.at("counts");
    const auto& failures = c.at("failures");
    for (std::size_t g = 0; g < cell.matrix.k(); ++g) {
      for (std::size_t p = 0; p < cell.matrix.k(); ++p) cell.matrix.add(g, p, counts.at(g).at(p).get<std::uint64_t>());
      for (std::size_t f = 0; f < kFailureKinds; ++f) {
        cell.matrix.add_failure(g, failure_kind(f), failures.at(g).at(f).get<std::uint64_t>());
      }
    }
    if (!c.at("metrics").is_null()) cell.metrics = metrics_from_json(c.at("metrics"));
    r.cells.push_back(std::move(cell));
  }
  return r;
}

RunRecord load_record(const fs::path& run_dir) {
  const auto path = run_dir / "record.json";
  if (!fs::exists(path)) throw ConfigError("'" + run_dir.string() + "' has no record.json; run or resume it first");
  const auto j = json::parse(read_bytes(path), nullptr, false);
  if (j.is_discarded()) throw ConfigError("'" + path.string() + "' is not valid JSON");
  RunRecord r;
  try {
    r = record_from_json(j);
  } catch (const std::exception& e) {
    throw ConfigError("'" + path.string() + "' is not a run record: " + e.what());
  }
  std::ifstream in(run_dir / "predictions.ndjson");
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    r.predictions.push_back(prediction_from_json(json::parse(line)));
  }
  return r;
}

}  // namespace emobench
