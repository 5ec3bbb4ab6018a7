#include "tutorbench/provider.hpp"

#include <httplib.h>
#include <nlohmann/json.hpp>

#include <cassert>
#include <condition_variable>
#include <cstdlib>
#include <fstream>
#include <sstream>
#include <thread>

#include "tutorbench/errors.hpp"
#include "tutorbench/util.hpp"

namespace tutorbench {

namespace {

using nlohmann::json;

std::int64_t now_epoch_ms() {
  return std::chrono::duration_cast<std::chrono::milliseconds>(
             std::chrono::system_clock::now().time_since_epoch())
      .count();
}

/// "https://host:port/v1" -> {"https://host:port", "/v1"}
std::pair<std::string, std::string> split_base_url(const std::string& base_url) {
  auto scheme_end = base_url.find("://");
  if (scheme_end == std::string::npos) {
    throw TransportError("base_url missing scheme: " + base_url);
  }
  auto path_start = base_url.find('/', scheme_end + 3);
  if (path_start == std::string::npos) {
    return {base_url, ""};
  }
  std::string origin = base_url.substr(0, path_start);
  std::string prefix = base_url.substr(path_start);
  while (!prefix.empty() && prefix.back() == '/') prefix.pop_back();
  return {origin, prefix};
}

std::string sanitize_filename(std::string_view name) {
  std::string out;
  out.reserve(name.size());
  for (char c : name) {
    bool ok = (c >= 'a' && c <= 'z') || (c >= 'A' && c <= 'Z') || (c >= '0' && c <= '9') ||
              c == '.' || c == '_' || c == '-';
    out.push_back(ok ? c : '_');
  }
  return out.empty() ? "_" : out;
}

std::string read_file_or_throw(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  if (!in) throw Error("cannot open file: " + p.string());
  std::ostringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

void write_file_atomic(const std::filesystem::path& p, const std::string& bytes) {
  std::filesystem::create_directories(p.parent_path());
  std::filesystem::path tmp = p;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw Error("cannot write file: " + tmp.string());
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    out.flush();
    if (!out) throw Error("short write: " + tmp.string());
  }
  std::filesystem::rename(tmp, p);
}

}  // namespace

// ---- transcript serialization ----

std::string transcript_to_json(const Transcript& t) {
  json j;
  j["model_name"] = t.model_name;
  j["run_index"] = t.run_index;
  j["quiz_digest"] = t.quiz_digest;
  j["request_fingerprint"] = t.request_fingerprint;
  j["response_text"] = t.response_text;
  j["latency_ms"] = t.latency.count();
  if (t.token_usage) {
    j["token_usage"] = {{"prompt_tokens", t.token_usage->prompt_tokens},
                        {"completion_tokens", t.token_usage->completion_tokens}};
  } else {
    j["token_usage"] = nullptr;
  }
  j["created_at_ms"] = t.created_at_ms;
  j["request"] = json::parse(t.request_json);
  return j.dump(2) + "\n";
}

Transcript transcript_from_json(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::parse_error& e) {
    throw Error(std::string("transcript record is not valid JSON: ") + e.what());
  }
  try {
    Transcript t;
    t.model_name = j.at("model_name").get<std::string>();
    t.run_index = j.at("run_index").get<int>();
    t.quiz_digest = j.at("quiz_digest").get<std::string>();
    t.request_fingerprint = j.at("request_fingerprint").get<std::string>();
    t.response_text = j.at("response_text").get<std::string>();
    t.latency = std::chrono::milliseconds(j.at("latency_ms").get<std::int64_t>());
    if (!j.at("token_usage").is_null()) {
      TokenUsage u;
      u.prompt_tokens = j["token_usage"].at("prompt_tokens").get<long long>();
      u.completion_tokens = j["token_usage"].at("completion_tokens").get<long long>();
      t.token_usage = u;
    }
    t.created_at_ms = j.at("created_at_ms").get<std::int64_t>();
    t.request_json = j.at("request").dump();
    return t;
  } catch (const json::exception& e) {
    throw Error(std::string("transcript record has missing or mistyped fields: ") + e.what());
  }
}

// ---- HttpBackend ----

BackendReply HttpBackend::send(const ModelEndpoint& endpoint, const ChatRequest& request) {
  const char* key = endpoint.api_key_env.empty() ? nullptr : std::getenv(endpoint.api_key_env.c_str());
  if (key == nullptr || *key == '\0') {
    throw AuthError("api key not resolvable: environment variable \"" + endpoint.api_key_env +
                    "\" is unset or empty");
  }

  auto [origin, prefix] = split_base_url(endpoint.base_url);
  httplib::Client cli(origin);
  cli.set_connection_timeout(endpoint.timeout);
  cli.set_read_timeout(endpoint.timeout);
  cli.set_write_timeout(endpoint.timeout);

  json body;
  body["model"] = endpoint.model_id;
  body["messages"] = json::array({{{"role", "system"}, {"content", request.system_text}},
                                  {{"role", "user"}, {"content", request.user_text}}});
  body["temperature"] = endpoint.temperature;
  body["max_tokens"] = endpoint.max_output_tokens;
  if (request.seed) body["seed"] = *request.seed;

  httplib::Headers headers{{"Authorization", std::string("Bearer ") + key}};
  auto res = cli.Post(prefix + "/chat/completions", headers, body.dump(), "application/json");
  if (!res) {
    BackendReply reply;
    reply.transport_failed = true;
    reply.transport_error = httplib::to_string(res.error());
    return reply;
  }
  BackendReply reply;
  reply.status = res->status;
  reply.body = res->body;
  return reply;
}

// ---- MockBackend ----

BackendReply MockBackend::ok(std::string_view text) {
  json body;
  body["choices"] = json::array({{{"message", {{"role", "assistant"}, {"content", text}}},
                                  {"finish_reason", "stop"}}});
  BackendReply reply;
  reply.status = 200;
  reply.body = body.dump();
  return reply;
}

BackendReply MockBackend::http_status(int code, std::string body) {
  BackendReply reply;
  reply.status = code;
  reply.body = std::move(body);
  return reply;
}

void MockBackend::script(const std::string& model_name, std::vector<BackendReply> replies) {
  std::lock_guard lk(mu_);
  auto& q = scripts_[model_name];
  for (auto& r : replies) q.push_back(std::move(r));
}

void MockBackend::set_handler(Handler handler) {
  std::lock_guard lk(mu_);
  handler_ = std::move(handler);
}

int MockBackend::calls(const std::string& model_name) const {
  std::lock_guard lk(mu_);
  auto it = calls_.find(model_name);
  return it == calls_.end() ? 0 : it->second;
}

int MockBackend::total_calls() const {
  std::lock_guard lk(mu_);
  int n = 0;
  for (const auto& [_, c] : calls_) n += c;
  return n;
}

BackendReply MockBackend::send(const ModelEndpoint& endpoint, const ChatRequest& request) {
  Handler handler;
  {
    std::lock_guard lk(mu_);
    ++calls_[endpoint.name];
    handler = handler_;
  }
  if (handler) {
    if (auto reply = handler(endpoint, request)) return *reply;
  }
  std::lock_guard lk(mu_);
  auto it = scripts_.find(endpoint.name);
  if (it == scripts_.end() || it->second.empty()) {
    throw Error("mock backend: no scripted reply left for \"" + endpoint.name + "\"");
  }
  BackendReply reply = std::move(it->second.front());
  it->second.pop_front();
  return reply;
}

// ---- TranscriptStore ----

TranscriptStore::TranscriptStore(std::filesystem::path root) : root_(std::move(root)) {
  std::filesystem::create_directories(root_ / "cache");
  std::filesystem::create_directories(root_ / "runs");
}

std::optional<Transcript> TranscriptStore::lookup(const std::string& fingerprint) const {
  std::filesystem::path p = root_ / "cache" / (sanitize_filename(fingerprint) + ".json");
  if (!std::filesystem::exists(p)) return std::nullopt;
  std::string bytes;
  try {
    bytes = read_file_or_throw(p);
  } catch (const Error& e) {
    throw StoreCorrupt("transcript store: unreadable record " + p.string() + ": " + e.what());
  }
  try {
    Transcript t = transcript_from_json(bytes);
    if (t.request_fingerprint != fingerprint) {
      throw Error("stored fingerprint \"" + t.request_fingerprint + "\" does not match key");
    }
    return t;
  } catch (const Error& e) {
    throw StoreCorrupt("transcript store: corrupt record " + p.string() + ": " + e.what());
  }
}

void TranscriptStore::put(const Transcript& t, bool mirror_run_view) {
  std::string bytes = transcript_to_json(t);
  std::lock_guard lk(write_mu_);
  auto cache_path = root_ / "cache" / (sanitize_filename(t.request_fingerprint) + ".json");
  bool fresh = !std::filesystem::exists(cache_path);
  write_file_atomic(cache_path, bytes);
  if (fresh) {
    // Append-only inventory of stored records; the rename above already
    // landed, so a crash here loses at most an index line, never a record.
    json entry;
    entry["request_fingerprint"] = t.request_fingerprint;
    entry["model_name"] = t.model_name;
    entry["run_index"] = t.run_index;
    std::ofstream index(root_ / "cache" / "index.jsonl", std::ios::binary | std::ios::app);
    index << entry.dump() << "\n";
  }
  if (mirror_run_view) {
    write_file_atomic(root_ / "runs" / std::to_string(t.run_index) /
                          (sanitize_filename(t.model_name) + ".json"),
                      bytes);
  }
}

std::optional<Transcript> cache_lookup(const TranscriptStore& store,
                                       const std::string& fingerprint) {
  return store.lookup(fingerprint);
}

// ---- ChatClient ----

class EndpointGate {
 public:
  explicit EndpointGate(int limit) : limit_(limit <= 0 ? 1 : limit) {}

  void acquire() {
    std::unique_lock lk(mu_);
    cv_.wait(lk, [&] { return in_flight_ < limit_; });
    ++in_flight_;
  }

  void release() {
    {
      std::lock_guard lk(mu_);
      --in_flight_;
    }
    cv_.notify_one();
  }

 private:
  int limit_;
  int in_flight_ = 0;
  std::mutex mu_;
  std::condition_variable cv_;
};

namespace {
struct GateGuard {
  EndpointGate* gate;
  explicit GateGuard(EndpointGate* g) : gate(g) { gate->acquire(); }
  ~GateGuard() { gate->release(); }
  GateGuard(const GateGuard&) = delete;
  GateGuard& operator=(const GateGuard&) = delete;
};
}  // namespace

ChatClient::ChatClient(std::shared_ptr<ChatBackend> backend, TranscriptStore* store,
                       ClientOptions opts)
    : backend_(std::move(backend)), store_(store), opts_(std::move(opts)) {
  if (!opts_.sleeper) {
    opts_.sleeper = [](std::chrono::milliseconds d) { std::this_thread::sleep_for(d); };
  }
}

std::shared_ptr<EndpointGate> ChatClient::gate_for(const ModelEndpoint& endpoint) {
  std::lock_guard lk(gates_mu_);
  auto it = gates_.find(endpoint.name);
  if (it == gates_.end()) {
    it = gates_.emplace(endpoint.name, std::make_shared<EndpointGate>(endpoint.max_in_flight)).first;
  }
  return it->second;
}

std::string ChatClient::canonical_request_json(const ModelEndpoint& endpoint,
                                               const std::string& system_text,
                                               const std::string& user_text,
                                               std::optional<std::uint64_t> seed, int run_index,
                                               const std::string& quiz_digest) {
  json j;
  j["base_url"] = endpoint.base_url;
  j["max_output_tokens"] = endpoint.max_output_tokens;
  j["model_id"] = endpoint.model_id;
  j["name"] = endpoint.name;
  j["quiz_digest"] = quiz_digest;
  j["run_index"] = run_index;
  if (seed) {
    j["seed"] = *seed;
  } else {
    j["seed"] = nullptr;
  }
  j["system"] = system_text;
  j["temperature"] = endpoint.temperature;
  j["user"] = user_text;
  return j.dump();
}

Transcript ChatClient::complete(const ModelEndpoint& endpoint, const std::string& system_text,
                                const std::string& user_text, std::optional<std::uint64_t> seed,
                                const RequestContext& ctx) {
  if (system_text.empty() && user_text.empty()) {
    throw Error("complete: prompt is empty");
  }

  std::string request_json = canonical_request_json(endpoint, system_text, user_text, seed,
                                                    ctx.run_index, ctx.quiz_digest);
  std::string fingerprint = sha256_hex(request_json);

  if (store_ != nullptr && opts_.cache_mode != CacheMode::off) {
    if (auto hit = store_->lookup(fingerprint)) return *hit;
  }
  if (opts_.cache_mode == CacheMode::replay) {
    throw ReplayMiss("replay store has no transcript for model \"" + endpoint.name + "\", run " +
                     std::to_string(ctx.run_index) + " (fingerprint " + fingerprint + ")");
  }

  auto gate = gate_for(endpoint);
  GateGuard guard(gate.get());

  ChatRequest request{system_text, user_text, seed};
  std::string last_transient;
  bool last_was_rate_limit = false;
  const int attempts_allowed = 1 + std::max(0, endpoint.max_retries);

  for (int attempt = 0; attempt < attempts_allowed; ++attempt) {
    if (attempt > 0) {
      opts_.sleeper(opts_.backoff_base * (1LL << (attempt - 1)));
    }
    auto t0 = std::chrono::steady_clock::now();
    BackendReply reply = backend_->send(endpoint, request);
    auto elapsed =
        std::chrono::duration_cast<std::chrono::milliseconds>(std::chrono::steady_clock::now() - t0);

    if (reply.transport_failed) {
      last_transient = "transport failure: " + reply.transport_error;
      last_was_rate_limit = false;
      continue;
    }
    if (reply.status == 401 || reply.status == 403) {
      throw AuthError("endpoint \"" + endpoint.name + "\" rejected credentials (HTTP " +
                      std::to_string(reply.status) + ")");
    }
    if (reply.status == 429) {
      last_transient = "HTTP 429";
      last_was_rate_limit = true;
      continue;
    }
    if (reply.status >= 500 && reply.status <= 599) {
      last_transient = "HTTP " + std::to_string(reply.status);
      last_was_rate_limit = false;
      continue;
    }
    if (reply.status != 200) {
      throw TransportError("endpoint \"" + endpoint.name + "\" returned HTTP " +
                           std::to_string(reply.status) + ": " + reply.body.substr(0, 200));
    }

    // Parse the chat-completions response body.
    std::string content;
    std::optional<TokenUsage> usage;
    try {
      json body = json::parse(reply.body);
      content = body.at("choices").at(0).at("message").at("content").get<std::string>();
      if (body.contains("usage") && body["usage"].is_object()) {
        TokenUsage u;
        u.prompt_tokens = body["usage"].value("prompt_tokens", 0LL);
        u.completion_tokens = body["usage"].value("completion_tokens", 0LL);
        usage = u;
      }
    } catch (const json::exception& e) {
      throw TransportError("endpoint \"" + endpoint.name +
                           "\" returned an unrecognized response body: " + e.what());
    }
    if (content.empty()) {
      throw EmptyResponse("endpoint \"" + endpoint.name + "\" returned an empty completion");
    }

    Transcript t;
    t.model_name = endpoint.name;
    t.run_index = ctx.run_index;
    t.quiz_digest = ctx.quiz_digest;
    t.request_fingerprint = fingerprint;
    t.response_text = std::move(content);
    t.latency = elapsed;
    t.token_usage = usage;
    t.created_at_ms = now_epoch_ms();
    t.request_json = std::move(request_json);

    if (store_ != nullptr && opts_.cache_mode == CacheMode::record) {
      store_->put(t, ctx.mirror_run_view);
    }
    return t;
  }

  if (last_was_rate_limit) {
    throw RateLimited("endpoint \"" + endpoint.name + "\": rate limited, " +
                      std::to_string(attempts_allowed) + " attempts exhausted");
  }
  throw TransportError("endpoint \"" + endpoint.name + "\": " + last_transient + ", " +
                       std::to_string(attempts_allowed) + " attempts exhausted");
}

}  // namespace tutorbench
