#pragma once

#include <chrono>
#include <cstdint>
#include <deque>
#include <filesystem>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace tutorbench {

/// Connection parameters for one chat-completion endpoint. The API key is
/// looked up from `api_key_env` at call time and never stored.
struct ModelEndpoint {
  std::string name;         // display name, unique within a configuration
  std::string base_url;     // e.g. "https://api.openai.com/v1"
  std::string model_id;     // provider-side identifier
  std::string api_key_env;  // environment variable holding the key
  double temperature = 0.7;
  int max_output_tokens = 2048;
  std::chrono::milliseconds timeout{60000};
  int max_retries = 3;
  int max_in_flight = 2;  // bounded concurrency per endpoint
};

struct TokenUsage {
  long long prompt_tokens = 0;
  long long completion_tokens = 0;

  friend bool operator==(const TokenUsage&, const TokenUsage&) = default;
};

/// Full provenance record of one model call: the canonical request, the
/// response text, and timing. Immutable after creation; safe to share.
struct Transcript {
  std::string model_name;
  int run_index = 1;
  std::string quiz_digest;
  std::string request_fingerprint;  // sha256 of request_json
  std::string response_text;
  std::chrono::milliseconds latency{0};
  std::optional<TokenUsage> token_usage;
  std::int64_t created_at_ms = 0;
  std::string request_json;  // compact JSON, sorted keys; no secrets

  friend bool operator==(const Transcript&, const Transcript&) = default;
};

std::string transcript_to_json(const Transcript& t);
/// Throws Error on malformed input.
Transcript transcript_from_json(const std::string& text);

/// What a backend is asked to send: one system + one user message.
struct ChatRequest {
  std::string system_text;
  std::string user_text;
  std::optional<std::uint64_t> seed;
};

/// Raw outcome of one HTTP attempt, before retry classification.
struct BackendReply {
  int status = 0;
  std::string body;
  bool transport_failed = false;
  std::string transport_error;
};

class ChatBackend {
 public:
  virtual ~ChatBackend() = default;
  virtual BackendReply send(const ModelEndpoint& endpoint, const ChatRequest& request) = 0;
};

/// OpenAI-compatible chat-completions client over HTTP(S).
/// Throws AuthError when the endpoint's key env var is unset or empty.
class HttpBackend : public ChatBackend {
 public:
  BackendReply send(const ModelEndpoint& endpoint, const ChatRequest& request) override;
};

/// Scripted backend for tests: per-model reply queues plus an optional
/// handler consulted first (return nullopt to fall through to the queues).
class MockBackend : public ChatBackend {
 public:
  using Handler =
      std::function<std::optional<BackendReply>(const ModelEndpoint&, const ChatRequest&)>;

  /// A 200 reply shaped like a chat-completions response.
  static BackendReply ok(std::string_view text);
  static BackendReply http_status(int code, std::string body = "");

  /// Append replies to the queue for `model_name`; consumed FIFO.
  void script(const std::string& model_name, std::vector<BackendReply> replies);
  void set_handler(Handler handler);
  int calls(const std::string& model_name) const;
  int total_calls() const;

  BackendReply send(const ModelEndpoint& endpoint, const ChatRequest& request) override;

 private:
  mutable std::mutex mu_;
  std::map<std::string, std::deque<BackendReply>> scripts_;
  std::map<std::string, int> calls_;
  Handler handler_;
};

/// Append-only transcript store: cache/<fingerprint>.json plus a
/// runs/<run_index>/<model_name>.json mirror for generation transcripts.
/// Writes go to a temp file and are renamed into place.
class TranscriptStore {
 public:
  explicit TranscriptStore(std::filesystem::path root);

  const std::filesystem::path& root() const { return root_; }

  /// Returns the stored transcript, or nullopt if absent.
  /// Throws StoreCorrupt (naming the file) if the record cannot be read back.
  std::optional<Transcript> lookup(const std::string& fingerprint) const;

  void put(const Transcript& t, bool mirror_run_view = false);

 private:
  std::filesystem::path root_;
  mutable std::mutex write_mu_;
};

/// Free-function form of TranscriptStore::lookup.
std::optional<Transcript> cache_lookup(const TranscriptStore& store,
                                       const std::string& fingerprint);

enum class CacheMode {
  off,     // always call the backend
  record,  // serve from the store when present, persist fresh calls
  replay,  // serve from the store only; a miss is ReplayMiss
};

struct ClientOptions {
  CacheMode cache_mode = CacheMode::off;
  std::chrono::milliseconds backoff_base{250};
  /// Injectable so tests can skip real sleeping.
  std::function<void(std::chrono::milliseconds)> sleeper;
};

struct RequestContext {
  int run_index = 1;
  std::string quiz_digest;
  bool mirror_run_view = false;
};

class EndpointGate;  // per-endpoint in-flight limiter, defined in provider.cpp

/// Retrying chat-completion client with optional record/replay store.
/// Safe for concurrent calls; at most `max_in_flight` requests are in flight
/// per endpoint.
class ChatClient {
 public:
  ChatClient(std::shared_ptr<ChatBackend> backend, TranscriptStore* store,
             ClientOptions opts = {});

  /// One chat completion with retries. Transient failures (HTTP 429/5xx,
  /// timeouts, transport errors) are retried with exponential backoff up to
  /// endpoint.max_retries; total attempts never exceed 1 + max_retries.
  /// Throws AuthError, RateLimited, TransportError, EmptyResponse, ReplayMiss.
  Transcript complete(const ModelEndpoint& endpoint, const std::string& system_text,
                      const std::string& user_text, std::optional<std::uint64_t> seed = {},
                      const RequestContext& ctx = {});

  /// Canonical request record (compact JSON, sorted keys). The fingerprint is
  /// the SHA-256 of exactly these bytes.
  static std::string canonical_request_json(const ModelEndpoint& endpoint,
                                            const std::string& system_text,
                                            const std::string& user_text,
                                            std::optional<std::uint64_t> seed,
                                            int run_index, const std::string& quiz_digest);

  CacheMode cache_mode() const { return opts_.cache_mode; }
  TranscriptStore* store() const { return store_; }

 private:
  std::shared_ptr<EndpointGate> gate_for(const ModelEndpoint& endpoint);

  std::shared_ptr<ChatBackend> backend_;
  TranscriptStore* store_;  // not owned; may be null
  ClientOptions opts_;
  std::mutex gates_mu_;
  std::map<std::string, std::shared_ptr<EndpointGate>> gates_;
};

}  // namespace tutorbench
