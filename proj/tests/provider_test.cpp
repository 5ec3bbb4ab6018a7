#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <httplib.h>
#include <nlohmann/json.hpp>

#include <atomic>
#include <cstdlib>
#include <fstream>
#include <future>
#include <thread>
#include <vector>

#include "support/temp_dir.hpp"
#include "tutorbench/errors.hpp"
#include "tutorbench/provider.hpp"
#include "tutorbench/util.hpp"

using namespace tutorbench;
using testsupport::TempDir;

namespace {

ModelEndpoint mock_endpoint(const std::string& name = "MockModel", int max_retries = 3) {
  ModelEndpoint ep;
  ep.name = name;
  ep.base_url = "http://mock.invalid/v1";
  ep.model_id = "mock-1";
  ep.max_retries = max_retries;
  return ep;
}

/// Client whose backoff sleeps are recorded instead of slept.
struct TestClient {
  std::vector<std::chrono::milliseconds> sleeps;
  ChatClient client;

  explicit TestClient(std::shared_ptr<ChatBackend> backend, TranscriptStore* store = nullptr,
                      CacheMode mode = CacheMode::off)
      : client(std::move(backend), store, make_options(mode, &sleeps)) {}

  static ClientOptions make_options(CacheMode mode,
                                    std::vector<std::chrono::milliseconds>* sleeps) {
    ClientOptions opts;
    opts.cache_mode = mode;
    opts.sleeper = [sleeps](std::chrono::milliseconds d) { sleeps->push_back(d); };
    return opts;
  }
};

}  // namespace

TEST_CASE("scripted mock reply becomes the transcript text") {
  auto backend = std::make_shared<MockBackend>();
  backend->script("MockModel", {MockBackend::ok("OUTPUT-1")});
  TestClient tc(backend);

  Transcript t = tc.client.complete(mock_endpoint(), "system", "user", std::nullopt,
                                    {3, "digest-xyz", false});
  CHECK(t.response_text == "OUTPUT-1");
  CHECK(t.model_name == "MockModel");
  CHECK(t.run_index == 3);
  CHECK(t.quiz_digest == "digest-xyz");
  CHECK(t.request_fingerprint == sha256_hex(t.request_json));
  CHECK(!t.token_usage.has_value());
}

TEST_CASE("two 429s then success: succeeds on the third attempt with backoff") {
  auto backend = std::make_shared<MockBackend>();
  backend->script("MockModel", {MockBackend::http_status(429), MockBackend::http_status(429),
                                MockBackend::ok("eventually")});
  TestClient tc(backend);

  Transcript t = tc.client.complete(mock_endpoint("MockModel", 3), "s", "u");
  CHECK(t.response_text == "eventually");
  CHECK(backend->calls("MockModel") == 3);
  REQUIRE(tc.sleeps.size() == 2);
  CHECK(tc.sleeps[0] == std::chrono::milliseconds(250));
  CHECK(tc.sleeps[1] == std::chrono::milliseconds(500));
}

TEST_CASE("401 is AuthError with zero retries") {
  auto backend = std::make_shared<MockBackend>();
  backend->script("MockModel", {MockBackend::http_status(401, "bad key")});
  TestClient tc(backend);
  CHECK_THROWS_AS(tc.client.complete(mock_endpoint(), "s", "u"), AuthError);
  CHECK(backend->calls("MockModel") == 1);
  CHECK(tc.sleeps.empty());
}

TEST_CASE("persistent 429 exhausts the budget: attempts == 1 + max_retries") {
  auto backend = std::make_shared<MockBackend>();
  backend->script("MockModel",
                  {MockBackend::http_status(429), MockBackend::http_status(429),
                   MockBackend::http_status(429), MockBackend::http_status(429)});
  TestClient tc(backend);
  CHECK_THROWS_AS(tc.client.complete(mock_endpoint("MockModel", 2), "s", "u"), RateLimited);
  CHECK(backend->calls("MockModel") == 3);
}

TEST_CASE("5xx and transport failures are retried, other 4xx are not") {
  SUBCASE("503 then success") {
    auto backend = std::make_shared<MockBackend>();
    backend->script("MockModel", {MockBackend::http_status(503), MockBackend::ok("ok")});
    TestClient tc(backend);
    CHECK(tc.client.complete(mock_endpoint(), "s", "u").response_text == "ok");
  }
  SUBCASE("transport failure then success") {
    auto backend = std::make_shared<MockBackend>();
    BackendReply broken;
    broken.transport_failed = true;
    broken.transport_error = "connection reset";
    backend->script("MockModel", {broken, MockBackend::ok("ok")});
    TestClient tc(backend);
    CHECK(tc.client.complete(mock_endpoint(), "s", "u").response_text == "ok");
  }
  SUBCASE("exhausted 503 is TransportError") {
    auto backend = std::make_shared<MockBackend>();
    backend->script("MockModel", {MockBackend::http_status(503)});
    TestClient tc(backend);
    CHECK_THROWS_AS(tc.client.complete(mock_endpoint("MockModel", 0), "s", "u"), TransportError);
  }
  SUBCASE("400 fails immediately") {
    auto backend = std::make_shared<MockBackend>();
    backend->script("MockModel", {MockBackend::http_status(400, "bad request")});
    TestClient tc(backend);
    CHECK_THROWS_AS(tc.client.complete(mock_endpoint(), "s", "u"), TransportError);
    CHECK(backend->calls("MockModel") == 1);
  }
}

TEST_CASE("empty completion text raises EmptyResponse") {
  auto backend = std::make_shared<MockBackend>();
  backend->script("MockModel", {MockBackend::ok("")});
  TestClient tc(backend);
  CHECK_THROWS_AS(tc.client.complete(mock_endpoint(), "s", "u"), EmptyResponse);
}

TEST_CASE("unrecognized 200 body raises TransportError without retry") {
  auto backend = std::make_shared<MockBackend>();
  backend->script("MockModel", {MockBackend::http_status(200, "not json at all")});
  TestClient tc(backend);
  CHECK_THROWS_AS(tc.client.complete(mock_endpoint(), "s", "u"), TransportError);
  CHECK(backend->calls("MockModel") == 1);
}

TEST_CASE("transcript store: read-your-write, miss, corrupt record") {
  TempDir dir;
  TranscriptStore store(dir.path());

  Transcript t;
  t.model_name = "M";
  t.run_index = 2;
  t.quiz_digest = "digest";
  t.request_json = R"({"user":"hello"})";
  t.request_fingerprint = sha256_hex(t.request_json);
  t.response_text = "stored";
  t.latency = std::chrono::milliseconds(12);
  t.created_at_ms = 1700000000000;

  store.put(t, /*mirror_run_view=*/true);
  auto hit = cache_lookup(store, t.request_fingerprint);
  REQUIRE(hit.has_value());
  CHECK(*hit == t);
  CHECK(std::filesystem::exists(dir.path() / "runs" / "2" / "M.json"));

  // The append-only index lists the record once, even after a re-put.
  store.put(t, false);
  std::ifstream index(dir.path() / "cache" / "index.jsonl");
  std::string index_line;
  REQUIRE(std::getline(index, index_line));
  CHECK(index_line.find(t.request_fingerprint) != std::string::npos);
  std::string extra;
  CHECK(!std::getline(index, extra));

  CHECK(!cache_lookup(store, "0000000000").has_value());

  // Truncate the record on disk; the store must fail loudly, naming the file.
  auto record_path = dir.path() / "cache" / (t.request_fingerprint + ".json");
  std::ofstream(record_path, std::ios::binary | std::ios::trunc) << "{\"model_name\": \"M";
  CHECK_THROWS_AS(store.lookup(t.request_fingerprint), StoreCorrupt);
  try {
    store.lookup(t.request_fingerprint);
  } catch (const StoreCorrupt& e) {
    CHECK(std::string(e.what()).find(record_path.string()) != std::string::npos);
  }
}

TEST_CASE("record then replay is byte-identical; replay misses are loud") {
  TempDir dir;
  auto backend = std::make_shared<MockBackend>();
  backend->script("MockModel", {MockBackend::ok("recorded reply")});

  TranscriptStore store(dir.path());
  TestClient recorder(backend, &store, CacheMode::record);
  Transcript original =
      recorder.client.complete(mock_endpoint(), "sys", "usr", 7, {1, "digest", true});

  // Replay from a fresh client with a backend that would fail if touched.
  auto dead = std::make_shared<MockBackend>();
  TestClient replayer(dead, &store, CacheMode::replay);
  Transcript replayed =
      replayer.client.complete(mock_endpoint(), "sys", "usr", 7, {1, "digest", true});
  CHECK(transcript_to_json(replayed) == transcript_to_json(original));
  CHECK(dead->total_calls() == 0);

  CHECK_THROWS_AS(replayer.client.complete(mock_endpoint(), "sys", "DIFFERENT", 7, {1, "digest", true}),
                  ReplayMiss);
}

TEST_CASE("record mode serves repeated identical requests from the store") {
  TempDir dir;
  auto backend = std::make_shared<MockBackend>();
  backend->script("MockModel", {MockBackend::ok("first")});
  TranscriptStore store(dir.path());
  TestClient tc(backend, &store, CacheMode::record);

  Transcript a = tc.client.complete(mock_endpoint(), "s", "u", 1, {1, "d", false});
  Transcript b = tc.client.complete(mock_endpoint(), "s", "u", 1, {1, "d", false});
  CHECK(a == b);
  CHECK(backend->calls("MockModel") == 1);
}

TEST_CASE("fingerprints separate runs, seeds and endpoints") {
  auto ep = mock_endpoint();
  std::string base = ChatClient::canonical_request_json(ep, "s", "u", 1, 1, "d");
  CHECK(ChatClient::canonical_request_json(ep, "s", "u", 1, 2, "d") != base);
  CHECK(ChatClient::canonical_request_json(ep, "s", "u", 2, 1, "d") != base);
  CHECK(ChatClient::canonical_request_json(ep, "s", "u", std::nullopt, 1, "d") != base);
  auto other = ep;
  other.temperature = 0.11;
  CHECK(ChatClient::canonical_request_json(other, "s", "u", 1, 1, "d") != base);
  // Same inputs, same bytes.
  CHECK(ChatClient::canonical_request_json(ep, "s", "u", 1, 1, "d") == base);
}

TEST_CASE("at most max_in_flight requests run concurrently per endpoint") {
  auto backend = std::make_shared<MockBackend>();
  std::atomic<int> in_flight{0};
  std::atomic<int> peak{0};
  backend->set_handler([&](const ModelEndpoint&, const ChatRequest&) -> std::optional<BackendReply> {
    int now = ++in_flight;
    int prev = peak.load();
    while (now > prev && !peak.compare_exchange_weak(prev, now)) {
    }
    std::this_thread::sleep_for(std::chrono::milliseconds(25));
    --in_flight;
    return MockBackend::ok("done");
  });
  TestClient tc(backend);

  ModelEndpoint ep = mock_endpoint();
  ep.max_in_flight = 2;
  std::vector<std::future<Transcript>> futures;
  for (int i = 0; i < 6; ++i) {
    futures.push_back(std::async(std::launch::async, [&tc, &ep, i] {
      return tc.client.complete(ep, "s", "u" + std::to_string(i));
    }));
  }
  for (auto& f : futures) f.get();
  CHECK(backend->calls(ep.name) == 6);
  CHECK(peak.load() <= 2);
}

TEST_CASE("HttpBackend requires a resolvable api key before any network use") {
  unsetenv("TUTORBENCH_TEST_MISSING_KEY");
  ModelEndpoint ep = mock_endpoint();
  ep.api_key_env = "TUTORBENCH_TEST_MISSING_KEY";
  HttpBackend backend;
  CHECK_THROWS_AS(backend.send(ep, {"s", "u", std::nullopt}), AuthError);
}

TEST_CASE("HttpBackend speaks OpenAI-shaped chat completions over HTTP") {
  const std::string secret = "sk-test-secret-do-not-leak";
  setenv("TUTORBENCH_TEST_KEY", secret.c_str(), 1);

  httplib::Server server;
  std::string seen_auth;
  std::string seen_path;
  nlohmann::json seen_body;
  server.Post("/v1/chat/completions", [&](const httplib::Request& req, httplib::Response& res) {
    seen_auth = req.get_header_value("Authorization");
    seen_path = req.path;
    seen_body = nlohmann::json::parse(req.body);
    nlohmann::json reply = {
        {"choices", {{{"message", {{"role", "assistant"}, {"content", "live reply"}}}}}},
        {"usage", {{"prompt_tokens", 42}, {"completion_tokens", 7}}}};
    res.set_content(reply.dump(), "application/json");
  });
  int port = server.bind_to_any_port("127.0.0.1");
  REQUIRE(port > 0);
  std::thread listener([&] { server.listen_after_bind(); });
  server.wait_until_ready();

  ModelEndpoint ep;
  ep.name = "LiveModel";
  ep.base_url = "http://127.0.0.1:" + std::to_string(port) + "/v1";
  ep.model_id = "live-model-1";
  ep.api_key_env = "TUTORBENCH_TEST_KEY";
  ep.temperature = 0.3;
  ep.max_output_tokens = 128;

  TempDir dir;
  TranscriptStore store(dir.path());
  TestClient tc(std::make_shared<HttpBackend>(), &store, CacheMode::record);
  Transcript t = tc.client.complete(ep, "system text", "user text", 99, {1, "digest", true});

  server.stop();
  listener.join();

  CHECK(t.response_text == "live reply");
  REQUIRE(t.token_usage.has_value());
  CHECK(t.token_usage->prompt_tokens == 42);
  CHECK(t.token_usage->completion_tokens == 7);
  CHECK(seen_auth == "Bearer " + secret);
  CHECK(seen_path == "/v1/chat/completions");
  CHECK(seen_body["model"] == "live-model-1");
  CHECK(seen_body["messages"][0]["role"] == "system");
  CHECK(seen_body["messages"][1]["content"] == "user text");
  CHECK(seen_body["temperature"] == 0.3);
  CHECK(seen_body["max_tokens"] == 128);
  CHECK(seen_body["seed"] == 99);

  // Secret hygiene: the key value must not appear in any persisted artifact.
  for (const auto& entry : std::filesystem::recursive_directory_iterator(dir.path())) {
    if (!entry.is_regular_file()) continue;
    std::ifstream in(entry.path(), std::ios::binary);
    std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    CHECK(bytes.find(secret) == std::string::npos);
  }
  CHECK(transcript_to_json(t).find(secret) == std::string::npos);
}
