#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <httplib.h>
#include <nlohmann/json.hpp>
#include <sys/wait.h>

#include <cstdlib>
#include <fstream>
#include <map>
#include <regex>
#include <sstream>
#include <thread>

#include "support/mock_tournament.hpp"
#include "support/temp_dir.hpp"
#include "tutorbench/arena.hpp"
#include "tutorbench/provider.hpp"
#include "tutorbench/quizset.hpp"

using namespace tutorbench;
using nlohmann::json;
using testsupport::MockTournament;
using testsupport::TempDir;

namespace {

const std::string kFixtureDir = TUTORBENCH_FIXTURE_DIR;
const std::string kCliPath = TUTORBENCH_CLI_PATH;

struct CliResult {
  int exit_code = -1;
  std::string out;
  std::string err;
};

std::string slurp(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  REQUIRE(in);
  std::ostringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

CliResult run_cli(const std::string& args, const TempDir& scratch) {
  auto out_path = scratch.path() / "cli_stdout.txt";
  auto err_path = scratch.path() / "cli_stderr.txt";
  std::string command = "'" + kCliPath + "' " + args + " > '" + out_path.string() + "' 2> '" +
                        err_path.string() + "'";
  int status = std::system(command.c_str());
  CliResult result;
  result.exit_code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  result.out = slurp(out_path);
  result.err = slurp(err_path);
  return result;
}

void write_file(const std::filesystem::path& p, const std::string& bytes) {
  std::filesystem::create_directories(p.parent_path());
  std::ofstream out(p, std::ios::binary | std::ios::trunc);
  REQUIRE(out);
  out << bytes;
}

/// Config matching MockTournament's endpoints, for replaying its stores.
/// Endpoint order matters: the tutor roster (and so pair enumeration and
/// request fingerprints) follows config order.
json mock_config(const MockTournament& script, const std::filesystem::path& out_dir) {
  auto eps = script.endpoints();
  std::vector<std::string> order = script.models;
  order.push_back(script.judge_name);
  json endpoints = json::array();
  for (const std::string& name : order) {
    const ModelEndpoint& ep = eps.at(name);
    endpoints.push_back({{"name", ep.name},
                         {"base_url", ep.base_url},
                         {"model_id", ep.model_id},
                         {"temperature", ep.temperature},
                         {"max_retries", 0}});
  }
  return json{{"quiz", kFixtureDir + "/quiz10.json"},
              {"judge", script.judge_name},
              {"runs", script.runs},
              {"seed", script.seed},
              {"order_policy", to_string(script.order_policy)},
              {"out", out_dir.string()},
              {"endpoints", endpoints}};
}

const char* kTable1Csv =
    "model_a,model_b,wins_a,ties,wins_b\n"
    "GPT-4o,DeepSeek-V3,5,2,3\n"
    "GPT-4o,GLM-4.5,9,1,0\n"
    "DeepSeek-V3,GLM-4.5,7,2,1\n";

const std::vector<std::string> kReportFiles{"tally.md", "tally.csv", "fit.md",    "fit.csv",
                                            "probs.md", "probs.csv", "forest.svg", "fit.json",
                                            "manifest.json"};

}  // namespace

TEST_CASE("runs=0 fails validation before any network call") {
  TempDir dir;
  MockTournament script;
  json config = mock_config(script, dir.path() / "out");
  config["runs"] = 0;
  write_file(dir.path() / "config.json", config.dump(2));

  CliResult r = run_cli("run --config '" + (dir.path() / "config.json").string() + "'", dir);
  CHECK(r.exit_code == 2);
  CHECK(r.err.find("config stage") != std::string::npos);
}

TEST_CASE("a judge listed among the models is a config error") {
  TempDir dir;
  MockTournament script;
  json config = mock_config(script, dir.path() / "out");
  config["models"] = {"GPT-4o", "DeepSeek-V3", script.judge_name};
  write_file(dir.path() / "config.json", config.dump(2));
  CliResult r = run_cli("run --config '" + (dir.path() / "config.json").string() + "'", dir);
  CHECK(r.exit_code == 2);
  CHECK(r.err.find("judge") != std::string::npos);
}

TEST_CASE("unknown config keys are rejected") {
  TempDir dir;
  MockTournament script;
  json config = mock_config(script, dir.path() / "out");
  config["temprature"] = 0.7;
  write_file(dir.path() / "config.json", config.dump(2));
  CliResult r = run_cli("run --config '" + (dir.path() / "config.json").string() + "'", dir);
  CHECK(r.exit_code == 2);
  CHECK(r.err.find("temprature") != std::string::npos);
}

TEST_CASE("replay against an empty store is a provider error") {
  TempDir dir;
  MockTournament script;
  std::filesystem::create_directories(dir.path() / "empty-store");
  json config = mock_config(script, dir.path() / "out");
  write_file(dir.path() / "config.json", config.dump(2));
  CliResult r = run_cli("run --config '" + (dir.path() / "config.json").string() + "' --replay '" +
                            (dir.path() / "empty-store").string() + "'",
                        dir);
  CHECK(r.exit_code == 3);
  CHECK(r.err.find("tournament stage") != std::string::npos);
}

TEST_CASE("replaying a recorded tournament is deterministic and offline") {
  TempDir dir;
  QuizSet set = load_quizset(kFixtureDir + "/quiz10.json");
  MockTournament script;
  script.fill_random(4242);

  // Record the tournament in-process into a store the CLI can replay.
  auto store_root = dir.path() / "store";
  {
    TranscriptStore store(store_root);
    ChatClient client(script.make_backend(), &store, {CacheMode::record, {}, {}});
    Arena arena(client, script.endpoints(), {store_root});
    arena.execute_plan(script.plan(set), set);
  }

  json config = mock_config(script, dir.path() / "unused");
  write_file(dir.path() / "config.json", config.dump(2));
  std::string base = "run --config '" + (dir.path() / "config.json").string() + "' --replay '" +
                     store_root.string() + "'";

  CliResult first = run_cli(base + " --out '" + (dir.path() / "out1").string() + "'", dir);
  CHECK(first.exit_code == 0);
  CliResult second = run_cli(base + " --out '" + (dir.path() / "out2").string() + "'", dir);
  CHECK(second.exit_code == 0);

  for (const std::string& name : kReportFiles) {
    CHECK(std::filesystem::exists(dir.path() / "out1" / "report" / name));
    CHECK(slurp(dir.path() / "out1" / "report" / name) ==
          slurp(dir.path() / "out2" / "report" / name));
  }
  CHECK(slurp(dir.path() / "out1" / "verdicts.jsonl") ==
        slurp(dir.path() / "out2" / "verdicts.jsonl"));
  CHECK(slurp(dir.path() / "out1" / "manifest.json") ==
        slurp(dir.path() / "out2" / "manifest.json"));
  CHECK(slurp(dir.path() / "out1" / "verdicts.jsonl") == slurp(store_root / "verdicts.jsonl"));

  // tally over the produced verdict log reproduces the in-run tally.
  CliResult tallied = run_cli("tally --verdicts '" +
                                  (dir.path() / "out1" / "verdicts.jsonl").string() + "' --out '" +
                                  (dir.path() / "out3").string() + "'",
                              dir);
  CHECK(tallied.exit_code == 0);
  CHECK(slurp(dir.path() / "out3" / "report" / "tally.csv") ==
        slurp(dir.path() / "out1" / "report" / "tally.csv"));

  // fit over the produced tally reproduces the in-run fit (pipeline
  // consistency), bit for bit.
  CliResult refit = run_cli("fit --tally '" +
                                (dir.path() / "out1" / "report" / "tally.csv").string() +
                                "' --out '" + (dir.path() / "out4").string() + "'",
                            dir);
  CHECK(refit.exit_code == 0);
  CHECK(slurp(dir.path() / "out4" / "report" / "fit.json") ==
        slurp(dir.path() / "out1" / "report" / "fit.json"));

  // report regeneration from persisted artifacts leaves every byte in place.
  CliResult regen = run_cli("report --out '" + (dir.path() / "out1").string() + "'", dir);
  CHECK(regen.exit_code == 0);
  for (const std::string& name : {std::string("fit.md"), std::string("probs.md"),
                                  std::string("forest.svg")}) {
    CHECK(slurp(dir.path() / "out1" / "report" / name) ==
          slurp(dir.path() / "out2" / "report" / name));
  }

  // judge re-runs against the same store replay everything, no network.
  CliResult rejudged = run_cli("judge --config '" + (dir.path() / "config.json").string() +
                                   "' --replay '" + store_root.string() + "' --out '" +
                                   (dir.path() / "out5").string() + "'",
                               dir);
  CHECK(rejudged.exit_code == 0);
  CHECK(slurp(dir.path() / "out5" / "verdicts.jsonl") ==
        slurp(dir.path() / "out1" / "verdicts.jsonl"));
}

TEST_CASE("fit on the published counts prints the published table") {
  TempDir dir;
  write_file(dir.path() / "table1.csv", kTable1Csv);
  CliResult r = run_cli("fit --tally '" + (dir.path() / "table1.csv").string() + "' --out '" +
                            (dir.path() / "out").string() + "'",
                        dir);
  CHECK(r.exit_code == 0);
  CHECK(r.out.find("| GPT-4o | 0.954 |") != std::string::npos);
  std::string fit_md = slurp(dir.path() / "out" / "report" / "fit.md");
  CHECK(fit_md.find("| GLM-4.5 | -1.319 |") != std::string::npos);
  std::string probs = slurp(dir.path() / "out" / "report" / "probs.csv");
  CHECK(probs.find("0.643") != std::string::npos);
  CHECK(std::filesystem::exists(dir.path() / "out" / "report" / "forest.svg"));
}

TEST_CASE("fit maps data pathologies to exit code 5") {
  TempDir dir;
  write_file(dir.path() / "disconnected.csv",
             "model_a,model_b,wins_a,ties,wins_b\nA,B,2,0,2\nC,D,3,0,3\n");
  CliResult r1 = run_cli("fit --tally '" + (dir.path() / "disconnected.csv").string() +
                             "' --out '" + (dir.path() / "o1").string() + "'",
                         dir);
  CHECK(r1.exit_code == 5);
  CHECK(r1.err.find("disconnected") != std::string::npos);

  write_file(dir.path() / "onesided.csv", "model_a,model_b,wins_a,ties,wins_b\nA,B,4,0,0\n");
  CliResult r2 = run_cli("fit --tally '" + (dir.path() / "onesided.csv").string() + "' --out '" +
                             (dir.path() / "o2").string() + "'",
                         dir);
  CHECK(r2.exit_code == 5);

  write_file(dir.path() / "broken.csv", "model_a,model_b,wins_a,ties,wins_b\nA,B,x,0,1\n");
  CliResult r3 = run_cli("fit --tally '" + (dir.path() / "broken.csv").string() + "' --out '" +
                             (dir.path() / "o3").string() + "'",
                         dir);
  CHECK(r3.exit_code == 2);
  CHECK(r3.err.find("line 2") != std::string::npos);
}

TEST_CASE("full live pipeline against a local endpoint, then offline replay") {
  TempDir dir;
  setenv("TUTORBENCH_CLI_TEST_KEY", "cli-test-key", 1);

  // Judge cycles +1 / 0 / -1 per pair so no pair is one-sided over 3 runs.
  std::map<std::string, int> judge_calls;
  httplib::Server server;
  server.Post("/v1/chat/completions", [&](const httplib::Request& req, httplib::Response& res) {
    json body = json::parse(req.body);
    std::string user = body["messages"][1]["content"];
    std::string content;
    std::smatch a;
    std::smatch b;
    static const std::regex ra(R"(Model A \(([^)]*)\) output:)");
    static const std::regex rb(R"(Model B \(([^)]*)\) output:)");
    if (std::regex_search(user, a, ra) && std::regex_search(user, b, rb)) {
      std::string pair = a[1].str() + "|" + b[1].str();
      int phase = judge_calls[pair]++ % 3;
      const char* token = phase == 0 ? "+1" : (phase == 1 ? "0" : "-1");
      content = a[1].str() + " vs. " + b[1].str() + ": " + token;
    } else {
      content = "Guidance from " + body["model"].get<std::string>() +
                ": review the missed concepts and practice.";
    }
    json reply = {{"choices", {{{"message", {{"role", "assistant"}, {"content", content}}}}}}};
    res.set_content(reply.dump(), "application/json");
  });
  int port = server.bind_to_any_port("127.0.0.1");
  REQUIRE(port > 0);
  std::thread listener([&] { server.listen_after_bind(); });
  server.wait_until_ready();

  std::string base_url = "http://127.0.0.1:" + std::to_string(port) + "/v1";
  json endpoints = json::array();
  for (const char* name : {"GPT-4o", "DeepSeek-V3", "GLM-4.5", "ArbiterX"}) {
    endpoints.push_back({{"name", name},
                         {"base_url", base_url},
                         {"model_id", std::string("live-") + name},
                         {"api_key_env", "TUTORBENCH_CLI_TEST_KEY"}});
  }
  json config = {{"quiz", kFixtureDir + "/quiz10.json"},
                 {"judge", "ArbiterX"},
                 {"runs", 3},
                 {"seed", 7},
                 {"order_policy", "fixed"},
                 {"out", (dir.path() / "live").string()},
                 {"endpoints", endpoints}};
  write_file(dir.path() / "live.json", config.dump(2));

  CliResult live = run_cli("run --config '" + (dir.path() / "live.json").string() + "'", dir);
  CHECK(live.exit_code == 0);

  // Each pair saw one win, one tie, one loss across the three runs.
  std::string tally_csv = slurp(dir.path() / "live" / "report" / "tally.csv");
  CHECK(tally_csv.find("GPT-4o,DeepSeek-V3,1,1,1") != std::string::npos);
  CHECK(tally_csv.find("GPT-4o,GLM-4.5,1,1,1") != std::string::npos);
  CHECK(tally_csv.find("DeepSeek-V3,GLM-4.5,1,1,1") != std::string::npos);

  server.stop();
  listener.join();

  // With the server gone, a replay of the recorded store still succeeds.
  CliResult replay = run_cli("run --config '" + (dir.path() / "live.json").string() +
                                 "' --replay '" + (dir.path() / "live").string() + "' --out '" +
                                 (dir.path() / "replayed").string() + "'",
                             dir);
  CHECK(replay.exit_code == 0);
  for (const std::string& name : kReportFiles) {
    CHECK(slurp(dir.path() / "replayed" / "report" / name) ==
          slurp(dir.path() / "live" / "report" / name));
  }
}
