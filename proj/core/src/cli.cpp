#include "tutorbench/cli.hpp"

#include <nlohmann/json.hpp>

#include <fstream>
#include <map>
#include <ostream>
#include <set>
#include <sstream>

#include "tutorbench/errors.hpp"
#include "tutorbench/quizset.hpp"
#include "tutorbench/report.hpp"

namespace tutorbench {

namespace {

using nlohmann::json;

std::string read_text_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open " + path.string());
  std::ostringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

void reject_unknown_keys(const json& obj, const std::set<std::string>& known,
                         const std::string& where) {
  for (const auto& [key, _] : obj.items()) {
    if (!known.count(key)) {
      throw Error(where + ": unknown key \"" + key + "\"");
    }
  }
}

ModelEndpoint endpoint_from_json(const json& j, const std::string& judge_name) {
  reject_unknown_keys(j,
                      {"name", "base_url", "model_id", "api_key_env", "temperature",
                       "max_output_tokens", "timeout_ms", "max_retries", "max_in_flight"},
                      "endpoint");
  ModelEndpoint ep;
  ep.name = j.at("name").get<std::string>();
  ep.base_url = j.at("base_url").get<std::string>();
  ep.model_id = j.at("model_id").get<std::string>();
  ep.api_key_env = j.value("api_key_env", std::string{});
  // Tutors default to 0.7 so repeated runs vary; the judge defaults to 0.
  ep.temperature = j.value("temperature", ep.name == judge_name ? 0.0 : 0.7);
  ep.max_output_tokens = j.value("max_output_tokens", 2048);
  ep.timeout = std::chrono::milliseconds(j.value("timeout_ms", 60000LL));
  ep.max_retries = j.value("max_retries", 3);
  ep.max_in_flight = j.value("max_in_flight", 2);
  return ep;
}

RunPlan plan_from_config(const Config& config, const std::string& quiz_digest) {
  RunPlan plan;
  plan.models = tutor_names(config);
  plan.judge = config.judge;
  plan.runs = config.runs;
  plan.order_policy = config.order_policy;
  plan.seed = config.seed;
  plan.quiz_digest = quiz_digest;
  plan.template_version = config.template_version;
  return plan;
}

std::map<std::string, ModelEndpoint> endpoint_map(const Config& config) {
  std::map<std::string, ModelEndpoint> out;
  for (const ModelEndpoint& ep : config.endpoints) out.emplace(ep.name, ep);
  return out;
}

FitOptions fit_options_from_config(const Config& config) {
  FitOptions opts;
  opts.tie_credit = config.tie_credit;
  return opts;
}

int exit_code_for(const Error& e) {
  if (dynamic_cast<const AuthError*>(&e) || dynamic_cast<const RateLimited*>(&e) ||
      dynamic_cast<const TransportError*>(&e) || dynamic_cast<const EmptyResponse*>(&e) ||
      dynamic_cast<const StoreCorrupt*>(&e) || dynamic_cast<const ReplayMiss*>(&e)) {
    return kExitProviderError;
  }
  if (dynamic_cast<const DisconnectedGraph*>(&e) ||
      dynamic_cast<const DegenerateSeparation*>(&e) ||
      dynamic_cast<const SingularBeyondNullSpace*>(&e)) {
    return kExitFitDegeneracy;
  }
  if (dynamic_cast<const JudgeUnparseable*>(&e) || dynamic_cast<const AmbiguousVerdict*>(&e)) {
    return kExitJudgeParse;
  }
  return kExitConfigError;
}

/// Shared tail of cmd_run and cmd_judge.
int run_pipeline(const Config& config, std::ostream& err, bool require_existing_store,
                 const char* cmd) {
  QuizSet set;
  RunPlan plan;
  try {
    validate_config(config);
    set = load_quizset(config.quiz_path);
    plan = plan_from_config(config, set.source_digest);
  } catch (const Error& e) {
    err << cmd << ": config stage failed: " << e.what() << "\n";
    return kExitConfigError;
  }

  const std::filesystem::path store_root =
      config.replay_dir ? *config.replay_dir : config.output_dir;
  if (require_existing_store && !std::filesystem::exists(store_root / "runs")) {
    err << cmd << ": config stage failed: no transcript store under " << store_root.string()
        << "\n";
    return kExitConfigError;
  }

  ArenaResult result;
  std::string manifest;
  try {
    TranscriptStore store(store_root);
    ClientOptions copts;
    copts.cache_mode = config.replay_dir ? CacheMode::replay : CacheMode::record;
    ChatClient client(std::make_shared<HttpBackend>(), &store, copts);
    Arena arena(client, endpoint_map(config), {config.output_dir});
    result = arena.execute_plan(plan, set);

    std::vector<ModelEndpoint> ordered;
    auto eps = endpoint_map(config);
    for (const std::string& name : plan.models) ordered.push_back(eps.at(name));
    ordered.push_back(eps.at(plan.judge));
    manifest = run_manifest_json(plan, ordered, result.exclusions);
  } catch (const Error& e) {
    err << cmd << ": tournament stage failed: " << e.what() << "\n";
    return exit_code_for(e);
  }

  if (result.verdicts.empty()) {
    err << cmd << ": judge stage failed: every comparison was excluded (see manifest.json)\n";
    return kExitJudgeParse;
  }

  WinTieLossMatrix matrix;
  BtFit fit;
  FitOptions fopts = fit_options_from_config(config);
  try {
    matrix = tally(result.verdicts, plan.models);
    fit = bt_fit(matrix, fopts);
  } catch (const Error& e) {
    err << cmd << ": fit stage failed: " << e.what() << "\n";
    return exit_code_for(e);
  }

  try {
    ReportBundle bundle = make_report_bundle(matrix, fit, fopts, manifest);
    write_report_bundle(config.output_dir / "report", bundle);
  } catch (const Error& e) {
    err << cmd << ": report stage failed: " << e.what() << "\n";
    return exit_code_for(e);
  }

  if (!result.exclusions.empty()) {
    err << cmd << ": judge stage: " << result.exclusions.size()
        << " comparison(s) excluded after re-ask; see manifest.json\n";
    return kExitJudgeParse;
  }
  return kExitOk;
}

}  // namespace

Config load_config(const std::filesystem::path& path) {
  json j;
  try {
    j = json::parse(read_text_file(path));
  } catch (const json::parse_error& e) {
    throw Error("config " + path.string() + " is not valid JSON: " + e.what());
  }
  try {
    reject_unknown_keys(j,
                        {"quiz", "judge", "models", "runs", "seed", "order_policy", "tie_credit",
                         "out", "endpoints", "template_version"},
                        "config " + path.string());
    Config config;
    config.quiz_path = j.at("quiz").get<std::string>();
    config.judge = j.at("judge").get<std::string>();
    if (j.contains("models")) {
      config.models = j["models"].get<std::vector<std::string>>();
    }
    config.runs = j.value("runs", 10);
    if (j.contains("seed") && !j["seed"].is_null()) {
      config.seed = j["seed"].get<std::uint64_t>();
    }
    config.order_policy = order_policy_from_string(j.value("order_policy", "randomized"));
    config.tie_credit = j.value("tie_credit", 0.5);
    config.output_dir = j.value("out", std::string("out"));
    config.template_version = j.value("template_version", "paper-v1");
    for (const json& e : j.at("endpoints")) {
      config.endpoints.push_back(endpoint_from_json(e, config.judge));
    }
    return config;
  } catch (const json::exception& e) {
    throw Error("config " + path.string() + " is missing required keys: " + e.what());
  }
}

std::vector<std::string> tutor_names(const Config& config) {
  if (!config.models.empty()) return config.models;
  std::vector<std::string> names;
  for (const ModelEndpoint& ep : config.endpoints) {
    if (ep.name != config.judge) names.push_back(ep.name);
  }
  return names;
}

void validate_config(const Config& config) {
  if (config.quiz_path.empty()) throw PlanInvalid("config: quiz path is empty");
  if (config.endpoints.empty()) throw PlanInvalid("config: no endpoints");
  std::set<std::string> names;
  for (const ModelEndpoint& ep : config.endpoints) {
    if (ep.name.empty()) throw PlanInvalid("config: endpoint with empty name");
    if (!names.insert(ep.name).second) {
      throw PlanInvalid("config: duplicate endpoint name \"" + ep.name + "\"");
    }
    if (ep.base_url.empty()) throw PlanInvalid("config: endpoint \"" + ep.name + "\" has no base_url");
    if (ep.model_id.empty()) throw PlanInvalid("config: endpoint \"" + ep.name + "\" has no model_id");
    if (ep.temperature < 0.0) {
      throw PlanInvalid("config: endpoint \"" + ep.name + "\" has negative temperature");
    }
    if (ep.max_output_tokens < 1) {
      throw PlanInvalid("config: endpoint \"" + ep.name + "\" needs max_output_tokens >= 1");
    }
    if (ep.max_retries < 0) {
      throw PlanInvalid("config: endpoint \"" + ep.name + "\" has negative max_retries");
    }
    if (ep.max_in_flight < 1) {
      throw PlanInvalid("config: endpoint \"" + ep.name + "\" needs max_in_flight >= 1");
    }
  }
  if (config.judge.empty()) throw PlanInvalid("config: no judge named");
  if (!names.count(config.judge)) {
    throw PlanInvalid("config: judge \"" + config.judge + "\" has no endpoint entry");
  }
  for (const std::string& model : config.models) {
    if (model == config.judge) {
      throw PlanInvalid("config: judge \"" + config.judge + "\" is listed among the models");
    }
    if (!names.count(model)) {
      throw PlanInvalid("config: model \"" + model + "\" has no endpoint entry");
    }
  }
  if (tutor_names(config).size() < 2) {
    throw PlanInvalid("config: need at least 2 tutor endpoints besides the judge");
  }
  if (config.runs < 1) throw PlanInvalid("config: runs must be >= 1");
  if (config.tie_credit < 0.0 || config.tie_credit > 1.0) {
    throw PlanInvalid("config: tie_credit must lie in [0, 1]");
  }
}

int cmd_run(const Config& config, std::ostream& err) {
  return run_pipeline(config, err, /*require_existing_store=*/false, "run");
}

int cmd_judge(const Config& config, std::ostream& err) {
  return run_pipeline(config, err, /*require_existing_store=*/true, "judge");
}

int cmd_tally(const std::filesystem::path& verdicts_path, const std::filesystem::path& out_dir,
              std::ostream& err) {
  try {
    std::vector<Verdict> verdicts = read_verdict_log(verdicts_path);
    WinTieLossMatrix matrix = tally(verdicts);
    std::filesystem::create_directories(out_dir / "report");
    std::ofstream csv(out_dir / "report" / "tally.csv", std::ios::binary | std::ios::trunc);
    csv << tally_to_csv(matrix);
    std::ofstream md(out_dir / "report" / "tally.md", std::ios::binary | std::ios::trunc);
    md << tally_to_markdown(matrix);
    return kExitOk;
  } catch (const Error& e) {
    err << "tally: " << e.what() << "\n";
    return kExitConfigError;
  }
}

int cmd_fit(const std::filesystem::path& tally_csv_path, const FitOptions& opts,
            const std::filesystem::path& out_dir, std::ostream& out, std::ostream& err) {
  WinTieLossMatrix matrix;
  try {
    matrix = tally_from_csv(read_text_file(tally_csv_path));
  } catch (const Error& e) {
    err << "fit: input stage failed: " << tally_csv_path.string() << ": " << e.what() << "\n";
    return kExitConfigError;
  }
  BtFit fit;
  try {
    fit = bt_fit(matrix, opts);
  } catch (const Error& e) {
    err << "fit: fit stage failed: " << e.what() << "\n";
    return exit_code_for(e);
  }
  try {
    json echo;
    echo["source"] = tally_csv_path.filename().string();
    echo["options"] = {{"tie_credit", opts.tie_credit},
                       {"tolerance", opts.tolerance},
                       {"max_iterations", opts.max_iterations},
                       {"z_value", opts.z_value},
                       {"prior_epsilon", opts.prior_epsilon}};
    ReportBundle bundle = make_report_bundle(matrix, fit, opts, echo.dump(2) + "\n");
    write_report_bundle(out_dir / "report", bundle);
    out << bundle.fit_md;
    return kExitOk;
  } catch (const Error& e) {
    err << "fit: report stage failed: " << e.what() << "\n";
    return exit_code_for(e);
  }
}

int cmd_report(const std::filesystem::path& out_dir, std::ostream& err) {
  try {
    auto [fit, opts] = bt_fit_from_json(read_text_file(out_dir / "report" / "fit.json"));
    WinTieLossMatrix matrix = tally_from_csv(read_text_file(out_dir / "report" / "tally.csv"));
    std::string echo;
    if (std::filesystem::exists(out_dir / "manifest.json")) {
      echo = read_text_file(out_dir / "manifest.json");
    } else {
      echo = json({{"source", "tally.csv"}}).dump(2) + "\n";
    }
    ReportBundle bundle = make_report_bundle(matrix, fit, opts, std::move(echo));
    write_report_bundle(out_dir / "report", bundle);
    return kExitOk;
  } catch (const Error& e) {
    err << "report: " << e.what() << "\n";
    return exit_code_for(e);
  }
}

}  // namespace tutorbench
