#include "tutorbench/arena.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <cassert>
#include <fstream>
#include <future>
#include <regex>
#include <set>
#include <sstream>

#include "tutorbench/errors.hpp"
#include "tutorbench/prompting.hpp"
#include "tutorbench/util.hpp"

namespace tutorbench {

namespace {

using nlohmann::json;

constexpr std::string_view kReAskSuffix = "\n\nReply with only the decision line.";

std::string regex_escape(const std::string& s) {
  static const std::string special = R"(\^$.|?*+()[]{})";
  std::string out;
  out.reserve(s.size() * 2);
  for (char c : s) {
    if (special.find(c) != std::string::npos) out.push_back('\\');
    out.push_back(c);
  }
  return out;
}

/// Compiled matcher for `first vs. second: <+1|0|-1>` lines.
std::regex decision_line_pattern(const std::string& first, const std::string& second) {
  return std::regex("^\\s*" + regex_escape(first) + "\\s+vs\\.?\\s+" + regex_escape(second) +
                    "\\s*:\\s*(\\+1|-1|0)\\s*\\.?\\s*$");
}

std::optional<int> match_decision_line(const std::string& line, const std::regex& pattern) {
  std::smatch m;
  if (!std::regex_match(line, m, pattern)) return std::nullopt;
  const std::string token = m[1].str();
  if (token == "+1") return +1;
  if (token == "-1") return -1;
  return 0;
}

bool is_token_boundary_before(const std::string& text, size_t pos) {
  if (pos == 0) return true;
  char c = text[pos - 1];
  if (std::isalnum(static_cast<unsigned char>(c))) return false;
  return c != '_' && c != '.' && c != '+' && c != '-' && c != '/';
}

bool is_token_boundary_after(const std::string& text, size_t end) {
  if (end >= text.size()) return true;
  char c = text[end];
  if (std::isalnum(static_cast<unsigned char>(c))) return false;
  if (c == '_' || c == '/') return false;
  if (c == '.') {
    // A trailing period is fine; a decimal continuation ("0.5") is not.
    return end + 1 >= text.size() || !std::isdigit(static_cast<unsigned char>(text[end + 1]));
  }
  return true;
}

/// Last standalone +1 / -1 / 0 in the text, if any.
std::optional<int> last_standalone_token(const std::string& text) {
  std::optional<int> last;
  for (size_t i = 0; i < text.size(); ++i) {
    for (const auto& [token, value] :
         {std::pair<std::string_view, int>{"+1", +1}, {"-1", -1}, {"0", 0}}) {
      if (text.compare(i, token.size(), token) != 0) continue;
      if (!is_token_boundary_before(text, i)) continue;
      if (!is_token_boundary_after(text, i + token.size())) continue;
      last = value;
    }
  }
  return last;
}

std::vector<std::string> split_lines(const std::string& text) {
  std::vector<std::string> lines;
  std::string current;
  for (char c : text) {
    if (c == '\n') {
      if (!current.empty() && current.back() == '\r') current.pop_back();
      lines.push_back(std::move(current));
      current.clear();
    } else {
      current.push_back(c);
    }
  }
  if (!current.empty() && current.back() == '\r') current.pop_back();
  lines.push_back(std::move(current));
  return lines;
}

std::uint64_t derive_seed(std::uint64_t base, std::string_view tag, std::string_view name,
                          int run_index) {
  return splitmix64(base ^ fnv1a64(tag) ^ fnv1a64(name) ^
                    (static_cast<std::uint64_t>(run_index) * 0x9e3779b97f4a7c15ULL));
}

json endpoint_to_json(const ModelEndpoint& ep) {
  json j;
  j["name"] = ep.name;
  j["base_url"] = ep.base_url;
  j["model_id"] = ep.model_id;
  j["api_key_env"] = ep.api_key_env;  // variable name only, never the value
  j["temperature"] = ep.temperature;
  j["max_output_tokens"] = ep.max_output_tokens;
  j["timeout_ms"] = ep.timeout.count();
  j["max_retries"] = ep.max_retries;
  j["max_in_flight"] = ep.max_in_flight;
  return j;
}

}  // namespace

std::string to_string(OrderPolicy policy) {
  switch (policy) {
    case OrderPolicy::fixed:
      return "fixed";
    case OrderPolicy::randomized:
      return "randomized";
    case OrderPolicy::both_orders:
      return "both_orders";
  }
  return "randomized";
}

OrderPolicy order_policy_from_string(const std::string& text) {
  if (text == "fixed") return OrderPolicy::fixed;
  if (text == "randomized") return OrderPolicy::randomized;
  if (text == "both_orders") return OrderPolicy::both_orders;
  throw Error("unknown order policy \"" + text + "\" (expected fixed|randomized|both_orders)");
}

int outcome_value(Outcome o) { return static_cast<int>(o); }

Outcome outcome_from_value(int v) {
  if (v < -1 || v > 1) {
    throw Error("outcome must be one of {+1, 0, -1}, got " + std::to_string(v));
  }
  return static_cast<Outcome>(v);
}

Outcome parse_verdict(const std::string& raw, const std::string& a, const std::string& b) {
  assert(a != b);
  const std::regex straight = decision_line_pattern(a, b);
  const std::regex swapped = decision_line_pattern(b, a);
  std::vector<int> decisions;
  for (const std::string& line : split_lines(raw)) {
    if (auto v = match_decision_line(line, straight)) {
      decisions.push_back(*v);
    } else if (auto w = match_decision_line(line, swapped)) {
      // Judge echoed the names in swapped order; flip back to (a, b).
      decisions.push_back(-*w);
    }
  }
  if (!decisions.empty()) {
    for (int v : decisions) {
      if (v != decisions.front()) {
        throw AmbiguousVerdict("conflicting decision lines in judge response");
      }
    }
    return outcome_from_value(decisions.front());
  }
  if (auto v = last_standalone_token(raw)) {
    return outcome_from_value(*v);
  }
  throw JudgeUnparseable("no decision token found in judge response");
}

Outcome orient_verdict(Outcome outcome, const std::pair<std::string, std::string>& presented,
                       const std::pair<std::string, std::string>& canonical) {
  assert(presented.first != presented.second);
  assert((presented == canonical) ||
         (presented.first == canonical.second && presented.second == canonical.first));
  if (presented == canonical) return outcome;
  return outcome_from_value(-outcome_value(outcome));
}

// ---- Arena ----

Arena::Arena(ChatClient& client, std::map<std::string, ModelEndpoint> endpoints, Options opts)
    : client_(client), endpoints_(std::move(endpoints)), opts_(std::move(opts)) {}

ArenaResult Arena::execute_plan(const RunPlan& plan, const QuizSet& set) {
  // Validate before any call leaves the process.
  if (plan.models.size() < 2) {
    throw PlanInvalid("plan needs at least 2 models");
  }
  if (std::set<std::string>(plan.models.begin(), plan.models.end()).size() != plan.models.size()) {
    throw PlanInvalid("plan lists a model twice");
  }
  if (plan.judge.empty()) {
    throw PlanInvalid("plan has no judge");
  }
  if (std::find(plan.models.begin(), plan.models.end(), plan.judge) != plan.models.end()) {
    throw PlanInvalid("judge \"" + plan.judge + "\" must not be one of the compared models");
  }
  if (plan.runs < 1) {
    throw PlanInvalid("plan needs at least 1 run");
  }
  if (plan.quiz_digest != set.source_digest) {
    throw PlanInvalid("plan quiz digest " + plan.quiz_digest + " does not match loaded set " +
                      set.source_digest);
  }
  for (const std::string& name : plan.models) {
    if (!endpoints_.count(name)) throw PlanInvalid("no endpoint configured for model \"" + name + "\"");
  }
  if (!endpoints_.count(plan.judge)) {
    throw PlanInvalid("no endpoint configured for judge \"" + plan.judge + "\"");
  }

  const TutorPrompt tutor = render_tutor_prompt(set, plan.template_version);
  const ModelEndpoint& judge_ep = endpoints_.at(plan.judge);
  const std::uint64_t base_seed = plan.seed.value_or(0);

  ArenaResult result;

  for (int run = 1; run <= plan.runs; ++run) {
    // Stage 2: one guidance output per tutor, generated concurrently.
    std::vector<std::future<Transcript>> futures;
    futures.reserve(plan.models.size());
    for (const std::string& name : plan.models) {
      const ModelEndpoint& ep = endpoints_.at(name);
      std::optional<std::uint64_t> seed;
      if (plan.seed) seed = derive_seed(base_seed, "generate", name, run);
      RequestContext ctx{run, set.source_digest, /*mirror_run_view=*/true};
      futures.push_back(std::async(std::launch::async, [this, &ep, &tutor, seed, ctx] {
        return client_.complete(ep, tutor.system_text, tutor.user_text, seed, ctx);
      }));
    }
    std::map<std::string, Transcript> transcripts;
    for (size_t i = 0; i < futures.size(); ++i) {
      transcripts.emplace(plan.models[i], futures[i].get());
    }

    // Stage 3: judge every unordered pair; judging starts only after all
    // transcripts for the run exist.
    int pair_index = 0;
    for (size_t i = 0; i < plan.models.size(); ++i) {
      for (size_t j = i + 1; j < plan.models.size(); ++j, ++pair_index) {
        const std::string& ma = plan.models[i];
        const std::string& mb = plan.models[j];
        const std::pair<std::string, std::string> canonical{ma, mb};

        std::vector<std::pair<std::string, std::string>> presentations;
        switch (plan.order_policy) {
          case OrderPolicy::fixed:
            presentations.push_back(canonical);
            break;
          case OrderPolicy::randomized: {
            std::uint64_t coin = splitmix64(base_seed ^ fnv1a64("present") ^
                                            (static_cast<std::uint64_t>(run) * 131071u + pair_index));
            presentations.push_back((coin & 1) ? std::pair{mb, ma} : canonical);
            break;
          }
          case OrderPolicy::both_orders:
            presentations.push_back(canonical);
            presentations.push_back({mb, ma});
            break;
        }

        std::vector<Judgment> judgments;
        std::vector<std::string> failures;
        for (const auto& order : presentations) {
          const Transcript& first = transcripts.at(order.first);
          const Transcript& second = transcripts.at(order.second);
          JudgePrompt prompt = render_judge_prompt(set, first, second, plan.template_version);
          std::optional<std::uint64_t> jseed;
          if (plan.seed) {
            jseed = derive_seed(base_seed, "judge", order.first + "|" + order.second, run);
          }
          RequestContext ctx{run, set.source_digest, /*mirror_run_view=*/false};

          Transcript jt = client_.complete(judge_ep, prompt.system_text, prompt.user_text(),
                                           jseed, ctx);
          Judgment judgment{order.first, order.second, 0, jt.response_text};
          try {
            judgment.outcome = outcome_value(parse_verdict(jt.response_text, order.first, order.second));
            judgments.push_back(std::move(judgment));
            continue;
          } catch (const JudgeUnparseable&) {
          } catch (const AmbiguousVerdict&) {
          }

          // One re-ask, then give up on this presentation.
          Transcript retry = client_.complete(
              judge_ep, prompt.system_text, prompt.user_text() + std::string(kReAskSuffix), jseed,
              ctx);
          judgment.raw_text = retry.response_text;
          try {
            judgment.outcome =
                outcome_value(parse_verdict(retry.response_text, order.first, order.second));
            judgments.push_back(std::move(judgment));
          } catch (const Error& e) {
            failures.push_back(e.what());
          }
        }

        if (judgments.empty()) {
          std::string reason = "judge response unparseable after re-ask";
          if (!failures.empty()) reason += ": " + failures.front();
          result.exclusions.push_back({run, ma, mb, reason});
          continue;
        }

        Verdict v;
        v.run_index = run;
        v.model_a = ma;
        v.model_b = mb;
        v.quiz_digest = set.source_digest;
        if (plan.order_policy == OrderPolicy::both_orders) {
          v.judgments = judgments;
          v.presented_order = canonical;
          std::vector<Outcome> oriented;
          for (const Judgment& jm : judgments) {
            oriented.push_back(orient_verdict(outcome_from_value(jm.outcome),
                                              {jm.presented_first, jm.presented_second}, canonical));
          }
          if (oriented.size() == 2 && oriented[0] != oriented[1]) {
            v.outcome = Outcome::tie;
            v.position_inconsistent = true;
          } else {
            v.outcome = oriented.front();
          }
          std::string combined;
          for (size_t k = 0; k < judgments.size(); ++k) {
            if (k > 0) combined += "\n--- reversed presentation ---\n";
            combined += judgments[k].raw_text;
          }
          v.raw_judge_text = std::move(combined);
        } else {
          const Judgment& jm = judgments.front();
          v.presented_order = {jm.presented_first, jm.presented_second};
          v.outcome = orient_verdict(outcome_from_value(jm.outcome), v.presented_order, canonical);
          v.raw_judge_text = jm.raw_text;
        }
        result.verdicts.push_back(std::move(v));
      }
    }
  }

  // Stage 4 inputs persisted before return.
  if (!opts_.artifacts_dir.empty()) {
    std::filesystem::create_directories(opts_.artifacts_dir);
    write_verdict_log(opts_.artifacts_dir / "verdicts.jsonl", result.verdicts);
    std::vector<ModelEndpoint> eps;
    for (const std::string& name : plan.models) eps.push_back(endpoints_.at(name));
    eps.push_back(judge_ep);
    std::ofstream out(opts_.artifacts_dir / "manifest.json", std::ios::binary | std::ios::trunc);
    out << run_manifest_json(plan, eps, result.exclusions);
  }

  return result;
}

// ---- persistence ----

std::string verdict_to_json_line(const Verdict& v) {
  json j;
  j["run_index"] = v.run_index;
  j["model_a"] = v.model_a;
  j["model_b"] = v.model_b;
  j["outcome"] = outcome_value(v.outcome);
  j["raw_judge_text"] = v.raw_judge_text;
  j["presented_order"] = json::array({v.presented_order.first, v.presented_order.second});
  j["quiz_digest"] = v.quiz_digest;
  if (!v.judgments.empty()) {
    json arr = json::array();
    for (const Judgment& jm : v.judgments) {
      arr.push_back({{"presented_first", jm.presented_first},
                     {"presented_second", jm.presented_second},
                     {"outcome", jm.outcome},
                     {"raw_text", jm.raw_text}});
    }
    j["judgments"] = std::move(arr);
    j["position_inconsistent"] = v.position_inconsistent;
  }
  return j.dump();
}

Verdict verdict_from_json_line(const std::string& line) {
  json j;
  try {
    j = json::parse(line);
  } catch (const json::parse_error& e) {
    throw Error(std::string("verdict record is not valid JSON: ") + e.what());
  }
  try {
    Verdict v;
    v.run_index = j.at("run_index").get<int>();
    v.model_a = j.at("model_a").get<std::string>();
    v.model_b = j.at("model_b").get<std::string>();
    v.outcome = outcome_from_value(j.at("outcome").get<int>());
    v.raw_judge_text = j.at("raw_judge_text").get<std::string>();
    v.presented_order = {j.at("presented_order").at(0).get<std::string>(),
                         j.at("presented_order").at(1).get<std::string>()};
    v.quiz_digest = j.at("quiz_digest").get<std::string>();
    if (j.contains("judgments")) {
      for (const json& jm : j["judgments"]) {
        Judgment judgment;
        judgment.presented_first = jm.at("presented_first").get<std::string>();
        judgment.presented_second = jm.at("presented_second").get<std::string>();
        judgment.outcome = jm.at("outcome").get<int>();
        judgment.raw_text = jm.at("raw_text").get<std::string>();
        v.judgments.push_back(std::move(judgment));
      }
      v.position_inconsistent = j.value("position_inconsistent", false);
    }
    return v;
  } catch (const json::exception& e) {
    throw Error(std::string("verdict record has missing or mistyped fields: ") + e.what());
  }
}

void write_verdict_log(const std::filesystem::path& path, const std::vector<Verdict>& verdicts) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error("cannot write verdict log: " + path.string());
  for (const Verdict& v : verdicts) {
    out << verdict_to_json_line(v) << "\n";
  }
}

std::vector<Verdict> read_verdict_log(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open verdict log: " + path.string());
  std::vector<Verdict> verdicts;
  std::string line;
  size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (is_blank(line)) continue;
    try {
      verdicts.push_back(verdict_from_json_line(line));
    } catch (const Error& e) {
      throw Error(path.string() + ":" + std::to_string(lineno) + ": " + e.what());
    }
  }
  return verdicts;
}

std::string run_manifest_json(const RunPlan& plan, const std::vector<ModelEndpoint>& endpoints,
                              const std::vector<Exclusion>& exclusions) {
  json j;
  json plan_json;
  plan_json["models"] = plan.models;
  plan_json["judge"] = plan.judge;
  plan_json["runs"] = plan.runs;
  plan_json["order_policy"] = to_string(plan.order_policy);
  if (plan.seed) {
    plan_json["seed"] = *plan.seed;
  } else {
    plan_json["seed"] = nullptr;
  }
  plan_json["quiz_digest"] = plan.quiz_digest;
  j["plan"] = std::move(plan_json);
  j["template_version"] = plan.template_version;
  json eps = json::array();
  for (const ModelEndpoint& ep : endpoints) eps.push_back(endpoint_to_json(ep));
  j["endpoints"] = std::move(eps);
  json excl = json::array();
  for (const Exclusion& e : exclusions) {
    excl.push_back({{"run_index", e.run_index},
                    {"model_a", e.model_a},
                    {"model_b", e.model_b},
                    {"reason", e.reason}});
  }
  j["exclusions"] = std::move(excl);
  return j.dump(2) + "\n";
}

}  // namespace tutorbench
