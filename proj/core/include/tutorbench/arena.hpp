#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "tutorbench/provider.hpp"
#include "tutorbench/quizset.hpp"

namespace tutorbench {

/// How the two outputs of a pair are ordered when shown to the judge.
enum class OrderPolicy {
  fixed,        // always (a, b) in roster order
  randomized,   // per-comparison coin, derived from the plan seed
  both_orders,  // judge each pair twice, once per order
};

std::string to_string(OrderPolicy policy);
OrderPolicy order_policy_from_string(const std::string& text);

/// One tournament: which models play, who judges, how many runs.
struct RunPlan {
  std::vector<std::string> models;  // >= 2 tutor names, roster order is canonical
  std::string judge;                // never one of `models`
  int runs = 10;
  OrderPolicy order_policy = OrderPolicy::randomized;
  std::optional<std::uint64_t> seed;  // presentation/sampling seed, persisted in the manifest
  std::string quiz_digest;
  std::string template_version = "paper-v1";
};

/// Judge decision relative to an ordered pair: +1 first wins, -1 second wins.
enum class Outcome : int {
  a_wins = +1,
  tie = 0,
  b_wins = -1,
};

int outcome_value(Outcome o);
Outcome outcome_from_value(int v);  // throws Error for values outside {-1, 0, +1}

/// One raw judge decision exactly as presented.
struct Judgment {
  std::string presented_first;
  std::string presented_second;
  int outcome = 0;  // relative to (presented_first, presented_second)
  std::string raw_text;

  friend bool operator==(const Judgment&, const Judgment&) = default;
};

/// One pairwise result in canonical orientation: `outcome` is +1 when
/// `model_a` won, whatever order the outputs were shown in.
struct Verdict {
  int run_index = 1;
  std::string model_a;  // roster order: model_a precedes model_b
  std::string model_b;
  Outcome outcome = Outcome::tie;
  std::string raw_judge_text;
  std::pair<std::string, std::string> presented_order;
  std::string quiz_digest;
  std::vector<Judgment> judgments;     // both_orders only: the two decisions
  bool position_inconsistent = false;  // both_orders only: orders disagreed

  friend bool operator==(const Verdict&, const Verdict&) = default;
};

/// A comparison dropped after the re-ask also failed to parse.
struct Exclusion {
  int run_index = 1;
  std::string model_a;
  std::string model_b;
  std::string reason;

  friend bool operator==(const Exclusion&, const Exclusion&) = default;
};

struct ArenaResult {
  std::vector<Verdict> verdicts;
  std::vector<Exclusion> exclusions;
};

/// Extract the judge's decision from `raw`, relative to the presented pair
/// (a, b). Strict pass first: a line `a vs. b: +1|0|-1` (flexible whitespace,
/// optional trailing period, swapped name order corrected by sign flip).
/// Tolerant fallback: the last standalone +1/-1/0 token in the text.
/// Throws JudgeUnparseable or AmbiguousVerdict.
Outcome parse_verdict(const std::string& raw, const std::string& a, const std::string& b);

/// Re-express `outcome` (relative to `presented`) in `canonical` orientation.
/// Identity when the orders match, sign flip otherwise; ties are unchanged.
Outcome orient_verdict(Outcome outcome, const std::pair<std::string, std::string>& presented,
                       const std::pair<std::string, std::string>& canonical);

class Arena {
 public:
  struct Options {
    /// Where manifest.json and verdicts.jsonl are written; empty = keep
    /// results in memory only.
    std::filesystem::path artifacts_dir;
  };

  Arena(ChatClient& client, std::map<std::string, ModelEndpoint> endpoints, Options opts = {});

  /// Run the full tournament: per run, one generation per tutor, then one
  /// judged comparison per unordered pair. Returns verdicts sorted by
  /// (run_index, pair) plus any recorded exclusions.
  /// Throws PlanInvalid; provider errors propagate.
  ArenaResult execute_plan(const RunPlan& plan, const QuizSet& set);

 private:
  ChatClient& client_;
  std::map<std::string, ModelEndpoint> endpoints_;
  Options opts_;
};

// ---- persistence ----

std::string verdict_to_json_line(const Verdict& v);
Verdict verdict_from_json_line(const std::string& line);  // throws Error

void write_verdict_log(const std::filesystem::path& path, const std::vector<Verdict>& verdicts);
std::vector<Verdict> read_verdict_log(const std::filesystem::path& path);

/// Deterministic manifest: plan, endpoint parameters (no secrets), template
/// version, exclusion log. Contains no timestamps or local paths.
std::string run_manifest_json(const RunPlan& plan, const std::vector<ModelEndpoint>& endpoints,
                              const std::vector<Exclusion>& exclusions);

}  // namespace tutorbench
