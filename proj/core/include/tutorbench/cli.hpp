#pragma once

#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "tutorbench/arena.hpp"
#include "tutorbench/btrank.hpp"
#include "tutorbench/provider.hpp"

namespace tutorbench {

// Exit codes shared by every subcommand.
inline constexpr int kExitOk = 0;
inline constexpr int kExitFailure = 1;       // unexpected error
inline constexpr int kExitConfigError = 2;   // configuration / input validation
inline constexpr int kExitProviderError = 3; // endpoint call failed after retries
inline constexpr int kExitJudgeParse = 4;    // judge decisions unusable after re-ask
inline constexpr int kExitFitDegeneracy = 5; // disconnected or separated data

/// Everything a tournament needs: quiz path, roster, judge, run parameters.
/// Secrets stay in environment variables named by each endpoint.
struct Config {
  std::filesystem::path quiz_path;
  std::vector<ModelEndpoint> endpoints;  // tutors plus the judge
  std::string judge;                     // name of the judging endpoint
  /// Tutor roster; empty means every endpoint except the judge, in config
  /// order. Listing the judge here is a validation error.
  std::vector<std::string> models;
  int runs = 10;
  OrderPolicy order_policy = OrderPolicy::randomized;
  double tie_credit = 0.5;
  std::filesystem::path output_dir = "out";
  std::optional<std::uint64_t> seed;
  std::optional<std::filesystem::path> replay_dir;  // serve transcripts from here, no network
  std::string template_version = "paper-v1";
};

/// Parse the JSON config file. Unknown keys are rejected so typos cannot
/// silently change an experiment. Throws Error.
Config load_config(const std::filesystem::path& path);

/// Validate RunPlan invariants and endpoint parameters; called before any
/// network activity. Throws PlanInvalid or Error.
void validate_config(const Config& config);

/// The tutor roster implied by a config: every endpoint except the judge.
std::vector<std::string> tutor_names(const Config& config);

// Subcommands. Each writes diagnostics naming the failed stage to `err` and
// returns one of the exit codes above.

/// generate -> judge -> tally -> fit -> report, all artifacts under
/// config.output_dir (store in runs/ + cache/, verdicts.jsonl, manifest.json,
/// report/).
int cmd_run(const Config& config, std::ostream& err);

/// Re-judge transcripts persisted by an earlier run: generation must hit the
/// store, judging may go to the network for new judge fingerprints.
int cmd_judge(const Config& config, std::ostream& err);

/// verdicts.jsonl -> report/tally.{csv,md}.
int cmd_tally(const std::filesystem::path& verdicts_path,
              const std::filesystem::path& out_dir, std::ostream& err);

/// tally.csv -> fit + full report bundle; offline reanalysis entry point.
int cmd_fit(const std::filesystem::path& tally_csv_path, const FitOptions& opts,
            const std::filesystem::path& out_dir, std::ostream& out, std::ostream& err);

/// Regenerate the report bundle from persisted fit.json + tally.csv.
int cmd_report(const std::filesystem::path& out_dir, std::ostream& err);

}  // namespace tutorbench
