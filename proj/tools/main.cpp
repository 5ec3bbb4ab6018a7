#include <CLI11.hpp>

#include <cstdint>
#include <iostream>
#include <optional>
#include <string>

#include "tutorbench/cli.hpp"
#include "tutorbench/errors.hpp"

namespace {

struct TournamentArgs {
  std::string config_path;
  std::optional<int> runs;
  std::optional<std::uint64_t> seed;
  std::optional<std::string> replay_dir;
  std::optional<double> tie_credit;
  std::optional<std::string> order_policy;
  std::optional<std::string> out_dir;
};

void add_tournament_options(CLI::App* cmd, TournamentArgs& args) {
  cmd->add_option("--config", args.config_path, "JSON config file")->required();
  cmd->add_option("--runs", args.runs, "Override: number of runs");
  cmd->add_option("--seed", args.seed, "Override: presentation/sampling seed");
  cmd->add_option("--replay", args.replay_dir,
                  "Serve transcripts from this store; no network access");
  cmd->add_option("--tie-credit", args.tie_credit, "Override: tie credit in [0,1]");
  cmd->add_option("--order-policy", args.order_policy,
                  "Override: fixed | randomized | both_orders");
  cmd->add_option("--out", args.out_dir, "Override: output directory");
}

int load_and_dispatch(const TournamentArgs& args,
                      int (*command)(const tutorbench::Config&, std::ostream&)) {
  tutorbench::Config config;
  try {
    config = tutorbench::load_config(args.config_path);
    if (args.runs) config.runs = *args.runs;
    if (args.seed) config.seed = *args.seed;
    if (args.replay_dir) config.replay_dir = *args.replay_dir;
    if (args.tie_credit) config.tie_credit = *args.tie_credit;
    if (args.order_policy) {
      config.order_policy = tutorbench::order_policy_from_string(*args.order_policy);
    }
    if (args.out_dir) config.output_dir = *args.out_dir;
  } catch (const tutorbench::Error& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return tutorbench::kExitConfigError;
  }
  return command(config, std::cerr);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Pairwise LLM tutoring benchmark: generate guidance, judge pairs, rank models"};
  app.require_subcommand(1);

  TournamentArgs run_args;
  CLI::App* run_cmd = app.add_subcommand("run", "Full pipeline: generate, judge, tally, fit, report");
  add_tournament_options(run_cmd, run_args);

  TournamentArgs judge_args;
  CLI::App* judge_cmd =
      app.add_subcommand("judge", "Re-judge transcripts persisted by an earlier run");
  add_tournament_options(judge_cmd, judge_args);

  std::string verdicts_path;
  std::string tally_out = "out";
  CLI::App* tally_cmd = app.add_subcommand("tally", "Aggregate a verdict log into the tally tables");
  tally_cmd->add_option("--verdicts", verdicts_path, "verdicts.jsonl from a run")->required();
  tally_cmd->add_option("--out", tally_out, "Output directory");

  std::string tally_csv_path;
  std::string fit_out = "out";
  tutorbench::FitOptions fit_opts;
  CLI::App* fit_cmd = app.add_subcommand("fit", "Fit strengths from a tally CSV and report");
  fit_cmd->add_option("--tally", tally_csv_path, "tally.csv export")->required();
  fit_cmd->add_option("--tie-credit", fit_opts.tie_credit, "Tie credit in [0,1]");
  fit_cmd->add_option("--prior-epsilon", fit_opts.prior_epsilon,
                      "Pseudo-wins added both ways per pair (0 = plain MLE)");
  fit_cmd->add_option("--out", fit_out, "Output directory");

  std::string report_out = "out";
  CLI::App* report_cmd =
      app.add_subcommand("report", "Regenerate the report bundle from persisted artifacts");
  report_cmd->add_option("--out", report_out, "Output directory holding report/fit.json");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    int code = app.exit(e);
    return code == 0 ? 0 : tutorbench::kExitConfigError;
  }

  try {
    if (run_cmd->parsed()) return load_and_dispatch(run_args, tutorbench::cmd_run);
    if (judge_cmd->parsed()) return load_and_dispatch(judge_args, tutorbench::cmd_judge);
    if (tally_cmd->parsed()) return tutorbench::cmd_tally(verdicts_path, tally_out, std::cerr);
    if (fit_cmd->parsed()) {
      return tutorbench::cmd_fit(tally_csv_path, fit_opts, fit_out, std::cout, std::cerr);
    }
    if (report_cmd->parsed()) return tutorbench::cmd_report(report_out, std::cerr);
  } catch (const std::exception& e) {
    std::cerr << "unexpected error: " << e.what() << "\n";
    return tutorbench::kExitFailure;
  }
  return tutorbench::kExitFailure;
}
