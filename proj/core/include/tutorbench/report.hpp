#pragma once

#include <filesystem>
#include <string>

#include "tutorbench/btrank.hpp"
#include "tutorbench/tally.hpp"

namespace tutorbench {

/// Every rendered result artifact. Regenerating from identical inputs yields
/// byte-identical text; all numbers are printed at 3 decimals, rounded
/// half-away-from-zero.
struct ReportBundle {
  std::string tally_md;
  std::string tally_csv;
  std::string fit_md;
  std::string fit_csv;
  std::string prob_md;
  std::string prob_csv;
  std::string forest_svg;
  std::string fit_json;
  std::string manifest_echo;  // run provenance block, JSON text
};

/// Forest plot: one row per model sorted by descending strength, a point
/// marker at the estimate, a horizontal segment spanning the 95% CI, and a
/// vertical reference line at zero.
std::string render_forest_plot(const BtFit& fit);

struct RenderedTables {
  std::string tally_md;
  std::string tally_csv;
  std::string fit_md;
  std::string fit_csv;
  std::string prob_md;
  std::string prob_csv;
};

/// Markdown and CSV variants of the tally, fit and probability tables, rows
/// ordered by descending fitted strength.
/// Throws ModelSetMismatch when `m` and `fit` cover different model sets.
RenderedTables render_tables(const WinTieLossMatrix& m, const BtFit& fit);

ReportBundle make_report_bundle(const WinTieLossMatrix& m, const BtFit& fit,
                                const FitOptions& opts, std::string manifest_echo);

/// Write the bundle under dir: tally.{md,csv}, fit.{md,csv,json},
/// probs.{md,csv}, forest.svg, manifest.json.
void write_report_bundle(const std::filesystem::path& dir, const ReportBundle& bundle);

}  // namespace tutorbench
