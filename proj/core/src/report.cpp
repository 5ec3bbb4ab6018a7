#include "tutorbench/report.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <set>

#include "tutorbench/errors.hpp"
#include "tutorbench/util.hpp"

namespace tutorbench {

namespace {

// Fixed forest-plot geometry. Labels are anchored, never measured, so the
// output does not depend on font metrics.
constexpr double kWidth = 640.0;
constexpr double kMarginLeft = 170.0;
constexpr double kMarginRight = 40.0;
constexpr double kMarginTop = 30.0;
constexpr double kMarginBottom = 52.0;
constexpr double kRowHeight = 36.0;
constexpr int kTicks = 5;

std::string xml_escape(const std::string& s) {
  std::string out;
  out.reserve(s.size());
  for (char c : s) {
    switch (c) {
      case '&': out += "&amp;"; break;
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      case '"': out += "&quot;"; break;
      default: out.push_back(c);
    }
  }
  return out;
}

std::string num(double v) { return format_fixed(v, 2); }

/// Indices of fit.models sorted by descending strength, stable on ties.
std::vector<size_t> strength_order(const BtFit& fit) {
  std::vector<size_t> order(fit.models.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](size_t a, size_t b) {
    return fit.strengths[a] > fit.strengths[b];
  });
  return order;
}

std::string csv_field(const std::string& s) {
  if (s.find_first_of(",\"\n") == std::string::npos) return s;
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += "\"\"";
    else out.push_back(c);
  }
  out += "\"";
  return out;
}

}  // namespace

std::string render_forest_plot(const BtFit& fit) {
  const size_t n = fit.models.size();
  const double height = kMarginTop + kRowHeight * static_cast<double>(n) + kMarginBottom;

  std::string svg;
  svg += "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" + num(kWidth) + "\" height=\"" +
         num(height) + "\" viewBox=\"0 0 " + num(kWidth) + " " + num(height) + "\">\n";
  svg += "  <rect x=\"0\" y=\"0\" width=\"" + num(kWidth) + "\" height=\"" + num(height) +
         "\" fill=\"white\"/>\n";

  if (n == 0) {
    svg += "</svg>\n";
    return svg;
  }

  double lo = 0.0;
  double hi = 0.0;
  for (size_t i = 0; i < n; ++i) {
    lo = std::min(lo, fit.ci95[i].first);
    hi = std::max(hi, fit.ci95[i].second);
  }
  if (hi - lo < 1e-12) {
    lo -= 1.0;
    hi += 1.0;
  }
  double pad = 0.08 * (hi - lo);
  lo -= pad;
  hi += pad;

  const double plot_left = kMarginLeft;
  const double plot_right = kWidth - kMarginRight;
  const double plot_top = kMarginTop;
  const double plot_bottom = kMarginTop + kRowHeight * static_cast<double>(n);
  auto x_of = [&](double v) {
    return plot_left + (v - lo) / (hi - lo) * (plot_right - plot_left);
  };

  // Zero reference line.
  svg += "  <line class=\"refline\" x1=\"" + num(x_of(0.0)) + "\" y1=\"" + num(plot_top) +
         "\" x2=\"" + num(x_of(0.0)) + "\" y2=\"" + num(plot_bottom) +
         "\" stroke=\"#888888\" stroke-width=\"1\" stroke-dasharray=\"4 3\"/>\n";

  // Axis with evenly spaced, labelled ticks.
  svg += "  <line class=\"axis\" x1=\"" + num(plot_left) + "\" y1=\"" + num(plot_bottom) +
         "\" x2=\"" + num(plot_right) + "\" y2=\"" + num(plot_bottom) +
         "\" stroke=\"black\" stroke-width=\"1\"/>\n";
  for (int t = 0; t < kTicks; ++t) {
    double v = lo + (hi - lo) * static_cast<double>(t) / (kTicks - 1);
    double x = x_of(v);
    svg += "  <line class=\"tick\" x1=\"" + num(x) + "\" y1=\"" + num(plot_bottom) + "\" x2=\"" +
           num(x) + "\" y2=\"" + num(plot_bottom + 5.0) + "\" stroke=\"black\" stroke-width=\"1\"/>\n";
    svg += "  <text class=\"tick-label\" x=\"" + num(x) + "\" y=\"" + num(plot_bottom + 18.0) +
           "\" font-size=\"11\" text-anchor=\"middle\">" + format_fixed(v, 2) + "</text>\n";
  }
  svg += "  <text class=\"axis-title\" x=\"" + num((plot_left + plot_right) / 2.0) + "\" y=\"" +
         num(plot_bottom + 38.0) + "\" font-size=\"12\" text-anchor=\"middle\">BT strength</text>\n";

  std::vector<size_t> order = strength_order(fit);
  for (size_t row = 0; row < order.size(); ++row) {
    size_t i = order[row];
    double cy = plot_top + kRowHeight * (static_cast<double>(row) + 0.5);
    svg += "  <g class=\"row\" data-model=\"" + xml_escape(fit.models[i]) + "\">\n";
    svg += "    <text class=\"model-label\" x=\"" + num(kMarginLeft - 12.0) + "\" y=\"" +
           num(cy + 4.0) + "\" font-size=\"12\" text-anchor=\"end\">" +
           xml_escape(fit.models[i]) + "</text>\n";
    svg += "    <line class=\"ci\" x1=\"" + num(x_of(fit.ci95[i].first)) + "\" y1=\"" + num(cy) +
           "\" x2=\"" + num(x_of(fit.ci95[i].second)) + "\" y2=\"" + num(cy) +
           "\" stroke=\"black\" stroke-width=\"1.5\"/>\n";
    svg += "    <circle class=\"estimate\" cx=\"" + num(x_of(fit.strengths[i])) + "\" cy=\"" +
           num(cy) + "\" r=\"4\" fill=\"red\"/>\n";
    svg += "  </g>\n";
  }
  svg += "</svg>\n";
  return svg;
}

RenderedTables render_tables(const WinTieLossMatrix& m, const BtFit& fit) {
  if (std::set<std::string>(m.models().begin(), m.models().end()) !=
      std::set<std::string>(fit.models.begin(), fit.models.end())) {
    throw ModelSetMismatch("tally and fit cover different model sets");
  }

  RenderedTables out;
  std::vector<size_t> fit_order = strength_order(fit);

  // Tally, rows and columns in display (descending strength) order.
  std::vector<size_t> tally_order;
  for (size_t k : fit_order) {
    tally_order.push_back(static_cast<size_t>(m.index_of(fit.models[k])));
  }
  out.tally_md = tally_to_markdown(m, tally_order);
  out.tally_csv = tally_to_csv(m);

  // Fit table.
  out.fit_md = "| Model | BT Strength | SE | 95% CI |\n| --- | --- | --- | --- |\n";
  out.fit_csv = "model,strength,se,ci_low,ci_high\n";
  for (size_t i : fit_order) {
    const auto& [ci_lo, ci_hi] = fit.ci95[i];
    out.fit_md += "| " + fit.models[i] + " | " + format_fixed(fit.strengths[i], 3) + " | " +
                  format_fixed(fit.std_errors[i], 3) + " | [" + format_fixed(ci_lo, 3) + ", " +
                  format_fixed(ci_hi, 3) + "] |\n";
    out.fit_csv += csv_field(fit.models[i]) + "," + format_fixed(fit.strengths[i], 3) + "," +
                   format_fixed(fit.std_errors[i], 3) + "," + format_fixed(ci_lo, 3) + "," +
                   format_fixed(ci_hi, 3) + "\n";
  }

  // Predicted win-probability matrix.
  out.prob_md = "| Model |";
  out.prob_csv = "model";
  for (size_t c : fit_order) {
    out.prob_md += " " + fit.models[c] + " |";
    out.prob_csv += "," + csv_field(fit.models[c]);
  }
  out.prob_md += "\n|";
  for (size_t k = 0; k <= fit_order.size(); ++k) out.prob_md += " --- |";
  out.prob_md += "\n";
  out.prob_csv += "\n";
  for (size_t r : fit_order) {
    out.prob_md += "| " + fit.models[r] + " |";
    out.prob_csv += csv_field(fit.models[r]);
    for (size_t c : fit_order) {
      if (r == c) {
        out.prob_md += " — |";  // em dash on the diagonal
        out.prob_csv += ",";
      } else {
        out.prob_md += " " + format_fixed(fit.prob_matrix[r][c], 3) + " |";
        out.prob_csv += "," + format_fixed(fit.prob_matrix[r][c], 3);
      }
    }
    out.prob_md += "\n";
    out.prob_csv += "\n";
  }
  return out;
}

ReportBundle make_report_bundle(const WinTieLossMatrix& m, const BtFit& fit,
                                const FitOptions& opts, std::string manifest_echo) {
  RenderedTables tables = render_tables(m, fit);
  ReportBundle bundle;
  bundle.tally_md = std::move(tables.tally_md);
  bundle.tally_csv = std::move(tables.tally_csv);
  bundle.fit_md = std::move(tables.fit_md);
  bundle.fit_csv = std::move(tables.fit_csv);
  bundle.prob_md = std::move(tables.prob_md);
  bundle.prob_csv = std::move(tables.prob_csv);
  bundle.forest_svg = render_forest_plot(fit);
  bundle.fit_json = bt_fit_to_json(fit, opts);
  bundle.manifest_echo = std::move(manifest_echo);
  return bundle;
}

void write_report_bundle(const std::filesystem::path& dir, const ReportBundle& bundle) {
  std::filesystem::create_directories(dir);
  auto write = [&dir](const char* name, const std::string& bytes) {
    std::ofstream out(dir / name, std::ios::binary | std::ios::trunc);
    if (!out) throw Error("cannot write report file: " + (dir / name).string());
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  };
  write("tally.md", bundle.tally_md);
  write("tally.csv", bundle.tally_csv);
  write("fit.md", bundle.fit_md);
  write("fit.csv", bundle.fit_csv);
  write("probs.md", bundle.prob_md);
  write("probs.csv", bundle.prob_csv);
  write("forest.svg", bundle.forest_svg);
  write("fit.json", bundle.fit_json);
  write("manifest.json", bundle.manifest_echo);
}

}  // namespace tutorbench
