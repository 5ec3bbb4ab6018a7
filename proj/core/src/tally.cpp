#include "tutorbench/tally.hpp"

#include <algorithm>
#include <cassert>
#include <sstream>

#include "tutorbench/errors.hpp"

namespace tutorbench {

namespace {

/// Minimal CSV field quoting: quote only when the field contains a comma,
/// quote, or newline.
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

std::vector<std::string> parse_csv_row(const std::string& line, size_t lineno) {
  std::vector<std::string> fields;
  std::string current;
  bool quoted = false;
  for (size_t i = 0; i < line.size(); ++i) {
    char c = line[i];
    if (quoted) {
      if (c == '"') {
        if (i + 1 < line.size() && line[i + 1] == '"') {
          current.push_back('"');
          ++i;
        } else {
          quoted = false;
        }
      } else {
        current.push_back(c);
      }
    } else if (c == '"' && current.empty()) {
      quoted = true;
    } else if (c == ',') {
      fields.push_back(std::move(current));
      current.clear();
    } else {
      current.push_back(c);
    }
  }
  if (quoted) throw Error("line " + std::to_string(lineno) + ": unterminated quoted field");
  fields.push_back(std::move(current));
  return fields;
}

int parse_count(const std::string& s, size_t lineno, const char* what) {
  try {
    size_t pos = 0;
    int v = std::stoi(s, &pos);
    if (pos != s.size() || v < 0) throw std::invalid_argument(s);
    return v;
  } catch (const std::exception&) {
    throw Error("line " + std::to_string(lineno) + ": " + what + " must be a non-negative integer, got \"" + s + "\"");
  }
}

}  // namespace

WinTieLossMatrix::WinTieLossMatrix(std::vector<std::string> models) : models_(std::move(models)) {
  wins_.assign(models_.size(), std::vector<int>(models_.size(), 0));
  ties_.assign(models_.size(), std::vector<int>(models_.size(), 0));
}

WinTieLossMatrix WinTieLossMatrix::from_counts(
    std::vector<std::string> models,
    const std::vector<std::tuple<std::string, std::string, int, int, int>>& pair_counts) {
  WinTieLossMatrix m(std::move(models));
  for (const auto& [a, b, wins_a, ties, wins_b] : pair_counts) {
    m.add_counts(static_cast<size_t>(m.index_of(a)), static_cast<size_t>(m.index_of(b)), wins_a,
                 ties, wins_b);
  }
  return m;
}

int WinTieLossMatrix::index_of(const std::string& model) const {
  auto it = std::find(models_.begin(), models_.end(), model);
  if (it == models_.end()) throw Error("model \"" + model + "\" is not in the matrix");
  return static_cast<int>(it - models_.begin());
}

WinTieLossMatrix::PairCounts WinTieLossMatrix::pair(size_t i, size_t j) const {
  return {wins_[i][j], ties_[i][j], wins_[j][i]};
}

int WinTieLossMatrix::total(size_t i, size_t j) const {
  return wins_[i][j] + ties_[i][j] + wins_[j][i];
}

int WinTieLossMatrix::total_verdicts() const {
  int n = 0;
  for (size_t i = 0; i < size(); ++i) {
    for (size_t j = i + 1; j < size(); ++j) n += total(i, j);
  }
  return n;
}

std::optional<int> WinTieLossMatrix::comparisons_per_pair() const {
  std::optional<int> common;
  for (size_t i = 0; i < size(); ++i) {
    for (size_t j = i + 1; j < size(); ++j) {
      int t = total(i, j);
      if (!common) common = t;
      else if (*common != t) return std::nullopt;
    }
  }
  return common;
}

void WinTieLossMatrix::add_outcome(size_t i, size_t j, Outcome outcome_for_i_vs_j) {
  assert(i != j && i < size() && j < size());
  switch (outcome_for_i_vs_j) {
    case Outcome::a_wins:
      ++wins_[i][j];
      break;
    case Outcome::tie:
      ++ties_[i][j];
      ++ties_[j][i];
      break;
    case Outcome::b_wins:
      ++wins_[j][i];
      break;
  }
}

void WinTieLossMatrix::add_counts(size_t i, size_t j, int wins_i, int ties, int wins_j) {
  assert(i != j && i < size() && j < size());
  wins_[i][j] += wins_i;
  wins_[j][i] += wins_j;
  ties_[i][j] += ties;
  ties_[j][i] += ties;
}

WinTieLossMatrix tally(std::span<const Verdict> verdicts, std::vector<std::string> model_order) {
  if (!verdicts.empty()) {
    for (const Verdict& v : verdicts) {
      if (v.quiz_digest != verdicts.front().quiz_digest) {
        throw MixedDigests("verdicts mix quiz digests " + verdicts.front().quiz_digest + " and " +
                           v.quiz_digest);
      }
    }
  }

  std::vector<std::string> models = std::move(model_order);
  if (models.empty()) {
    for (const Verdict& v : verdicts) {
      for (const std::string& name : {v.model_a, v.model_b}) {
        if (std::find(models.begin(), models.end(), name) == models.end()) {
          models.push_back(name);
        }
      }
    }
  }

  WinTieLossMatrix m(std::move(models));
  for (const Verdict& v : verdicts) {
    size_t i = static_cast<size_t>(m.index_of(v.model_a));
    size_t j = static_cast<size_t>(m.index_of(v.model_b));
    m.add_outcome(i, j, v.outcome);
  }
  return m;
}

std::vector<std::vector<double>> effective_win_matrix(const WinTieLossMatrix& m,
                                                      double tie_credit) {
  assert(tie_credit >= 0.0 && tie_credit <= 1.0);
  size_t n = m.size();
  std::vector<std::vector<double>> credit(n, std::vector<double>(n, 0.0));
  for (size_t i = 0; i < n; ++i) {
    for (size_t j = 0; j < n; ++j) {
      if (i == j) continue;
      credit[i][j] = m.wins(i, j) + tie_credit * m.ties(i, j);
    }
  }
  return credit;
}

std::string tally_to_csv(const WinTieLossMatrix& m) {
  std::string out = "model_a,model_b,wins_a,ties,wins_b\n";
  for (size_t i = 0; i < m.size(); ++i) {
    for (size_t j = i + 1; j < m.size(); ++j) {
      auto [wins_a, ties, wins_b] = m.pair(i, j);
      out += csv_field(m.models()[i]) + "," + csv_field(m.models()[j]) + "," +
             std::to_string(wins_a) + "," + std::to_string(ties) + "," + std::to_string(wins_b) +
             "\n";
    }
  }
  return out;
}

WinTieLossMatrix tally_from_csv(const std::string& csv_text) {
  std::istringstream in(csv_text);
  std::string line;
  size_t lineno = 0;

  if (!std::getline(in, line)) throw Error("line 1: empty tally CSV");
  ++lineno;
  if (!line.empty() && line.back() == '\r') line.pop_back();
  if (line != "model_a,model_b,wins_a,ties,wins_b") {
    throw Error("line 1: expected header \"model_a,model_b,wins_a,ties,wins_b\", got \"" + line +
                "\"");
  }

  std::vector<std::string> models;
  std::vector<std::tuple<std::string, std::string, int, int, int>> rows;
  auto note_model = [&models](const std::string& name) {
    if (std::find(models.begin(), models.end(), name) == models.end()) models.push_back(name);
  };

  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    std::vector<std::string> fields = parse_csv_row(line, lineno);
    if (fields.size() != 5) {
      throw Error("line " + std::to_string(lineno) + ": expected 5 fields, got " +
                  std::to_string(fields.size()));
    }
    if (fields[0] == fields[1]) {
      throw Error("line " + std::to_string(lineno) + ": model compared against itself");
    }
    int wins_a = parse_count(fields[2], lineno, "wins_a");
    int ties = parse_count(fields[3], lineno, "ties");
    int wins_b = parse_count(fields[4], lineno, "wins_b");
    note_model(fields[0]);
    note_model(fields[1]);
    rows.emplace_back(fields[0], fields[1], wins_a, ties, wins_b);
  }
  return WinTieLossMatrix::from_counts(std::move(models), rows);
}

std::string tally_to_markdown(const WinTieLossMatrix& m, const std::vector<size_t>& display_order) {
  std::vector<size_t> order = display_order;
  if (order.empty()) {
    order.resize(m.size());
    for (size_t i = 0; i < m.size(); ++i) order[i] = i;
  }
  assert(order.size() == m.size());

  std::string out = "| Model |";
  for (size_t c : order) out += " " + m.models()[c] + " |";
  out += "\n|";
  for (size_t k = 0; k <= order.size(); ++k) out += " --- |";
  out += "\n";
  for (size_t r : order) {
    out += "| " + m.models()[r] + " |";
    for (size_t c : order) {
      if (r == c) {
        out += " – |";  // en dash on the diagonal
      } else {
        auto [w, t, l] = m.pair(r, c);
        out += " " + std::to_string(w) + "–" + std::to_string(t) + "–" +
               std::to_string(l) + " |";
      }
    }
    out += "\n";
  }
  return out;
}

}  // namespace tutorbench
