#pragma once

#include <optional>
#include <span>
#include <string>
#include <vector>

#include "tutorbench/arena.hpp"

namespace tutorbench {

/// Per-pair win/tie/loss counts aggregated over runs. The model order is
/// stable on input; display ordering is a reporting concern.
class WinTieLossMatrix {
 public:
  struct PairCounts {
    int wins_a = 0;
    int ties = 0;
    int wins_b = 0;
  };

  WinTieLossMatrix() = default;
  explicit WinTieLossMatrix(std::vector<std::string> models);

  /// Build directly from counts; `wins_a` is from the perspective of
  /// models[i] against models[j].
  static WinTieLossMatrix from_counts(
      std::vector<std::string> models,
      const std::vector<std::tuple<std::string, std::string, int, int, int>>& pair_counts);

  const std::vector<std::string>& models() const { return models_; }
  size_t size() const { return models_.size(); }

  int index_of(const std::string& model) const;  // throws Error if absent

  PairCounts pair(size_t i, size_t j) const;       // counts for (models[i], models[j])
  int wins(size_t i, size_t j) const { return wins_[i][j]; }
  int ties(size_t i, size_t j) const { return ties_[i][j]; }
  int total(size_t i, size_t j) const;             // all verdicts recorded for the pair
  int total_verdicts() const;

  /// The per-pair verdict count when it is uniform across pairs.
  std::optional<int> comparisons_per_pair() const;

  void add_outcome(size_t i, size_t j, Outcome outcome_for_i_vs_j);
  void add_counts(size_t i, size_t j, int wins_i, int ties, int wins_j);

 private:
  std::vector<std::string> models_;
  std::vector<std::vector<int>> wins_;  // wins_[i][j] = wins of i over j
  std::vector<std::vector<int>> ties_;  // symmetric
};

/// Aggregate canonical verdicts into the matrix. Model order is
/// first-appearance order unless `model_order` overrides it.
/// Throws MixedDigests when verdicts reference different quiz versions.
WinTieLossMatrix tally(std::span<const Verdict> verdicts,
                       std::vector<std::string> model_order = {});

/// credit[i][j] = wins(i,j) + tie_credit * ties(i,j). Each pair's credits sum
/// to the pair total. tie_credit must lie in [0, 1].
std::vector<std::vector<double>> effective_win_matrix(const WinTieLossMatrix& m,
                                                      double tie_credit);

/// CSV with header `model_a,model_b,wins_a,ties,wins_b`, one row per pair.
std::string tally_to_csv(const WinTieLossMatrix& m);

/// Parse the tally CSV export. Throws Error naming the offending line.
WinTieLossMatrix tally_from_csv(const std::string& csv_text);

/// Markdown table in row-perspective "w–t–l" layout. `display_order` (indices
/// into m.models()) selects row/column order; empty = input order.
std::string tally_to_markdown(const WinTieLossMatrix& m,
                              const std::vector<size_t>& display_order = {});

}  // namespace tutorbench
