#pragma once

#include <span>
#include <string>
#include <utility>
#include <vector>

#include "tutorbench/tally.hpp"

namespace tutorbench {

struct FitOptions {
  double tie_credit = 0.5;     // fraction of a tie credited to each side
  double tolerance = 1e-10;    // max per-iteration strength change to stop
  int max_iterations = 100000;
  double z_value = 1.96;       // Wald interval width
  /// Opt-in regularization: add this many pseudo-wins in both directions of
  /// every pair. 0 keeps the plain maximum-likelihood fit, which refuses
  /// separated data instead of shrinking it.
  double prior_epsilon = 0.0;

  friend bool operator==(const FitOptions&, const FitOptions&) = default;
};

/// Maximum-likelihood strengths with Wald uncertainty and the implied
/// pairwise win probabilities. Strengths are mean-centered: only differences
/// are identified, so the mean-zero representative is reported.
struct BtFit {
  std::vector<std::string> models;
  std::vector<double> strengths;    // sum == 0 within 1e-9
  std::vector<double> std_errors;
  std::vector<std::pair<double, double>> ci95;
  std::vector<std::vector<double>> prob_matrix;  // [i][j] = P(i beats j); diagonal 0
  bool converged = false;
  int iterations = 0;
  double final_gradient_norm = 0.0;  // max_i |credit_i - expected wins_i|
};

/// Fit the paired-comparison strength model by minorization–maximization on
/// the odds scale. Ties contribute `tie_credit` of a win to each side.
/// Throws DisconnectedGraph (naming the components) and DegenerateSeparation
/// (a model holds zero or maximal effective credit). A fit that runs out of
/// iterations is returned with converged == false.
BtFit bt_fit(const WinTieLossMatrix& m, const FitOptions& opts = {});

/// Fisher information of the fit at `strengths`: L_ii = sum_j n_ij p_ij (1-p_ij),
/// L_ij = -n_ij p_ij (1-p_ij). Rows sum to zero; the matrix is singular with
/// null space spanned by the all-ones vector.
std::vector<std::vector<double>> bt_fisher_information(const WinTieLossMatrix& m,
                                                       std::span<const double> strengths);

/// Standard errors: square roots of the diagonal of the Moore–Penrose
/// pseudoinverse of the Fisher information, computed via
/// (L + J/n)^-1 - J/n. Throws SingularBeyondNullSpace when rank(L) < n-1.
std::vector<double> bt_std_errors(const WinTieLossMatrix& m, std::span<const double> strengths);

/// prob[i][j] = logistic(s_i - s_j); complements hold exactly by construction.
std::vector<std::vector<double>> bt_predict_matrix(std::span<const double> strengths);

/// Wald intervals (s_i - z*se_i, s_i + z*se_i).
std::vector<std::pair<double, double>> bt_confidence_intervals(std::span<const double> strengths,
                                                               std::span<const double> std_errors,
                                                               double z_value);

/// Numerically stable logistic of a strength difference.
double bt_win_probability(double strength_i, double strength_j);

/// Fit report: strengths, SEs, CIs, probability matrix, convergence
/// diagnostics and the options used.
std::string bt_fit_to_json(const BtFit& fit, const FitOptions& opts);
std::pair<BtFit, FitOptions> bt_fit_from_json(const std::string& text);  // throws Error

}  // namespace tutorbench
