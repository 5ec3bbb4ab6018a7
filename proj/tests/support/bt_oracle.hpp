#pragma once

#include <array>
#include <cmath>
#include <vector>

// Independent oracle for the 3-model paired-comparison fit: brute-force grid
// maximization of the half-credit log-likelihood over the mean-centered
// strength plane. Shares no code with the library's optimizer.
namespace testsupport {

/// credit[i][j] = effective wins of i over j (wins + tie_credit * ties).
inline double oracle_log_likelihood(const std::vector<std::vector<double>>& credit,
                                    const std::vector<double>& s) {
  const size_t n = s.size();
  double ll = 0.0;
  for (size_t i = 0; i < n; ++i) {
    for (size_t j = 0; j < n; ++j) {
      if (i == j || credit[i][j] <= 0.0) continue;
      // log P(i beats j) = -log(1 + exp(s_j - s_i))
      double d = s[j] - s[i];
      double log_p = d > 0.0 ? -(d + std::log1p(std::exp(-d))) : -std::log1p(std::exp(d));
      ll += credit[i][j] * log_p;
    }
  }
  return ll;
}

/// Multi-resolution dense grid search over (s1, s2), s3 = -s1-s2. Each round
/// scans a (grid x grid) lattice and shrinks the window around the best cell;
/// the final lattice stride is below `target_step`.
inline std::vector<double> oracle_grid_fit3(const std::vector<std::vector<double>>& credit,
                                            double half_range = 8.0, int grid = 41,
                                            double target_step = 1e-4) {
  double c1 = 0.0;
  double c2 = 0.0;
  double half = half_range;
  double best1 = 0.0;
  double best2 = 0.0;
  while (true) {
    const double step = 2.0 * half / (grid - 1);
    double best_ll = -1e300;
    for (int a = 0; a < grid; ++a) {
      for (int b = 0; b < grid; ++b) {
        double s1 = c1 - half + step * a;
        double s2 = c2 - half + step * b;
        double ll = oracle_log_likelihood(credit, {s1, s2, -s1 - s2});
        if (ll > best_ll) {
          best_ll = ll;
          best1 = s1;
          best2 = s2;
        }
      }
    }
    if (step < target_step) break;
    c1 = best1;
    c2 = best2;
    half = 2.0 * step;  // next window spans two old strides around the best cell
  }
  return {best1, best2, -best1 - best2};
}

}  // namespace testsupport
