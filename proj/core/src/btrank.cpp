#include "tutorbench/btrank.hpp"

#include <Eigen/Dense>
#include <nlohmann/json.hpp>

#include <algorithm>
#include <cassert>
#include <cmath>
#include <numeric>

#include "tutorbench/errors.hpp"

namespace tutorbench {

namespace {

using nlohmann::json;

/// Total comparisons per pair, with the optional prior added symmetrically.
std::vector<std::vector<double>> pair_totals(const WinTieLossMatrix& m, double prior_epsilon) {
  size_t n = m.size();
  std::vector<std::vector<double>> totals(n, std::vector<double>(n, 0.0));
  for (size_t i = 0; i < n; ++i) {
    for (size_t j = 0; j < n; ++j) {
      if (i == j) continue;
      totals[i][j] = m.total(i, j) + 2.0 * prior_epsilon;
    }
  }
  return totals;
}

void check_connected(const WinTieLossMatrix& m, const std::vector<std::vector<double>>& totals) {
  size_t n = m.size();
  std::vector<int> component(n, -1);
  int components = 0;
  for (size_t start = 0; start < n; ++start) {
    if (component[start] != -1) continue;
    std::vector<size_t> stack{start};
    component[start] = components;
    while (!stack.empty()) {
      size_t u = stack.back();
      stack.pop_back();
      for (size_t v = 0; v < n; ++v) {
        if (v != u && component[v] == -1 && totals[u][v] > 0.0) {
          component[v] = components;
          stack.push_back(v);
        }
      }
    }
    ++components;
  }
  if (components > 1) {
    std::string msg = "comparison graph is disconnected: ";
    for (int c = 0; c < components; ++c) {
      if (c > 0) msg += " | ";
      msg += "{";
      bool first = true;
      for (size_t i = 0; i < n; ++i) {
        if (component[i] == c) {
          if (!first) msg += ", ";
          msg += m.models()[i];
          first = false;
        }
      }
      msg += "}";
    }
    throw DisconnectedGraph(msg);
  }
}

double log_likelihood(const std::vector<std::vector<double>>& credit,
                      const std::vector<double>& odds) {
  size_t n = odds.size();
  double ll = 0.0;
  for (size_t i = 0; i < n; ++i) {
    for (size_t j = 0; j < n; ++j) {
      if (i == j || credit[i][j] <= 0.0) continue;
      ll += credit[i][j] * std::log(odds[i] / (odds[i] + odds[j]));
    }
  }
  return ll;
}

/// SEs from the pseudoinverse of the information implied by `totals` at
/// `strengths`, via the rank-completion identity pinv(L) = (L + J/n)^-1 - J/n
/// (valid when null(L) = span(1)).
std::vector<double> std_errors_from_totals(const std::vector<std::vector<double>>& totals,
                                           std::span<const double> strengths) {
  const size_t n = strengths.size();
  Eigen::MatrixXd info = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(n),
                                               static_cast<Eigen::Index>(n));
  for (size_t i = 0; i < n; ++i) {
    for (size_t j = 0; j < n; ++j) {
      if (i == j || totals[i][j] <= 0.0) continue;
      double p = bt_win_probability(strengths[i], strengths[j]);
      double w = totals[i][j] * p * (1.0 - p);
      info(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = -w;
      info(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(i)) += w;
    }
  }
  Eigen::MatrixXd ones =
      Eigen::MatrixXd::Constant(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(n),
                                1.0 / static_cast<double>(n));
  Eigen::MatrixXd shifted = info + ones;
  Eigen::FullPivLU<Eigen::MatrixXd> lu(shifted);
  if (!lu.isInvertible()) {
    throw SingularBeyondNullSpace(
        "information matrix rank below n-1; strengths are not jointly identified");
  }
  Eigen::MatrixXd pinv = lu.inverse() - ones;
  std::vector<double> se(n);
  for (size_t i = 0; i < n; ++i) {
    double v = pinv(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(i));
    se[i] = std::sqrt(std::max(0.0, v));
  }
  return se;
}

}  // namespace

double bt_win_probability(double strength_i, double strength_j) {
  double d = strength_i - strength_j;
  if (d >= 0.0) {
    return 1.0 / (1.0 + std::exp(-d));
  }
  double e = std::exp(d);
  return e / (1.0 + e);
}

BtFit bt_fit(const WinTieLossMatrix& m, const FitOptions& opts) {
  assert(opts.tie_credit >= 0.0 && opts.tie_credit <= 1.0);
  assert(opts.tolerance > 0.0);
  assert(opts.max_iterations >= 1);

  const size_t n = m.size();
  BtFit fit;
  fit.models = m.models();
  if (n == 0) {
    fit.converged = true;
    return fit;
  }
  if (n == 1) {
    fit.strengths = {0.0};
    fit.std_errors = {0.0};
    fit.ci95 = {{0.0, 0.0}};
    fit.prob_matrix = {{0.0}};
    fit.converged = true;
    return fit;
  }

  // Effective credits, with the optional symmetric prior. The likelihood is
  // sum over pairs of credit_ij*ln(p_ij) + credit_ji*ln(p_ji), so the games
  // count seen by the optimizer is the credit total per pair (equal to the
  // verdict count at the default half credit).
  std::vector<std::vector<double>> credit = effective_win_matrix(m, opts.tie_credit);
  if (opts.prior_epsilon > 0.0) {
    for (size_t i = 0; i < n; ++i) {
      for (size_t j = 0; j < n; ++j) {
        if (i != j) credit[i][j] += opts.prior_epsilon;
      }
    }
  }
  std::vector<std::vector<double>> totals(n, std::vector<double>(n, 0.0));
  for (size_t i = 0; i < n; ++i) {
    for (size_t j = 0; j < n; ++j) {
      if (i != j) totals[i][j] = credit[i][j] + credit[j][i];
    }
  }

  check_connected(m, totals);

  for (size_t i = 0; i < n; ++i) {
    double won = 0.0;
    double played = 0.0;
    for (size_t j = 0; j < n; ++j) {
      if (i == j) continue;
      won += credit[i][j];
      played += totals[i][j];
    }
    if (won <= 0.0) {
      throw DegenerateSeparation("model \"" + m.models()[i] +
                                 "\" has zero effective win credit; the maximum-likelihood "
                                 "strength diverges. Collect more runs or enable prior_epsilon.");
    }
    if (won >= played) {
      throw DegenerateSeparation("model \"" + m.models()[i] +
                                 "\" holds all effective win credit; the maximum-likelihood "
                                 "strength diverges. Collect more runs or enable prior_epsilon.");
    }
  }

  // Minorization–maximization on the odds scale:
  //   odds_i <- credit_i_total / sum_j totals_ij / (odds_i + odds_j)
  // renormalized to geometric mean 1 each sweep, so log odds stay centered.
  std::vector<double> odds(n, 1.0);
  std::vector<double> next(n, 0.0);
  std::vector<double> credit_total(n, 0.0);
  for (size_t i = 0; i < n; ++i) {
    credit_total[i] = std::accumulate(credit[i].begin(), credit[i].end(), 0.0);
  }

#ifndef NDEBUG
  double prev_ll = log_likelihood(credit, odds);
#endif

  bool converged = false;
  int iterations = 0;
  while (iterations < opts.max_iterations) {
    ++iterations;
    for (size_t i = 0; i < n; ++i) {
      double denom = 0.0;
      for (size_t j = 0; j < n; ++j) {
        if (i == j || totals[i][j] <= 0.0) continue;
        denom += totals[i][j] / (odds[i] + odds[j]);
      }
      next[i] = credit_total[i] / denom;
    }
    double log_gm = 0.0;
    for (double v : next) log_gm += std::log(v);
    log_gm /= static_cast<double>(n);
    double scale = std::exp(-log_gm);
    for (double& v : next) v *= scale;

#ifndef NDEBUG
    double ll = log_likelihood(credit, next);
    assert(ll >= prev_ll - 1e-9 * std::max(1.0, std::fabs(prev_ll)));
    prev_ll = ll;
#endif

    double delta = 0.0;
    for (size_t i = 0; i < n; ++i) {
      delta = std::max(delta, std::fabs(std::log(next[i]) - std::log(odds[i])));
    }
    odds.swap(next);
    if (delta < opts.tolerance) {
      converged = true;
      break;
    }
  }

  fit.strengths.resize(n);
  for (size_t i = 0; i < n; ++i) fit.strengths[i] = std::log(odds[i]);
  double mean = std::accumulate(fit.strengths.begin(), fit.strengths.end(), 0.0) /
                static_cast<double>(n);
  for (double& s : fit.strengths) s -= mean;

  fit.converged = converged;
  fit.iterations = iterations;

  // Stationarity residual: effective credit vs expected wins at the fit.
  double residual = 0.0;
  for (size_t i = 0; i < n; ++i) {
    double expected = 0.0;
    for (size_t j = 0; j < n; ++j) {
      if (i == j || totals[i][j] <= 0.0) continue;
      expected += totals[i][j] * bt_win_probability(fit.strengths[i], fit.strengths[j]);
    }
    residual = std::max(residual, std::fabs(credit_total[i] - expected));
  }
  fit.final_gradient_norm = residual;

  // SEs from the information of the totals actually fitted (these include
  // the prior when prior_epsilon is enabled).
  fit.std_errors = std_errors_from_totals(totals, fit.strengths);
  fit.ci95 = bt_confidence_intervals(fit.strengths, fit.std_errors, opts.z_value);
  fit.prob_matrix = bt_predict_matrix(fit.strengths);
  return fit;
}

std::vector<std::vector<double>> bt_fisher_information(const WinTieLossMatrix& m,
                                                       std::span<const double> strengths) {
  const size_t n = m.size();
  assert(strengths.size() == n);
  std::vector<std::vector<double>> info(n, std::vector<double>(n, 0.0));
  for (size_t i = 0; i < n; ++i) {
    for (size_t j = 0; j < n; ++j) {
      if (i == j) continue;
      double nij = m.total(i, j);
      if (nij <= 0.0) continue;
      double p = bt_win_probability(strengths[i], strengths[j]);
      double w = nij * p * (1.0 - p);
      info[i][j] = -w;
      info[i][i] += w;
    }
  }
  return info;
}

std::vector<double> bt_std_errors(const WinTieLossMatrix& m, std::span<const double> strengths) {
  const size_t n = m.size();
  assert(strengths.size() == n);
  if (n == 0) return {};
  if (n == 1) return {0.0};
  return std_errors_from_totals(pair_totals(m, 0.0), strengths);
}

std::vector<std::vector<double>> bt_predict_matrix(std::span<const double> strengths) {
  const size_t n = strengths.size();
  std::vector<std::vector<double>> prob(n, std::vector<double>(n, 0.0));
  for (size_t i = 0; i < n; ++i) {
    for (size_t j = i + 1; j < n; ++j) {
      double p = bt_win_probability(strengths[i], strengths[j]);
      prob[i][j] = p;
      prob[j][i] = 1.0 - p;  // complement exact by construction
    }
  }
  return prob;
}

std::vector<std::pair<double, double>> bt_confidence_intervals(std::span<const double> strengths,
                                                               std::span<const double> std_errors,
                                                               double z_value) {
  assert(strengths.size() == std_errors.size());
  assert(z_value > 0.0);
  std::vector<std::pair<double, double>> out(strengths.size());
  for (size_t i = 0; i < strengths.size(); ++i) {
    out[i] = {strengths[i] - z_value * std_errors[i], strengths[i] + z_value * std_errors[i]};
  }
  return out;
}

std::string bt_fit_to_json(const BtFit& fit, const FitOptions& opts) {
  json j;
  j["models"] = fit.models;
  j["strengths"] = fit.strengths;
  j["std_errors"] = fit.std_errors;
  json cis = json::array();
  for (const auto& [lo, hi] : fit.ci95) cis.push_back(json::array({lo, hi}));
  j["ci95"] = std::move(cis);
  j["prob_matrix"] = fit.prob_matrix;
  j["converged"] = fit.converged;
  j["iterations"] = fit.iterations;
  j["final_gradient_norm"] = fit.final_gradient_norm;
  j["options"] = {{"tie_credit", opts.tie_credit},
                  {"tolerance", opts.tolerance},
                  {"max_iterations", opts.max_iterations},
                  {"z_value", opts.z_value},
                  {"prior_epsilon", opts.prior_epsilon}};
  return j.dump(2) + "\n";
}

std::pair<BtFit, FitOptions> bt_fit_from_json(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::parse_error& e) {
    throw Error(std::string("fit report is not valid JSON: ") + e.what());
  }
  try {
    BtFit fit;
    fit.models = j.at("models").get<std::vector<std::string>>();
    fit.strengths = j.at("strengths").get<std::vector<double>>();
    fit.std_errors = j.at("std_errors").get<std::vector<double>>();
    for (const json& ci : j.at("ci95")) {
      fit.ci95.emplace_back(ci.at(0).get<double>(), ci.at(1).get<double>());
    }
    fit.prob_matrix = j.at("prob_matrix").get<std::vector<std::vector<double>>>();
    fit.converged = j.at("converged").get<bool>();
    fit.iterations = j.at("iterations").get<int>();
    fit.final_gradient_norm = j.at("final_gradient_norm").get<double>();
    FitOptions opts;
    const json& o = j.at("options");
    opts.tie_credit = o.at("tie_credit").get<double>();
    opts.tolerance = o.at("tolerance").get<double>();
    opts.max_iterations = o.at("max_iterations").get<int>();
    opts.z_value = o.at("z_value").get<double>();
    opts.prior_epsilon = o.at("prior_epsilon").get<double>();
    return {std::move(fit), opts};
  } catch (const json::exception& e) {
    throw Error(std::string("fit report has missing or mistyped fields: ") + e.what());
  }
}

}  // namespace tutorbench
