#include "mixhom/experiments.hpp"

#include <algorithm>
#include <cmath>
#include <exception>
#include <mutex>
#include <set>
#include <thread>
#include <vector>

#include <Eigen/Dense>

#include "mixhom/errors.hpp"

namespace mixhom {

double TuningModel::a_n(std::size_t n) const {
  if (n == 0) throw domain_error("experiments: a_n(n) requires n >= 1");
  return 0.2 + std::exp(c0 + c1 / static_cast<double>(n));
}

double discrepancy(double q_hat, double q) {
  if (!(q_hat > 0.0 && q_hat < 1.0 && q > 0.0 && q < 1.0)) {
    throw domain_error("experiments: discrepancy needs rates inside (0,1)");
  }
  return (std::log(q_hat) - std::log1p(-q_hat)) -
         (std::log(q) - std::log1p(-q));
}

namespace {

// Replicate loop shared by the size and power studies: statistic r ->
// out[r], replicate-indexed substreams, optional threading.
template <typename StatFn>
void run_replicates(std::size_t reps, int threads, StatFn&& stat_fn,
                    std::vector<double>& out) {
  out.assign(reps, 0.0);
  std::exception_ptr first_error;
  std::mutex error_mutex;
  auto run_range = [&](std::size_t begin, std::size_t end) {
    try {
      for (std::size_t r = begin; r < end; ++r) out[r] = stat_fn(r);
    } catch (...) {
      const std::lock_guard<std::mutex> lock(error_mutex);
      if (!first_error) first_error = std::current_exception();
    }
  };
  const auto t_count = static_cast<std::size_t>(std::min<std::size_t>(
      static_cast<std::size_t>(std::max(threads, 1)), reps));
  if (t_count <= 1) {
    run_range(0, reps);
  } else {
    std::vector<std::thread> pool;
    pool.reserve(t_count);
    for (std::size_t t = 0; t < t_count; ++t) {
      pool.emplace_back(run_range, reps * t / t_count,
                        reps * (t + 1) / t_count);
    }
    for (auto& th : pool) th.join();
  }
  if (first_error) std::rethrow_exception(first_error);
}

}  // namespace

Type1Result type1_experiment(const Kernel& kernel, std::size_t n,
                             std::size_t reps, std::span<const double> levels,
                             const EmConfig& config, std::uint64_t seed) {
  if (n < 10) throw domain_error("experiments: need at least 10 observations");
  if (reps < 100) throw config_error("experiments: need at least 100 reps");
  if (levels.empty()) throw config_error("experiments: no levels given");
  for (const double q : levels) {
    if (!(q > 0.0 && q < 1.0)) {
      throw config_error("experiments: levels must lie inside (0,1)");
    }
  }

  const LimitLaw law = limit_law_for(kernel, config.calibration_draws,
                                     config.calibration_seed, config.threads);
  Type1Result result;
  result.reps = reps;
  result.levels.assign(levels.begin(), levels.end());
  result.critical_values.reserve(levels.size());
  for (const double q : levels) {
    result.critical_values.push_back(critical_value(law, q));
  }

  std::vector<double> stats;
  run_replicates(
      reps, config.threads,
      [&](std::size_t r) {
        Rng rng(seed, r);
        std::vector<double> x(n);
        for (std::size_t i = 0; i < n; ++i) x[i] = sample_one(kernel, rng);
        return em_statistic(kernel, x, config, nullptr).statistic;
      },
      stats);

  result.rates.reserve(levels.size());
  for (const double crit : result.critical_values) {
    std::size_t hits = 0;
    for (const double s : stats) hits += (s > crit) ? 1 : 0;
    result.rates.push_back(static_cast<double>(hits) /
                           static_cast<double>(reps));
  }
  return result;
}

double power_experiment(const Kernel& kernel, const MixingDistribution& altG,
                        std::size_t n, std::size_t reps, double level,
                        std::span<const double> null_table, std::uint64_t seed,
                        StatisticKind kind, const EmConfig& config) {
  if (n < 10) throw domain_error("experiments: need at least 10 observations");
  if (reps < 100) throw config_error("experiments: need at least 100 reps");
  if (!(level > 0.0 && level < 1.0)) {
    throw config_error("experiments: level must lie inside (0,1)");
  }
  if (!(altG.alpha1 > 0.0 && altG.alpha1 < 1.0) || !(altG.theta1.sigma > 0.0) ||
      !(altG.theta2.sigma > 0.0)) {
    throw domain_error("experiments: invalid alternative mixture");
  }
  if (null_table.empty()) {
    throw domain_error("experiments: empty null table");
  }
  const std::vector<double> sorted_table(null_table.begin(), null_table.end());
  const double crit = empirical_upper_quantile(sorted_table, level);

  std::vector<double> stats;
  run_replicates(
      reps, config.threads,
      [&](std::size_t r) {
        Rng rng(seed, r);
        std::vector<double> x(n);
        for (std::size_t i = 0; i < n; ++i) {
          x[i] = sample_mixture_one(kernel, altG, rng);
        }
        if (kind == StatisticKind::em) {
          return em_statistic(kernel, x, config, nullptr).statistic;
        }
        return lrt_statistic(kernel, x).statistic;
      },
      stats);

  std::size_t hits = 0;
  for (const double s : stats) hits += (s > crit) ? 1 : 0;
  return static_cast<double>(hits) / static_cast<double>(reps);
}

TuningModel fit_tuning_model(std::span<const DesignRow> rows) {
  if (rows.size() < 4) {
    throw domain_error("experiments: tuning regression needs >= 4 rows");
  }
  std::set<std::size_t> n_values;
  std::set<double> a_values;
  for (const DesignRow& row : rows) {
    if (!(row.a_n > 0.2)) {
      throw domain_error("experiments: tuning rows require a_n > 0.2");
    }
    if (row.n == 0) throw domain_error("experiments: tuning row with n = 0");
    n_values.insert(row.n);
    a_values.insert(row.a_n);
  }
  if (n_values.size() < 2 || a_values.size() < 2) {
    throw domain_error("experiments: singular design (need >= 2 distinct n and a_n)");
  }

  const auto m = static_cast<Eigen::Index>(rows.size());
  Eigen::MatrixXd X(m, 3);
  Eigen::VectorXd y(m);
  for (Eigen::Index i = 0; i < m; ++i) {
    const DesignRow& row = rows[static_cast<std::size_t>(i)];
    X(i, 0) = 1.0;
    X(i, 1) = 1.0 / static_cast<double>(row.n);
    X(i, 2) = std::log(row.a_n - 0.2);
    y(i) = row.y;
  }
  Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(X);
  if (qr.rank() < 3) {
    throw domain_error("experiments: singular design matrix");
  }
  const Eigen::Vector3d beta = qr.solve(y);
  if (std::fabs(beta(2)) < 1e-12 * (1.0 + std::fabs(beta(0)))) {
    throw numerical_error("experiments: no a_n dependence; tuning curve undefined");
  }
  return TuningModel{-beta(0) / beta(2), -beta(1) / beta(2)};
}

std::vector<DesignRow> table1_rows(Family family) {
  // Discrepancies y at nominal level q = 0.05, row order
  // (n, a_n) = (50,0.3), (50,0.4), ..., (500,0.6).
  static constexpr double kLogistic[16] = {
      -0.1200, -0.2761, -0.4115, -0.5845, 0.0413, -0.0561, -0.1485, -0.2520,
      0.1328,  0.0753,  0.0063,  -0.0539, 0.0929, 0.0534,  0.0209,  -0.0213};
  static constexpr double kExtreme[16] = {
      0.0270, -0.1129, -0.2897, -0.3993, 0.1253, 0.0188, -0.0990, -0.1952,
      0.1197, 0.0733,  0.0188,  -0.0299, 0.1328, 0.0851, 0.0413,  0.0000};
  static constexpr double kStudentT[16] = {
      -0.0234, -0.2207, -0.3664, -0.5525, 0.0146, -0.1083, -0.2104, -0.3175,
      0.1804,  0.1366,  0.0909,  0.0393,  0.0454, 0.0146,  -0.0170, -0.0517};
  static constexpr double kNormal[16] = {
      -0.1778, -0.4395, -0.5845, -0.7525, -0.0106, -0.1557, -0.2815, -0.3783,
      0.0291,  -0.0256, -0.0853, -0.1509, 0.0126,  -0.0213, -0.0650, -0.1037};
  static constexpr std::size_t kSizes[4] = {50, 100, 300, 500};
  static constexpr double kStrengths[4] = {0.3, 0.4, 0.5, 0.6};

  const double* column = nullptr;
  Kernel kernel{family, family == Family::student_t ? 10.0 : 0.0};
  switch (family) {
    case Family::logistic: column = kLogistic; break;
    case Family::extreme_value: column = kExtreme; break;
    case Family::student_t: column = kStudentT; break;
    case Family::normal: column = kNormal; break;
  }
  if (column == nullptr) {
    throw config_error("experiments: unknown kernel family");
  }

  constexpr double kQ = 0.05;
  const double logit_q = std::log(kQ) - std::log1p(-kQ);
  std::vector<DesignRow> rows;
  rows.reserve(16);
  for (std::size_t i = 0; i < 4; ++i) {
    for (std::size_t j = 0; j < 4; ++j) {
      DesignRow row;
      row.n = kSizes[i];
      row.a_n = kStrengths[j];
      row.kernel = kernel;
      row.y = column[4 * i + j];
      row.q = kQ;
      // Invert the logit so that y == logit(q_hat) - logit(q) exactly.
      const double t = row.y + logit_q;
      row.q_hat = 1.0 / (1.0 + std::exp(-t));
      rows.push_back(row);
    }
  }
  return rows;
}

double sample_mixture_one(const Kernel& kernel, const MixingDistribution& G,
                          Rng& rng) {
  const Theta& theta = (rng.uniform() < G.alpha1) ? G.theta1 : G.theta2;
  return theta.mu + theta.sigma * sample_one(kernel, rng);
}

}  // namespace mixhom
