#ifndef MIXHOM_EXPERIMENTS_HPP
#define MIXHOM_EXPERIMENTS_HPP

#include <cstdint>
#include <span>
#include <vector>

#include "mixhom/em.hpp"
#include "mixhom/lrt.hpp"

namespace mixhom {

// One cell of a tuning experiment: penalty strength a_n and sample size n,
// the simulated rejection rate q_hat at nominal level q, and the logit
// discrepancy y = logit(q_hat) - logit(q).
struct DesignRow {
  double a_n = 0.0;
  std::size_t n = 0;
  Kernel kernel;
  double y = 0.0;
  double q_hat = 0.0;
  double q = 0.0;
};

// Calibrated penalty-strength curve a_n(n) = 0.2 + exp(c0 + c1/n), the
// root of the fitted discrepancy regression.
struct TuningModel {
  double c0 = 0.0;
  double c1 = 0.0;
  double a_n(std::size_t n) const;
};

// logit(q_hat) - logit(q); both arguments must lie strictly inside (0,1).
double discrepancy(double q_hat, double q);

struct Type1Result {
  std::vector<double> levels;
  std::vector<double> critical_values;  // limiting-law quantiles per level
  std::vector<double> rates;            // rejection fractions per level
  std::size_t reps = 0;
};

// Size study: `reps` standard-kernel samples of size n, the EM statistic on
// each, rejection rates at the limiting-law critical values.  Deterministic
// given seed for any config.threads.
Type1Result type1_experiment(const Kernel& kernel, std::size_t n,
                             std::size_t reps, std::span<const double> levels,
                             const EmConfig& config, std::uint64_t seed);

// Power study: `reps` samples of size n from the two-component alternative
// altG, fraction of statistics exceeding the finite-sample critical value
// taken from the sorted null table (see bootstrap_null).
double power_experiment(const Kernel& kernel, const MixingDistribution& altG,
                        std::size_t n, std::size_t reps, double level,
                        std::span<const double> null_table, std::uint64_t seed,
                        StatisticKind kind = StatisticKind::em,
                        const EmConfig& config = {});

// Ordinary least squares of y on {1, 1/n, log(a_n - 0.2)}; the tuning curve
// solves the fitted regression's y = 0.
TuningModel fit_tuning_model(std::span<const DesignRow> rows);

// The embedded 16-row discrepancy table (a_n in {0.3,...,0.6} crossed with
// n in {50,100,300,500}, nominal level 5%) for one kernel family; the
// Student-t column is t with 10 degrees of freedom.
std::vector<DesignRow> table1_rows(Family family);

// One draw from the two-component mixture alpha1 f(.; theta1) +
// (1-alpha1) f(.; theta2).
double sample_mixture_one(const Kernel& kernel, const MixingDistribution& G,
                          Rng& rng);

}  // namespace mixhom

#endif  // MIXHOM_EXPERIMENTS_HPP
