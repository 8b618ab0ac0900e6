#ifndef MIXHOM_LIMIT_LAW_HPP
#define MIXHOM_LIMIT_LAW_HPP

#include <Eigen/Dense>
#include <cstdint>
#include <vector>

#include "mixhom/score_geometry.hpp"

namespace mixhom {

// Calibration object for the test statistic's limiting distribution.
// Case I carries an empirical quantile table of Monte Carlo draws from the
// nonstandard sup-form law; Case II and the normal-degenerate branch are
// exactly chi-square with 2 degrees of freedom and need no table.
struct LimitLaw {
  LimitCase limit_case;
  std::vector<double> quantile_table;  // sorted, Case I only
  std::size_t draws = 0;
  std::uint64_t seed = 0;
};

// One draw of the Case-I limit: sup over v of 2 (v^2)' w - (v^2)' B (v^2),
// where v^2 = (v1^2, 2 v1 v2, v2^2).  The sup is computed by the polar
// reduction: with u(phi) = (cos^2 phi, 2 cos phi sin phi, sin^2 phi) the
// supremum equals max over phi of  max(u'w, 0)^2 / (u' B u), evaluated on a
// 720-point grid and refined by golden-section search.  Always >= 0.
// Throws numerical_error if u' B u <= 0 anywhere on the grid (the Case-I
// condition fails).
double limit_draw(const Eigen::Matrix3d& tildeB22, const Eigen::Vector3d& w);

// Monte Carlo table of the Case-I law: draws of w ~ N(0, tildeB22) via the
// symmetric square root, each mapped through limit_draw; sorted.
// Deterministic given seed regardless of thread count (per-draw substreams).
LimitLaw simulate_limit(const Eigen::Matrix3d& tildeB22, std::size_t draws,
                        std::uint64_t seed, int threads = 1);

// Table-free chi-square(2) law for Case II / normal-degenerate.
LimitLaw chi_square_law(const LimitCase& limit_case);

// Classify the kernel and build the appropriate law (simulating only for
// Case I).
LimitLaw limit_law_for(const Kernel& kernel, std::size_t draws,
                       std::uint64_t seed, int threads = 1);

// Case I: (1 + #{draws >= stat}) / (draws + 1); Case II / normal:
// exp(-stat/2) clamped to (0, 1].
double p_value(const LimitLaw& law, double stat);

// Upper critical value at the given level (e.g. 0.05): empirical
// (1-level)-quantile of the table for Case I, -2 log(level) for chi-square.
double critical_value(const LimitLaw& law, double level);

// Shared helper: upper quantile of a sorted Monte Carlo table using the
// (r+1)/(N+1) tail convention.
double empirical_upper_quantile(const std::vector<double>& sorted_table,
                                double level);

}  // namespace mixhom

#endif  // MIXHOM_LIMIT_LAW_HPP
