#ifndef MIXHOM_EM_HPP
#define MIXHOM_EM_HPP

#include <cstdint>
#include <limits>
#include <span>
#include <utility>
#include <vector>

#include "mixhom/homogeneous.hpp"
#include "mixhom/kernel.hpp"
#include "mixhom/limit_law.hpp"
#include "mixhom/penalty.hpp"

namespace mixhom {

// Two-support-point mixing distribution G:
// density  alpha1 f(x; theta1) + (1 - alpha1) f(x; theta2).
struct MixingDistribution {
  double alpha1 = 0.5;
  Theta theta1;
  Theta theta2;
  double alpha2() const { return 1.0 - alpha1; }
};

struct EmConfig {
  std::vector<double> pis = {0.1, 0.3, 0.5};
  int K = 3;
  // Penalty strength; any value <= 0 means "auto" (the per-family empirical
  // formula at the observed sample size).
  double a_n = 0.0;
  // Multi-start count for the Step-1 fit (the quantile-pair recipe yields
  // 16; an extra start at the null fit is always added).
  int starts = 16;
  // Case-I calibration (ignored when a precomputed law is supplied).
  std::size_t calibration_draws = 100000;
  std::uint64_t calibration_seed = 20260814;
  int threads = 1;
};

// One initial-proportion track: the per-iteration statistic values
// M^(1..K) and the final fitted mixture.
struct PiTrace {
  double pi = 0.5;
  std::vector<double> m_trace;
  MixingDistribution fitted;
  double m_final = 0.0;
};

struct EmTestResult {
  double statistic = 0.0;
  std::vector<PiTrace> per_pi;
  NullFit null_fit;
  double p_value = std::numeric_limits<double>::quiet_NaN();
  LimitCase limit_case;
  double a_n = 0.0;  // value actually used
};

// Posterior weight of component 1 for every observation, computed in
// log space (never NaN, each in [0,1]).
std::vector<double> e_step(const Kernel& kernel, const MixingDistribution& G,
                           std::span<const double> data);

// Exact maximizer over alpha in (0,1) of
//   weight_sum log(alpha) + (n - weight_sum) log(1-alpha) + p_alpha(alpha),
// via the two closed-form branch candidates (weight_sum+1)/(n+1) clipped to
// (0, 1/2] and weight_sum/(n+1) clipped to [1/2, 1); ties toward 1/2.
double m_step_alpha(double weight_sum, std::size_t n);

// Maximizer of sum_i w_i log f(x_i; theta) + p_sigma(sigma).  Damped Newton
// in (mu, log sigma) with a Nelder-Mead fallback; the scale penalty forces
// the maximizer into the interior.  warm, when given, seeds the search.
Theta m_step_component(const Kernel& kernel, std::span<const double> data,
                       std::span<const double> weights,
                       const PenaltyConfig& cfg, const Theta* warm = nullptr);

// Step-1 fit: maximizes the penalized likelihood over (theta1, theta2) with
// the mixing proportions frozen at (pi, 1-pi).  Multi-start EM; starts pair
// the sample quantiles {(q25,q75), (q10,q50), (q50,q90), (q50,q50)} with
// sigma_hat * {1/2, 1} crossed per component, plus a start at the null fit
// so the null point is never beaten by the starts themselves.
std::pair<Theta, Theta> initial_pair_fit(const Kernel& kernel,
                                         std::span<const double> data,
                                         double pi, const PenaltyConfig& cfg,
                                         const NullFit* null_fit = nullptr);

// log-likelihood of the two-component mixture.
double mixture_loglik(const Kernel& kernel, const MixingDistribution& G,
                      std::span<const double> data);

// mixture_loglik + p_alpha(alpha1) + p_sigma(sigma1) + p_sigma(sigma2).
double penalized_loglik(const Kernel& kernel, const MixingDistribution& G,
                        std::span<const double> data,
                        const PenaltyConfig& cfg);

// The full test: per-pi Step-1 fit, K E/M passes, statistic
// max_j 2{penalized(G_j) - penalized(null)}, and a p-value from the
// limiting law.  `law` may be null to skip calibration (statistic only,
// p-value NaN) -- the simulation harness uses that path.
EmTestResult em_statistic(const Kernel& kernel, std::span<const double> data,
                          const EmConfig& config, const LimitLaw* law);

// Convenience overload that classifies the kernel and simulates the Case-I
// table itself (config.calibration_draws / calibration_seed).
EmTestResult em_statistic(const Kernel& kernel, std::span<const double> data,
                          const EmConfig& config);

}  // namespace mixhom

#endif  // MIXHOM_EM_HPP
