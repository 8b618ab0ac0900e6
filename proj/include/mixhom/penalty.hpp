#ifndef MIXHOM_PENALTY_HPP
#define MIXHOM_PENALTY_HPP

#include <cstddef>

#include "mixhom/kernel.hpp"

namespace mixhom {

// Tuning state for the scale penalty.  sigma_hat is the PLAIN (unpenalized)
// null-model scale MLE of the data under analysis, which is what makes the
// whole procedure location-scale invariant.
struct PenaltyConfig {
  double a_n = 0.0;
  double sigma_hat = 1.0;
};

// Mixing-proportion penalty log(1 - |1 - 2*alpha|): zero at 1/2, divergent
// at the ends, symmetric about 1/2.  Throws domain_error outside (0,1).
double p_alpha(double alpha);

// Scale penalty -a_n * { sigma_hat^2/sigma^2 + log(sigma^2/sigma_hat^2) }.
// Maximized at sigma = sigma_hat with value -a_n; diverges to -inf at both
// sigma -> 0+ and sigma -> inf.  Throws domain_error for sigma <= 0.
double p_sigma(double sigma, const PenaltyConfig& cfg);

// Sample-size-dependent penalty strength, one empirical formula per family
// (every Student-t dof shares the Student-t line).
double a_n_formula(const Kernel& kernel, std::size_t n);

}  // namespace mixhom

#endif  // MIXHOM_PENALTY_HPP
