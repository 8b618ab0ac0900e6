#ifndef MIXHOM_HOMOGENEOUS_HPP
#define MIXHOM_HOMOGENEOUS_HPP

#include <span>

#include "mixhom/kernel.hpp"

namespace mixhom {

// Single-component maximum likelihood fit.  penalized_loglik is the value of
// the penalized objective at the symmetric null point
// (alpha = 1/2, theta_hat, theta_hat): since the alpha penalty vanishes at
// 1/2 and the scale penalty equals -a_n at sigma_hat, it is loglik - 2*a_n.
struct NullFit {
  double mu_hat = 0.0;
  double sigma_hat = 1.0;
  double loglik = 0.0;
  double penalized_loglik = 0.0;
};

// Maximizes sum_i log f(x_i; mu, sigma).  Normal kernel in closed form;
// other kernels by damped Newton in (mu, log sigma) started at the sample
// moments, with a Nelder-Mead fallback.  The scale penalty is a function of
// sigma_hat itself, so the sigma_hat reported here (and consumed by every
// penalty) is the plain unpenalized MLE; a_n only shifts penalized_loglik.
//
// Requires n >= 3 and nonzero spread; throws domain_error otherwise, and
// numerical_error if both optimizers fail.
NullFit fit_null(const Kernel& kernel, std::span<const double> data,
                 double a_n = 0.0);

}  // namespace mixhom

#endif  // MIXHOM_HOMOGENEOUS_HPP
