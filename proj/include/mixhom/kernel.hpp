#ifndef MIXHOM_KERNEL_HPP
#define MIXHOM_KERNEL_HPP

#include <array>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "mixhom/rng.hpp"

namespace mixhom {

enum class Family { logistic, extreme_value, student_t, normal };

// Location-scale family descriptor.  The standardized density f0 fixes the
// family; members are f(x; theta) = f0((x - mu)/sigma) / sigma.
struct Kernel {
  Family family = Family::logistic;
  double dof = 0.0;  // Student-t degrees of freedom; ignored otherwise.

  Kernel() = default;
  Kernel(Family f, double nu = 0.0);

  // Accepts "logistic", "extreme", "normal", or "t<dof>" (e.g. "t10").
  static Kernel parse(const std::string& name);
  std::string name() const;
};

// Component parameters theta = (mu, sigma).
struct Theta {
  double mu = 0.0;
  double sigma = 1.0;
};

// First- and (halved) second-derivative ratios of f(x; theta) at
// theta0 = (0, 1):
//   b1 = (d/dmu, d/dsigma) f / f
//   b2 = (d2/dmu2, d2/dmu dsigma, d2/dsigma2) f / (2 f)
struct ScoreVector {
  std::array<double, 2> b1{};
  std::array<double, 3> b2{};
};

// log f(x; theta); finite for every real x (all four families have full
// support).  Throws domain_error for non-finite x or sigma <= 0.
double log_density(const Kernel& kernel, double x, const Theta& theta);

// Standardized density f0 and its log; z is the standardized coordinate.
double log_f0(const Kernel& kernel, double z);
double f0(const Kernel& kernel, double z);

// psi = (log f0)' and psi' = (log f0)'', the building blocks of the score
// vectors and of every Newton step in the fitting code.
double psi(const Kernel& kernel, double z);
double psi_prime(const Kernel& kernel, double z);

// Fused (psi, psi') evaluation sharing one transcendental; the fitting hot
// loops use this instead of two separate calls.
void psi_pair(const Kernel& kernel, double z, double& p, double& pp);

// Analytic score vector at theta0 = (0,1); cross-checked against finite
// differences in the test suite.
ScoreVector score_vector(const Kernel& kernel, double x);

// One standardized draw (theta0 = (0,1)).
double sample_one(const Kernel& kernel, Rng& rng);

// n independent standardized draws, deterministic given seed.
// Throws domain_error when n == 0.
std::vector<double> sample(const Kernel& kernel, std::size_t n,
                           std::uint64_t seed);

}  // namespace mixhom

#endif  // MIXHOM_KERNEL_HPP
