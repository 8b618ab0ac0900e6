#include "mixhom/penalty.hpp"

#include <cmath>

#include "mixhom/errors.hpp"

namespace mixhom {

double p_alpha(double alpha) {
  if (!(alpha > 0.0 && alpha < 1.0)) {
    throw domain_error("penalty: p_alpha requires alpha in (0,1)");
  }
  return std::log(1.0 - std::fabs(1.0 - 2.0 * alpha));
}

double p_sigma(double sigma, const PenaltyConfig& cfg) {
  if (!(sigma > 0.0)) {
    throw domain_error("penalty: p_sigma requires sigma > 0");
  }
  const double r2 = (cfg.sigma_hat / sigma) * (cfg.sigma_hat / sigma);
  return -cfg.a_n * (r2 - std::log(r2));
}

double a_n_formula(const Kernel& kernel, std::size_t n) {
  if (n == 0) {
    throw domain_error("penalty: a_n_formula requires n >= 1");
  }
  const double nn = static_cast<double>(n);
  switch (kernel.family) {
    case Family::logistic:
      return 0.2 + std::exp(-0.959 - 119.899 / nn);
    case Family::extreme_value:
      return 0.2 + std::exp(-0.986 - 77.677 / nn);
    case Family::student_t:
      return 0.2 + std::exp(-1.032 - 103.737 / nn);
    case Family::normal:
      return 0.2 + std::exp(-1.410 - 114.433 / nn);
  }
  throw config_error("penalty: unsupported family for a_n");
}

}  // namespace mixhom
