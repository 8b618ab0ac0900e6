#include "mixhom/kernel.hpp"

#include <cctype>
#include <cmath>
#include <cstdio>
#include <numbers>

#include "mixhom/errors.hpp"

namespace mixhom {

namespace {

// Normalizing constant of the Student-t log-density.
double t_log_const(double nu) {
  return std::lgamma(0.5 * (nu + 1.0)) - std::lgamma(0.5 * nu) -
         0.5 * std::log(nu * std::numbers::pi);
}

constexpr double kHalfLog2Pi = 0.9189385332046727417803297;  // log(2*pi)/2

}  // namespace

Kernel::Kernel(Family f, double nu) : family(f), dof(nu) {
  if (family == Family::student_t && !(dof > 2.0)) {
    throw domain_error(
        "kernel: student_t requires dof > 2 (finite-variance scores)");
  }
}

Kernel Kernel::parse(const std::string& name) {
  if (name == "logistic") return Kernel(Family::logistic);
  if (name == "extreme") return Kernel(Family::extreme_value);
  if (name == "normal") return Kernel(Family::normal);
  if (name.size() > 1 && name[0] == 't' &&
      (std::isdigit(static_cast<unsigned char>(name[1])) || name[1] == '.')) {
    std::size_t used = 0;
    double nu = 0.0;
    try {
      nu = std::stod(name.substr(1), &used);
    } catch (const std::exception&) {
      throw config_error("kernel: cannot parse dof in '" + name + "'");
    }
    if (used + 1 != name.size()) {
      throw config_error("kernel: trailing junk in '" + name + "'");
    }
    if (!(nu > 2.0)) {
      throw config_error("kernel: student_t dof must exceed 2, got '" + name +
                         "'");
    }
    return Kernel(Family::student_t, nu);
  }
  throw config_error(
      "kernel: unknown name '" + name +
      "' (expected logistic, extreme, t<dof>, or normal)");
}

std::string Kernel::name() const {
  switch (family) {
    case Family::logistic:
      return "logistic";
    case Family::extreme_value:
      return "extreme";
    case Family::normal:
      return "normal";
    case Family::student_t: {
      char buf[32];
      if (dof == static_cast<double>(static_cast<long>(dof))) {
        std::snprintf(buf, sizeof(buf), "t%ld", static_cast<long>(dof));
      } else {
        std::snprintf(buf, sizeof(buf), "t%g", dof);
      }
      return buf;
    }
  }
  return "unknown";
}

double log_f0(const Kernel& kernel, double z) {
  switch (kernel.family) {
    case Family::logistic: {
      // f0 = e^{-|z|} / (1 + e^{-|z|})^2, written to avoid overflow.
      const double a = std::fabs(z);
      return -a - 2.0 * std::log1p(std::exp(-a));
    }
    case Family::extreme_value:
      return z - std::exp(z);
    case Family::normal:
      return -0.5 * z * z - kHalfLog2Pi;
    case Family::student_t: {
      const double nu = kernel.dof;
      return t_log_const(nu) - 0.5 * (nu + 1.0) * std::log1p(z * z / nu);
    }
  }
  throw config_error("kernel: invalid family");
}

double f0(const Kernel& kernel, double z) { return std::exp(log_f0(kernel, z)); }

double psi(const Kernel& kernel, double z) {
  switch (kernel.family) {
    case Family::logistic:
      return -std::tanh(0.5 * z);
    case Family::extreme_value:
      return 1.0 - std::exp(z);
    case Family::normal:
      return -z;
    case Family::student_t: {
      const double nu = kernel.dof;
      return -(nu + 1.0) * z / (nu + z * z);
    }
  }
  throw config_error("kernel: invalid family");
}

double psi_prime(const Kernel& kernel, double z) {
  switch (kernel.family) {
    case Family::logistic: {
      const double t = std::tanh(0.5 * z);
      return -0.5 * (1.0 - t * t);
    }
    case Family::extreme_value:
      return -std::exp(z);
    case Family::normal:
      return -1.0;
    case Family::student_t: {
      const double nu = kernel.dof;
      const double d = nu + z * z;
      return -(nu + 1.0) * (nu - z * z) / (d * d);
    }
  }
  throw config_error("kernel: invalid family");
}

void psi_pair(const Kernel& kernel, double z, double& p, double& pp) {
  switch (kernel.family) {
    case Family::logistic: {
      const double t = std::tanh(0.5 * z);
      p = -t;
      pp = -0.5 * (1.0 - t * t);
      return;
    }
    case Family::extreme_value: {
      const double e = std::exp(z);
      p = 1.0 - e;
      pp = -e;
      return;
    }
    case Family::normal:
      p = -z;
      pp = -1.0;
      return;
    case Family::student_t: {
      const double nu = kernel.dof;
      const double d = nu + z * z;
      p = -(nu + 1.0) * z / d;
      pp = -(nu + 1.0) * (nu - z * z) / (d * d);
      return;
    }
  }
  throw config_error("kernel: invalid family");
}

double log_density(const Kernel& kernel, double x, const Theta& theta) {
  if (!std::isfinite(x)) {
    throw domain_error("kernel: log_density requires finite x");
  }
  if (!(theta.sigma > 0.0) || !std::isfinite(theta.sigma) ||
      !std::isfinite(theta.mu)) {
    throw domain_error("kernel: log_density requires finite mu and sigma > 0");
  }
  const double z = (x - theta.mu) / theta.sigma;
  return log_f0(kernel, z) - std::log(theta.sigma);
}

ScoreVector score_vector(const Kernel& kernel, double x) {
  if (!std::isfinite(x)) {
    throw domain_error("kernel: score_vector requires finite x");
  }
  const double p = psi(kernel, x);
  const double pp = psi_prime(kernel, x);
  const double h = p * p + pp;  // f0''/f0
  ScoreVector s;
  s.b1 = {-p, -(1.0 + x * p)};
  s.b2 = {0.5 * h, 0.5 * (2.0 * p + x * h), 1.0 + 2.0 * x * p + 0.5 * x * x * h};
  return s;
}

double sample_one(const Kernel& kernel, Rng& rng) {
  switch (kernel.family) {
    case Family::logistic: {
      const double u = rng.uniform();
      return std::log(u / (1.0 - u));
    }
    case Family::extreme_value: {
      // F(x) = 1 - exp(-e^x)  (minimum-type convention).
      const double u = rng.uniform();
      return std::log(-std::log1p(-u));
    }
    case Family::normal:
      return rng.normal();
    case Family::student_t: {
      const double nu = kernel.dof;
      const double z = rng.normal();
      const double chi2 = 2.0 * rng.gamma(0.5 * nu);
      return z / std::sqrt(chi2 / nu);
    }
  }
  throw config_error("kernel: invalid family");
}

std::vector<double> sample(const Kernel& kernel, std::size_t n,
                           std::uint64_t seed) {
  if (n == 0) {
    throw domain_error("kernel: sample requires n >= 1");
  }
  Rng rng(seed);
  std::vector<double> out(n);
  for (auto& x : out) x = sample_one(kernel, rng);
  return out;
}

}  // namespace mixhom
