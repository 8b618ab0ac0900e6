#include "mixhom/score_geometry.hpp"

#include <boost/math/quadrature/gauss_kronrod.hpp>
#include <cmath>
#include <map>
#include <memory>
#include <mutex>
#include <sstream>

#include "mixhom/errors.hpp"

namespace mixhom {

namespace {

using Quad = boost::math::quadrature::gauss_kronrod<double, 61>;

// Full 5-vector b(x) = (b1, b2).
Eigen::Matrix<double, 5, 1> b_vec(const Kernel& kernel, double x) {
  const ScoreVector s = score_vector(kernel, x);
  Eigen::Matrix<double, 5, 1> b;
  b << s.b1[0], s.b1[1], s.b2[0], s.b2[1], s.b2[2];
  return b;
}

// Outward search for the point where f0 drops below threshold * f0(0).
// All supported families have their mode at 0, so marching outward from 0
// cannot stop at a spurious crossing.
double tail_cut(const Kernel& kernel, double direction, double threshold) {
  const double log_thr = log_f0(kernel, 0.0) + std::log(threshold);
  double r = 1.0;
  for (int i = 0; i < 200 && log_f0(kernel, direction * r) > log_thr; ++i) {
    r *= 1.5;
  }
  return direction * r;
}

double integrate_f0(const Kernel& kernel, double lo, double hi,
                    const std::function<double(double)>& g) {
  auto integrand = [&](double x) {
    const double lf = log_f0(kernel, x);
    // Where f0 underflows the product is an exact numerical zero; computing
    // g there could overflow (extreme-value scores grow like e^{2x}) and
    // turn 0 * inf into NaN.
    if (lf < -700.0) return 0.0;
    return g(x) * std::exp(lf);
  };
  double err1 = 0.0, err2 = 0.0;
  // Split at the mode: keeps the adaptive refinement well-aimed for the
  // strongly asymmetric extreme-value tails.
  const double left = Quad::integrate(integrand, lo, 0.0, 15, 1e-13, &err1);
  const double right = Quad::integrate(integrand, 0.0, hi, 15, 1e-13, &err2);
  const double scale = 1.0 + std::fabs(left) + std::fabs(right);
  if (!(err1 + err2 < 1e-8 * scale)) {
    std::ostringstream msg;
    msg << "score: quadrature did not converge on [" << lo << ", " << hi
        << "] (error estimate " << (err1 + err2) << ")";
    throw numerical_error(msg.str());
  }
  return left + right;
}

Eigen::Matrix<double, 5, 5> b_outer_integral(const Kernel& kernel, double lo,
                                             double hi) {
  Eigen::Matrix<double, 5, 5> B = Eigen::Matrix<double, 5, 5>::Zero();
  for (int i = 0; i < 5; ++i) {
    for (int j = i; j < 5; ++j) {
      const double v = integrate_f0(kernel, lo, hi, [&](double x) {
        const auto b = b_vec(kernel, x);
        return b(i) * b(j);
      });
      B(i, j) = v;
      B(j, i) = v;
    }
  }
  return B;
}

}  // namespace

double expectation_f0(const Kernel& kernel,
                      const std::function<double(double)>& g) {
  double lo = tail_cut(kernel, -1.0, 1e-14);
  double hi = tail_cut(kernel, +1.0, 1e-14);
  double value = integrate_f0(kernel, lo, hi, g);
  for (int pass = 0; pass < 12; ++pass) {
    lo *= 2.0;
    hi *= 2.0;
    const double wider = integrate_f0(kernel, lo, hi, g);
    const bool stable = std::fabs(wider - value) < 1e-10;
    value = wider;
    if (stable) return value;
  }
  throw numerical_error("score: expectation did not stabilize under widening");
}

ScoreMatrices score_covariance(const Kernel& kernel) {
  double lo = tail_cut(kernel, -1.0, 1e-14);
  double hi = tail_cut(kernel, +1.0, 1e-14);
  Eigen::Matrix<double, 5, 5> B = b_outer_integral(kernel, lo, hi);
  bool stable = false;
  for (int pass = 0; pass < 12 && !stable; ++pass) {
    lo *= 2.0;
    hi *= 2.0;
    const Eigen::Matrix<double, 5, 5> wider = b_outer_integral(kernel, lo, hi);
    stable = ((wider - B).cwiseAbs().maxCoeff() < 1e-10);
    B = wider;
  }
  if (!stable) {
    throw numerical_error(
        "score: B entries did not stabilize under window doubling (kernel " +
        kernel.name() + ")");
  }

  ScoreMatrices sm;
  sm.B = B;
  sm.B11 = B.topLeftCorner<2, 2>();
  sm.B12 = B.topRightCorner<2, 3>();
  sm.B22 = B.bottomRightCorner<3, 3>();
  sm.tildeB22 = sm.B22 - sm.B12.transpose() * sm.B11.ldlt().solve(sm.B12);
  // Exact symmetrization (the solve can leave ~1e-17 asymmetry).
  sm.tildeB22 = 0.5 * (sm.tildeB22 + sm.tildeB22.transpose()).eval();
  sm.lo = lo;
  sm.hi = hi;
  return sm;
}

const ScoreMatrices& score_matrices_cached(const Kernel& kernel) {
  static std::mutex mu;
  static std::map<std::pair<int, double>, std::unique_ptr<ScoreMatrices>>
      cache;
  const std::pair<int, double> key{static_cast<int>(kernel.family),
                                   kernel.dof};
  std::lock_guard lock(mu);
  auto it = cache.find(key);
  if (it == cache.end()) {
    it = cache
             .emplace(key,
                      std::make_unique<ScoreMatrices>(score_covariance(kernel)))
             .first;
  }
  return *it->second;
}

LimitCase classify_limit(const Kernel& kernel, const ScoreMatrices& sm) {
  constexpr double kRankEps = 1e-6;
  Eigen::SelfAdjointEigenSolver<Eigen::Matrix3d> es(sm.tildeB22);
  if (es.info() != Eigen::Success) {
    throw numerical_error("score: eigendecomposition of tildeB22 failed");
  }
  const Eigen::Vector3d ev = es.eigenvalues();  // ascending
  const double lmax = ev(2);
  if (!(lmax > 0.0)) {
    throw config_error("score: tildeB22 is not positive for kernel " +
                       kernel.name());
  }
  if (ev(0) / lmax > kRankEps) {
    return LimitCase{CaseTag::case_i, std::nullopt};
  }
  if (ev(1) / lmax > kRankEps) {
    // Rank 2: inspect the null direction.
    Eigen::Vector3d u = es.eigenvectors().col(0);
    if (u(0) < 0.0) u = -u;
    const bool mid_zero = std::fabs(u(1)) < 1e-6;
    if (mid_zero && u(0) * u(2) > 1e-8) {
      return LimitCase{CaseTag::case_ii, u};
    }
    if (mid_zero && std::fabs(u(2)) < 1e-6) {
      return LimitCase{CaseTag::normal_degenerate, u};
    }
  }
  throw config_error("score: kernel " + kernel.name() +
                     " matches no supported limit case; refusing to guess");
}

}  // namespace mixhom
