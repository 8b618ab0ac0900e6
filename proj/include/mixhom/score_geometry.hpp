#ifndef MIXHOM_SCORE_GEOMETRY_HPP
#define MIXHOM_SCORE_GEOMETRY_HPP

#include <Eigen/Dense>
#include <functional>
#include <optional>

#include "mixhom/kernel.hpp"

namespace mixhom {

// Covariance structure of the 5-dimensional score vector b = (b1, b2) under
// f0, with the residual matrix that drives the limit theory:
//   tildeB22 = B22 - B12^T B11^{-1} B12.
struct ScoreMatrices {
  Eigen::Matrix<double, 5, 5> B;
  Eigen::Matrix2d B11;
  Eigen::Matrix<double, 2, 3> B12;
  Eigen::Matrix3d B22;
  Eigen::Matrix3d tildeB22;
  // Integration window actually used (diagnostics).
  double lo = 0.0;
  double hi = 0.0;
};

enum class CaseTag { case_i, case_ii, normal_degenerate };

// Which branch of the limiting distribution applies.  Case II carries the
// unit null eigenvector (u1, 0, u3) with u1*u3 > 0; the normal kernel's
// degenerate pattern (null eigenvector e1) is calibrated as chi-square(2)
// as well, but flagged separately so reports can say so.
struct LimitCase {
  CaseTag tag = CaseTag::case_i;
  std::optional<Eigen::Vector3d> null_eigenvector;
};

// E[g(X)] under f0 by adaptive quadrature over a tail-truncated window
// (used for B itself and by the moment tests).
double expectation_f0(const Kernel& kernel,
                      const std::function<double(double)>& g);

// B = Var(b) by adaptive quadrature.  The truncation window starts where
// f0 falls below 1e-14 of its mode and doubles until no entry of B moves
// by more than 1e-10.  Throws numerical_error when the quadrature error
// estimates stay above tolerance.
ScoreMatrices score_covariance(const Kernel& kernel);

// Memoized score_covariance (thread-safe; keyed on family and dof).
const ScoreMatrices& score_matrices_cached(const Kernel& kernel);

// Eigen-classifies tildeB22: full rank (relative eigenvalue floor 1e-6)
// -> Case I; rank 2 with null eigenvector (u1, 0, u3), u1*u3 > 0 -> Case II;
// null eigenvector along e1 -> normal-degenerate.  Anything else throws
// config_error rather than guessing.
LimitCase classify_limit(const Kernel& kernel, const ScoreMatrices& sm);

}  // namespace mixhom

#endif  // MIXHOM_SCORE_GEOMETRY_HPP
