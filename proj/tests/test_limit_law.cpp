#include <algorithm>
#include <cmath>
#include <utility>
#include <vector>

#include "doctest.h"
#include "mixhom/errors.hpp"
#include "mixhom/limit_law.hpp"
#include "mixhom/rng.hpp"

using mixhom::CaseTag;
using mixhom::LimitCase;
using mixhom::LimitLaw;

namespace {

// Independent oracle for one draw of the Case-I limit: maximize
//   g(v) = 2 t(v)'w - t(v)' B t(v),  t(v) = (v1^2, 2 v1 v2, v2^2)
// directly over (v1, v2) with a dense grid plus compass-search polish,
// instead of the polar reduction used by the library.
double brute_force_draw(const Eigen::Matrix3d& B, const Eigen::Vector3d& w) {
  const auto g = [&](double v1, double v2) {
    const Eigen::Vector3d t(v1 * v1, 2.0 * v1 * v2, v2 * v2);
    return 2.0 * t.dot(w) - t.dot(B * t);
  };
  Eigen::SelfAdjointEigenSolver<Eigen::Matrix3d> es(B);
  const double lmin = es.eigenvalues().minCoeff();
  REQUIRE(lmin > 0.0);
  // |t*| <= sqrt(1.5) |w| / lmin bounds the optimizer's radius.
  const double L =
      1.5 * std::sqrt(std::sqrt(1.5) * w.norm() / lmin + 1e-12) + 0.1;
  double best = 0.0;  // v = 0 attains 0, so the sup is never negative
  double bv1 = 0.0;
  double bv2 = 0.0;
  const int m = 120;
  for (int i = 0; i <= m; ++i) {
    for (int j = 0; j <= m; ++j) {
      const double v1 = -L + 2.0 * L * i / m;
      const double v2 = -L + 2.0 * L * j / m;
      const double val = g(v1, v2);
      if (val > best) {
        best = val;
        bv1 = v1;
        bv2 = v2;
      }
    }
  }
  static constexpr std::pair<double, double> dirs[] = {
      {1, 0}, {-1, 0}, {0, 1}, {0, -1}, {1, 1}, {1, -1}, {-1, 1}, {-1, -1}};
  double h = 2.0 * L / m;
  while (h > 1e-10 * (1.0 + L)) {
    bool moved = false;
    for (const auto& [dx, dy] : dirs) {
      const double val = g(bv1 + dx * h, bv2 + dy * h);
      if (val > best) {
        best = val;
        bv1 += dx * h;
        bv2 += dy * h;
        moved = true;
        break;
      }
    }
    if (!moved) h *= 0.5;
  }
  return best;
}

Eigen::Matrix3d random_pd(mixhom::Rng& rng) {
  Eigen::Matrix3d a;
  for (int i = 0; i < 3; ++i) {
    for (int j = 0; j < 3; ++j) a(i, j) = rng.normal();
  }
  return a.transpose() * a + 0.05 * Eigen::Matrix3d::Identity();
}

LimitLaw hand_table_law(std::vector<double> table) {
  LimitLaw law;
  law.limit_case.tag = CaseTag::case_i;
  law.quantile_table = std::move(table);
  law.draws = law.quantile_table.size();
  return law;
}

}  // namespace

TEST_CASE("limit_draw agrees with a direct 2-D maximization") {
  mixhom::Rng rng(915u);
  int checked = 0;
  for (int inst = 0; inst < 100; ++inst) {
    Eigen::Matrix3d B;
    if (inst == 0) {
      B = mixhom::score_matrices_cached(mixhom::Kernel::parse("logistic")).tildeB22;
    } else if (inst == 1) {
      B = mixhom::score_matrices_cached(mixhom::Kernel::parse("extreme")).tildeB22;
    } else {
      B = random_pd(rng);
    }
    const double scale = std::exp(1.5 * rng.normal());
    Eigen::Vector3d w;
    for (int i = 0; i < 3; ++i) w(i) = scale * rng.normal();

    const double fast = mixhom::limit_draw(B, w);
    const double slow = brute_force_draw(B, w);
    CAPTURE(inst);
    CHECK(fast == doctest::Approx(slow).epsilon(1e-3));
    CHECK(fast >= 0.0);
    ++checked;
  }
  CHECK(checked == 100);
}

TEST_CASE("limit_draw is positively 2-homogeneous in w and zero at w = 0") {
  mixhom::Rng rng(916u);
  for (int inst = 0; inst < 10; ++inst) {
    const Eigen::Matrix3d B = random_pd(rng);
    Eigen::Vector3d w;
    for (int i = 0; i < 3; ++i) w(i) = rng.normal();
    const double base = mixhom::limit_draw(B, w);
    for (const double c : {2.5, 10.0}) {
      CHECK(mixhom::limit_draw(B, c * w) ==
            doctest::Approx(c * c * base).epsilon(1e-12));
    }
    CHECK(mixhom::limit_draw(B, Eigen::Vector3d::Zero()) == 0.0);
  }
}

TEST_CASE("limit_draw rejects matrices that are not positive definite on the cone") {
  const Eigen::Vector3d w(0.3, -0.2, 0.7);
  Eigen::Matrix3d indefinite = Eigen::Matrix3d::Identity();
  indefinite(1, 1) = -1.0;
  CHECK_THROWS_AS(mixhom::limit_draw(indefinite, w), mixhom::numerical_error);
  CHECK_THROWS_AS(mixhom::limit_draw(-Eigen::Matrix3d::Identity(), w),
                  mixhom::numerical_error);
  // The normal kernel's residual matrix is singular along u(0) = e1, so the
  // Case-I machinery must refuse it rather than return garbage.
  const Eigen::Matrix3d degenerate =
      mixhom::score_matrices_cached(mixhom::Kernel::parse("normal")).tildeB22;
  CHECK_THROWS_AS(mixhom::limit_draw(degenerate, w), mixhom::numerical_error);
}

TEST_CASE("simulate_limit is sorted and thread-count invariant") {
  const Eigen::Matrix3d B =
      mixhom::score_matrices_cached(mixhom::Kernel::parse("logistic")).tildeB22;
  const LimitLaw one = mixhom::simulate_limit(B, 2000, 77u, 1);
  const LimitLaw three = mixhom::simulate_limit(B, 2000, 77u, 3);
  REQUIRE(one.quantile_table.size() == 2000);
  CHECK(one.draws == 2000);
  CHECK(one.seed == 77u);
  CHECK(one.limit_case.tag == CaseTag::case_i);
  CHECK(std::is_sorted(one.quantile_table.begin(), one.quantile_table.end()));
  REQUIRE(three.quantile_table.size() == one.quantile_table.size());
  for (std::size_t i = 0; i < one.quantile_table.size(); ++i) {
    REQUIRE(one.quantile_table[i] == three.quantile_table[i]);
  }
  const LimitLaw other = mixhom::simulate_limit(B, 2000, 78u, 1);
  CHECK(other.quantile_table != one.quantile_table);
  CHECK(one.quantile_table.front() >= 0.0);
}

TEST_CASE("chi-square(2) branch: closed-form p-values and critical values") {
  LimitCase lc;
  lc.tag = CaseTag::case_ii;
  lc.null_eigenvector = Eigen::Vector3d(1.0, 0.0, 0.1).normalized();
  const LimitLaw law = mixhom::chi_square_law(lc);
  CHECK(law.quantile_table.empty());
  CHECK(mixhom::p_value(law, 0.0) == 1.0);
  for (const double s : {0.5, 3.2, 9.7}) {
    CHECK(mixhom::p_value(law, s) == doctest::Approx(std::exp(-0.5 * s)).epsilon(1e-15));
  }
  CHECK(mixhom::critical_value(law, 0.05) ==
        doctest::Approx(5.991464547107979).epsilon(1e-12));
  CHECK(mixhom::critical_value(law, 0.01) ==
        doctest::Approx(-2.0 * std::log(0.01)).epsilon(1e-12));
  CHECK_THROWS_AS(mixhom::p_value(law, std::nan("")), mixhom::domain_error);
  CHECK_THROWS_AS(mixhom::critical_value(law, 0.0), mixhom::domain_error);
  CHECK_THROWS_AS(mixhom::critical_value(law, 1.0), mixhom::domain_error);
}

TEST_CASE("Case-I p-values follow the add-one tail convention") {
  const LimitLaw law = hand_table_law({1.0, 2.0, 3.0, 4.0});
  CHECK(mixhom::p_value(law, 0.0) == doctest::Approx(1.0));
  CHECK(mixhom::p_value(law, 2.5) == doctest::Approx(3.0 / 5.0));
  CHECK(mixhom::p_value(law, 2.0) == doctest::Approx(4.0 / 5.0));  // ties count
  CHECK(mixhom::p_value(law, 5.0) == doctest::Approx(1.0 / 5.0));
  // Monotone nonincreasing, always in (0, 1].
  double prev = 2.0;
  for (double s = -1.0; s <= 6.0; s += 0.25) {
    const double p = mixhom::p_value(law, s);
    CHECK(p > 0.0);
    CHECK(p <= 1.0);
    CHECK(p <= prev);
    prev = p;
  }
  LimitLaw empty;
  empty.limit_case.tag = CaseTag::case_i;
  CHECK_THROWS_AS(mixhom::p_value(empty, 1.0), mixhom::config_error);
  CHECK_THROWS_AS(mixhom::critical_value(empty, 0.05), mixhom::config_error);
}

TEST_CASE("empirical upper quantile is consistent with the p-value rule") {
  std::vector<double> ladder(99);
  for (std::size_t i = 0; i < ladder.size(); ++i) {
    ladder[i] = static_cast<double>(i + 1);
  }
  const LimitLaw law = hand_table_law(ladder);
  CHECK(mixhom::empirical_upper_quantile(law.quantile_table, 0.05) == 95.0);
  CHECK(mixhom::empirical_upper_quantile(law.quantile_table, 0.5) == 50.0);
  for (const double level : {0.01, 0.05, 0.1, 0.25}) {
    const double crit = mixhom::critical_value(law, level);
    // Statistics strictly above the critical value are significant...
    CHECK(mixhom::p_value(law, crit + 1e-9) <= level + 1e-12);
    // ...and ones at or below it are not.
    CHECK(mixhom::p_value(law, crit) > level);
  }
  CHECK_THROWS_AS(mixhom::empirical_upper_quantile({}, 0.05),
                  mixhom::config_error);
  CHECK_THROWS_AS(mixhom::empirical_upper_quantile(law.quantile_table, 0.0),
                  mixhom::domain_error);
}

TEST_CASE("limit_law_for dispatches on the kernel's limit case") {
  const LimitLaw lg =
      mixhom::limit_law_for(mixhom::Kernel::parse("logistic"), 500, 5u);
  CHECK(lg.limit_case.tag == CaseTag::case_i);
  CHECK(lg.quantile_table.size() == 500);
  const LimitLaw t10 = mixhom::limit_law_for(mixhom::Kernel::parse("t10"), 500, 5u);
  CHECK(t10.limit_case.tag == CaseTag::case_ii);
  CHECK(t10.quantile_table.empty());
  REQUIRE(t10.limit_case.null_eigenvector.has_value());
  const LimitLaw nm =
      mixhom::limit_law_for(mixhom::Kernel::parse("normal"), 500, 5u);
  CHECK(nm.limit_case.tag == CaseTag::normal_degenerate);
  CHECK(nm.quantile_table.empty());
}
