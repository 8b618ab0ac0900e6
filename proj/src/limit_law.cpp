#include "mixhom/limit_law.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <thread>

#include "mixhom/errors.hpp"
#include "mixhom/rng.hpp"

namespace mixhom {

namespace {

constexpr int kGrid = 720;

// Precomputed polar directions u(phi_k) and quadratic forms u' B u.
struct PolarGrid {
  std::array<Eigen::Vector3d, kGrid> u;
  std::array<double, kGrid> q;

  explicit PolarGrid(const Eigen::Matrix3d& B) {
    for (int k = 0; k < kGrid; ++k) {
      const double phi = std::numbers::pi * k / kGrid;
      const double c = std::cos(phi);
      const double s = std::sin(phi);
      u[k] << c * c, 2.0 * c * s, s * s;
      q[k] = u[k].dot(B * u[k]);
      if (!(q[k] > 0.0)) {
        throw numerical_error(
            "limit: u'Bu <= 0 on the polar grid; Case-I condition violated");
      }
    }
  }
};

double objective(const Eigen::Matrix3d& B, const Eigen::Vector3d& w,
                 double phi) {
  const double c = std::cos(phi);
  const double s = std::sin(phi);
  const Eigen::Vector3d u(c * c, 2.0 * c * s, s * s);
  const double num = u.dot(w);
  if (num <= 0.0) return 0.0;
  const double den = u.dot(B * u);
  if (!(den > 0.0)) {
    throw numerical_error(
        "limit: u'Bu <= 0 during refinement; Case-I condition violated");
  }
  return num * num / den;
}

// Golden-section maximization of the polar objective on [a, b].
double golden_max(const Eigen::Matrix3d& B, const Eigen::Vector3d& w, double a,
                  double b) {
  constexpr double kInvPhi = 0.6180339887498949;
  double x1 = b - kInvPhi * (b - a);
  double x2 = a + kInvPhi * (b - a);
  double f1 = objective(B, w, x1);
  double f2 = objective(B, w, x2);
  while (b - a > 1e-10) {
    if (f1 < f2) {
      a = x1;
      x1 = x2;
      f1 = f2;
      x2 = a + kInvPhi * (b - a);
      f2 = objective(B, w, x2);
    } else {
      b = x2;
      x2 = x1;
      f2 = f1;
      x1 = b - kInvPhi * (b - a);
      f1 = objective(B, w, x1);
    }
  }
  return std::max(f1, f2);
}

double draw_on_grid(const PolarGrid& grid, const Eigen::Matrix3d& B,
                    const Eigen::Vector3d& w) {
  double best = 0.0;
  int best_k = -1;
  for (int k = 0; k < kGrid; ++k) {
    const double num = grid.u[k].dot(w);
    if (num <= 0.0) continue;
    const double val = num * num / grid.q[k];
    if (val > best) {
      best = val;
      best_k = k;
    }
  }
  if (best_k < 0) return 0.0;  // u'w <= 0 in every direction
  // Refine within the bracketing cells (the objective is pi-periodic, so a
  // bracket spilling past the ends is still valid).
  const double h = std::numbers::pi / kGrid;
  const double center = h * best_k;
  return std::max(best, golden_max(B, w, center - h, center + h));
}

}  // namespace

double limit_draw(const Eigen::Matrix3d& tildeB22, const Eigen::Vector3d& w) {
  const PolarGrid grid(tildeB22);
  return draw_on_grid(grid, tildeB22, w);
}

LimitLaw simulate_limit(const Eigen::Matrix3d& tildeB22, std::size_t draws,
                        std::uint64_t seed, int threads) {
  Eigen::SelfAdjointEigenSolver<Eigen::Matrix3d> es(tildeB22);
  if (es.info() != Eigen::Success) {
    throw numerical_error("limit: eigendecomposition failed");
  }
  const Eigen::Vector3d ev = es.eigenvalues();
  if (ev(0) < -1e-8 * std::max(1.0, ev(2))) {
    throw numerical_error("limit: matrix is not positive semidefinite");
  }
  // Symmetric square root with tiny negative eigenvalues clamped to zero.
  const Eigen::Vector3d root = ev.cwiseMax(0.0).cwiseSqrt();
  const Eigen::Matrix3d S = es.eigenvectors() * root.asDiagonal() *
                            es.eigenvectors().transpose();

  const PolarGrid grid(tildeB22);
  std::vector<double> table(draws);
  auto worker = [&](std::size_t first, std::size_t last) {
    for (std::size_t i = first; i < last; ++i) {
      Rng rng(seed, i);
      const Eigen::Vector3d z(rng.normal(), rng.normal(), rng.normal());
      table[i] = draw_on_grid(grid, tildeB22, S * z);
    }
  };
  const int nw = std::max(1, threads);
  if (nw == 1 || draws < 1024) {
    worker(0, draws);
  } else {
    std::vector<std::thread> pool;
    const std::size_t chunk = (draws + nw - 1) / nw;
    for (int t = 0; t < nw; ++t) {
      const std::size_t first = t * chunk;
      const std::size_t last = std::min(draws, first + chunk);
      if (first < last) pool.emplace_back(worker, first, last);
    }
    for (auto& th : pool) th.join();
  }
  std::sort(table.begin(), table.end());

  LimitLaw law;
  law.limit_case = LimitCase{CaseTag::case_i, std::nullopt};
  law.quantile_table = std::move(table);
  law.draws = draws;
  law.seed = seed;
  return law;
}

LimitLaw chi_square_law(const LimitCase& limit_case) {
  LimitLaw law;
  law.limit_case = limit_case;
  return law;
}

LimitLaw limit_law_for(const Kernel& kernel, std::size_t draws,
                       std::uint64_t seed, int threads) {
  const ScoreMatrices& sm = score_matrices_cached(kernel);
  const LimitCase c = classify_limit(kernel, sm);
  if (c.tag == CaseTag::case_i) {
    LimitLaw law = simulate_limit(sm.tildeB22, draws, seed, threads);
    law.limit_case = c;
    return law;
  }
  return chi_square_law(c);
}

double p_value(const LimitLaw& law, double stat) {
  if (!std::isfinite(stat)) {
    throw domain_error("limit: p_value requires a finite statistic");
  }
  if (law.limit_case.tag == CaseTag::case_i) {
    if (law.quantile_table.empty()) {
      throw config_error("limit: Case-I p-value requested without a table");
    }
    const auto& t = law.quantile_table;
    const auto ge = t.end() - std::lower_bound(t.begin(), t.end(), stat);
    return (1.0 + static_cast<double>(ge)) /
           (static_cast<double>(t.size()) + 1.0);
  }
  return std::min(1.0, std::exp(-0.5 * stat));
}

double empirical_upper_quantile(const std::vector<double>& sorted_table,
                                double level) {
  if (sorted_table.empty()) {
    throw config_error("limit: empty Monte Carlo table");
  }
  if (!(level > 0.0 && level < 1.0)) {
    throw domain_error("limit: level must lie in (0,1)");
  }
  const double n1 = static_cast<double>(sorted_table.size()) + 1.0;
  const auto idx = static_cast<std::ptrdiff_t>(
                       std::ceil((1.0 - level) * n1)) -
                   1;
  const auto clamped = std::clamp<std::ptrdiff_t>(
      idx, 0, static_cast<std::ptrdiff_t>(sorted_table.size()) - 1);
  return sorted_table[static_cast<std::size_t>(clamped)];
}

double critical_value(const LimitLaw& law, double level) {
  if (!(level > 0.0 && level < 1.0)) {
    throw domain_error("limit: level must lie in (0,1)");
  }
  if (law.limit_case.tag == CaseTag::case_i) {
    if (law.quantile_table.empty()) {
      throw config_error("limit: Case-I critical value requested without a table");
    }
    return empirical_upper_quantile(law.quantile_table, level);
  }
  return -2.0 * std::log(level);
}

}  // namespace mixhom
