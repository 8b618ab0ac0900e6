#include "mixhom/lrt.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <exception>
#include <limits>
#include <mutex>
#include <numeric>
#include <string>
#include <thread>
#include <vector>

#include "mixhom/errors.hpp"

namespace mixhom {

namespace {

// Interpolated sample quantile (type-7), matching the Step-1 start recipe.
double quantile_sorted(const std::vector<double>& sorted, double p) {
  const double pos = p * (static_cast<double>(sorted.size()) - 1.0);
  const auto lo = static_cast<std::size_t>(pos);
  if (lo + 1 >= sorted.size()) return sorted.back();
  const double frac = pos - static_cast<double>(lo);
  return sorted[lo] + frac * (sorted[lo + 1] - sorted[lo]);
}

// Objective for the full fit: log-likelihood plus the two scale penalties.
// The mixing proportion is a free parameter here, so no alpha penalty.
double pen_value(const Kernel& kernel, const MixingDistribution& g,
                 std::span<const double> data, const PenaltyConfig& cfg) {
  return mixture_loglik(kernel, g, data) + p_sigma(g.theta1.sigma, cfg) +
         p_sigma(g.theta2.sigma, cfg);
}

struct Track {
  MixingDistribution g;
  double value = -std::numeric_limits<double>::infinity();
  int passes = 0;
  bool alive = true;
  bool done = false;
};

constexpr int kMaxPasses = 500;

// One EM pass over (alpha, theta1, theta2); returns the new penalized value.
// A component whose posterior mass has vanished is left in place: its
// contribution to the objective is below rounding either way.
double em_pass(const Kernel& kernel, std::span<const double> data,
               const PenaltyConfig& cfg, MixingDistribution& g,
               std::vector<double>& w2) {
  const double nn = static_cast<double>(data.size());
  const std::vector<double> w = e_step(kernel, g, data);
  const double wsum = std::accumulate(w.begin(), w.end(), 0.0);
  g.alpha1 = std::clamp(wsum / nn, 1e-12, 1.0 - 1e-12);
  for (std::size_t i = 0; i < data.size(); ++i) w2[i] = 1.0 - w[i];
  if (wsum > 1e-10) {
    g.theta1 = m_step_component(kernel, data, w, cfg, &g.theta1);
  }
  if (nn - wsum > 1e-10) {
    g.theta2 = m_step_component(kernel, data, w2, cfg, &g.theta2);
  }
  return pen_value(kernel, g, data, cfg);
}

// Parameter vector for extrapolation: (alpha, mu1, log sigma1, mu2,
// log sigma2).  Scales are extrapolated on the log axis so trial points
// stay positive.
std::array<double, 5> pack(const MixingDistribution& g) {
  return {g.alpha1, g.theta1.mu, std::log(g.theta1.sigma), g.theta2.mu,
          std::log(g.theta2.sigma)};
}
MixingDistribution unpack(const std::array<double, 5>& p) {
  MixingDistribution g;
  g.alpha1 = std::clamp(p[0], 1e-12, 1.0 - 1e-12);
  g.theta1 = Theta{p[1], std::exp(p[2])};
  g.theta2 = Theta{p[3], std::exp(p[4])};
  return g;
}

// Runs up to `budget` EM passes on the track, accelerated with the
// squared-iterative (SQUAREM-style) extrapolation: two plain passes give a
// secant direction, the extrapolated point is accepted only when it does
// not fall below the plain two-pass value, and an accepted jump is followed
// by a stabilizing plain pass.  Acceleration therefore never breaks the
// ascent property; it only skips along the slow near-degenerate ridges
// where plain EM needs hundreds of passes.  A genuinely decreasing plain
// pass still abandons the start (an inner component fit went wrong).
void advance(const Kernel& kernel, std::span<const double> data,
             const PenaltyConfig& cfg, Track& t, int budget) {
  const double tol = 1e-8;
  std::vector<double> w2(data.size());
  if (t.passes == 0) {
    try {
      t.value = pen_value(kernel, t.g, data, cfg);
    } catch (const error&) {
      t.alive = false;
      return;
    }
  }
  const int limit = std::min(kMaxPasses, t.passes + budget);
  while (t.passes < limit) {
    const double v0 = t.value;
    const std::array<double, 5> p0 = pack(t.g);

    double v1;
    try {
      v1 = em_pass(kernel, data, cfg, t.g, w2);
    } catch (const error&) {
      t.alive = false;
      return;
    }
    ++t.passes;
    if (v1 < v0 - tol * (1.0 + std::fabs(v0))) {
      t.alive = false;
      t.value = v1;
      return;
    }
    if (v1 - v0 <= tol * (1.0 + std::fabs(v1))) {
      t.value = v1;
      t.done = true;
      return;
    }
    if (t.passes >= limit) {
      t.value = v1;
      return;
    }
    const std::array<double, 5> p1 = pack(t.g);

    double v2;
    try {
      v2 = em_pass(kernel, data, cfg, t.g, w2);
    } catch (const error&) {
      t.alive = false;
      return;
    }
    ++t.passes;
    if (v2 < v1 - tol * (1.0 + std::fabs(v1))) {
      t.alive = false;
      t.value = v2;
      return;
    }
    const std::array<double, 5> p2 = pack(t.g);

    // Extrapolated trial (SqS3 step length, clamped).
    double rr = 0.0, vv = 0.0;
    std::array<double, 5> rvec{}, vvec{};
    for (int i = 0; i < 5; ++i) {
      rvec[i] = p1[i] - p0[i];
      vvec[i] = (p2[i] - p1[i]) - rvec[i];
      rr += rvec[i] * rvec[i];
      vv += vvec[i] * vvec[i];
    }
    double vtrial = -std::numeric_limits<double>::infinity();
    MixingDistribution gtrial;
    if (vv > 0.0 && rr > 0.0) {
      const double step = std::clamp(-std::sqrt(rr / vv), -20.0, -1.0);
      std::array<double, 5> pt{};
      bool sane = true;
      for (int i = 0; i < 5; ++i) {
        pt[i] = p0[i] - 2.0 * step * rvec[i] + step * step * vvec[i];
        if (!std::isfinite(pt[i])) sane = false;
      }
      // Keep log-scales within a physically meaningful window.
      const double ls = std::log(cfg.sigma_hat);
      if (sane && std::fabs(pt[2] - ls) < 30.0 && std::fabs(pt[4] - ls) < 30.0) {
        gtrial = unpack(pt);
        try {
          // Stabilizing pass from the trial point; also makes the iterate
          // an EM image so component warm starts stay meaningful.
          vtrial = em_pass(kernel, data, cfg, gtrial, w2);
        } catch (const error&) {
          vtrial = -std::numeric_limits<double>::infinity();
        }
      }
    }
    if (vtrial >= v2) {
      t.g = gtrial;
      t.value = vtrial;
      ++t.passes;
    } else {
      t.value = v2;
    }
    if (t.value - v0 <= tol * (1.0 + std::fabs(t.value))) {
      t.done = true;
      return;
    }
  }
}

MixingDistribution fit_full_impl(const Kernel& kernel,
                                 std::span<const double> data,
                                 const NullFit& null_fit,
                                 const PenaltyConfig& cfg, int grid_scale) {
  std::vector<double> sorted(data.begin(), data.end());
  std::sort(sorted.begin(), sorted.end());
  std::vector<std::pair<double, double>> mu_pairs = {
      {quantile_sorted(sorted, 0.25), quantile_sorted(sorted, 0.75)},
      {quantile_sorted(sorted, 0.10), quantile_sorted(sorted, 0.50)},
      {quantile_sorted(sorted, 0.50), quantile_sorted(sorted, 0.90)},
      {quantile_sorted(sorted, 0.50), quantile_sorted(sorted, 0.50)},
  };
  // With a_n = 1/n the penalty is light, and the global maximum on
  // homogeneous-looking data is often a near-degenerate component sitting
  // on a few extreme observations.  Broad quantile starts never collapse
  // onto those, so the grid also seeds tight low-scale components at the
  // tails, paired with the null fit as the background component.
  std::vector<double> spike_q = {0.02, 0.10, 0.90, 0.98};
  std::vector<double> spike_r = {0.05, 0.15};
  if (grid_scale >= 2) {
    mu_pairs.insert(mu_pairs.end(),
                    {{quantile_sorted(sorted, 0.15), quantile_sorted(sorted, 0.85)},
                     {quantile_sorted(sorted, 0.35), quantile_sorted(sorted, 0.65)},
                     {quantile_sorted(sorted, 0.20), quantile_sorted(sorted, 0.60)},
                     {quantile_sorted(sorted, 0.40), quantile_sorted(sorted, 0.80)}});
    spike_q.insert(spike_q.end(),
                   {0.01, 0.05, 0.15, 0.25, 0.35, 0.65, 0.75, 0.85, 0.95, 0.99});
    spike_r.insert(spike_r.end(), {0.03, 0.10});
  }
  const std::array<std::pair<double, double>, 4> sigma_pairs = {{
      {0.5, 0.5},
      {0.5, 1.0},
      {1.0, 0.5},
      {1.0, 1.0},
  }};
  const std::array<double, 3> alphas = {0.1, 0.3, 0.5};

  std::vector<Track> tracks;
  tracks.reserve(alphas.size() *
                     (mu_pairs.size() * sigma_pairs.size() +
                      spike_q.size() * spike_r.size()) +
                 3);
  for (const double a : alphas) {
    for (const auto& [m1, m2] : mu_pairs) {
      for (const auto& [r1, r2] : sigma_pairs) {
        Track t;
        t.g.alpha1 = a;
        t.g.theta1 = Theta{m1, r1 * cfg.sigma_hat};
        t.g.theta2 = Theta{m2, r2 * cfg.sigma_hat};
        tracks.push_back(t);
      }
    }
    for (const double q : spike_q) {
      for (const double r : spike_r) {
        Track t;
        t.g.alpha1 = a;
        t.g.theta1 = Theta{quantile_sorted(sorted, q), r * cfg.sigma_hat};
        t.g.theta2 = Theta{null_fit.mu_hat, null_fit.sigma_hat};
        tracks.push_back(t);
      }
    }
  }
  {
    Track t;  // null point, so the fit can never fall below the null value
    t.g.alpha1 = 0.5;
    t.g.theta1 = Theta{null_fit.mu_hat, null_fit.sigma_hat};
    t.g.theta2 = t.g.theta1;
    tracks.push_back(t);
  }
  if (grid_scale >= 2) {
    for (const double qa : {0.15, 0.30}) {  // tight two-cluster splits
      Track t;
      t.g.alpha1 = 0.5;
      t.g.theta1 = Theta{quantile_sorted(sorted, qa), 0.2 * cfg.sigma_hat};
      t.g.theta2 =
          Theta{quantile_sorted(sorted, 1.0 - qa), 0.2 * cfg.sigma_hat};
      tracks.push_back(t);
    }
  }

  // Every start is iterated to tolerance; ranking heuristics that polish
  // only early leaders visibly thin the null upper tail of the statistic,
  // and a track may still gain tens of log-likelihood units hundreds of
  // passes in, so value-based pruning is unsound.  The only cut taken is
  // exact: EM is a deterministic map, so tracks whose states coincide
  // share one future and the later duplicate is merged away.
  const double mu_tol = 1e-6 * cfg.sigma_hat;
  auto coincide = [&](const MixingDistribution& a, const MixingDistribution& b) {
    auto sig = [](const MixingDistribution& g) {
      std::array<double, 5> p = {g.alpha1, g.theta1.mu,
                                 std::log(g.theta1.sigma), g.theta2.mu,
                                 std::log(g.theta2.sigma)};
      if (p[3] < p[1] || (p[3] == p[1] && p[4] < p[2])) {
        std::swap(p[1], p[3]);
        std::swap(p[2], p[4]);
        p[0] = 1.0 - p[0];
      }
      return p;
    };
    const auto pa = sig(a), pb = sig(b);
    return std::fabs(pa[0] - pb[0]) <= 1e-6 &&
           std::fabs(pa[1] - pb[1]) <= mu_tol &&
           std::fabs(pa[2] - pb[2]) <= 1e-6 &&
           std::fabs(pa[3] - pb[3]) <= mu_tol &&
           std::fabs(pa[4] - pb[4]) <= 1e-6;
  };

  bool pending = true;
  while (pending) {
    pending = false;
    for (auto& t : tracks) {
      if (!t.alive || t.done || t.passes >= kMaxPasses) continue;
      advance(kernel, data, cfg, t, 8);
      if (t.alive && !t.done && t.passes < kMaxPasses) pending = true;
    }
    for (std::size_t i = 0; i < tracks.size(); ++i) {
      if (!tracks[i].alive) continue;
      for (std::size_t j = i + 1; j < tracks.size(); ++j) {
        if (!tracks[j].alive) continue;
        if (coincide(tracks[i].g, tracks[j].g)) {
          // Keep whichever is further along so no progress is lost.
          if (tracks[j].passes > tracks[i].passes ||
              (tracks[j].passes == tracks[i].passes &&
               tracks[j].value > tracks[i].value)) {
            std::swap(tracks[i], tracks[j]);
          }
          tracks[j].alive = false;
          tracks[j].done = true;
        }
      }
    }
  }

  std::size_t failures = 0;
  const Track* best = nullptr;
  for (const auto& t : tracks) {
    if (!t.alive) {
      ++failures;
      continue;
    }
    if (best == nullptr || t.value > best->value) best = &t;
  }
  if (best == nullptr) {
    throw numerical_error("lrt: every start failed or went non-monotone (" +
                          std::to_string(failures) + " failures)");
  }

  MixingDistribution g = best->g;
  // Canonical component order (by location, then scale); the likelihood is
  // label-invariant, so this only fixes the reported representation.
  if (g.theta2.mu < g.theta1.mu ||
      (g.theta2.mu == g.theta1.mu && g.theta2.sigma < g.theta1.sigma)) {
    std::swap(g.theta1, g.theta2);
    g.alpha1 = 1.0 - g.alpha1;
  }
  return g;
}

}  // namespace

MixingDistribution fit_full_penalized(const Kernel& kernel,
                                      std::span<const double> data,
                                      int grid_scale) {
  const std::size_t n = data.size();
  if (n < 10) throw domain_error("lrt: need at least 10 observations");
  const double a_n = 1.0 / static_cast<double>(n);
  const NullFit null_fit = fit_null(kernel, data, a_n);
  const PenaltyConfig cfg{a_n, null_fit.sigma_hat};
  return fit_full_impl(kernel, data, null_fit, cfg, grid_scale);
}

LrtResult lrt_statistic(const Kernel& kernel, std::span<const double> data) {
  const std::size_t n = data.size();
  if (n < 10) throw domain_error("lrt: need at least 10 observations");
  const double a_n = 1.0 / static_cast<double>(n);

  LrtResult r;
  r.null_fit = fit_null(kernel, data, a_n);
  const PenaltyConfig cfg{a_n, r.null_fit.sigma_hat};
  r.full_fit = fit_full_impl(kernel, data, r.null_fit, cfg, 1);
  r.statistic =
      2.0 * (mixture_loglik(kernel, r.full_fit, data) - r.null_fit.loglik);
  return r;
}

std::vector<double> bootstrap_null(const Kernel& kernel, std::size_t n,
                                   std::size_t reps, std::uint64_t seed,
                                   StatisticKind kind, const EmConfig& config,
                                   int threads) {
  if (n < 10) throw domain_error("lrt: need at least 10 observations");
  if (reps < 100) throw config_error("lrt: need at least 100 replicates");
  if (threads < 1) throw config_error("lrt: thread count must be >= 1");

  std::vector<double> out(reps);
  std::exception_ptr first_error;
  std::mutex error_mutex;

  auto run_range = [&](std::size_t begin, std::size_t end) {
    try {
      std::vector<double> x(n);
      for (std::size_t r = begin; r < end; ++r) {
        Rng rng(seed, r);  // per-replicate stream: thread-count independent
        for (std::size_t i = 0; i < n; ++i) x[i] = sample_one(kernel, rng);
        if (kind == StatisticKind::em) {
          out[r] = em_statistic(kernel, x, config, nullptr).statistic;
        } else {
          out[r] = lrt_statistic(kernel, x).statistic;
        }
      }
    } catch (...) {
      const std::lock_guard<std::mutex> lock(error_mutex);
      if (!first_error) first_error = std::current_exception();
    }
  };

  const auto t_count = static_cast<std::size_t>(
      std::min<std::size_t>(static_cast<std::size_t>(threads), reps));
  if (t_count <= 1) {
    run_range(0, reps);
  } else {
    std::vector<std::thread> pool;
    pool.reserve(t_count);
    for (std::size_t t = 0; t < t_count; ++t) {
      const std::size_t begin = reps * t / t_count;
      const std::size_t end = reps * (t + 1) / t_count;
      pool.emplace_back(run_range, begin, end);
    }
    for (auto& th : pool) th.join();
  }
  if (first_error) std::rethrow_exception(first_error);

  std::sort(out.begin(), out.end());
  return out;
}

}  // namespace mixhom
