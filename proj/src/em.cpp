#include "mixhom/em.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "mixhom/detail/optim.hpp"
#include "mixhom/errors.hpp"

namespace mixhom {

namespace {

// Interpolated sample quantile (type-7, the common default).
double quantile_sorted(const std::vector<double>& sorted, double p) {
  const double pos = p * (static_cast<double>(sorted.size()) - 1.0);
  const auto lo = static_cast<std::size_t>(pos);
  if (lo + 1 >= sorted.size()) return sorted.back();
  const double frac = pos - static_cast<double>(lo);
  return sorted[lo] + frac * (sorted[lo + 1] - sorted[lo]);
}

struct ComponentEval {
  double q;                 // weighted penalized objective
  double g_mu, g_s;         // gradient in (mu, s = log sigma)
  double h_mm, h_ms, h_ss;  // Hessian
};

// One pass: objective, gradient and Hessian of
//   Q(mu, s) = sum_i w_i (log f0(z_i) - s) + p_sigma(e^s),  z_i = (x_i-mu)e^{-s}.
ComponentEval eval_component(const Kernel& kernel,
                             std::span<const double> data,
                             std::span<const double> w, double mu, double s,
                             const PenaltyConfig& cfg) {
  const double inv = std::exp(-s);
  double q = 0.0, wsum = 0.0, sp = 0.0, szp = 0.0, spp = 0.0, szpp = 0.0,
         sz2pp = 0.0;
  for (std::size_t i = 0; i < data.size(); ++i) {
    const double wi = w[i];
    const double z = (data[i] - mu) * inv;
    q += wi * log_f0(kernel, z);
    double p, pp;
    psi_pair(kernel, z, p, pp);
    wsum += wi;
    sp += wi * p;
    szp += wi * z * p;
    spp += wi * pp;
    szpp += wi * z * pp;
    sz2pp += wi * z * z * pp;
  }
  const double sh2 = cfg.sigma_hat * cfg.sigma_hat;
  const double r2 = sh2 * inv * inv;  // sigma_hat^2 / sigma^2
  ComponentEval e;
  e.q = q - wsum * s - cfg.a_n * (r2 - std::log(r2));
  e.g_mu = -inv * sp;
  e.g_s = -(wsum + szp) + 2.0 * cfg.a_n * (r2 - 1.0);
  e.h_mm = inv * inv * spp;
  e.h_ms = inv * (sp + szpp);
  e.h_ss = szp + sz2pp - 4.0 * cfg.a_n * r2;
  return e;
}

double component_q(const Kernel& kernel, std::span<const double> data,
                   std::span<const double> w, double mu, double s,
                   const PenaltyConfig& cfg) {
  const double inv = std::exp(-s);
  double q = 0.0, wsum = 0.0;
  for (std::size_t i = 0; i < data.size(); ++i) {
    q += w[i] * log_f0(kernel, (data[i] - mu) * inv);
    wsum += w[i];
  }
  const double r2 = cfg.sigma_hat * cfg.sigma_hat * inv * inv;
  return q - wsum * s - cfg.a_n * (r2 - std::log(r2));
}

// Damped Newton for the weighted penalized component fit.  Same stopping
// logic as the null fit: gradient-based with a rounding-floor escape.
bool newton_component(const Kernel& kernel, std::span<const double> data,
                      std::span<const double> w, const PenaltyConfig& cfg,
                      double& mu, double& s, double wsum) {
  constexpr int kMaxIter = 100;
  const double gtol = 1e-10 * (1.0 + wsum);
  double q = component_q(kernel, data, w, mu, s, cfg);
  int stalled = 0;
  for (int it = 0; it < kMaxIter; ++it) {
    const ComponentEval e = eval_component(kernel, data, w, mu, s, cfg);
    q = e.q;
    const double gnorm = std::hypot(e.g_mu, e.g_s);
    if (gnorm <= gtol) return true;
    double dmu, ds;
    const double det = e.h_mm * e.h_ss - e.h_ms * e.h_ms;
    if (det > 0.0 && e.h_mm < 0.0) {
      dmu = -(e.h_ss * e.g_mu - e.h_ms * e.g_s) / det;
      ds = -(e.h_mm * e.g_s - e.h_ms * e.g_mu) / det;
    } else {
      const double cap = 0.5 / gnorm;
      dmu = e.g_mu * cap;
      ds = e.g_s * cap;
    }
    const double slope = e.g_mu * dmu + e.g_s * ds;
    if (!(slope > 0.0)) break;
    double t = 1.0;
    bool stepped = false;
    for (int ls = 0; ls < 40; ++ls, t *= 0.5) {
      const double q_try =
          component_q(kernel, data, w, mu + t * dmu, s + t * ds, cfg);
      if (std::isfinite(q_try) &&
          (q_try >= q + 1e-4 * t * slope ||
           q_try >= q - 1e-13 * (1.0 + std::fabs(q)))) {
        mu += t * dmu;
        s += t * ds;
        stalled =
            (q_try - q <= 1e-13 * (1.0 + std::fabs(q))) ? stalled + 1 : 0;
        q = q_try;
        stepped = true;
        break;
      }
    }
    if (!stepped || stalled >= 4) break;
  }
  const ComponentEval e = eval_component(kernel, data, w, mu, s, cfg);
  return std::hypot(e.g_mu, e.g_s) <= 1e-8 * (1.0 + wsum);
}

}  // namespace

std::vector<double> e_step(const Kernel& kernel, const MixingDistribution& G,
                           std::span<const double> data) {
  if (!(G.alpha1 > 0.0 && G.alpha1 < 1.0)) {
    throw domain_error("em: e_step requires alpha1 in (0,1)");
  }
  const double la1 = std::log(G.alpha1);
  const double la2 = std::log1p(-G.alpha1);
  const double inv1 = 1.0 / G.theta1.sigma;
  const double inv2 = 1.0 / G.theta2.sigma;
  const double ls1 = std::log(G.theta1.sigma);
  const double ls2 = std::log(G.theta2.sigma);
  std::vector<double> w(data.size());
  for (std::size_t i = 0; i < data.size(); ++i) {
    const double l1 = la1 + log_f0(kernel, (data[i] - G.theta1.mu) * inv1) - ls1;
    const double l2 = la2 + log_f0(kernel, (data[i] - G.theta2.mu) * inv2) - ls2;
    // 1 / (1 + e^{l2-l1}) evaluated so that extreme gaps saturate cleanly.
    const double d = l2 - l1;
    w[i] = (d > 0.0) ? std::exp(-d) / (1.0 + std::exp(-d))
                     : 1.0 / (1.0 + std::exp(d));
  }
  return w;
}

double m_step_alpha(double weight_sum, std::size_t n) {
  if (n == 0) throw domain_error("em: m_step_alpha requires n >= 1");
  if (weight_sum < 0.0 || weight_sum > static_cast<double>(n) + 1e-9) {
    throw domain_error("em: weight_sum outside [0, n]");
  }
  const double nn = static_cast<double>(n);
  const double n1 = std::clamp(weight_sum, 0.0, nn);
  // On (0, 1/2] the penalty is log(2a): interior stationary point
  // (n1+1)/(n+1).  On [1/2, 1) it is log(2(1-a)): stationary point n1/(n+1).
  const double lo = std::min((n1 + 1.0) / (nn + 1.0), 0.5);
  const double hi = std::max(n1 / (nn + 1.0), 0.5);
  auto objective = [&](double a) {
    // n1 log a + (n-n1) log(1-a) + p_alpha(a), robust at the 1/2 boundary.
    return n1 * std::log(a) + (nn - n1) * std::log1p(-a) + p_alpha(a);
  };
  const double olo = objective(lo);
  const double ohi = objective(hi);
  if (olo == ohi) {
    return (std::fabs(lo - 0.5) <= std::fabs(hi - 0.5)) ? lo : hi;
  }
  return (olo > ohi) ? lo : hi;
}

Theta m_step_component(const Kernel& kernel, std::span<const double> data,
                       std::span<const double> weights,
                       const PenaltyConfig& cfg, const Theta* warm) {
  if (data.size() != weights.size()) {
    throw domain_error("em: weights/data size mismatch");
  }
  double wsum = 0.0, wx = 0.0;
  for (std::size_t i = 0; i < data.size(); ++i) {
    wsum += weights[i];
    wx += weights[i] * data[i];
  }
  if (!(wsum > 0.0)) {
    throw domain_error("em: m_step_component requires positive total weight");
  }

  if (kernel.family == Family::normal) {
    // Closed form: weighted mean, then the penalized scale equation.
    const double mu = wx / wsum;
    double wss = 0.0;
    for (std::size_t i = 0; i < data.size(); ++i) {
      wss += weights[i] * (data[i] - mu) * (data[i] - mu);
    }
    const double sh2 = cfg.sigma_hat * cfg.sigma_hat;
    const double s2 = (wss + 2.0 * cfg.a_n * sh2) / (wsum + 2.0 * cfg.a_n);
    return Theta{mu, std::sqrt(s2)};
  }

  double mu, s;
  if (warm != nullptr) {
    mu = warm->mu;
    s = std::log(warm->sigma);
  } else {
    mu = wx / wsum;
    double wss = 0.0;
    for (std::size_t i = 0; i < data.size(); ++i) {
      wss += weights[i] * (data[i] - mu) * (data[i] - mu);
    }
    const double v = wss / wsum;
    s = 0.5 * std::log(std::max(v, 1e-6 * cfg.sigma_hat * cfg.sigma_hat));
  }
  if (newton_component(kernel, data, weights, cfg, mu, s, wsum)) {
    return Theta{mu, std::exp(s)};
  }
  // Fallback: simplex from the same start, then re-polish.
  auto obj = [&](double m, double t) {
    const double v = component_q(kernel, data, weights, m, t, cfg);
    return std::isfinite(v) ? v : -std::numeric_limits<double>::infinity();
  };
  auto [pt, val] = detail::nelder_mead_2d(obj, {mu, s}, 0.25 * cfg.sigma_hat,
                                          0.25, 600);
  mu = pt[0];
  s = pt[1];
  if (!newton_component(kernel, data, weights, cfg, mu, s, wsum) &&
      !std::isfinite(val)) {
    throw numerical_error("em: component M-step failed to converge");
  }
  return Theta{mu, std::exp(s)};
}

double mixture_loglik(const Kernel& kernel, const MixingDistribution& G,
                      std::span<const double> data) {
  const double la1 = std::log(G.alpha1);
  const double la2 = std::log1p(-G.alpha1);
  const double inv1 = 1.0 / G.theta1.sigma;
  const double inv2 = 1.0 / G.theta2.sigma;
  const double ls1 = std::log(G.theta1.sigma);
  const double ls2 = std::log(G.theta2.sigma);
  double ll = 0.0;
  for (const double x : data) {
    const double l1 = la1 + log_f0(kernel, (x - G.theta1.mu) * inv1) - ls1;
    const double l2 = la2 + log_f0(kernel, (x - G.theta2.mu) * inv2) - ls2;
    const double m = std::max(l1, l2);
    ll += m + std::log1p(std::exp(std::min(l1, l2) - m));
  }
  return ll;
}

double penalized_loglik(const Kernel& kernel, const MixingDistribution& G,
                        std::span<const double> data,
                        const PenaltyConfig& cfg) {
  return mixture_loglik(kernel, G, data) + p_alpha(G.alpha1) +
         p_sigma(G.theta1.sigma, cfg) + p_sigma(G.theta2.sigma, cfg);
}

std::pair<Theta, Theta> initial_pair_fit(const Kernel& kernel,
                                         std::span<const double> data,
                                         double pi, const PenaltyConfig& cfg,
                                         const NullFit* null_fit) {
  if (!(pi > 0.0 && pi <= 0.5)) {
    throw domain_error("em: initial proportion must lie in (0, 1/2]");
  }
  NullFit local;
  if (null_fit == nullptr) {
    local = fit_null(kernel, data, cfg.a_n);
    null_fit = &local;
  }

  std::vector<double> sorted(data.begin(), data.end());
  std::sort(sorted.begin(), sorted.end());
  const std::array<std::pair<double, double>, 4> mu_pairs = {{
      {quantile_sorted(sorted, 0.25), quantile_sorted(sorted, 0.75)},
      {quantile_sorted(sorted, 0.10), quantile_sorted(sorted, 0.50)},
      {quantile_sorted(sorted, 0.50), quantile_sorted(sorted, 0.90)},
      {quantile_sorted(sorted, 0.50), quantile_sorted(sorted, 0.50)},
  }};
  const std::array<std::pair<double, double>, 4> sigma_pairs = {{
      {0.5, 0.5},
      {0.5, 1.0},
      {1.0, 0.5},
      {1.0, 1.0},
  }};

  struct Track {
    MixingDistribution g;
    double q = -std::numeric_limits<double>::infinity();
    bool alive = true;
  };
  std::vector<Track> tracks;
  for (const auto& [m1, m2] : mu_pairs) {
    for (const auto& [r1, r2] : sigma_pairs) {
      Track t;
      t.g.alpha1 = pi;
      t.g.theta1 = Theta{m1, r1 * cfg.sigma_hat};
      t.g.theta2 = Theta{m2, r2 * cfg.sigma_hat};
      tracks.push_back(t);
    }
  }
  {
    Track t;  // the null point itself, so its value is always attainable
    t.g.alpha1 = pi;
    t.g.theta1 = Theta{null_fit->mu_hat, null_fit->sigma_hat};
    t.g.theta2 = t.g.theta1;
    tracks.push_back(t);
  }

  // Objective for ranking: the penalized likelihood without the constant
  // alpha term.
  auto value = [&](const MixingDistribution& g) {
    return mixture_loglik(kernel, g, data) + p_sigma(g.theta1.sigma, cfg) +
           p_sigma(g.theta2.sigma, cfg);
  };
  auto sweep = [&](Track& t, int iters, bool to_convergence) {
    double prev = value(t.g);
    for (int it = 0; it < iters; ++it) {
      const std::vector<double> w = e_step(kernel, t.g, data);
      std::vector<double> w2(w.size());
      for (std::size_t i = 0; i < w.size(); ++i) w2[i] = 1.0 - w[i];
      t.g.theta1 = m_step_component(kernel, data, w, cfg, &t.g.theta1);
      t.g.theta2 = m_step_component(kernel, data, w2, cfg, &t.g.theta2);
      const double cur = value(t.g);
      if (to_convergence && cur - prev <= 1e-10 * (1.0 + std::fabs(cur))) {
        prev = cur;
        break;
      }
      prev = cur;
    }
    t.q = prev;
  };

  // Stage 1: a short burn on every start; stage 2: converge the leaders.
  std::size_t failures = 0;
  for (auto& t : tracks) {
    try {
      sweep(t, 12, false);
    } catch (const error&) {
      t.alive = false;
      ++failures;
    }
  }
  std::sort(tracks.begin(), tracks.end(),
            [](const Track& a, const Track& b) { return a.q > b.q; });
  const std::size_t keep = std::min<std::size_t>(4, tracks.size());
  const Track* best = nullptr;
  for (std::size_t i = 0; i < keep; ++i) {
    if (!tracks[i].alive) continue;
    try {
      sweep(tracks[i], 400, true);
    } catch (const error&) {
      ++failures;
      continue;
    }
    if (best == nullptr || tracks[i].q > best->q) best = &tracks[i];
  }
  if (best == nullptr) {
    throw numerical_error(
        "em: every Step-1 start failed (" + std::to_string(failures) +
        " failures)");
  }
  return {best->g.theta1, best->g.theta2};
}

namespace {

void validate_config(const EmConfig& config) {
  if (config.K < 1) throw config_error("em: K must be >= 1");
  if (config.pis.empty()) throw config_error("em: no initial proportions");
  bool has_half = false;
  for (const double pi : config.pis) {
    if (!(pi > 0.0 && pi <= 0.5)) {
      throw config_error("em: every initial proportion must lie in (0, 1/2]");
    }
    if (std::fabs(pi - 0.5) < 1e-12) has_half = true;
  }
  if (!has_half) {
    throw config_error("em: the proportion list must contain 0.5");
  }
}

}  // namespace

EmTestResult em_statistic(const Kernel& kernel, std::span<const double> data,
                          const EmConfig& config, const LimitLaw* law) {
  validate_config(config);
  const std::size_t n = data.size();
  if (n < 10) {
    throw domain_error("em: need at least 10 observations");
  }
  const double a_n =
      (config.a_n > 0.0) ? config.a_n : a_n_formula(kernel, n);

  EmTestResult result;
  result.a_n = a_n;
  result.null_fit = fit_null(kernel, data, a_n);
  const PenaltyConfig cfg{a_n, result.null_fit.sigma_hat};
  const double pll_null = result.null_fit.penalized_loglik;

  result.statistic = -std::numeric_limits<double>::infinity();
  for (const double pi : config.pis) {
    PiTrace trace;
    trace.pi = pi;
    auto [t1, t2] = initial_pair_fit(kernel, data, pi, cfg, &result.null_fit);
    MixingDistribution g{pi, t1, t2};
    trace.m_trace.reserve(static_cast<std::size_t>(config.K));
    std::vector<double> w2(n);
    for (int k = 0; k < config.K; ++k) {
      const std::vector<double> w = e_step(kernel, g, data);
      const double wsum = std::accumulate(w.begin(), w.end(), 0.0);
      g.alpha1 = m_step_alpha(wsum, n);
      for (std::size_t i = 0; i < n; ++i) w2[i] = 1.0 - w[i];
      g.theta1 = m_step_component(kernel, data, w, cfg, &g.theta1);
      g.theta2 = m_step_component(kernel, data, w2, cfg, &g.theta2);
      trace.m_trace.push_back(
          2.0 * (penalized_loglik(kernel, g, data, cfg) - pll_null));
    }
    trace.fitted = g;
    trace.m_final = trace.m_trace.back();
    result.per_pi.push_back(std::move(trace));
    result.statistic = std::max(result.statistic, result.per_pi.back().m_final);
  }

  if (law != nullptr) {
    result.limit_case = law->limit_case;
    result.p_value = p_value(*law, result.statistic);
  }
  return result;
}

EmTestResult em_statistic(const Kernel& kernel, std::span<const double> data,
                          const EmConfig& config) {
  const LimitLaw law =
      limit_law_for(kernel, config.calibration_draws, config.calibration_seed,
                    config.threads);
  return em_statistic(kernel, data, config, &law);
}

}  // namespace mixhom
