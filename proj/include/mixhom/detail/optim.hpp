#ifndef MIXHOM_DETAIL_OPTIM_HPP
#define MIXHOM_DETAIL_OPTIM_HPP

#include <algorithm>
#include <array>
#include <cmath>
#include <utility>

namespace mixhom::detail {

// Minimal Nelder-Mead maximizer in two dimensions, used as the fallback
// when a damped Newton iteration fails to make progress.  F maps
// (x, y) -> objective value; larger is better.  Returns (point, value).
template <typename F>
std::pair<std::array<double, 2>, double> nelder_mead_2d(
    F&& f, std::array<double, 2> start, double step0, double step1,
    int max_iter = 400, double tol = 1e-11) {
  struct Vertex {
    std::array<double, 2> p;
    double v;
  };
  std::array<Vertex, 3> s;
  s[0] = {start, f(start[0], start[1])};
  s[1] = {{start[0] + step0, start[1]}, 0.0};
  s[1].v = f(s[1].p[0], s[1].p[1]);
  s[2] = {{start[0], start[1] + step1}, 0.0};
  s[2].v = f(s[2].p[0], s[2].p[1]);

  auto order = [&] {
    std::sort(s.begin(), s.end(),
              [](const Vertex& a, const Vertex& b) { return a.v > b.v; });
  };
  order();

  for (int it = 0; it < max_iter; ++it) {
    if (std::fabs(s[0].v - s[2].v) <= tol * (1.0 + std::fabs(s[0].v))) break;
    const std::array<double, 2> c = {0.5 * (s[0].p[0] + s[1].p[0]),
                                     0.5 * (s[0].p[1] + s[1].p[1])};
    auto at = [&](double t) -> Vertex {
      std::array<double, 2> p = {c[0] + t * (c[0] - s[2].p[0]),
                                 c[1] + t * (c[1] - s[2].p[1])};
      return {p, f(p[0], p[1])};
    };
    Vertex r = at(1.0);  // reflection
    if (r.v > s[0].v) {
      Vertex e = at(2.0);  // expansion
      s[2] = (e.v > r.v) ? e : r;
    } else if (r.v > s[1].v) {
      s[2] = r;
    } else {
      Vertex k = (r.v > s[2].v) ? at(0.5) : at(-0.5);  // contraction
      if (k.v > std::min(r.v, s[2].v)) {
        s[2] = k;
      } else {  // shrink toward the best vertex
        for (int i = 1; i < 3; ++i) {
          s[i].p[0] = 0.5 * (s[i].p[0] + s[0].p[0]);
          s[i].p[1] = 0.5 * (s[i].p[1] + s[0].p[1]);
          s[i].v = f(s[i].p[0], s[i].p[1]);
        }
      }
    }
    order();
  }
  return {s[0].p, s[0].v};
}

}  // namespace mixhom::detail

#endif  // MIXHOM_DETAIL_OPTIM_HPP
