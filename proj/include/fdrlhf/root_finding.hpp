#pragma once

#include <cmath>
#include <limits>
#include <utility>

namespace fdrlhf {

struct RootResult {
  double root = 0.0;
  double residual = 0.0;  // |g(root)|
  int iterations = 0;
  bool converged = false;
};

struct RootOptions {
  double residual_tol = 0.0;  // stop once |g| <= residual_tol
  int max_iterations = 200;
};

/// Safeguarded Newton iteration on a bracketed root.
///
/// `fdf(x)` returns the pair (g(x), g'(x)). The caller supplies `lo`, `hi`
/// with g(lo) and g(hi) of opposite sign (either order of monotonicity). A
/// Newton step is taken whenever it lands strictly inside the current
/// bracket and shrinks the step at least geometrically, otherwise the
/// iteration bisects. Iteration stops when the residual drops below
/// `residual_tol`, or when the bracket can no longer be split in double
/// precision. Returns converged = false only when `max_iterations` is hit.
template <class Fdf>
RootResult safeguarded_newton(Fdf&& fdf, double lo, double hi, RootOptions opt = {}) {
  RootResult out;
  auto [glo, dlo] = fdf(lo);
  auto [ghi, dhi] = fdf(hi);
  (void)dlo;
  (void)dhi;
  if (glo == 0.0) return {lo, 0.0, 0, true};
  if (ghi == 0.0) return {hi, 0.0, 0, true};
  if ((glo > 0.0) == (ghi > 0.0)) {
    // No sign change: report the better endpoint as a failure.
    return std::abs(glo) <= std::abs(ghi) ? RootResult{lo, std::abs(glo), 0, false}
                                          : RootResult{hi, std::abs(ghi), 0, false};
  }
  // Orient so that g(xl) < 0 < g(xh).
  double xl = lo, xh = hi;
  if (glo > 0.0) std::swap(xl, xh);

  double x = 0.5 * (lo + hi);
  double dx_old = std::abs(hi - lo);
  double dx = dx_old;
  auto [g, dg] = fdf(x);
  double best_x = x, best_g = std::abs(g);

  for (int it = 1; it <= opt.max_iterations; ++it) {
    out.iterations = it;
    if (std::abs(g) <= opt.residual_tol || g == 0.0) {
      return {x, std::abs(g), it, true};
    }
    const bool newton_outside = ((x - xh) * dg - g) * ((x - xl) * dg - g) >= 0.0;
    const bool newton_slow = std::abs(2.0 * g) > std::abs(dx_old * dg);
    if (newton_outside || newton_slow || !std::isfinite(dg) || dg == 0.0) {
      dx_old = dx;
      dx = 0.5 * (xh - xl);
      const double next = xl + dx;
      if (next == xl || next == xh) break;
      x = next;
    } else {
      dx_old = dx;
      dx = g / dg;
      const double next = x - dx;
      if (next == x) break;
      x = next;
    }
    std::tie(g, dg) = fdf(x);
    if (std::abs(g) < best_g) {
      best_g = std::abs(g);
      best_x = x;
    }
    if (g < 0.0) {
      xl = x;
    } else {
      xh = x;
    }
    // Bracket exhausted in double precision.
    const double mid = 0.5 * (xl + xh);
    if (mid == xl || mid == xh) {
      out.iterations = it;
      break;
    }
  }
  out.root = best_x;
  out.residual = best_g;
  out.converged = out.iterations < opt.max_iterations || best_g <= opt.residual_tol;
  return out;
}

}  // namespace fdrlhf
