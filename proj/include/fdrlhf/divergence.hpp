#pragma once

// Registry of f-divergences whose f' is invertible with 0 outside its domain,
// so that the regularized optimum has the closed form pi0 * h(eta (r - lambda))
// with h = (f')^{-1}.

#include <array>
#include <cmath>
#include <limits>
#include <span>
#include <string>
#include <string_view>

#include "fdrlhf/errors.hpp"
#include "fdrlhf/root_finding.hpp"

namespace fdrlhf {

enum class DivergenceKind {
  ReverseKl,        // f = x log x
  ForwardKl,        // f = -log x
  JensenShannon,    // f = x log x - (x + 1) log((x + 1) / 2)
  Chi2MixedKl,      // f = x log x + (x - 1)^2
  XlogxMinusLogx,   // f = x log x - log x
};

/// Open interval (lo, hi).
struct OpenInterval {
  double lo = -std::numeric_limits<double>::infinity();
  double hi = std::numeric_limits<double>::infinity();

  bool contains(double y) const noexcept { return y > lo && y < hi; }
};

class FDivergence {
 public:
  constexpr explicit FDivergence(DivergenceKind kind) noexcept : kind_(kind) {}

  DivergenceKind kind() const noexcept { return kind_; }

  std::string_view name() const noexcept {
    switch (kind_) {
      case DivergenceKind::ReverseKl: return "reverse_kl";
      case DivergenceKind::ForwardKl: return "forward_kl";
      case DivergenceKind::JensenShannon: return "js";
      case DivergenceKind::Chi2MixedKl: return "chi2_mixed_kl";
      case DivergenceKind::XlogxMinusLogx: return "xlogx_minus_logx";
    }
    return "";
  }

  /// f on [0, inf); f(0) is the continuous extension (possibly +inf).
  double f(double x) const noexcept {
    constexpr double inf = std::numeric_limits<double>::infinity();
    switch (kind_) {
      case DivergenceKind::ReverseKl:
        return x == 0.0 ? 0.0 : x * std::log(x);
      case DivergenceKind::ForwardKl:
        return x == 0.0 ? inf : -std::log(x);
      case DivergenceKind::JensenShannon:
        return (x == 0.0 ? 0.0 : x * std::log(x)) - (x + 1.0) * std::log(0.5 * (x + 1.0));
      case DivergenceKind::Chi2MixedKl:
        return (x == 0.0 ? 0.0 : x * std::log(x)) + (x - 1.0) * (x - 1.0);
      case DivergenceKind::XlogxMinusLogx:
        return x == 0.0 ? inf : x * std::log(x) - std::log(x);
    }
    return 0.0;
  }

  double f_prime(double x) const noexcept {
    switch (kind_) {
      case DivergenceKind::ReverseKl: return std::log(x) + 1.0;
      case DivergenceKind::ForwardKl: return -1.0 / x;
      case DivergenceKind::JensenShannon: return std::log(2.0 * x / (1.0 + x));
      case DivergenceKind::Chi2MixedKl: return std::log(x) + 2.0 * x - 1.0;
      case DivergenceKind::XlogxMinusLogx: return std::log(x) + 1.0 - 1.0 / x;
    }
    return 0.0;
  }

  double f_second(double x) const noexcept {
    switch (kind_) {
      case DivergenceKind::ReverseKl: return 1.0 / x;
      case DivergenceKind::ForwardKl: return 1.0 / (x * x);
      case DivergenceKind::JensenShannon: return 1.0 / (x * (1.0 + x));
      case DivergenceKind::Chi2MixedKl: return 1.0 / x + 2.0;
      case DivergenceKind::XlogxMinusLogx: return 1.0 / x + 1.0 / (x * x);
    }
    return 0.0;
  }

  /// Admissible arguments of h, i.e. the range of f' over (0, inf).
  OpenInterval h_domain() const noexcept {
    switch (kind_) {
      case DivergenceKind::ForwardKl: return {-std::numeric_limits<double>::infinity(), 0.0};
      case DivergenceKind::JensenShannon:
        return {-std::numeric_limits<double>::infinity(), std::log(2.0)};
      default: return {};
    }
  }

  bool closed_form_h() const noexcept {
    return kind_ == DivergenceKind::ReverseKl || kind_ == DivergenceKind::ForwardKl ||
           kind_ == DivergenceKind::JensenShannon;
  }

  /// h(y) = (f')^{-1}(y). Throws DomainError outside h_domain and
  /// SolverError if the numeric inversion does not converge.
  double h(double y) const {
    if (!h_domain().contains(y)) {
      throw DomainError("h(" + std::to_string(y) + ") outside the domain of " +
                        std::string(name()));
    }
    switch (kind_) {
      case DivergenceKind::ReverseKl: return std::exp(y - 1.0);
      case DivergenceKind::ForwardKl: return -1.0 / y;
      case DivergenceKind::JensenShannon: return 1.0 / (2.0 * std::exp(-y) - 1.0);
      default: return std::exp(log_h_numeric(y));
    }
  }

  /// h'(y) = 1 / f''(h(y)), written in terms of h to avoid a second solve.
  double h_prime_from_h(double y, double hy) const noexcept {
    switch (kind_) {
      case DivergenceKind::ReverseKl: return hy;
      case DivergenceKind::ForwardKl: return 1.0 / (y * y);
      case DivergenceKind::JensenShannon: return hy * (1.0 + hy);
      case DivergenceKind::Chi2MixedKl: return hy / (1.0 + 2.0 * hy);
      case DivergenceKind::XlogxMinusLogx: return hy * hy / (1.0 + hy);
    }
    return 0.0;
  }

  double h_prime(double y) const { return h_prime_from_h(y, h(y)); }

 private:
  // g(u) = f'(e^u) - y is strictly increasing in u = log x; bracket it by
  // geometric expansion from u = 0 (x = 1) and refine with safeguarded Newton.
  double log_h_numeric(double y) const {
    auto fdf = [this, y](double u) -> std::pair<double, double> {
      if (kind_ == DivergenceKind::Chi2MixedKl) {
        const double e = std::exp(u);
        return {u + 2.0 * e - 1.0 - y, 1.0 + 2.0 * e};
      }
      const double e = std::exp(-u);
      return {u + 1.0 - e - y, 1.0 + e};
    };
    double lo = 0.0, hi = 0.0;
    double g0 = fdf(0.0).first;
    if (g0 == 0.0) return 0.0;
    double step = 1.0;
    int guard = 0;
    if (g0 < 0.0) {
      lo = 0.0;
      hi = step;
      while (fdf(hi).first < 0.0) {
        lo = hi;
        step *= 2.0;
        hi += step;
        if (++guard > 60) throw SolverError("h bracket expansion failed", fdf(hi).first);
      }
    } else {
      hi = 0.0;
      lo = -step;
      while (fdf(lo).first > 0.0) {
        hi = lo;
        step *= 2.0;
        lo -= step;
        if (++guard > 60) throw SolverError("h bracket expansion failed", fdf(lo).first);
      }
    }
    RootOptions opt;
    opt.residual_tol = 4.0 * std::numeric_limits<double>::epsilon() * std::max(1.0, std::abs(y));
    const RootResult r = safeguarded_newton(fdf, lo, hi, opt);
    if (!r.converged || r.residual > 1e-10 * std::max(1.0, std::abs(y))) {
      throw SolverError("numeric inversion of f' did not converge", r.residual);
    }
    return r.root;
  }

  DivergenceKind kind_;
};

inline constexpr std::array<std::string_view, 5> kRegisteredDivergences = {
    "reverse_kl", "forward_kl", "js", "chi2_mixed_kl", "xlogx_minus_logx"};

/// Look up a divergence by name.
inline FDivergence registry_get(std::string_view name) {
  if (name == "reverse_kl") return FDivergence(DivergenceKind::ReverseKl);
  if (name == "forward_kl") return FDivergence(DivergenceKind::ForwardKl);
  if (name == "js") return FDivergence(DivergenceKind::JensenShannon);
  if (name == "chi2_mixed_kl") return FDivergence(DivergenceKind::Chi2MixedKl);
  if (name == "xlogx_minus_logx") return FDivergence(DivergenceKind::XlogxMinusLogx);
  if (name == "total_variation" || name == "chi_squared") {
    throw ExcludedDivergence(std::string(name));
  }
  throw UnknownDivergence(std::string(name));
}

inline double h_eval(const FDivergence& spec, double y) { return spec.h(y); }

/// D_f(p || q) = sum_i q_i f(p_i / q_i). q must have full support.
inline double divergence_value(std::span<const double> p, std::span<const double> q,
                               const FDivergence& spec) {
  if (p.size() != q.size()) throw ShapeError("divergence_value: length mismatch");
  double sp = 0.0, sq = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) {
    if (!(q[i] > 0.0)) throw DomainError("divergence_value: reference must have full support");
    if (p[i] < 0.0) throw DomainError("divergence_value: negative probability");
    sp += p[i];
    sq += q[i];
  }
  if (std::abs(sp - 1.0) > 1e-9 || std::abs(sq - 1.0) > 1e-9) {
    throw DomainError("divergence_value: inputs must sum to 1");
  }
  double d = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) d += q[i] * spec.f(p[i] / q[i]);
  return d;
}

}  // namespace fdrlhf
