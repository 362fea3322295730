#pragma once

// Adaptive Gauss-Kronrod (10/21 point) integration of real or complex
// integrands over a finite interval.
//
// The interval is first cut into equal panels (callers pass the panel width
// that resolves the fastest oscillation of their integrand); panels whose
// error estimate exceeds their share of the tolerance are then refined by
// recursive bisection. Memory use is independent of the panel count.

#include <algorithm>
#include <array>
#include <cmath>
#include <complex>
#include <cstddef>
#include <limits>
#include <type_traits>
#include <utility>

#include "cslbound/constants.hpp"
#include "cslbound/error.hpp"

namespace cslbound::quad {

struct Tolerance {
  double abs = 0.0;
  double rel = 1e-8;
  // Tolerance relative to \int |f|; keeps strongly cancelling integrals from
  // chasing a relative accuracy they cannot reach.
  double rel_l1 = 0.0;
  std::size_t max_evals = 100'000'000;
};

template <class T>
struct Result {
  T value{};
  double error = 0.0;
  double l1 = 0.0;  // estimate of \int |f|
  std::size_t evals = 0;
};

namespace detail {

inline constexpr std::array<double, 11> kNodes = {
    0.995657163025808080735527280689003, 0.973906528517171720077964012084452,
    0.930157491355708226001207180059508, 0.865063366688984510732096688423493,
    0.780817726586416897063717578345042, 0.679409568299024406234327365114874,
    0.562757134668604683339000099272694, 0.433395394129247190799265943165784,
    0.294392862701460198131126603103866, 0.148874338981631210884826001129720,
    0.0};
inline constexpr std::array<double, 11> kKronrod = {
    0.011694638867371874278064396062192, 0.032558162307964727478818972459390,
    0.054755896574351996031381300244580, 0.075039674810919952767043140916190,
    0.093125454583697605535065465083366, 0.109387158802297641899210590325805,
    0.123491976262065851077208323147584, 0.134709217311473325928054001771707,
    0.142775938577060080797094273138717, 0.147739104901338491374841515972068,
    0.149445554002916905664936468389821};
// Gauss weights for kNodes[1], kNodes[3], ..., kNodes[9].
inline constexpr std::array<double, 5> kGauss = {
    0.066671344308688137593568809893332, 0.149451349150580593145776339657697,
    0.219086362515982043995534934228163, 0.269266719309996355091226921569469,
    0.295524224714752870173892994651338};

template <class T>
double magnitude(const T& v) {
  return std::abs(v);
}

template <class T>
struct Rule {
  T value;
  double error;
  double l1;
};

template <class T, class F>
Rule<T> gk21(F& f, double a, double b) {
  const double half = 0.5 * (b - a);
  const double mid = 0.5 * (a + b);
  const T center = f(mid);
  T kronrod = kKronrod[10] * center;
  double l1 = kKronrod[10] * magnitude(center);
  T gauss{};
  for (std::size_t i = 0; i < 10; ++i) {
    const double dx = half * kNodes[i];
    const T lo = f(mid - dx);
    const T hi = f(mid + dx);
    kronrod += kKronrod[i] * (lo + hi);
    l1 += kKronrod[i] * (magnitude(lo) + magnitude(hi));
    if (i % 2 == 1) gauss += kGauss[i / 2] * (lo + hi);
  }
  kronrod *= half;
  gauss *= half;
  l1 *= std::abs(half);
  const double err = magnitude(kronrod - gauss);
  const double floor = 50.0 * std::numeric_limits<double>::epsilon() * l1;
  return {kronrod, std::max(err, floor), l1};
}

}  // namespace detail

/// Integrates f over [a, b] split into `panels` equal panels.
///
/// Throws QuadratureError when the evaluation budget is exhausted before the
/// combined error estimate drops below max(tol.abs, tol.rel * |I|).
template <class F>
auto integrate(F&& f, double a, double b, const Tolerance& tol, std::size_t panels = 1)
    -> Result<std::decay_t<decltype(f(a))>> {
  using T = std::decay_t<decltype(f(a))>;
  Result<T> out;
  if (b == a) return out;
  panels = std::max<std::size_t>(panels, 1);
  const double width = (b - a) / static_cast<double>(panels);
  constexpr std::size_t kEvalsPerRule = 21;

  // First pass: one rule per panel.
  T total{};
  double total_err = 0.0;
  double total_l1 = 0.0;
  for (std::size_t p = 0; p < panels; ++p) {
    const double lo = a + width * static_cast<double>(p);
    const double hi = (p + 1 == panels) ? b : lo + width;
    const auto r = detail::gk21<T>(f, lo, hi);
    total += r.value;
    total_err += r.error;
    total_l1 += r.l1;
  }
  out.evals = panels * kEvalsPerRule;
  out.l1 = total_l1;
  auto target = [&](const T& value, double l1) {
    return std::max({tol.abs, tol.rel * detail::magnitude(value), tol.rel_l1 * l1});
  };
  if (total_err <= target(total, total_l1)) {
    out.value = total;
    out.error = total_err;
    return out;
  }

  // Second pass: refine panels against their share of the tolerance.
  const double goal = target(total, total_l1);
  const double share = goal / (b - a);
  T refined{};
  double refined_err = 0.0;
  double refined_l1 = 0.0;
  struct Segment {
    double lo, hi;
    int depth;
  };
  constexpr int kMaxDepth = 40;
  Segment stack[kMaxDepth + 2];
  for (std::size_t p = 0; p < panels; ++p) {
    const double lo = a + width * static_cast<double>(p);
    const double hi = (p + 1 == panels) ? b : lo + width;
    int top = 0;
    stack[top++] = {lo, hi, 0};
    while (top > 0) {
      const Segment s = stack[--top];
      const auto r = detail::gk21<T>(f, s.lo, s.hi);
      out.evals += kEvalsPerRule;
      if (out.evals > tol.max_evals) {
        throw QuadratureError("adaptive quadrature exceeded its evaluation budget",
                              detail::magnitude(total), total_err);
      }
      const double local_goal = share * (s.hi - s.lo);
      if (r.error <= local_goal || s.depth >= kMaxDepth || (s.hi - s.lo) <= 1e-14 * std::abs(s.lo)) {
        refined += r.value;
        refined_err += r.error;
        refined_l1 += r.l1;
        continue;
      }
      const double m = 0.5 * (s.lo + s.hi);
      stack[top++] = {m, s.hi, s.depth + 1};
      stack[top++] = {s.lo, m, s.depth + 1};
    }
  }
  out.value = refined;
  out.error = refined_err;
  out.l1 = refined_l1;
  if (refined_err > 2.0 * target(refined, refined_l1)) {
    throw QuadratureError("adaptive quadrature did not reach the requested tolerance",
                          detail::magnitude(refined), refined_err);
  }
  return out;
}

/// Number of panels needed so that each panel spans at most `fraction` of a
/// period of an oscillation exp(i q length), capped at `max_panels`.
inline std::size_t panels_for(double a, double b, double length, double fraction = 0.5,
                              std::size_t max_panels = 4'000'000) {
  if (!(length > 0.0)) return 1;
  const double period = 2.0 * constants::pi / length;
  const double n = std::ceil((b - a) / (fraction * period));
  return static_cast<std::size_t>(std::clamp(n, 1.0, static_cast<double>(max_panels)));
}

}  // namespace cslbound::quad
