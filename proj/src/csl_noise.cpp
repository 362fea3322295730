#include "cslbound/csl_noise.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdlib>
#include <stdexcept>
#include <cstdio>
#include <string>
#include <thread>

#include "cslbound/constants.hpp"
#include "cslbound/error.hpp"
#include "cslbound/parallel.hpp"
#include "cslbound/quadrature.hpp"

namespace cslbound {

namespace {

std::string rc_tag(double rC) {
  char buf[40];
  std::snprintf(buf, sizeof buf, " at rC=%.6e m", rC);
  return buf;
}

using constants::pi;

// exp(-q^2 rC^2) < 1.6e-28 beyond q = 8 / rC.
constexpr double kCutoff = 8.0;
// The smoothed-ball slope is below exp(-64) further than 8 a from the surface.
constexpr double kShellWidth = 8.0;
// Share of the requested tolerance handed to each sub-integral.
constexpr double kSubShare = 0.1;

double sq(double x) { return x * x; }

quad::Tolerance sub_tolerance(const QuadConfig& cfg, double abs_target) {
  quad::Tolerance t;
  t.rel = kSubShare * cfg.rel_tol;
  t.abs = abs_target;
  t.max_evals = cfg.max_evals;
  return t;
}

// Running total of a pair sum with its propagated error estimate.
struct Accumulator {
  double value = 0.0;
  double error = 0.0;
  void add(double v, double e) {
    value += v;
    error += e;
  }
};

// ---------------------------------------------------------------------------
// Separable pairs: the 3D integral is a product of per-axis integrals.

struct AxisIntegral {
  Complex value;
  double error;
};

AxisIntegral axis_integral(const Component& a, const Component& b, int axis, int power, double rC,
                           const quad::Tolerance& tol) {
  const double K = kCutoff / rC;
  const double span = std::abs(center(a)[axis] - center(b)[axis]) + half_extent(a)[axis] +
                      half_extent(b)[axis];
  const bool even = power % 2 == 0;
  auto f = [&](double q) {
    const Complex g = axis_factor(a, axis, q) * std::conj(axis_factor(b, axis, q));
    const double w = std::exp(-sq(rC * q)) * std::pow(q, power);
    return w * (even ? g.real() : g.imag());
  };
  // G(-q) = conj G(q): even weights keep the real part, odd ones the imaginary.
  const auto r = quad::integrate(f, 0.0, K, tol, quad::panels_for(0.0, K, span));
  const Complex v = even ? Complex(2.0 * r.value, 0.0) : Complex(0.0, 2.0 * r.value);
  return {v, 2.0 * r.error};
}

void separable_pair(const Component& a, const Component& b, const Vec3& m, double rC,
                    const QuadConfig& cfg, bool cross, Accumulator& acc) {
  quad::Tolerance tol = sub_tolerance(cfg, 0.0);
  if (cross) tol.rel_l1 = kSubShare * cfg.rel_tol;
  double value = 0.0, error = 0.0;
  for (int i = 0; i < 3; ++i) {
    for (int j = i; j < 3; ++j) {
      const double w = m[i] * m[j] * (i == j ? 1.0 : 2.0);
      if (w == 0.0) continue;
      std::array<AxisIntegral, 3> f;
      for (int k = 0; k < 3; ++k) f[k] = axis_integral(a, b, k, (k == i) + (k == j), rC, tol);
      const Complex prod = f[0].value * f[1].value * f[2].value;
      double err = 0.0;
      for (int k = 0; k < 3; ++k) {
        err += f[k].error * std::abs(f[(k + 1) % 3].value) * std::abs(f[(k + 2) % 3].value);
      }
      value += w * prod.real();
      error += std::abs(w) * err;
    }
  }
  const double mult = cross ? 2.0 : 1.0;
  acc.add(mult * value, mult * error);
}

// ---------------------------------------------------------------------------
// Sphere pairs in q space.

double spherical_j0(double x) { return std::abs(x) < 1e-4 ? 1.0 - x * x / 6.0 : std::sin(x) / x; }

double spherical_j2(double x) {
  if (std::abs(x) < 0.1) {
    const double x2 = x * x;
    return x2 / 15.0 * (1.0 - x2 / 14.0 * (1.0 - x2 / 36.0));
  }
  return (3.0 / (x * x) - 1.0) * std::sin(x) / x - 3.0 * std::cos(x) / (x * x);
}

void sphere_pair(const Sphere& a, const Sphere& b, const Vec3& m, double rC, const QuadConfig& cfg,
                 double abs_target, bool cross, Accumulator& acc) {
  const double K = kCutoff / rC;
  const Vec3 delta = a.center - b.center;
  const double D = delta.norm();
  const double p2 = D > 0.0 ? 0.5 * (3.0 * sq(m.dot(delta) / D) - 1.0) : 0.0;
  auto f = [&](double q) {
    const double angular = spherical_j0(q * D) / 3.0 - 2.0 / 3.0 * spherical_j2(q * D) * p2;
    return sq(sq(q)) * std::exp(-sq(rC * q)) * detail::ball_factor(q, a.radius) *
           detail::ball_factor(q, b.radius) * angular;
  };
  const double scale = 4.0 * pi * a.density * b.density;
  const auto r = quad::integrate(f, 0.0, K, sub_tolerance(cfg, abs_target / scale),
                                 quad::panels_for(0.0, K, D + a.radius + b.radius));
  const double mult = cross ? 2.0 : 1.0;
  acc.add(mult * scale * r.value, mult * scale * r.error);
}

// ---------------------------------------------------------------------------
// Sphere-box pairs in real space. By Parseval the pair term equals
// (2 pi)^3 \int rho_box (-d_m^2 H), with H the ball smoothed by the Gaussian
// whose transform is exp(-rC^2 q^2). The volume integral of the second
// derivative is moved onto the box faces and done in polar coordinates about
// the foot of the perpendicular from the sphere centre.

struct ArcMoments {
  double length = 0.0;  // \int dphi
  double cos = 0.0;     // \int cos(phi) dphi
  double sin = 0.0;     // \int sin(phi) dphi
};

// Parts of the circle of radius r about (x0, y0) inside [u1, u2] x [v1, v2].
ArcMoments arc_moments(double x0, double y0, double r, double u1, double u2, double v1, double v2) {
  ArcMoments out;
  if (r <= 0.0) return out;
  auto inside = [&](double phi) {
    const double x = x0 + r * std::cos(phi), y = y0 + r * std::sin(phi);
    return x >= u1 && x <= u2 && y >= v1 && y <= v2;
  };
  std::array<double, 10> cuts{};
  std::size_t n = 0;
  auto wrap = [](double phi) { return phi < 0.0 ? phi + 2.0 * pi : phi; };
  for (double u : {u1, u2}) {
    const double c = (u - x0) / r;
    if (std::abs(c) < 1.0) {
      const double t = std::acos(c);
      cuts[n++] = wrap(t);
      cuts[n++] = wrap(-t);
    }
  }
  for (double v : {v1, v2}) {
    const double s = (v - y0) / r;
    if (std::abs(s) < 1.0) {
      const double t = std::asin(s);
      cuts[n++] = wrap(t);
      cuts[n++] = wrap(pi - t);
    }
  }
  cuts[n++] = 0.0;
  cuts[n++] = 2.0 * pi;
  std::sort(cuts.begin(), cuts.begin() + n);
  for (std::size_t k = 0; k + 1 < n; ++k) {
    const double lo = cuts[k], hi = cuts[k + 1];
    if (hi - lo <= 0.0 || !inside(0.5 * (lo + hi))) continue;
    out.length += hi - lo;
    out.cos += std::sin(hi) - std::sin(lo);
    out.sin += std::cos(lo) - std::cos(hi);
  }
  return out;
}

struct Face {
  int normal;         // axis the face is perpendicular to
  double offset;      // plane position minus sphere centre along `normal`
  double u1, u2;      // rectangle in the in-plane axes, relative to the foot point
  double v1, v2;
};

// \int_face (dP/ds) (r_j - c_j) / s dA for j = normal (which = 0), the first
// in-plane axis (which = 1) or the second (which = 2).
quad::Result<double> face_integral(const Face& f, int which, double radius, double a,
                                   const quad::Tolerance& tol) {
  const double h = f.offset;
  const double s_lo = std::max(0.0, radius - kShellWidth * a);
  const double s_hi = radius + kShellWidth * a;
  // Distance from the foot point to the nearest and farthest rectangle points.
  const double nu = std::max({f.u1, -f.u2, 0.0}), nv = std::max({f.v1, -f.v2, 0.0});
  const double fu = std::max(std::abs(f.u1), std::abs(f.u2)), fv = std::max(std::abs(f.v1), std::abs(f.v2));
  const double r_lo = std::max(std::sqrt(std::max(0.0, sq(s_lo) - sq(h))), std::hypot(nu, nv));
  const double r_hi = std::min(std::sqrt(std::max(0.0, sq(s_hi) - sq(h))), std::hypot(fu, fv));
  if (!(r_hi > r_lo)) return {};
  auto integrand = [&](double r) {
    const ArcMoments arc = arc_moments(0.0, 0.0, r, f.u1, f.u2, f.v1, f.v2);
    const double moment = which == 0 ? h * arc.length : r * (which == 1 ? arc.cos : arc.sin);
    return r * detail::smoothed_ball_slope_over_s(std::hypot(h, r), radius, a) * moment;
  };
  const auto panels = static_cast<std::size_t>(std::clamp(std::ceil((r_hi - r_lo) / (0.5 * a)), 1.0, 1e5));
  return quad::integrate(integrand, r_lo, r_hi, tol, panels);
}

std::vector<Cuboid> as_boxes(const Component& c) {
  if (const auto* b = std::get_if<Cuboid>(&c)) return {*b};
  if (const auto* s = std::get_if<MultilayerStack>(&c)) return layers(*s);
  throw std::logic_error("component is not box-like");
}

void sphere_box_pair(const Sphere& s, const Component& box_like, const Vec3& m, double rC,
                     const QuadConfig& cfg, double abs_target, Accumulator& acc) {
  const double a = 2.0 * rC;
  const auto boxes = as_boxes(box_like);
  int active = 0;
  for (int i = 0; i < 3; ++i) active += m[i] != 0.0;
  const double faces = 2.0 * static_cast<double>(boxes.size()) * active * active;
  const double scale = std::pow(2.0 * pi, 3) * s.density;
  double value = 0.0, error = 0.0;
  for (const auto& box : boxes) {
    const Vec3 lo = box.center - 0.5 * box.lengths - s.center;
    const Vec3 hi = box.center + 0.5 * box.lengths - s.center;
    for (int i = 0; i < 3; ++i) {
      if (m[i] == 0.0) continue;
      const int u = (i + 1) % 3, v = (i + 2) % 3;
      for (int side = 0; side < 2; ++side) {
        const Face face{i, side ? hi[i] : lo[i], lo[u], hi[u], lo[v], hi[v]};
        for (int j = 0; j < 3; ++j) {
          if (m[j] == 0.0) continue;
          const double w = (side ? 1.0 : -1.0) * box.density * m[i] * m[j];
          const int which = j == i ? 0 : (j == u ? 1 : 2);
          const double target = abs_target / (faces * scale * std::abs(box.density * m[i] * m[j]));
          const auto r = face_integral(face, which, s.radius, a, sub_tolerance(cfg, target));
          value += w * r.value;
          error += std::abs(w) * r.error;
        }
      }
    }
  }
  // Cross pair: counted for (s, b) and (b, s).
  acc.add(-2.0 * scale * value, 2.0 * scale * error);
}

double pairwise_integral(const CompositeMass& mass, double rC, const QuadConfig& cfg, double abs_integral,
                         double& error_out) {
  const auto& comps = mass.components();
  const Vec3& m = mass.motion_axis();
  const std::size_t n = comps.size();

  std::vector<double> self(n);
  Accumulator acc;
  for (std::size_t k = 0; k < n; ++k) {
    Accumulator one;
    if (const auto* s = std::get_if<Sphere>(&comps[k])) {
      sphere_pair(*s, *s, m, rC, cfg, 0.0, false, one);
    } else {
      separable_pair(comps[k], comps[k], m, rC, cfg, false, one);
    }
    self[k] = one.value;
    acc.add(one.value, one.error);
  }
  for (std::size_t k = 0; k < n; ++k) {
    for (std::size_t l = k + 1; l < n; ++l) {
      // |T_kl| <= sqrt(T_kk T_ll): tolerance for the cross term is set on that scale.
      const double target =
          std::max(kSubShare * cfg.rel_tol * std::sqrt(std::max(0.0, self[k] * self[l])),
                   abs_integral / static_cast<double>(n * n));
      const auto* sk = std::get_if<Sphere>(&comps[k]);
      const auto* sl = std::get_if<Sphere>(&comps[l]);
      if (sk && sl) {
        sphere_pair(*sk, *sl, m, rC, cfg, target, true, acc);
      } else if (sk) {
        sphere_box_pair(*sk, comps[l], m, rC, cfg, target, acc);
      } else if (sl) {
        sphere_box_pair(*sl, comps[k], m, rC, cfg, target, acc);
      } else {
        separable_pair(comps[k], comps[l], m, rC, cfg, true, acc);
      }
    }
  }
  error_out = acc.error;
  return acc.value;
}

// ---------------------------------------------------------------------------
// Brute-force nested integration of the full integrand.

bool has_octant_symmetry(const CompositeMass& mass) {
  if (mass.components().size() != 1) return false;
  if (center(mass.components().front()).norm() != 0.0) return false;
  const Vec3& m = mass.motion_axis();
  return (m.array() != 0.0).count() == 1;
}

double direct_integral(const CompositeMass& mass, double rC, const QuadConfig& cfg, double abs_integral,
                       double& error_out) {
  const double K = kCutoff / rC;
  const Vec3& m = mass.motion_axis();
  Vec3 lo = Vec3::Constant(INFINITY), hi = Vec3::Constant(-INFINITY);
  for (const auto& c : mass.components()) {
    lo = lo.cwiseMin(center(c) - half_extent(c));
    hi = hi.cwiseMax(center(c) + half_extent(c));
  }
  const Vec3 span = hi - lo;
  const bool octant = has_octant_symmetry(mass);
  const double xlo = octant ? 0.0 : -K;
  const double ylo = octant ? 0.0 : -K;
  const double mult = octant ? 8.0 : 2.0;

  std::size_t evals = 0;
  quad::Tolerance tol = sub_tolerance(cfg, 0.0);
  tol.abs = abs_integral / (mult * 10.0);
  auto budget = [&](std::size_t used) {
    evals += used;
    if (evals > cfg.max_evals) {
      throw QuadratureError("direct quadrature exceeded its evaluation budget", 0.0, INFINITY, rC);
    }
  };
  auto inner = [&](double qy, double qz) {
    auto f = [&](double qx) {
      const Vec3 q(qx, qy, qz);
      return sq(q.dot(m)) * std::exp(-rC * rC * q.squaredNorm()) * std::norm(mass.transform(q));
    };
    const auto r = quad::integrate(f, xlo, K, tol, quad::panels_for(xlo, K, span[0]));
    budget(r.evals);
    return r.value;
  };
  auto middle = [&](double qz) {
    const auto r = quad::integrate([&](double qy) { return inner(qy, qz); }, ylo, K, tol,
                                   quad::panels_for(ylo, K, span[1]));
    return r.value;
  };
  const auto r = quad::integrate(middle, 0.0, K, tol, quad::panels_for(0.0, K, span[2]));
  error_out = mult * r.error;
  return mult * r.value;
}

}  // namespace

namespace detail {

double smoothed_ball(double s, double radius, double a) {
  const double erf_part = 0.5 * (std::erf((radius - s) / a) + std::erf((radius + s) / a));
  if (s < 1e-8 * a) return erf_part - 2.0 * radius / (a * std::sqrt(pi)) * std::exp(-sq(radius / a));
  const double em = std::exp(-sq((s - radius) / a)), ep = std::exp(-sq((s + radius) / a));
  return erf_part - a / (2.0 * std::sqrt(pi) * s) * (em - ep);
}

double smoothed_ball_slope_over_s(double s, double radius, double a) {
  const double y = 2.0 * s * radius / (a * a);
  if (y < 0.1) {
    // (a/s) sinh y - (2R/a) cosh y = -(2R/a)(y^2/3 + y^4/30 + y^6/840 + y^8/45360 + ...)
    const double y2 = y * y;
    const double series = 1.0 / 3.0 + y2 * (1.0 / 30.0 + y2 * (1.0 / 840.0 + y2 / 45360.0));
    const double g = std::exp(-(s * s + radius * radius) / (a * a));
    return -(2.0 * radius / (a * std::sqrt(pi))) * g * (4.0 * radius * radius / std::pow(a, 4)) * series;
  }
  const double em = std::exp(-sq((s - radius) / a)), ep = std::exp(-sq((s + radius) / a));
  const double slope = -(radius / (a * std::sqrt(pi) * s)) * (em + ep) +
                       a / (2.0 * std::sqrt(pi) * s * s) * (em - ep);
  return slope / s;
}

}  // namespace detail

void validate(const CslParams& p) {
  if (!(p.lambda >= 0.0) || !std::isfinite(p.lambda)) throw std::invalid_argument("lambda must be >= 0");
  if (!(p.rC > 0.0) || !std::isfinite(p.rC)) throw std::invalid_argument("rC must be > 0");
}

PhysicalConstants physical_constants() { return {constants::hbar, constants::m0, constants::kB}; }

double csl_prefactor(const CslParams& p) {
  return kOneSidedFactor * sq(constants::hbar) * p.lambda * std::pow(p.rC, 3) /
         (std::pow(pi, 1.5) * sq(constants::m0));
}

double csl_psd_quadrature(const CompositeMass& mass, const CslParams& params, const QuadConfig& cfg) {
  validate(params);
  if (params.lambda == 0.0) return 0.0;
  const double pref = csl_prefactor(params);
  const double abs_integral = cfg.abs_tol / pref;
  double value = 0.0, error = 0.0;
  try {
    value = cfg.scheme == QuadScheme::direct ? direct_integral(mass, params.rC, cfg, abs_integral, error)
                                             : pairwise_integral(mass, params.rC, cfg, abs_integral, error);
  } catch (const QuadratureError& e) {
    throw QuadratureError(e.what() + rc_tag(params.rC), pref * e.estimate(),
                          pref * e.error_estimate(), params.rC);
  }
  if (error > std::max(abs_integral, cfg.rel_tol * std::abs(value))) {
    throw QuadratureError("CSL quadrature error estimate exceeds tolerance" + rc_tag(params.rC),
                          pref * value, pref * error, params.rC);
  }
  return pref * value;
}

double multilayer_j(double length, double rC) {
  const double u = 0.5 * length / rC;
  if (u < 0.5) {
    // sum_{k>=1} (-1)^k u^{2k} / (k! (2k - 1))
    const double u2 = u * u;
    double term = 1.0, sum = 0.0;
    for (int k = 1; k <= 30; ++k) {
      term *= -u2 / k;
      const double add = term / (2.0 * k - 1.0);
      sum += add;
      if (std::abs(add) < 1e-18 * std::abs(sum)) break;
    }
    return sum;
  }
  return 1.0 - std::exp(-u * u) - std::sqrt(pi) * u * std::erf(u);
}

double multilayer_i(const MultilayerStack& stack, double rC, const QuadConfig& cfg) {
  validate(stack);
  const double d = stack.thickness;
  const int n = stack.n_lay;
  // g(x) = 2 sin(x/2) [rho1 U_N(cos x) + rho2 U_{N-1}(cos x)] is the layer sum
  // [rho1 sin((N+1)x) + rho2 sin(N x)] / cos(x/2) without its removable poles.
  auto g = [&](double x) {
    const double c = std::cos(x);
    double u_prev = 0.0, u = 1.0;  // U_{-1}, U_0
    for (int k = 1; k <= n; ++k) {
      const double next = 2.0 * c * u - u_prev;
      u_prev = u;
      u = next;
    }
    return 2.0 * std::sin(0.5 * x) * (stack.rho1 * u + stack.rho2 * u_prev);
  };
  const double K = kCutoff / rC;
  quad::Tolerance tol;
  tol.rel = cfg.rel_tol;
  tol.max_evals = cfg.max_evals;
  const auto r = quad::integrate([&](double q) { return std::exp(-sq(rC * q)) * sq(g(q * d)); }, 0.0, K, tol,
                                 quad::panels_for(0.0, K, stack.total_thickness()));
  return 2.0 * r.value;
}

double csl_psd_multilayer(const MultilayerStack& stack, const CslParams& params, const QuadConfig& cfg) {
  validate(params);
  validate(stack);
  if (params.lambda == 0.0) return 0.0;
  const double rC = params.rC;
  try {
    const double jj = multilayer_j(stack.base1, rC) * multilayer_j(stack.base2, rC);
    // \int dq e^{-rC^2 q^2} 4 sin^2(qL/2)/q^2 = -4 sqrt(pi) rC J(L).
    const double lateral = 16.0 * pi * rC * rC * jj;
    return csl_prefactor(params) * lateral * multilayer_i(stack, rC, cfg);
  } catch (const QuadratureError& e) {
    throw QuadratureError(e.what() + rc_tag(rC), e.estimate(), e.error_estimate(), rC);
  }
}

unsigned default_worker_count() {
  unsigned n = std::max(1u, std::thread::hardware_concurrency());
  if (const char* env = std::getenv("CSLBOUND_NUM_THREADS")) {
    try {
      const long cap = std::stol(env);
      if (cap >= 1) n = std::min<unsigned>(n, static_cast<unsigned>(cap));
    } catch (const std::exception&) {
    }
  }
  return n;
}

std::vector<ScanPoint> csl_psd_derivative_scan(const CompositeMass& mass, std::span<const double> rC_grid,
                                               const QuadConfig& cfg, unsigned workers) {
  for (std::size_t k = 0; k < rC_grid.size(); ++k) {
    if (!(rC_grid[k] > 0.0)) throw std::invalid_argument("rC grid values must be positive");
    if (k > 0 && !(rC_grid[k] > rC_grid[k - 1])) throw std::invalid_argument("rC grid must be strictly increasing");
  }
  std::vector<ScanPoint> out(rC_grid.size());
  parallel_for(rC_grid.size(), workers ? workers : default_worker_count(), [&](std::size_t k) {
    out[k] = {rC_grid[k], csl_psd_quadrature(mass, {1.0, rC_grid[k]}, cfg)};
  });
  return out;
}

}  // namespace cslbound
