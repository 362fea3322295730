#include "cslbound/mass_model.hpp"

#include <cmath>
#include <stdexcept>

#include "cslbound/constants.hpp"

namespace cslbound {

namespace {

constexpr double kUnitNormTol = 1e-9;

// Below this |q L| the slab factor switches to its Taylor series.
constexpr double kSlabSeriesLimit = 1e-6;
// The ball factor loses digits to cancellation much earlier, so its series
// branch is longer and is used up to a larger argument.
constexpr double kBallSeriesLimit = 0.1;

template <class... Ts>
struct overloaded : Ts... {
  using Ts::operator()...;
};
template <class... Ts>
overloaded(Ts...) -> overloaded<Ts...>;

void require(bool ok, const char* what) {
  if (!ok) throw std::invalid_argument(what);
}

int base_axis(const MultilayerStack& m, int which) { return (m.axis_index() + 1 + which) % 3; }

double stack_layer_density(const MultilayerStack& m, int j) { return (j % 2 == 0) ? m.rho1 : m.rho2; }

Complex stack_axis_factor(const MultilayerStack& m, double q, double origin) {
  // Layer j sits at origin + (j - n_lay) d. Walk the phases by recurrence.
  const int n = m.layer_count();
  const double d = m.thickness;
  const Complex step = std::polar(1.0, -q * d);
  Complex phase = std::polar(1.0, -q * (origin - m.n_lay * d));
  Complex sum_odd = 0.0, sum_even = 0.0;
  for (int j = 0; j < n; ++j) {
    if (j % 2 == 0) {
      sum_even += phase;
    } else {
      sum_odd += phase;
    }
    phase *= step;
  }
  return detail::slab_factor(q, d) * (m.rho1 * sum_even + m.rho2 * sum_odd);
}

}  // namespace

namespace detail {

double slab_factor_series(double q, double length) {
  const double x2 = (q * length) * (q * length);
  return length * (1.0 - x2 / 24.0 + x2 * x2 / 1920.0);
}

double slab_factor_direct(double q, double length) { return 2.0 * std::sin(0.5 * q * length) / q; }

double slab_factor(double q, double length) {
  if (std::abs(q * length) < kSlabSeriesLimit) return slab_factor_series(q, length);
  return slab_factor_direct(q, length);
}

double ball_factor_series(double q, double radius) {
  // (sin x - x cos x) / x^3 = sum_k (-1)^(k+1) 2k x^(2k-2) / (2k+1)!
  const double x2 = (q * radius) * (q * radius);
  constexpr double c[] = {1.0 / 3.0,        -1.0 / 30.0,       1.0 / 840.0,
                          -1.0 / 45360.0,   1.0 / 3991680.0,   -12.0 / 6227020800.0,
                          14.0 / 1307674368000.0};
  double acc = 0.0;
  for (int k = 6; k >= 0; --k) acc = acc * x2 + c[k];
  return 4.0 * constants::pi * radius * radius * radius * acc;
}

double ball_factor_direct(double q, double radius) {
  const double x = q * radius;
  return 4.0 * constants::pi * (std::sin(x) - x * std::cos(x)) / (q * q * q);
}

double ball_factor(double q, double radius) {
  if (std::abs(q * radius) < kBallSeriesLimit) return ball_factor_series(q, radius);
  return ball_factor_direct(q, radius);
}

}  // namespace detail

int MultilayerStack::axis_index() const {
  for (int i = 0; i < 3; ++i) {
    if (std::abs(std::abs(stacking_axis[i]) - 1.0) < kUnitNormTol) return i;
  }
  throw std::invalid_argument("multilayer stacking axis must be a coordinate axis");
}

double MultilayerStack::mass() const {
  return base1 * base2 * thickness * ((n_lay + 1) * rho1 + n_lay * rho2);
}

void validate(const Cuboid& c) {
  require(c.density > 0.0, "cuboid density must be positive");
  require((c.lengths.array() > 0.0).all(), "cuboid side lengths must be positive");
  require(c.center.allFinite(), "cuboid center must be finite");
}

void validate(const Sphere& s) {
  require(s.density > 0.0, "sphere density must be positive");
  require(s.radius > 0.0, "sphere radius must be positive");
  require(s.center.allFinite(), "sphere center must be finite");
}

void validate(const MultilayerStack& m) {
  require(m.rho2 > 0.0, "multilayer rho2 must be positive");
  require(m.rho1 > m.rho2, "multilayer requires rho1 > rho2");
  require(m.n_lay >= 0, "multilayer n_lay must be non-negative");
  require(m.thickness > 0.0, "multilayer layer thickness must be positive");
  require(m.base1 > 0.0 && m.base2 > 0.0, "multilayer base lengths must be positive");
  require(std::abs(m.stacking_axis.norm() - 1.0) < kUnitNormTol, "stacking axis must have unit norm");
  require(m.center.allFinite(), "multilayer center must be finite");
  (void)m.axis_index();
}

void validate(const Component& c) {
  std::visit([](const auto& v) { validate(v); }, c);
}

double mass(const Component& c) {
  return std::visit(overloaded{
                        [](const Cuboid& b) { return b.density * b.lengths.prod(); },
                        [](const Sphere& s) {
                          return s.density * 4.0 / 3.0 * constants::pi * s.radius * s.radius * s.radius;
                        },
                        [](const MultilayerStack& m) { return m.mass(); },
                    },
                    c);
}

Vec3 center(const Component& c) {
  return std::visit([](const auto& v) -> Vec3 { return v.center; }, c);
}

Vec3 half_extent(const Component& c) {
  return std::visit(overloaded{
                        [](const Cuboid& b) -> Vec3 { return 0.5 * b.lengths; },
                        [](const Sphere& s) -> Vec3 { return Vec3::Constant(s.radius); },
                        [](const MultilayerStack& m) -> Vec3 {
                          Vec3 h;
                          h[m.axis_index()] = 0.5 * m.total_thickness();
                          h[base_axis(m, 0)] = 0.5 * m.base1;
                          h[base_axis(m, 1)] = 0.5 * m.base2;
                          return h;
                        },
                    },
                    c);
}

bool is_separable(const Component& c) { return !std::holds_alternative<Sphere>(c); }

Complex axis_factor(const Component& c, int axis, double q) {
  return std::visit(
      overloaded{
          [&](const Cuboid& b) -> Complex {
            const double scale = (axis == 0) ? b.density : 1.0;
            return scale * detail::slab_factor(q, b.lengths[axis]) * std::polar(1.0, -q * b.center[axis]);
          },
          [&](const MultilayerStack& m) -> Complex {
            if (axis == m.axis_index()) return stack_axis_factor(m, q, m.center[axis]);
            const double length = (axis == base_axis(m, 0)) ? m.base1 : m.base2;
            return detail::slab_factor(q, length) * std::polar(1.0, -q * m.center[axis]);
          },
          [&](const Sphere&) -> Complex {
            throw std::logic_error("a sphere has no per-axis factorisation");
          },
      },
      c);
}

Complex fourier_transform(const Component& c, const Vec3& q) {
  if (const auto* s = std::get_if<Sphere>(&c)) {
    return s->density * detail::ball_factor(q.norm(), s->radius) * std::polar(1.0, -q.dot(s->center));
  }
  return axis_factor(c, 0, q[0]) * axis_factor(c, 1, q[1]) * axis_factor(c, 2, q[2]);
}

std::vector<Cuboid> layers(const MultilayerStack& m) {
  std::vector<Cuboid> out;
  const int axis = m.axis_index();
  Vec3 lengths;
  lengths[axis] = m.thickness;
  lengths[base_axis(m, 0)] = m.base1;
  lengths[base_axis(m, 1)] = m.base2;
  for (int j = 0; j < m.layer_count(); ++j) {
    Vec3 c = m.center;
    c[axis] += (j - m.n_lay) * m.thickness;
    out.push_back(Cuboid{stack_layer_density(m, j), lengths, c});
  }
  return out;
}

CompositeMass::CompositeMass(std::vector<Component> components, Vec3 motion_axis)
    : components_(std::move(components)), motion_axis_(std::move(motion_axis)) {
  require(!components_.empty(), "a composite mass needs at least one component");
  require(std::abs(motion_axis_.norm() - 1.0) < kUnitNormTol, "motion axis must have unit norm");
  for (const auto& c : components_) validate(c);
}

double CompositeMass::total_mass() const {
  double m = 0.0;
  for (const auto& c : components_) m += mass(c);
  return m;
}

Complex CompositeMass::transform(const Vec3& q) const {
  Complex sum = 0.0;
  for (const auto& c : components_) sum += fourier_transform(c, q);
  return sum;
}

Complex composite_transform(const CompositeMass& mass, const Vec3& q) { return mass.transform(q); }

}  // namespace cslbound
