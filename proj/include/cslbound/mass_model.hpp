#pragma once

// Rigid mass distributions and their spatial Fourier transforms
//
//   rho~(q) = \int rho(r) exp(-i q.r) d^3r
//
// Every component is either a homogeneous axis-aligned cuboid, a homogeneous
// sphere, or an alternating-density multilayer stack whose stacking axis is a
// coordinate axis. All quantities are SI (metres, kilograms).

#include <complex>
#include <string>
#include <variant>
#include <vector>

#include <Eigen/Core>

namespace cslbound {

using Vec3 = Eigen::Vector3d;
using Complex = std::complex<double>;

struct Cuboid {
  double density = 0.0;  // kg/m^3
  Vec3 lengths = Vec3::Zero();
  Vec3 center = Vec3::Zero();
};

struct Sphere {
  double density = 0.0;
  double radius = 0.0;
  Vec3 center = Vec3::Zero();
};

/// 2 n_lay + 1 contiguous layers of equal thickness. Layers alternate between
/// rho1 and rho2 starting and ending with rho1, centred on `center`.
///
/// `base1` lies along the coordinate axis following the stacking axis in
/// cyclic order (x -> y -> z -> x), `base2` along the remaining one.
struct MultilayerStack {
  double rho1 = 0.0;
  double rho2 = 0.0;
  int n_lay = 0;
  double thickness = 0.0;  // single layer
  double base1 = 0.0;
  double base2 = 0.0;
  Vec3 center = Vec3::Zero();
  Vec3 stacking_axis = Vec3::UnitZ();

  int layer_count() const { return 2 * n_lay + 1; }
  double total_thickness() const { return thickness * layer_count(); }
  /// Index (0, 1, 2) of the coordinate axis the layers are stacked along.
  int axis_index() const;
  double mass() const;
};

using Component = std::variant<Cuboid, Sphere, MultilayerStack>;

/// Throws std::invalid_argument when a component violates its invariants.
void validate(const Cuboid& c);
void validate(const Sphere& s);
void validate(const MultilayerStack& m);
void validate(const Component& c);

double mass(const Component& c);
Vec3 center(const Component& c);
/// Half extent of the component's bounding box along each axis.
Vec3 half_extent(const Component& c);

/// True for components whose transform factorises into per-axis factors.
bool is_separable(const Component& c);

/// Per-axis factor of a separable component, phase included. The density is
/// folded into the stacking-axis factor for stacks and the x factor for
/// cuboids, so that fourier_transform(c, q) = prod_i axis_factor(c, i, q_i).
Complex axis_factor(const Component& c, int axis, double q);

Complex fourier_transform(const Component& c, const Vec3& q);

/// The stack expressed as its individual layers.
std::vector<Cuboid> layers(const MultilayerStack& m);

class CompositeMass {
 public:
  CompositeMass(std::vector<Component> components, Vec3 motion_axis);

  const std::vector<Component>& components() const { return components_; }
  const Vec3& motion_axis() const { return motion_axis_; }
  double total_mass() const;

  Complex transform(const Vec3& q) const;

 private:
  std::vector<Component> components_;
  Vec3 motion_axis_;
};

Complex composite_transform(const CompositeMass& mass, const Vec3& q);

namespace detail {
// 2 sin(q L / 2) / q, the transform of a unit slab of width L centred at 0.
double slab_factor(double q, double length);
double slab_factor_series(double q, double length);
double slab_factor_direct(double q, double length);
// 4 pi (sin x - x cos x) / q^3 with x = q R, the transform of a unit ball.
double ball_factor(double q, double radius);
double ball_factor_series(double q, double radius);
double ball_factor_direct(double q, double radius);
}  // namespace detail

}  // namespace cslbound
