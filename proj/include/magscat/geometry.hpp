#pragma once

#include "magscat/core.hpp"

#include <functional>
#include <memory>
#include <optional>
#include <string>

namespace magscat {

// ---------------------------------------------------------------------------
// Field evaluators
// ---------------------------------------------------------------------------

/// Riemannian metric on a single chart, with first and second partials.
/// dg(x)[k] = d_k g, d2g(x)[k][l] = d_k d_l g.
class MetricField {
 public:
  virtual ~MetricField() = default;
  virtual int dim() const = 0;
  virtual Mat g(const Vec& x) const = 0;
  virtual MatArray dg(const Vec& x) const = 0;
  virtual MatArray2 d2g(const Vec& x) const = 0;
};

/// Euclidean metric.
class FlatMetric final : public MetricField {
 public:
  explicit FlatMetric(int n) : n_(n) {}
  int dim() const override { return n_; }
  Mat g(const Vec& x) const override;
  MatArray dg(const Vec& x) const override;
  MatArray2 d2g(const Vec& x) const override;

 private:
  int n_;
};

/// Scalar conformal factor with closed-form gradient and Hessian.
class ConformalFactor {
 public:
  virtual ~ConformalFactor() = default;
  virtual void eval(const Vec& x, double& value, Vec& grad, Mat& hess) const = 0;
};

/// g = f(x) * I.
class ConformalMetric final : public MetricField {
 public:
  ConformalMetric(int n, std::shared_ptr<const ConformalFactor> factor)
      : n_(n), factor_(std::move(factor)) {}
  int dim() const override { return n_; }
  Mat g(const Vec& x) const override;
  MatArray dg(const Vec& x) const override;
  MatArray2 d2g(const Vec& x) const override;

 private:
  int n_;
  std::shared_ptr<const ConformalFactor> factor_;
};

/// Round unit sphere in polar coordinates (phi, lambda): g = dphi^2 + sin^2(phi) dlambda^2.
class PolarSphereMetric final : public MetricField {
 public:
  int dim() const override { return 2; }
  Mat g(const Vec& x) const override;
  MatArray dg(const Vec& x) const override;
  MatArray2 d2g(const Vec& x) const override;
};

/// Wraps a g-only evaluator; partials by central differences
/// (step h1 for first partials, h2 for second partials).
class FiniteDifferenceMetric final : public MetricField {
 public:
  using Evaluator = std::function<Mat(const Vec&)>;
  FiniteDifferenceMetric(int n, Evaluator g, double h1 = 1e-5, double h2 = 1e-4)
      : n_(n), g_(std::move(g)), h1_(h1), h2_(h2) {}
  int dim() const override { return n_; }
  Mat g(const Vec& x) const override { return g_(x); }
  MatArray dg(const Vec& x) const override;
  MatArray2 d2g(const Vec& x) const override;

 private:
  int n_;
  Evaluator g_;
  double h1_, h2_;
};

/// Closed 2-form Omega with components omega(x)(i,j) = Omega_ij, antisymmetric.
class MagneticField {
 public:
  virtual ~MagneticField() = default;
  virtual int dim() const = 0;
  virtual Mat omega(const Vec& x) const = 0;
  virtual MatArray domega(const Vec& x) const = 0;
};

/// Constant components (B dx^1 ^ dx^2 in the plane, or any constant 2-form).
class ConstantMagneticField final : public MagneticField {
 public:
  explicit ConstantMagneticField(Mat omega) : omega_(std::move(omega)) {}
  static std::shared_ptr<ConstantMagneticField> planar(double b);
  int dim() const override { return static_cast<int>(omega_.rows()); }
  Mat omega(const Vec&) const override { return omega_; }
  MatArray domega(const Vec& x) const override;

 private:
  Mat omega_;
};

/// Omega-only evaluator; partials by central differences.
class FiniteDifferenceMagneticField final : public MagneticField {
 public:
  using Evaluator = std::function<Mat(const Vec&)>;
  FiniteDifferenceMagneticField(int n, Evaluator omega, double h = 1e-5)
      : n_(n), omega_(std::move(omega)), h_(h) {}
  int dim() const override { return n_; }
  Mat omega(const Vec& x) const override { return omega_(x); }
  MatArray domega(const Vec& x) const override;

 private:
  int n_;
  Evaluator omega_;
  double h_;
};

// ---------------------------------------------------------------------------
// Boundary
// ---------------------------------------------------------------------------

/// Boundary of the domain: parametrization u -> x(u) and a level function
/// b with b > 0 inside, b = 0 on the boundary.
class BoundaryChart {
 public:
  virtual ~BoundaryChart() = default;
  virtual int dim() const = 0;
  virtual Vec point(const Vec& u) const = 0;
  /// Columns are d x / d u^alpha (n x (n-1)).
  virtual Mat tangents(const Vec& u) const = 0;
  virtual double level(const Vec& x) const = 0;
  virtual Vec level_grad(const Vec& x) const = 0;
  virtual Mat level_hess(const Vec& x) const = 0;
  /// Boundary parameter of a point on (or very near) the boundary.
  virtual Vec project(const Vec& x) const = 0;
  /// Period of u (n = 2 closed curves), or 0 for open charts.
  virtual double period() const { return 0.0; }
  /// Parameter range [u_min, u_min + extent) used for sampling (n = 2).
  virtual double extent() const { return period(); }
  virtual double diameter() const = 0;
};

/// Circle |x - c| = r parametrized by u with x(u) = c + r (cos(u/s), sin(u/s)).
/// s = r gives arc length in the Euclidean chart.
class CircleBoundary final : public BoundaryChart {
 public:
  CircleBoundary(Vec center, double radius, double u_scale)
      : c_(std::move(center)), r_(radius), s_(u_scale) {}
  int dim() const override { return 2; }
  Vec point(const Vec& u) const override;
  Mat tangents(const Vec& u) const override;
  double level(const Vec& x) const override;
  Vec level_grad(const Vec& x) const override;
  Mat level_hess(const Vec& x) const override;
  Vec project(const Vec& x) const override;
  double period() const override { return 2.0 * M_PI * s_; }
  double diameter() const override { return 2.0 * r_; }

 private:
  Vec c_;
  double r_, s_;
};

/// Star-shaped curve r(a) = R (1 + amp cos(k a)), parametrized by the polar angle.
class FlowerBoundary final : public BoundaryChart {
 public:
  FlowerBoundary(double radius, double amp, int lobes) : R_(radius), a_(amp), k_(lobes) {}
  int dim() const override { return 2; }
  Vec point(const Vec& u) const override;
  Mat tangents(const Vec& u) const override;
  double level(const Vec& x) const override;
  Vec level_grad(const Vec& x) const override;
  Mat level_hess(const Vec& x) const override;
  Vec project(const Vec& x) const override;
  double period() const override { return 2.0 * M_PI; }
  double diameter() const override { return 2.0 * R_ * (1.0 + a_); }
  double radius_at(double angle, double* d1 = nullptr, double* d2 = nullptr) const;

 private:
  double R_, a_;
  int k_;
};

/// Half-space x^n > 0 with u = (x^1, ..., x^{n-1}).
class PlaneBoundary final : public BoundaryChart {
 public:
  PlaneBoundary(int n, double extent) : n_(n), extent_(extent) {}
  int dim() const override { return n_; }
  Vec point(const Vec& u) const override;
  Mat tangents(const Vec& u) const override;
  double level(const Vec& x) const override { return x[n_ - 1]; }
  Vec level_grad(const Vec& x) const override;
  Mat level_hess(const Vec& x) const override;
  Vec project(const Vec& x) const override { return x.head(n_ - 1); }
  double extent() const override { return extent_; }
  double diameter() const override { return extent_; }

 private:
  int n_;
  double extent_;
};

// ---------------------------------------------------------------------------
// Magnetic system
// ---------------------------------------------------------------------------

/// Parameters of a built-in system (the [system] config section).
struct SystemSpec {
  std::string name = "euclidean_disk";
  double R = 1.0;
  double B = 0.0;
  double phi0 = M_PI / 2.0 + 0.2;
  double bump_center_x = 0.3;
  double bump_center_y = 0.0;
  double bump_radius = 0.3;
  double bump_amplitude = 0.2;
  double flower_amplitude = 0.15;
  int flower_lobes = 3;
  double epsilon = 0.0;  // 0 selects 0.1 * diameter
};

/// Pointwise geometric data. Order 1 fills g, ginv, dg, christoffel, omega, Y;
/// order 2 adds d2g, dchristoffel, domega, dY.
struct LocalGeometry {
  int n = 0;
  Mat g, ginv, omega, Y;
  MatArray dg;
  MatArray christoffel;  // christoffel[k](i, j) = Gamma^k_ij
  MatArray2 d2g;
  MatArray2 dchristoffel;  // dchristoffel[m][k](i, j) = d_m Gamma^k_ij
  MatArray domega;
  MatArray dY;  // dY[m] = d_m Y
};

/// The object (M, dM, g, Omega) on one global chart, evaluators valid on the
/// collar-enlarged chart M' = M u V.
class MagneticSystem {
 public:
  MagneticSystem(std::shared_ptr<const MetricField> metric,
                 std::shared_ptr<const MagneticField> magnetic,
                 std::shared_ptr<const BoundaryChart> boundary, double epsilon,
                 std::string label = "custom");

  int dim() const { return n_; }
  double epsilon() const { return epsilon_; }
  const std::string& label() const { return label_; }
  const BoundaryChart& boundary() const { return *boundary_; }
  std::shared_ptr<const BoundaryChart> boundary_ptr() const { return boundary_; }
  std::shared_ptr<const MetricField> metric_ptr() const { return metric_; }
  std::shared_ptr<const MagneticField> magnetic_ptr() const { return magnetic_; }
  QueryAudit& audit() const { return *audit_; }

  Mat metric(const Vec& x) const;
  Mat omega(const Vec& x) const;
  LocalGeometry local(const Vec& x, int order = 1) const;

  /// Acceleration -Gamma(v, v) + Y v of the magnetic geodesic equation.
  Vec acceleration(const Vec& x, const Vec& v) const;
  /// Same with Y dropped (Riemannian geodesics).
  Vec geodesic_acceleration(const Vec& x, const Vec& v) const;

  double level(const Vec& x) const;
  /// Approximate signed distance to the boundary, b / |grad b|.
  double signed_depth(const Vec& x) const;
  bool in_extended_chart(const Vec& x) const;

  /// Same geometry with Omega replaced by -Omega.
  MagneticSystem with_reversed_field() const;
  /// Same geometry with Omega = 0.
  MagneticSystem riemannian() const;

  std::optional<SystemSpec> spec;

 private:
  int n_;
  std::shared_ptr<const MetricField> metric_;
  std::shared_ptr<const MagneticField> magnetic_;
  std::shared_ptr<const BoundaryChart> boundary_;
  double epsilon_;
  std::string label_;
  std::shared_ptr<QueryAudit> audit_;
};

// ---------------------------------------------------------------------------
// Operations
// ---------------------------------------------------------------------------

struct MetricPack {
  Mat g, g_inv;
  MatArray christoffel;
};

/// g, its inverse and the Levi-Civita symbols at x. Throws NotPositiveDefinite.
MetricPack metric_pack(const MagneticSystem& sys, const Vec& x);
MetricPack metric_pack(const MetricField& metric, const Vec& x);

/// Lorentz tensor: <Y v, w>_g = Omega(v, w), i.e. Y = g^{-1} Omega^T.
Mat lorentz_Y(const MagneticSystem& sys, const Vec& x);

/// Gamma^k(v, w).
Vec christoffel_contract(const MatArray& christoffel, int n, const Vec& v, const Vec& w);

/// Standard-convention curvature R(X, Y) Z = nabla_X nabla_Y Z - nabla_Y nabla_X Z.
Vec riemann(const LocalGeometry& geo, const Vec& X, const Vec& Y, const Vec& Z);

/// (nabla_W Y) as a (1,1) tensor.
Mat covariant_derivative_Y(const LocalGeometry& geo, const Vec& W);

/// Cyclic sum d_i Omega_jk + d_j Omega_ki + d_k Omega_ij, max abs entry (0 for n = 2).
double closedness_residual(const MagneticSystem& sys, const Vec& x);

struct BoundaryFrame {
  Vec x;
  Vec normal;     // inward unit normal
  Mat tangents;   // d x / d u
  Mat induced;    // iota^* g in the u basis
  Mat second_fundamental;  // II on the u basis, positive for the unit disk
};

/// Boundary point, normal, tangent basis and II at u. Throws DegenerateBoundary.
BoundaryFrame boundary_frame(const MagneticSystem& sys, const Vec& u);

/// II(v, v) - <Y v, nu>_g for a unit tangent vector v (chart components).
double convexity_indicator(const MagneticSystem& sys, const Vec& u, const Vec& v);

/// Inward unit normal field extended off the boundary (normalized g-gradient
/// of the level function), and its coordinate Jacobian.
Vec normal_field(const MagneticSystem& sys, const Vec& x, Mat* jacobian = nullptr);

struct CollarCoords {
  Vec u;
  double depth = 0.0;  // signed g-distance to the boundary, positive inside
};

/// exp_nu(u, depth): unit-speed Riemannian geodesic from x(u) along nu.
Vec collar_map(const MagneticSystem& sys, const Vec& u, double depth);

/// collar_map together with its Jacobian [d/du^alpha | d/d depth].
Vec collar_map_jacobian(const MagneticSystem& sys, const Vec& u, double depth, Mat& jacobian);

/// Metric components in collar coordinates at (u, depth).
Mat collar_metric(const MagneticSystem& sys, const Vec& u, double depth);

/// Inverse of the collar map by damped Newton. Throws OutsideCollar / InversionDiverged.
CollarCoords collar_inverse(const MagneticSystem& sys, const Vec& x);

/// Built-in fixture systems. Throws UnknownSystem / BadParams.
MagneticSystem builtin_system(const SystemSpec& spec);

/// Polar-coordinate sphere fixture (no boundary semantics).
std::shared_ptr<const MetricField> polar_sphere_metric();

/// Smooth compactly supported bump exp(1 - 1/(1-q)) on q in [0, 1) and its
/// first two derivatives in q.
double bump_profile(double q, double* d1 = nullptr, double* d2 = nullptr);

}  // namespace magscat
