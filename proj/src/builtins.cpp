#include "magscat/geometry.hpp"

#include <cmath>

namespace magscat {

namespace {

// 4 / (1 + |p|^2)^2: round unit sphere seen through stereographic projection.
class StereographicFactor final : public ConformalFactor {
 public:
  void eval(const Vec& p, double& value, Vec& grad, Mat& hess) const override {
    const int n = static_cast<int>(p.size());
    const double w = 1.0 + p.squaredNorm();
    value = 4.0 / (w * w);
    grad = -16.0 * p / (w * w * w);
    hess = -16.0 / (w * w * w) * Mat::Identity(n, n) + 96.0 / (w * w * w * w) * p * p.transpose();
  }
};

// (1 + A psi(|x - c|^2 / rho^2))^2
class BumpFactor final : public ConformalFactor {
 public:
  BumpFactor(Vec c, double rho, double amp) : c_(std::move(c)), rho_(rho), amp_(amp) {}
  void eval(const Vec& x, double& value, Vec& grad, Mat& hess) const override {
    const int n = static_cast<int>(x.size());
    const Vec d = x - c_;
    const double q = d.squaredNorm() / (rho_ * rho_);
    double p1 = 0.0, p2 = 0.0;
    const double p0 = bump_profile(q, &p1, &p2);
    const double s = 1.0 + amp_ * p0;
    const Vec dq = 2.0 * d / (rho_ * rho_);
    const Vec ds = amp_ * p1 * dq;
    const Mat hs = amp_ * (p2 * dq * dq.transpose() +
                           p1 * 2.0 / (rho_ * rho_) * Mat::Identity(n, n));
    value = s * s;
    grad = 2.0 * s * ds;
    hess = 2.0 * ds * ds.transpose() + 2.0 * s * hs;
  }

 private:
  Vec c_;
  double rho_, amp_;
};

Vec origin2() { return Vec::Zero(2); }

double pick_epsilon(const SystemSpec& spec, double diameter) {
  if (spec.epsilon < 0.0) throw Error(ErrorCode::BadParams, "epsilon must be positive");
  return spec.epsilon > 0.0 ? spec.epsilon : 0.1 * diameter;
}

}  // namespace

double bump_profile(double q, double* d1, double* d2) {
  if (q >= 1.0) {
    if (d1) *d1 = 0.0;
    if (d2) *d2 = 0.0;
    return 0.0;
  }
  const double a = 1.0 - q;
  const double psi = std::exp(1.0 - 1.0 / a);
  if (d1) *d1 = -psi / (a * a);
  if (d2) *d2 = psi / (a * a * a * a) - 2.0 * psi / (a * a * a);
  return psi;
}

std::shared_ptr<const MetricField> polar_sphere_metric() {
  return std::make_shared<PolarSphereMetric>();
}

MagneticSystem builtin_system(const SystemSpec& spec) {
  if (!std::isfinite(spec.B)) throw Error(ErrorCode::BadParams, "B must be finite");
  std::shared_ptr<const MetricField> metric;
  std::shared_ptr<const BoundaryChart> boundary;
  double diameter = 0.0;

  if (spec.name == "euclidean_disk" || spec.name == "perturbed_disk") {
    if (!(spec.R > 0.0)) throw Error(ErrorCode::BadParams, "disk radius must be positive");
    boundary = std::make_shared<CircleBoundary>(origin2(), spec.R, spec.R);
    diameter = 2.0 * spec.R;
    if (spec.name == "euclidean_disk") {
      metric = std::make_shared<FlatMetric>(2);
    } else {
      if (!(spec.bump_radius > 0.0) || spec.bump_amplitude <= -1.0)
        throw Error(ErrorCode::BadParams, "bump radius must be positive and amplitude > -1");
      Vec c(2);
      c << spec.bump_center_x, spec.bump_center_y;
      if (c.norm() + spec.bump_radius >= spec.R)
        throw Error(ErrorCode::BadParams, "bump support must lie inside the disk");
      metric = std::make_shared<ConformalMetric>(
          2, std::make_shared<BumpFactor>(c, spec.bump_radius, spec.bump_amplitude));
    }
  } else if (spec.name == "spherical_cap") {
    if (!(spec.phi0 > 0.0 && spec.phi0 < M_PI))
      throw Error(ErrorCode::BadParams, "cap angle must lie in (0, pi)");
    metric = std::make_shared<ConformalMetric>(2, std::make_shared<StereographicFactor>());
    boundary = std::make_shared<CircleBoundary>(origin2(), std::tan(0.5 * spec.phi0),
                                                std::sin(spec.phi0));
    diameter = 2.0 * std::sin(spec.phi0);
  } else if (spec.name == "flower_disk") {
    if (!(spec.R > 0.0) || !(std::abs(spec.flower_amplitude) < 0.5) || spec.flower_lobes < 1)
      throw Error(ErrorCode::BadParams, "flower needs R > 0, |amplitude| < 0.5, lobes >= 1");
    metric = std::make_shared<FlatMetric>(2);
    boundary = std::make_shared<FlowerBoundary>(spec.R, spec.flower_amplitude, spec.flower_lobes);
    diameter = 2.0 * spec.R * (1.0 + std::abs(spec.flower_amplitude));
  } else if (spec.name == "half_plane") {
    metric = std::make_shared<FlatMetric>(2);
    boundary = std::make_shared<PlaneBoundary>(2, 4.0);
    diameter = 2.0;
  } else {
    throw Error(ErrorCode::UnknownSystem, "no built-in system named '" + spec.name + "'");
  }

  MagneticSystem sys(metric, ConstantMagneticField::planar(spec.B), boundary,
                     pick_epsilon(spec, diameter), spec.name);
  sys.spec = spec;
  return sys;
}

}  // namespace magscat
