#pragma once

#include "magscat/scattering.hpp"

#include <functional>
#include <memory>
#include <vector>

namespace magscat {

/// 1-form zeta with d zeta = Omega on the chart; dzeta(x)(k, i) = d_k zeta_i.
class MagneticPotential {
 public:
  virtual ~MagneticPotential() = default;
  virtual int dim() const = 0;
  virtual Vec zeta(const Vec& x) const = 0;
  virtual Mat dzeta(const Vec& x) const = 0;
};

/// Poincare-lemma potential zeta_i(x) = int_0^1 t (x - x0)^j Omega_ji(x0 + t (x - x0)) dt.
class RadialPotential final : public MagneticPotential {
 public:
  RadialPotential(const MagneticSystem& sys, Vec base, int order = 24);
  int dim() const override { return n_; }
  Vec zeta(const Vec& x) const override;
  Mat dzeta(const Vec& x) const override;
  const Vec& base() const { return base_; }

 private:
  std::shared_ptr<const MagneticField> field_;
  QueryAudit* audit_;
  Vec base_;
  int n_, order_;
};

/// zeta + dh for a scalar h with closed-form gradient and Hessian.
class ShiftedPotential final : public MagneticPotential {
 public:
  using Scalar = std::function<void(const Vec&, double&, Vec&, Mat&)>;
  ShiftedPotential(std::shared_ptr<const MagneticPotential> base, Scalar h)
      : base_(std::move(base)), h_(std::move(h)) {}
  int dim() const override { return base_->dim(); }
  Vec zeta(const Vec& x) const override;
  Mat dzeta(const Vec& x) const override;

 private:
  std::shared_ptr<const MagneticPotential> base_;
  Scalar h_;
};

class ZeroPotential final : public MagneticPotential {
 public:
  explicit ZeroPotential(int n) : n_(n) {}
  int dim() const override { return n_; }
  Vec zeta(const Vec&) const override { return Vec::Zero(n_); }
  Mat dzeta(const Vec&) const override { return Mat::Zero(n_, n_); }

 private:
  int n_;
};

std::shared_ptr<RadialPotential> radial_potential(const MagneticSystem& sys, const Vec& base);

/// max |d_i zeta_j - d_j zeta_i - Omega_ij| at x.
double potential_residual(const MagneticSystem& sys, const MagneticPotential& zeta, const Vec& x);

/// tau - int_gamma zeta along a path (Simpson on knots and Hermite midpoints).
double action_of_path(const MagneticPotential& zeta, const GeodesicPath& path);

struct ConnectOptions {
  double h = 1e-3;
  double tol = 1e-13;        // target residual; failure above 1e-9
  int max_iter = 40;
  double max_condition = 1e8;
};

struct TwoPointConnection {
  Vec x, y, theta;
  double tau = 0.0;
  double residual = 0.0;
  double condition = 0.0;
  Mat jacobian;  // d endpoint / d (c, tau) at the solution
};

/// Damped Newton shooting for exp_x(tau theta) = y with FD Jacobian. theta is
/// parametrized as normalize(theta0 + sum c_a b_a), b_a spanning theta0's normal space.
/// Throws ConjugateDegenerate / NoConvergence.
TwoPointConnection connect(const MagneticSystem& sys, const Vec& x, const Vec& y,
                           const Vec& theta_guess, double tau_guess,
                           const ConnectOptions& opt = {});

struct RhoValue {
  double rho = 0.0;
  TwoPointConnection connection;
};

RhoValue rho(const MagneticSystem& sys, const MagneticPotential& zeta, const Vec& x, const Vec& y,
             const Vec& theta_guess, double tau_guess, const ConnectOptions& opt = {});

/// Central finite-difference gradient of x -> rho(x, y), warm-started from `base`.
Vec rho_gradient_fd(const MagneticSystem& sys, const MagneticPotential& zeta,
                    const RhoValue& base, double step = 1e-5, const ConnectOptions& opt = {});

/// |FD directional derivative of rho in x along w - (-<theta, w>_g + zeta(w))|.
double first_variation_check(const MagneticSystem& sys, const MagneticPotential& zeta,
                             const RhoValue& base, const Vec& w, double step = 1e-5,
                             const ConnectOptions& opt = {});

/// |g^{ij} (d_i rho - zeta_i)(d_j rho - zeta_j) - 1| with d rho by central differences.
double eikonal_residual(const MagneticSystem& sys, const MagneticPotential& zeta,
                        const RhoValue& base, double step = 1e-5, const ConnectOptions& opt = {});

/// Gauge data in collar coordinates (n = 2): tangential component zeta_u(u, z)
/// and normal component zeta_z(u, z).
struct CollarGauge {
  std::function<double(double u, double z)> zeta_u;
  std::function<double(double u, double z)> zeta_z;
};

/// Collar components of a chart potential (uses the system's collar map).
CollarGauge collar_gauge(const MagneticSystem& sys, std::shared_ptr<const MagneticPotential> zeta);

/// zeta1' = zeta1 + d(chi f) with iota^* zeta1' = iota^* zeta2 and zeta1'(d_z) = zeta2(d_z)
/// for |z| <= 0.4 eps; chi a quintic smoothstep vanishing for |z| >= 0.8 eps.
class CompatibleGauge {
 public:
  CompatibleGauge(CollarGauge g1, CollarGauge g2, double period, double epsilon,
                  double holonomy_tol = 1e-8);
  double f(double u, double z) const;
  double f0(double u) const;
  double chi(double z, double* d1 = nullptr) const;
  /// Adjusted potential components (zeta_u, zeta_z) at (u, z).
  std::pair<double, double> adjusted(double u, double z) const;
  double holonomy() const { return holonomy_; }

 private:
  double line(double z0, double z1, double u) const;
  CollarGauge g1_, g2_;
  double period_, eps_, holonomy_ = 0.0;
  double u_ref_ = 0.0;
};

struct RhoSample {
  double s = 0.0;
  double u_exit = 0.0;
  double rho = 0.0;
};

struct RhoAlongScattering {
  double lambda = 0.0;  // convexity indicator estimated from the exit curve
  std::vector<RhoSample> samples;
};

/// Boundary data needed next to scattering data: iota^* g and iota^* zeta (n = 2).
struct BoundaryGaugeData {
  std::function<double(double u)> induced;
  std::function<double(double u)> zeta_u;
};

/// rho(x0, y_s) for the tilted vectors v_s = cos(s) v0 + sin(s) nu (v0 = +-d_u direction
/// chosen by `sign`), by quadrature of d rho / ds = <w_s, y_s'>_g - zeta(y_s') from s = 0.
/// Throws NonSmoothExitCurve / ConvexityUndetermined.
RhoAlongScattering rho_along_scattering(const ScatteringOracle& oracle,
                                        const BoundaryGaugeData& data, double u0, int sign,
                                        const std::vector<double>& s_grid);

}  // namespace magscat
