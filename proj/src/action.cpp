#include "magscat/action.hpp"

#include "magscat/jacobi.hpp"

#include <Eigen/LU>
#include <Eigen/SVD>
#include <algorithm>
#include <cmath>
#include <limits>

namespace magscat {

RadialPotential::RadialPotential(const MagneticSystem& sys, Vec base, int order)
    : field_(sys.magnetic_ptr()), audit_(&sys.audit()), base_(std::move(base)),
      n_(sys.dim()), order_(order) {
  if (base_.size() != n_) throw Error(ErrorCode::BadParams, "base point dimension mismatch");
}

Vec RadialPotential::zeta(const Vec& x) const {
  const Quadrature& q = gauss_legendre_unit(order_);
  const Vec d = x - base_;
  Vec out = Vec::Zero(n_);
  for (std::size_t k = 0; k < q.nodes.size(); ++k) {
    const double t = q.nodes[k];
    audit_->note();
    const Mat om = field_->omega(base_ + t * d);
    out += q.weights[k] * t * (om.transpose() * d);
  }
  if (!out.allFinite()) throw Error(ErrorCode::QuadratureFail, "non-finite potential");
  return out;
}

Mat RadialPotential::dzeta(const Vec& x) const {
  const Quadrature& q = gauss_legendre_unit(order_);
  const Vec d = x - base_;
  Mat out = Mat::Zero(n_, n_);
  for (std::size_t k = 0; k < q.nodes.size(); ++k) {
    const double t = q.nodes[k];
    const Vec p = base_ + t * d;
    audit_->note();
    const Mat om = field_->omega(p);
    const MatArray dom = field_->domega(p);
    // d_k zeta_i = int t Omega_ki + t^2 d^j d_k Omega_ji
    Mat term = t * om;
    for (int kk = 0; kk < n_; ++kk) term.row(kk) += t * t * (dom[kk].transpose() * d).transpose();
    out += q.weights[k] * term;
  }
  if (!out.allFinite()) throw Error(ErrorCode::QuadratureFail, "non-finite potential derivative");
  return out;
}

Vec ShiftedPotential::zeta(const Vec& x) const {
  double v;
  Vec grad;
  Mat hess;
  h_(x, v, grad, hess);
  return base_->zeta(x) + grad;
}

Mat ShiftedPotential::dzeta(const Vec& x) const {
  double v;
  Vec grad;
  Mat hess;
  h_(x, v, grad, hess);
  return base_->dzeta(x) + hess;
}

std::shared_ptr<RadialPotential> radial_potential(const MagneticSystem& sys, const Vec& base) {
  return std::make_shared<RadialPotential>(sys, base);
}

double potential_residual(const MagneticSystem& sys, const MagneticPotential& zeta, const Vec& x) {
  const Mat d = zeta.dzeta(x);
  // (d zeta)_ij = d_i zeta_j - d_j zeta_i
  return (d - d.transpose() - sys.omega(x)).cwiseAbs().maxCoeff();
}

double action_of_path(const MagneticPotential& zeta, const GeodesicPath& path) {
  if (path.t.size() < 2) return 0.0;
  auto flux = [&](const PhaseState& s) { return zeta.zeta(s.x).dot(s.theta); };
  double integral = 0.0;
  double left = flux(path.states[0]);
  for (std::size_t k = 0; k + 1 < path.t.size(); ++k) {
    const double dt = path.t[k + 1] - path.t[k];
    const double right = flux(path.states[k + 1]);
    integral += dt / 6.0 * (left + 4.0 * flux(path.at(0.5 * (path.t[k] + path.t[k + 1]))) + right);
    left = right;
  }
  return std::abs(path.t.back() - path.t.front()) - integral;
}

namespace {

struct Shooter {
  const MagneticSystem& sys;
  Vec x, y, theta0;
  Mat basis;  // n x (n-1), g-orthonormal normal space of theta0
  double h;

  Vec theta(const Vec& p) const {
    const int n = sys.dim();
    Vec t = theta0 + basis * p.head(n - 1);
    PhaseState s{x, t};
    return t / speed(sys, s);
  }
  Vec end(const Vec& p) const {
    const int n = sys.dim();
    return flow_for(sys, {x, theta(p)}, p(n - 1), h).x;
  }
  Mat jacobian(const Vec& p, const Vec& f0) const {
    const int n = sys.dim();
    Mat J(n, n);
    const double d = 1e-7;
    for (int j = 0; j < n; ++j) {
      Vec q = p;
      q(j) += d;
      J.col(j) = (end(q) - y - f0) / d;
    }
    return J;
  }
};

double condition_of(const Mat& J) {
  Eigen::JacobiSVD<Mat> svd(J);
  const auto& s = svd.singularValues();
  if (s(s.size() - 1) <= 0.0) return std::numeric_limits<double>::infinity();
  return s(0) / s(s.size() - 1);
}

TwoPointConnection connect_impl(const MagneticSystem& sys, const Vec& x, const Vec& y,
                                const Vec& theta_guess, double tau_guess,
                                const ConnectOptions& opt, const Mat* hint) {
  const int n = sys.dim();
  if (!(tau_guess > 0.0)) throw Error(ErrorCode::BadParams, "travel-time guess must be positive");
  PhaseState s0{x, theta_guess};
  const double sp = speed(sys, s0);
  if (!(sp > 0.0)) throw Error(ErrorCode::BadParams, "zero direction guess");
  s0.theta /= sp;
  Shooter sh{sys, x, y, s0.theta, adapted_frame(sys, s0).leftCols(n - 1), opt.h};

  Vec p = Vec::Zero(n);
  p(n - 1) = tau_guess;
  Vec f = sh.end(p) - y;
  double res = f.norm();
  Mat J;
  double cond = 0.0;
  bool chord = hint != nullptr;
  if (chord) J = *hint;
  for (int it = 0; it < opt.max_iter && res > opt.tol; ++it) {
    if (!chord) {
      J = sh.jacobian(p, f);
      cond = condition_of(J);
      if (cond > opt.max_condition)
        throw Error(ErrorCode::ConjugateDegenerate,
                    "shooting Jacobian condition " + std::to_string(cond));
    }
    const Vec step = J.partialPivLu().solve(-f);
    double lam = 1.0;
    bool moved = false;
    for (int k = 0; k < 30; ++k, lam *= 0.5) {
      Vec q = p + lam * step;
      if (!(q(n - 1) > 0.0)) continue;
      Vec fq;
      try {
        fq = sh.end(q) - y;
      } catch (const Error& e) {
        if (e.code() != ErrorCode::LeftChart) throw;
        continue;
      }
      if (fq.norm() < res) {
        p = q;
        f = fq;
        res = fq.norm();
        moved = true;
        break;
      }
    }
    if (!moved) {
      if (chord) {
        chord = false;
        continue;
      }
      break;
    }
  }
  if (res > 1e-9)
    throw Error(ErrorCode::NoConvergence, "shooting residual " + std::to_string(res));
  if (hint && chord) {
    cond = condition_of(J);
  } else if (chord || J.size() == 0) {
    J = sh.jacobian(p, f);
    cond = condition_of(J);
  } else if (cond == 0.0) {
    cond = condition_of(J);
  }
  if (cond > opt.max_condition)
    throw Error(ErrorCode::ConjugateDegenerate,
                "shooting Jacobian condition " + std::to_string(cond));
  TwoPointConnection c;
  c.x = x;
  c.y = y;
  c.theta = sh.theta(p);
  c.tau = p(n - 1);
  c.residual = res;
  c.condition = cond;
  c.jacobian = J;
  return c;
}

RhoValue rho_impl(const MagneticSystem& sys, const MagneticPotential& zeta, const Vec& x,
                  const Vec& y, const Vec& theta_guess, double tau_guess, const ConnectOptions& opt,
                  const Mat* hint) {
  RhoValue r;
  r.connection = connect_impl(sys, x, y, theta_guess, tau_guess, opt, hint);
  const GeodesicPath path =
      integrate_geodesic(sys, {x, r.connection.theta}, r.connection.tau, opt.h);
  r.rho = action_of_path(zeta, path);
  return r;
}

double rho_shifted(const MagneticSystem& sys, const MagneticPotential& zeta, const RhoValue& base,
                   const Vec& x, const ConnectOptions& opt) {
  const TwoPointConnection& c = base.connection;
  return rho_impl(sys, zeta, x, c.y, c.theta, c.tau, opt, &c.jacobian).rho;
}

}  // namespace

TwoPointConnection connect(const MagneticSystem& sys, const Vec& x, const Vec& y,
                           const Vec& theta_guess, double tau_guess, const ConnectOptions& opt) {
  return connect_impl(sys, x, y, theta_guess, tau_guess, opt, nullptr);
}

RhoValue rho(const MagneticSystem& sys, const MagneticPotential& zeta, const Vec& x, const Vec& y,
             const Vec& theta_guess, double tau_guess, const ConnectOptions& opt) {
  return rho_impl(sys, zeta, x, y, theta_guess, tau_guess, opt, nullptr);
}

Vec rho_gradient_fd(const MagneticSystem& sys, const MagneticPotential& zeta,
                    const RhoValue& base, double step, const ConnectOptions& opt) {
  const int n = sys.dim();
  Vec grad(n);
  for (int i = 0; i < n; ++i) {
    Vec xp = base.connection.x, xm = base.connection.x;
    xp(i) += step;
    xm(i) -= step;
    grad(i) = (rho_shifted(sys, zeta, base, xp, opt) - rho_shifted(sys, zeta, base, xm, opt)) /
              (2.0 * step);
  }
  return grad;
}

double first_variation_check(const MagneticSystem& sys, const MagneticPotential& zeta,
                             const RhoValue& base, const Vec& w, double step,
                             const ConnectOptions& opt) {
  const Vec& x = base.connection.x;
  const double fd = (rho_shifted(sys, zeta, base, x + step * w, opt) -
                     rho_shifted(sys, zeta, base, x - step * w, opt)) /
                    (2.0 * step);
  const double predicted = -base.connection.theta.dot(sys.metric(x) * w) + zeta.zeta(x).dot(w);
  return std::abs(fd - predicted);
}

double eikonal_residual(const MagneticSystem& sys, const MagneticPotential& zeta,
                        const RhoValue& base, double step, const ConnectOptions& opt) {
  const Vec& x = base.connection.x;
  const Vec p = rho_gradient_fd(sys, zeta, base, step, opt) - zeta.zeta(x);
  const Mat ginv = sys.metric(x).inverse();
  return std::abs(p.dot(ginv * p) - 1.0);
}

// ---------------------------------------------------------------------------
// gauges in the collar

CollarGauge collar_gauge(const MagneticSystem& sys, std::shared_ptr<const MagneticPotential> zeta) {
  if (sys.dim() != 2) throw Error(ErrorCode::BadParams, "collar gauges are implemented for n = 2");
  auto comp = [&sys, zeta](double u, double z, int col) {
    Vec uu(1);
    uu << u;
    Mat jac;
    const Vec x = collar_map_jacobian(sys, uu, z, jac);
    return zeta->zeta(x).dot(jac.col(col));
  };
  CollarGauge g;
  g.zeta_u = [comp](double u, double z) { return comp(u, z, 0); };
  g.zeta_z = [comp](double u, double z) { return comp(u, z, 1); };
  return g;
}

namespace {

double panel_integral(const std::function<double(double)>& f, double a, double b,
                      double max_width = 0.1) {
  if (a == b) return 0.0;
  const Quadrature& q = gauss_legendre_unit(16);
  const int panels = std::max(1, static_cast<int>(std::ceil(std::abs(b - a) / max_width)));
  const double w = (b - a) / panels;
  double sum = 0.0;
  for (int p = 0; p < panels; ++p)
    for (std::size_t k = 0; k < q.nodes.size(); ++k)
      sum += q.weights[k] * w * f(a + (p + q.nodes[k]) * w);
  return sum;
}

}  // namespace

CompatibleGauge::CompatibleGauge(CollarGauge g1, CollarGauge g2, double period, double epsilon,
                                 double holonomy_tol)
    : g1_(std::move(g1)), g2_(std::move(g2)), period_(period), eps_(epsilon) {
  if (!(eps_ > 0.0)) throw Error(ErrorCode::BadParams, "collar width must be positive");
  if (period_ > 0.0) {
    holonomy_ = f0(u_ref_ + period_);
    if (std::abs(holonomy_) > holonomy_tol)
      throw Error(ErrorCode::HolonomyObstruction,
                  "boundary potentials differ by a non-exact form (loop integral " +
                      std::to_string(holonomy_) + ")");
  }
}

double CompatibleGauge::f0(double u) const {
  return panel_integral([this](double s) { return g2_.zeta_u(s, 0.0) - g1_.zeta_u(s, 0.0); },
                        u_ref_, u);
}

double CompatibleGauge::line(double z0, double z1, double u) const {
  return panel_integral([this, u](double z) { return g2_.zeta_z(u, z) - g1_.zeta_z(u, z); }, z0,
                        z1, 0.05 * eps_ + 1e-300);
}

double CompatibleGauge::f(double u, double z) const { return f0(u) + line(0.0, z, u); }

double CompatibleGauge::chi(double z, double* d1) const {
  const double a = std::abs(z), lo = 0.4 * eps_, w = 0.4 * eps_;
  if (d1) *d1 = 0.0;
  if (a <= lo) return 1.0;
  if (a >= lo + w) return 0.0;
  const double s = (a - lo) / w;
  if (d1) *d1 = -(30 * s * s * s * s - 60 * s * s * s + 30 * s * s) / w * (z < 0 ? -1.0 : 1.0);
  return 1.0 - (6 * s * s * s * s * s - 15 * s * s * s * s + 10 * s * s * s);
}

std::pair<double, double> CompatibleGauge::adjusted(double u, double z) const {
  double dchi;
  const double c = chi(z, &dchi);
  const double z1u = g1_.zeta_u(u, z), z1z = g1_.zeta_z(u, z);
  if (c == 0.0 && dchi == 0.0) return {z1u, z1z};
  const double fv = f(u, z);
  const double fz = g2_.zeta_z(u, z) - g1_.zeta_z(u, z);
  const double du = 1e-5;
  const double fu = g2_.zeta_u(u, 0.0) - g1_.zeta_u(u, 0.0) +
                    (line(0.0, z, u + du) - line(0.0, z, u - du)) / (2 * du);
  return {z1u + c * fu, z1z + c * fz + dchi * fv};
}

// ---------------------------------------------------------------------------
// rho from scattering data (weakly convex boundary point)

RhoAlongScattering rho_along_scattering(const ScatteringOracle& oracle,
                                        const BoundaryGaugeData& data, double u0, int sign,
                                        const std::vector<double>& s_grid) {
  if (oracle.dim() != 2) throw Error(ErrorCode::BadParams, "n = 2 only");
  if (s_grid.empty()) throw Error(ErrorCode::BadParams, "empty s grid");
  std::vector<double> grid = s_grid;
  std::sort(grid.begin(), grid.end());
  if (!(grid.front() > 0.0) || grid.back() >= M_PI / 2)
    throw Error(ErrorCode::BadParams, "tilts must lie in (0, pi/2)");
  const double period = oracle.u_period();
  const double E0 = oracle.induced(u0);

  auto exit_of = [&](double s, double* w_out) {
    const double alpha = sign > 0 ? s : M_PI - s;
    const ScatteringRecord rec = oracle.query(boundary_direction(u0, alpha, E0));
    if (rec.status != RecordStatus::Ok)
      throw Error(ErrorCode::NonSmoothExitCurve,
                  std::string("exit undefined at tilt ") + std::to_string(s) + " (" +
                      status_name(rec.status) + ")");
    if (w_out) *w_out = rec.exit.w(0);
    const double du = period > 0 ? wrap_periodic(rec.exit.u(0) - u0, period) : rec.exit.u(0) - u0;
    return u0 + du;
  };

  // convexity from the collapse of the exit curve
  const double s1 = grid.front(), s2 = 0.5 * s1;
  const double du1 = exit_of(s1, nullptr) - u0, du2 = exit_of(s2, nullptr) - u0;
  const double lam1 = 2 * std::sin(s1) / (std::sqrt(E0) * sign * du1);
  const double lam2 = 2 * std::sin(s2) / (std::sqrt(E0) * sign * du2);
  RhoAlongScattering out;
  out.lambda = lam2;
  if (!(lam1 > 0.0) || !(lam2 > 0.0) || std::abs(lam1 - lam2) > 0.5 * std::abs(lam2) + 1e-3 ||
      lam2 <= 1e-3)
    throw Error(ErrorCode::ConvexityUndetermined,
                "exit curve does not collapse to the base point (lambda estimates " +
                    std::to_string(lam1) + ", " + std::to_string(lam2) + ")");

  // smoothness of y_s on the grid
  std::vector<double> us;
  for (double s : grid) us.push_back(exit_of(s, nullptr));
  for (std::size_t i = 1; i + 1 < grid.size(); ++i) {
    const double a = grid[i - 1], b = grid[i], c = grid[i + 1];
    const double dd = 2.0 * ((us[i + 1] - us[i]) / (c - b) - (us[i] - us[i - 1]) / (b - a)) / (c - a);
    if (!std::isfinite(dd) || std::abs(dd) > 1e3)
      throw Error(ErrorCode::NonSmoothExitCurve,
                  "second difference " + std::to_string(dd) + " at tilt " + std::to_string(b));
  }

  auto integrand = [&](double s) {
    double w;
    const double u = exit_of(s, &w);
    const double d = std::min(1e-5, 0.25 * s);
    const double dus = (exit_of(s + d, nullptr) - exit_of(s - d, nullptr)) / (2 * d);
    return (data.induced(u) * w - data.zeta_u(u)) * dus;
  };

  double acc = 0.0, prev = 0.0;
  for (std::size_t i = 0; i < grid.size(); ++i) {
    acc += panel_integral(integrand, prev, grid[i], 0.05);
    prev = grid[i];
    out.samples.push_back({grid[i], us[i], acc});
  }
  return out;
}

}  // namespace magscat
