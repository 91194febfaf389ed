#include "magscat/geometry.hpp"

#include "magscat/rk4.hpp"

#include <Eigen/Cholesky>
#include <Eigen/SVD>

#include <cmath>
#include <limits>

namespace magscat {

namespace {

Mat zeros(int n) { return Mat::Zero(n, n); }

MatArray zero_array(int n) {
  MatArray a;
  for (auto& m : a) m = zeros(n);
  return a;
}

MatArray2 zero_array2(int n) {
  MatArray2 a;
  for (auto& row : a) row = zero_array(n);
  return a;
}

Vec unit(int n, int i) {
  Vec e = Vec::Zero(n);
  e[i] = 1.0;
  return e;
}

Mat inverse_spd(const Mat& g) {
  Eigen::LLT<Mat> llt(g);
  if (llt.info() != Eigen::Success || !(g.diagonal().array() > 0.0).all())
    throw Error(ErrorCode::NotPositiveDefinite, "metric is not positive definite");
  return llt.solve(Mat::Identity(g.rows(), g.cols()));
}

MatArray christoffel_from(const Mat& ginv, const MatArray& dg, int n) {
  MatArray first = zero_array(n);  // first[l](i,j) = Gamma_{l,ij}
  for (int l = 0; l < n; ++l)
    for (int i = 0; i < n; ++i)
      for (int j = 0; j < n; ++j)
        first[l](i, j) = 0.5 * (dg[i](l, j) + dg[j](l, i) - dg[l](i, j));
  MatArray gamma = zero_array(n);
  for (int k = 0; k < n; ++k)
    for (int l = 0; l < n; ++l) gamma[k] += ginv(k, l) * first[l];
  return gamma;
}

}  // namespace

// --- metric fields ---------------------------------------------------------

Mat FlatMetric::g(const Vec&) const { return Mat::Identity(n_, n_); }
MatArray FlatMetric::dg(const Vec&) const { return zero_array(n_); }
MatArray2 FlatMetric::d2g(const Vec&) const { return zero_array2(n_); }

Mat ConformalMetric::g(const Vec& x) const {
  double f;
  Vec grad;
  Mat hess;
  factor_->eval(x, f, grad, hess);
  return f * Mat::Identity(n_, n_);
}

MatArray ConformalMetric::dg(const Vec& x) const {
  double f;
  Vec grad;
  Mat hess;
  factor_->eval(x, f, grad, hess);
  MatArray out = zero_array(n_);
  for (int k = 0; k < n_; ++k) out[k] = grad[k] * Mat::Identity(n_, n_);
  return out;
}

MatArray2 ConformalMetric::d2g(const Vec& x) const {
  double f;
  Vec grad;
  Mat hess;
  factor_->eval(x, f, grad, hess);
  MatArray2 out = zero_array2(n_);
  for (int k = 0; k < n_; ++k)
    for (int l = 0; l < n_; ++l) out[k][l] = hess(k, l) * Mat::Identity(n_, n_);
  return out;
}

Mat PolarSphereMetric::g(const Vec& x) const {
  Mat m = zeros(2);
  m(0, 0) = 1.0;
  m(1, 1) = std::sin(x[0]) * std::sin(x[0]);
  return m;
}

MatArray PolarSphereMetric::dg(const Vec& x) const {
  MatArray out = zero_array(2);
  out[0](1, 1) = std::sin(2.0 * x[0]);
  return out;
}

MatArray2 PolarSphereMetric::d2g(const Vec& x) const {
  MatArray2 out = zero_array2(2);
  out[0][0](1, 1) = 2.0 * std::cos(2.0 * x[0]);
  return out;
}

MatArray FiniteDifferenceMetric::dg(const Vec& x) const {
  MatArray out = zero_array(n_);
  for (int k = 0; k < n_; ++k) {
    Vec xp = x, xm = x;
    xp[k] += h1_;
    xm[k] -= h1_;
    out[k] = (g_(xp) - g_(xm)) / (2.0 * h1_);
  }
  return out;
}

MatArray2 FiniteDifferenceMetric::d2g(const Vec& x) const {
  MatArray2 out = zero_array2(n_);
  const Mat g0 = g_(x);
  for (int k = 0; k < n_; ++k) {
    Vec xp = x, xm = x;
    xp[k] += h2_;
    xm[k] -= h2_;
    out[k][k] = (g_(xp) - 2.0 * g0 + g_(xm)) / (h2_ * h2_);
    for (int l = k + 1; l < n_; ++l) {
      Vec pp = x, pm = x, mp = x, mm = x;
      pp[k] += h2_; pp[l] += h2_;
      pm[k] += h2_; pm[l] -= h2_;
      mp[k] -= h2_; mp[l] += h2_;
      mm[k] -= h2_; mm[l] -= h2_;
      out[k][l] = (g_(pp) - g_(pm) - g_(mp) + g_(mm)) / (4.0 * h2_ * h2_);
      out[l][k] = out[k][l];
    }
  }
  return out;
}

std::shared_ptr<ConstantMagneticField> ConstantMagneticField::planar(double b) {
  Mat w = zeros(2);
  w(0, 1) = b;
  w(1, 0) = -b;
  return std::make_shared<ConstantMagneticField>(w);
}

MatArray ConstantMagneticField::domega(const Vec&) const { return zero_array(dim()); }

MatArray FiniteDifferenceMagneticField::domega(const Vec& x) const {
  MatArray out = zero_array(n_);
  for (int k = 0; k < n_; ++k) {
    Vec xp = x, xm = x;
    xp[k] += h_;
    xm[k] -= h_;
    out[k] = (omega_(xp) - omega_(xm)) / (2.0 * h_);
  }
  return out;
}

// --- boundaries ------------------------------------------------------------

Vec CircleBoundary::point(const Vec& u) const {
  Vec x(2);
  x << c_[0] + r_ * std::cos(u[0] / s_), c_[1] + r_ * std::sin(u[0] / s_);
  return x;
}

Mat CircleBoundary::tangents(const Vec& u) const {
  Mat t(2, 1);
  t << -r_ / s_ * std::sin(u[0] / s_), r_ / s_ * std::cos(u[0] / s_);
  return t;
}

double CircleBoundary::level(const Vec& x) const {
  return (r_ * r_ - (x - c_).squaredNorm()) / (2.0 * r_);
}

Vec CircleBoundary::level_grad(const Vec& x) const { return -(x - c_) / r_; }

Mat CircleBoundary::level_hess(const Vec&) const { return -Mat::Identity(2, 2) / r_; }

Vec CircleBoundary::project(const Vec& x) const {
  Vec u(1);
  double a = std::atan2(x[1] - c_[1], x[0] - c_[0]);
  if (a < 0) a += 2.0 * M_PI;
  u[0] = s_ * a;
  return u;
}

double FlowerBoundary::radius_at(double angle, double* d1, double* d2) const {
  if (d1) *d1 = -R_ * a_ * k_ * std::sin(k_ * angle);
  if (d2) *d2 = -R_ * a_ * k_ * k_ * std::cos(k_ * angle);
  return R_ * (1.0 + a_ * std::cos(k_ * angle));
}

Vec FlowerBoundary::point(const Vec& u) const {
  const double r = radius_at(u[0]);
  Vec x(2);
  x << r * std::cos(u[0]), r * std::sin(u[0]);
  return x;
}

Mat FlowerBoundary::tangents(const Vec& u) const {
  double dr;
  const double r = radius_at(u[0], &dr);
  Mat t(2, 1);
  t << dr * std::cos(u[0]) - r * std::sin(u[0]), dr * std::sin(u[0]) + r * std::cos(u[0]);
  return t;
}

// b = rho(a)^2 - |x|^2 with a the polar angle of x.
double FlowerBoundary::level(const Vec& x) const {
  const double r = radius_at(std::atan2(x[1], x[0]));
  return r * r - x.squaredNorm();
}

Vec FlowerBoundary::level_grad(const Vec& x) const {
  const double r2 = x.squaredNorm();
  double d1;
  const double r = radius_at(std::atan2(x[1], x[0]), &d1);
  const double q1 = 2.0 * r * d1;
  Vec ga(2);
  ga << -x[1] / r2, x[0] / r2;
  return q1 * ga - 2.0 * x;
}

Mat FlowerBoundary::level_hess(const Vec& x) const {
  const double r2 = x.squaredNorm();
  double d1, d2;
  const double r = radius_at(std::atan2(x[1], x[0]), &d1, &d2);
  const double q1 = 2.0 * r * d1;
  const double q2 = 2.0 * (d1 * d1 + r * d2);
  Vec ga(2);
  ga << -x[1] / r2, x[0] / r2;
  Mat ha(2, 2);
  const double r4 = r2 * r2;
  ha << 2.0 * x[0] * x[1] / r4, (x[1] * x[1] - x[0] * x[0]) / r4,
      (x[1] * x[1] - x[0] * x[0]) / r4, -2.0 * x[0] * x[1] / r4;
  return q2 * ga * ga.transpose() + q1 * ha - 2.0 * Mat::Identity(2, 2);
}

Vec FlowerBoundary::project(const Vec& x) const {
  Vec u(1);
  double a = std::atan2(x[1], x[0]);
  if (a < 0) a += 2.0 * M_PI;
  u[0] = a;
  return u;
}

Vec PlaneBoundary::point(const Vec& u) const {
  Vec x = Vec::Zero(n_);
  x.head(n_ - 1) = u;
  return x;
}

Mat PlaneBoundary::tangents(const Vec&) const {
  Mat t = Mat::Zero(n_, n_ - 1);
  for (int a = 0; a < n_ - 1; ++a) t(a, a) = 1.0;
  return t;
}

Vec PlaneBoundary::level_grad(const Vec&) const { return unit(n_, n_ - 1); }
Mat PlaneBoundary::level_hess(const Vec&) const { return zeros(n_); }

// --- system ----------------------------------------------------------------

MagneticSystem::MagneticSystem(std::shared_ptr<const MetricField> metric,
                               std::shared_ptr<const MagneticField> magnetic,
                               std::shared_ptr<const BoundaryChart> boundary, double epsilon,
                               std::string label)
    : n_(metric->dim()),
      metric_(std::move(metric)),
      magnetic_(std::move(magnetic)),
      boundary_(std::move(boundary)),
      epsilon_(epsilon),
      label_(std::move(label)),
      audit_(std::make_shared<QueryAudit>()) {
  if (magnetic_->dim() != n_ || boundary_->dim() != n_)
    throw Error(ErrorCode::BadParams, "metric, magnetic field and boundary dimensions differ");
  if (n_ < 2 || n_ > kMaxDim) throw Error(ErrorCode::BadParams, "dimension must be 2 or 3");
  if (!(epsilon_ > 0.0)) throw Error(ErrorCode::BadParams, "collar half-width must be positive");
}

Mat MagneticSystem::metric(const Vec& x) const {
  audit_->note();
  return metric_->g(x);
}

Mat MagneticSystem::omega(const Vec& x) const {
  audit_->note();
  return magnetic_->omega(x);
}

LocalGeometry MagneticSystem::local(const Vec& x, int order) const {
  audit_->note();
  const int n = n_;
  LocalGeometry geo;
  geo.n = n;
  geo.g = metric_->g(x);
  geo.ginv = inverse_spd(geo.g);
  geo.omega = magnetic_->omega(x);
  geo.Y = geo.ginv * geo.omega.transpose();
  if (order < 1) return geo;
  geo.dg = metric_->dg(x);
  geo.christoffel = christoffel_from(geo.ginv, geo.dg, n);
  if (order < 2) return geo;

  geo.d2g = metric_->d2g(x);
  geo.domega = magnetic_->domega(x);
  MatArray dginv = zero_array(n);
  for (int m = 0; m < n; ++m) dginv[m] = -geo.ginv * geo.dg[m] * geo.ginv;
  for (int m = 0; m < n; ++m) {
    MatArray first = zero_array(n), dfirst = zero_array(n);
    for (int l = 0; l < n; ++l)
      for (int i = 0; i < n; ++i)
        for (int j = 0; j < n; ++j) {
          first[l](i, j) = 0.5 * (geo.dg[i](l, j) + geo.dg[j](l, i) - geo.dg[l](i, j));
          dfirst[l](i, j) =
              0.5 * (geo.d2g[m][i](l, j) + geo.d2g[m][j](l, i) - geo.d2g[m][l](i, j));
        }
    for (int k = 0; k < n; ++k) {
      geo.dchristoffel[m][k] = zeros(n);
      for (int l = 0; l < n; ++l)
        geo.dchristoffel[m][k] += dginv[m](k, l) * first[l] + geo.ginv(k, l) * dfirst[l];
    }
    geo.dY[m] = dginv[m] * geo.omega.transpose() + geo.ginv * geo.domega[m].transpose();
  }
  return geo;
}

Vec MagneticSystem::acceleration(const Vec& x, const Vec& v) const {
  audit_->note();
  const int n = n_;
  const Mat g = metric_->g(x);
  const MatArray dg = metric_->dg(x);
  const Mat w = magnetic_->omega(x);
  // g a = -(sum_i v^i dg_i v) + 1/2 (v^T dg_l v)_l + Omega^T v
  Vec rhs = w.transpose() * v;
  for (int i = 0; i < n; ++i) rhs -= v[i] * (dg[i] * v);
  for (int l = 0; l < n; ++l) rhs[l] += 0.5 * v.dot(dg[l] * v);
  Eigen::LLT<Mat> llt(g);
  if (llt.info() != Eigen::Success)
    throw Error(ErrorCode::NotPositiveDefinite, "metric is not positive definite");
  return llt.solve(rhs);
}

Vec MagneticSystem::geodesic_acceleration(const Vec& x, const Vec& v) const {
  audit_->note();
  const int n = n_;
  const Mat g = metric_->g(x);
  const MatArray dg = metric_->dg(x);
  Vec rhs = Vec::Zero(n);
  for (int i = 0; i < n; ++i) rhs -= v[i] * (dg[i] * v);
  for (int l = 0; l < n; ++l) rhs[l] += 0.5 * v.dot(dg[l] * v);
  return g.llt().solve(rhs);
}

double MagneticSystem::level(const Vec& x) const {
  audit_->note();
  return boundary_->level(x);
}

double MagneticSystem::signed_depth(const Vec& x) const {
  audit_->note();
  const Vec gb = boundary_->level_grad(x);
  const double norm = gb.norm();
  if (norm == 0.0) return std::numeric_limits<double>::infinity();
  return boundary_->level(x) / norm;
}

bool MagneticSystem::in_extended_chart(const Vec& x) const {
  if (!x.allFinite()) return false;
  return signed_depth(x) > -3.0 * epsilon_;
}

namespace {

struct NegatedField final : MagneticField {
  explicit NegatedField(std::shared_ptr<const MagneticField> b) : base(std::move(b)) {}
  std::shared_ptr<const MagneticField> base;
  int dim() const override { return base->dim(); }
  Mat omega(const Vec& x) const override { return -base->omega(x); }
  MatArray domega(const Vec& x) const override {
    MatArray d = base->domega(x);
    for (auto& m : d) m = -m;
    return d;
  }
};

}  // namespace

MagneticSystem MagneticSystem::with_reversed_field() const {
  MagneticSystem out(metric_, std::make_shared<NegatedField>(magnetic_), boundary_, epsilon_,
                     label_ + "-reversed");
  out.spec = spec;
  if (out.spec) out.spec->B = -out.spec->B;
  return out;
}

MagneticSystem MagneticSystem::riemannian() const {
  Mat zero = zeros(n_);
  MagneticSystem out(metric_, std::make_shared<ConstantMagneticField>(zero), boundary_, epsilon_,
                     label_ + "-riemannian");
  out.spec = spec;
  return out;
}

// --- operations ------------------------------------------------------------

MetricPack metric_pack(const MetricField& metric, const Vec& x) {
  MetricPack p;
  p.g = metric.g(x);
  p.g_inv = inverse_spd(p.g);
  p.christoffel = christoffel_from(p.g_inv, metric.dg(x), metric.dim());
  return p;
}

MetricPack metric_pack(const MagneticSystem& sys, const Vec& x) {
  const LocalGeometry geo = sys.local(x, 1);
  return MetricPack{geo.g, geo.ginv, geo.christoffel};
}

Mat lorentz_Y(const MagneticSystem& sys, const Vec& x) { return sys.local(x, 0).Y; }

Vec christoffel_contract(const MatArray& christoffel, int n, const Vec& v, const Vec& w) {
  Vec out(n);
  for (int k = 0; k < n; ++k) out[k] = v.dot(christoffel[k] * w);
  return out;
}

Vec riemann(const LocalGeometry& geo, const Vec& X, const Vec& Yv, const Vec& Z) {
  const int n = geo.n;
  Vec out = Vec::Zero(n);
  for (int l = 0; l < n; ++l) {
    double acc = 0.0;
    for (int i = 0; i < n; ++i)
      for (int j = 0; j < n; ++j)
        for (int k = 0; k < n; ++k) {
          double term = geo.dchristoffel[i][l](j, k) - geo.dchristoffel[j][l](i, k);
          for (int m = 0; m < n; ++m)
            term += geo.christoffel[l](i, m) * geo.christoffel[m](j, k) -
                    geo.christoffel[l](j, m) * geo.christoffel[m](i, k);
          acc += X[i] * Yv[j] * Z[k] * term;
        }
    out[l] = acc;
  }
  return out;
}

Mat covariant_derivative_Y(const LocalGeometry& geo, const Vec& W) {
  const int n = geo.n;
  Mat out = zeros(n);
  for (int m = 0; m < n; ++m) {
    if (W[m] == 0.0) continue;
    Mat A = zeros(n);  // A(k, i) = Gamma^k_{m i}
    for (int k = 0; k < n; ++k) A.row(k) = geo.christoffel[k].row(m);
    out += W[m] * (geo.dY[m] + A * geo.Y - geo.Y * A);
  }
  return out;
}

double closedness_residual(const MagneticSystem& sys, const Vec& x) {
  const int n = sys.dim();
  if (n < 3) return 0.0;
  const LocalGeometry geo = sys.local(x, 2);
  double worst = 0.0;
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j)
      for (int k = 0; k < n; ++k)
        worst = std::max(worst, std::abs(geo.domega[i](j, k) + geo.domega[j](k, i) +
                                         geo.domega[k](i, j)));
  return worst;
}

Vec normal_field(const MagneticSystem& sys, const Vec& x, Mat* jacobian) {
  const int n = sys.dim();
  const BoundaryChart& bd = sys.boundary();
  const LocalGeometry geo = sys.local(x, jacobian ? 2 : 0);
  const Vec gb = bd.level_grad(x);
  const Vec w = geo.ginv * gb;
  const double s = std::sqrt(gb.dot(w));
  const Vec N = w / s;
  if (jacobian) {
    const Mat hb = bd.level_hess(x);
    jacobian->setZero(n, n);
    for (int m = 0; m < n; ++m) {
      const Mat dginv = -geo.ginv * geo.dg[m] * geo.ginv;
      const Vec dw = dginv * gb + geo.ginv * hb.col(m);
      const double ds = (2.0 * gb.dot(geo.ginv * hb.col(m)) + gb.dot(dginv * gb)) / (2.0 * s);
      jacobian->col(m) = dw / s - N * ds / s;
    }
  }
  return N;
}

BoundaryFrame boundary_frame(const MagneticSystem& sys, const Vec& u) {
  const BoundaryChart& bd = sys.boundary();
  BoundaryFrame f;
  f.x = bd.point(u);
  f.tangents = bd.tangents(u);
  Eigen::JacobiSVD<Mat> svd(f.tangents);
  const auto& sv = svd.singularValues();
  if (sv.size() == 0 || sv[sv.size() - 1] < 1e-12 * std::max(1.0, sv[0]))
    throw Error(ErrorCode::DegenerateBoundary, "tangent basis has rank < n-1");
  const LocalGeometry geo = sys.local(f.x, 1);
  f.normal = normal_field(sys, f.x);
  f.induced = f.tangents.transpose() * geo.g * f.tangents;
  const Vec gb = bd.level_grad(f.x);
  const double gnorm = std::sqrt(gb.dot(geo.ginv * gb));
  Mat hess = bd.level_hess(f.x);
  for (int k = 0; k < sys.dim(); ++k) hess -= gb[k] * geo.christoffel[k];
  f.second_fundamental = -f.tangents.transpose() * hess * f.tangents / gnorm;
  return f;
}

double convexity_indicator(const MagneticSystem& sys, const Vec& u, const Vec& v) {
  const BoundaryChart& bd = sys.boundary();
  const Vec x = bd.point(u);
  const LocalGeometry geo = sys.local(x, 1);
  const Vec gb = bd.level_grad(x);
  const double gnorm = std::sqrt(gb.dot(geo.ginv * gb));
  Mat hess = bd.level_hess(x);
  for (int k = 0; k < sys.dim(); ++k) hess -= gb[k] * geo.christoffel[k];
  const double second = -v.dot(hess * v) / gnorm;
  const Vec nu = geo.ginv * gb / gnorm;
  return second - (geo.Y * v).dot(geo.g * nu);
}

namespace {

int collar_steps(double depth) {
  return std::max(4, static_cast<int>(std::ceil(std::abs(depth) / 1e-3)));
}

}  // namespace

Vec collar_map(const MagneticSystem& sys, const Vec& u, double depth) {
  const int n = sys.dim();
  const Vec x0 = sys.boundary().point(u);
  if (std::abs(depth) >= sys.epsilon())
    throw Error(ErrorCode::OutsideCollar, "|depth| must be below the collar half-width");
  if (depth == 0.0) return x0;
  Vec y(2 * n);
  y << x0, normal_field(sys, x0);
  const int steps = collar_steps(depth);
  const double h = depth / steps;
  auto f = [&](const Vec& s) {
    Vec d(2 * n);
    d << s.tail(n), sys.geodesic_acceleration(s.head(n), s.tail(n));
    return d;
  };
  for (int i = 0; i < steps; ++i) y = rk4_step(f, y, h);
  return y.head(n);
}

Vec collar_map_jacobian(const MagneticSystem& sys, const Vec& u, double depth, Mat& jacobian) {
  const int n = sys.dim();
  const int m = n - 1;
  const BoundaryChart& bd = sys.boundary();
  if (std::abs(depth) >= sys.epsilon())
    throw Error(ErrorCode::OutsideCollar, "|depth| must be below the collar half-width");
  const Vec x0 = bd.point(u);
  const Mat T = bd.tangents(u);
  Mat dnu;
  const Vec nu = normal_field(sys, x0, &dnu);

  // State: x, v, then (dx_a, dv_a) for each boundary direction a.
  Eigen::VectorXd y(2 * n + 2 * n * m);
  y.head(n) = x0;
  y.segment(n, n) = nu;
  for (int a = 0; a < m; ++a) {
    y.segment(2 * n + 2 * n * a, n) = T.col(a);
    y.segment(2 * n + 2 * n * a + n, n) = dnu * T.col(a);
  }
  auto f = [&](const Eigen::VectorXd& s) {
    Eigen::VectorXd d(s.size());
    const Vec x = s.head(n), v = s.segment(n, n);
    const LocalGeometry geo = sys.local(x, 2);
    d.head(n) = v;
    d.segment(n, n) = -christoffel_contract(geo.christoffel, n, v, v);
    for (int a = 0; a < m; ++a) {
      const int off = 2 * n + 2 * n * a;
      const Vec dx = s.segment(off, n), dv = s.segment(off + n, n);
      Vec acc = -2.0 * christoffel_contract(geo.christoffel, n, v, dv);
      for (int q = 0; q < n; ++q)
        acc -= dx[q] * christoffel_contract(geo.dchristoffel[q], n, v, v);
      d.segment(off, n) = dv;
      d.segment(off + n, n) = acc;
    }
    return d;
  };
  if (depth != 0.0) {
    const int steps = collar_steps(depth);
    const double h = depth / steps;
    for (int i = 0; i < steps; ++i) y = rk4_step(f, y, h);
  }
  jacobian.setZero(n, n);
  for (int a = 0; a < m; ++a) jacobian.col(a) = y.segment(2 * n + 2 * n * a, n);
  jacobian.col(n - 1) = y.segment(n, n);
  return y.head(n);
}

Mat collar_metric(const MagneticSystem& sys, const Vec& u, double depth) {
  Mat J;
  const Vec x = collar_map_jacobian(sys, u, depth, J);
  return J.transpose() * sys.metric(x) * J;
}

CollarCoords collar_inverse(const MagneticSystem& sys, const Vec& x) {
  const int n = sys.dim();
  const BoundaryChart& bd = sys.boundary();
  const double eps = sys.epsilon();
  const double depth_guess = sys.signed_depth(x);
  if (std::abs(depth_guess) > 1.5 * eps)
    throw Error(ErrorCode::OutsideCollar, "point is not in the collar neighbourhood");

  // Start from the nearest boundary sample.
  Vec u0 = bd.project(x);
  if (n == 2 && bd.extent() > 0.0) {
    const int samples = 256;
    double best = (bd.point(u0) - x).squaredNorm();
    for (int i = 0; i < samples; ++i) {
      Vec u(1);
      u[0] = bd.extent() * i / samples;
      const double d = (bd.point(u) - x).squaredNorm();
      if (d < best) {
        best = d;
        u0 = u;
      }
    }
  }

  Vec p(n);
  p << u0, std::clamp(depth_guess, -0.9 * eps, 0.9 * eps);
  auto residual = [&](const Vec& q, Mat* J) {
    if (J) return Vec(collar_map_jacobian(sys, q.head(n - 1), q[n - 1], *J) - x);
    return Vec(collar_map(sys, q.head(n - 1), q[n - 1]) - x);
  };
  for (int iter = 0; iter < 50; ++iter) {
    Mat J;
    const Vec r = residual(p, &J);
    const double rn = r.norm();
    if (rn < 1e-13) break;
    const Vec step = J.fullPivLu().solve(r);
    double lambda = 1.0;
    bool accepted = false;
    for (int k = 0; k < 30; ++k) {
      Vec trial = p - lambda * step;
      if (std::abs(trial[n - 1]) < eps) {
        const double tn = residual(trial, nullptr).norm();
        if (tn < rn || tn < 1e-13) {
          p = trial;
          accepted = true;
          break;
        }
      }
      lambda *= 0.5;
    }
    if (!accepted) {
      if (rn < 1e-11) break;
      throw Error(ErrorCode::InversionDiverged, "collar Newton iteration stalled");
    }
    if ((lambda * step).norm() < 1e-15) break;
  }
  if (residual(p, nullptr).norm() > 1e-10)
    throw Error(ErrorCode::InversionDiverged, "collar Newton iteration did not converge");
  CollarCoords c;
  c.u = p.head(n - 1);
  if (bd.period() > 0.0) {
    c.u[0] = std::fmod(c.u[0], bd.period());
    if (c.u[0] < 0) c.u[0] += bd.period();
  }
  c.depth = p[n - 1];
  return c;
}

}  // namespace magscat
