#include "magscat/jacobi.hpp"

#include "magscat/rk4.hpp"

#include <Eigen/SVD>

#include <cmath>
#include <limits>

namespace magscat {

namespace {

JacobiCoeffs coeffs_from(const LocalGeometry& geo, const Vec& theta, const Mat& E) {
  const int n = geo.n;
  const Mat dYtheta = covariant_derivative_Y(geo, theta);
  Mat V(n, E.cols());
  for (int i = 0; i < E.cols(); ++i) {
    const Vec e = E.col(i);
    V.col(i) = dYtheta * e + riemann(geo, e, theta, theta) - covariant_derivative_Y(geo, e) * theta;
  }
  JacobiCoeffs c;
  c.y = (E.transpose() * geo.g * geo.Y * E).transpose();
  c.a = V.transpose() * geo.g * E;
  return c;
}

}  // namespace

JacobiCoeffs jacobi_coeffs(const MagneticSystem& sys, const PhaseState& s, const Mat& frame) {
  return coeffs_from(sys.local(s.x, 2), s.theta, frame);
}

Mat adapted_frame(const MagneticSystem& sys, const PhaseState& s) {
  const int n = sys.dim();
  const Mat g = sys.metric(s.x);
  auto ip = [&](const Vec& a, const Vec& b) { return a.dot(g * b); };
  Mat E(n, n);
  const Vec t = s.theta / std::sqrt(ip(s.theta, s.theta));
  E.col(n - 1) = t;
  std::vector<Vec> basis{t};
  int filled = 0;
  for (int axis = 0; axis < n && filled < n - 1; ++axis) {
    Vec v = Vec::Zero(n);
    v[axis] = 1.0;
    for (const Vec& b : basis) v -= ip(v, b) * b;
    const double len = std::sqrt(ip(v, v));
    if (len < 1e-6) continue;
    v /= len;
    basis.push_back(v);
    E.col(filled++) = v;
  }
  if (filled != n - 1) throw Error(ErrorCode::BadParams, "could not complete an orthonormal frame");
  return E;
}

// --- JacobiRun ---------------------------------------------------------------

JacobiRun::JacobiRun(const MagneticSystem& sys, const PhaseState& anchor_state,
                     double anchor_time, const Mat& frame0, const Mat& F0, const Mat& Fp0,
                     double duration, double h)
    : sys_(&sys), n_(sys.dim()), m_(static_cast<int>(F0.cols())) {
  const int n = n_, m = m_;
  Eigen::VectorXd z(2 * n + n * n + 2 * n * m);
  z.head(n) = anchor_state.x;
  z.segment(n, n) = anchor_state.theta;
  for (int i = 0; i < n; ++i) z.segment(2 * n + n * i, n) = frame0.col(i);
  const int off = 2 * n + n * n;
  for (int j = 0; j < m; ++j) {
    z.segment(off + n * j, n) = F0.col(j);
    z.segment(off + n * m + n * j, n) = Fp0.col(j);
  }
  const int steps =
      duration == 0.0 ? 0 : std::max(1, static_cast<int>(std::ceil(std::abs(duration) / h - 1e-9)));
  step_ = steps ? duration / steps : h;
  t_.reserve(steps + 1);
  z_.reserve(steps + 1);
  t_.push_back(anchor_time);
  z_.push_back(z);
  auto f = [this](const Eigen::VectorXd& s) { return rhs(s); };
  for (int i = 1; i <= steps; ++i) {
    z = rk4_step(f, z, step_);
    if (!z.allFinite() || !sys.in_extended_chart(Vec(z.head(n))))
      throw Error(ErrorCode::LeftChart, "trajectory left the extended chart");
    t_.push_back(anchor_time + i * step_);
    z_.push_back(z);
  }
}

PhaseState JacobiRun::state_of(const Eigen::VectorXd& z) const {
  return PhaseState{Vec(z.head(n_)), Vec(z.segment(n_, n_))};
}

Mat JacobiRun::frame_of(const Eigen::VectorXd& z) const {
  Mat E(n_, n_);
  for (int i = 0; i < n_; ++i) E.col(i) = z.segment(2 * n_ + n_ * i, n_);
  return E;
}

Mat JacobiRun::F_of(const Eigen::VectorXd& z) const {
  Mat F(n_, m_);
  const int off = 2 * n_ + n_ * n_;
  for (int j = 0; j < m_; ++j) F.col(j) = z.segment(off + n_ * j, n_);
  return F;
}

Mat JacobiRun::Fp_of(const Eigen::VectorXd& z) const {
  Mat F(n_, m_);
  const int off = 2 * n_ + n_ * n_ + n_ * m_;
  for (int j = 0; j < m_; ++j) F.col(j) = z.segment(off + n_ * j, n_);
  return F;
}

Eigen::VectorXd JacobiRun::rhs(const Eigen::VectorXd& z) const {
  const int n = n_, m = m_;
  const PhaseState s = state_of(z);
  const Mat E = frame_of(z);
  const LocalGeometry geo = sys_->local(s.x, m > 0 ? 2 : 1);
  Eigen::VectorXd d(z.size());
  d.head(n) = s.theta;
  d.segment(n, n) = -christoffel_contract(geo.christoffel, n, s.theta, s.theta) + geo.Y * s.theta;
  for (int i = 0; i < n; ++i) {
    const Vec e = E.col(i);
    d.segment(2 * n + n * i, n) = -christoffel_contract(geo.christoffel, n, s.theta, e) + geo.Y * e;
  }
  if (m > 0) {
    const JacobiCoeffs c = coeffs_from(geo, s.theta, E);
    const Mat F = F_of(z), Fp = Fp_of(z);
    const Mat Fdd = -c.y.transpose() * Fp - c.a.transpose() * F;
    const int off = 2 * n + n * n;
    for (int j = 0; j < m; ++j) {
      d.segment(off + n * j, n) = Fp.col(j);
      d.segment(off + n * m + n * j, n) = Fdd.col(j);
    }
  }
  return d;
}

PhaseState JacobiRun::state(std::size_t k) const { return state_of(z_[k]); }
Mat JacobiRun::frame(std::size_t k) const { return frame_of(z_[k]); }
Mat JacobiRun::F(std::size_t k) const { return F_of(z_[k]); }
Mat JacobiRun::Fp(std::size_t k) const { return Fp_of(z_[k]); }

Mat JacobiRun::J(std::size_t k) const { return frame(k) * F(k); }

Mat JacobiRun::Jp(std::size_t k) const {
  const Mat E = frame(k);
  const JacobiCoeffs c = jacobi_coeffs(*sys_, state(k), E);
  return E * (Fp(k) + c.y.transpose() * F(k));
}

Eigen::VectorXd JacobiRun::raw_at(double t) const {
  const double rel = (t - t_.front()) / step_;
  if (rel < -1e-9 || rel > static_cast<double>(t_.size() - 1) + 1e-9)
    throw Error(ErrorCode::BadParams, "time outside the Jacobi run");
  std::size_t k = static_cast<std::size_t>(std::max(0.0, std::floor(rel)));
  if (k >= t_.size() - 1) k = t_.size() - 1;
  const double tau = t - t_[k];
  if (tau == 0.0) return z_[k];
  auto f = [this](const Eigen::VectorXd& s) { return rhs(s); };
  return rk4_step(f, z_[k], tau);
}

// --- solvers ---------------------------------------------------------------

JacobiRun magnetic_frame(const MagneticSystem& sys, const PhaseState& start, double duration,
                         double h) {
  const int n = sys.dim();
  return JacobiRun(sys, start, 0.0, adapted_frame(sys, start), Mat(n, 0), Mat(n, 0), duration, h);
}

JacobiRun solve_jacobi(const MagneticSystem& sys, const PhaseState& start, double duration,
                       const Vec& J0, const Vec& J0p, double h) {
  const Mat E = adapted_frame(sys, start);
  const JacobiCoeffs c = jacobi_coeffs(sys, start, E);
  const Vec f0 = E.fullPivLu().solve(J0);
  const Vec fp0 = E.fullPivLu().solve(J0p) - c.y.transpose() * f0;
  return JacobiRun(sys, start, 0.0, E, Mat(f0), Mat(fp0), duration, h);
}

double jacobi_vs_variation(const MagneticSystem& sys, const PhaseState& start, double duration,
                           const Vec& J0, const Vec& J0p, double s, double h) {
  const JacobiRun run = solve_jacobi(sys, start, duration, J0, J0p, h);
  const int n = sys.dim();
  const LocalGeometry geo = sys.local(start.x, 1);
  PhaseState varied;
  varied.x = start.x + s * J0;
  varied.theta = start.theta + s * (J0p - christoffel_contract(geo.christoffel, n, J0, start.theta));
  varied.theta /= speed(sys, varied);
  const double dt = run.size() > 1 ? run.time(1) - run.time(0) : h;
  double worst = 0.0;
  PhaseState cur = varied;
  for (std::size_t k = 0; k < run.size(); ++k) {
    if (k > 0) cur = flow_step(sys, cur, dt);
    const Vec diff = (cur.x - run.state(k).x) / s;
    worst = std::max(worst, (run.J(k).col(0) - diff).norm());
  }
  return worst;
}

double jacobi_residual(const MagneticSystem& sys, const JacobiRun& run, int column) {
  const int n = sys.dim();
  double worst = 0.0;
  // sixth-order central differences of J'
  for (std::size_t k = 3; k + 3 < run.size(); ++k) {
    const double dt = run.time(k + 1) - run.time(k);
    const PhaseState s = run.state(k);
    const LocalGeometry geo = sys.local(s.x, 2);
    const Vec J = run.J(k).col(column);
    const Vec Jp = run.Jp(k).col(column);
    auto d = [&](int o) { return Vec(run.Jp(k + o).col(column) - run.Jp(k - o).col(column)); };
    const Vec dJp = (45.0 * d(1) - 9.0 * d(2) + d(3)) / (60.0 * dt) +
                    christoffel_contract(geo.christoffel, n, s.theta, Jp);
    const Vec expect = -riemann(geo, J, s.theta, s.theta) + geo.Y * Jp +
                       covariant_derivative_Y(geo, J) * s.theta;
    worst = std::max(worst, (dJp - expect).norm());
  }
  return worst;
}

// --- Jacobi tensor -------------------------------------------------------------

Mat JacobiTensorResult::tensor(std::size_t k) const {
  return run.F(k).topRows(run.n() - 1);
}

namespace {

Vec singular_values(const Mat& A) {
  Eigen::JacobiSVD<Mat> svd(A);
  return svd.singularValues();
}

JacobiRun tensor_run(const MagneticSystem& sys, const PhaseState& start, double duration,
                     Anchor anchor, double h) {
  const int n = sys.dim(), m = n - 1;
  Mat F0 = Mat::Zero(n, m), Fp0 = Mat::Zero(n, m);
  for (int i = 0; i < m; ++i) Fp0(i, i) = 1.0;
  if (anchor == Anchor::Start)
    return JacobiRun(sys, start, 0.0, adapted_frame(sys, start), F0, Fp0, duration, h);
  const PhaseState end = flow_for(sys, start, duration, h);
  return JacobiRun(sys, end, duration, adapted_frame(sys, end), F0, Fp0, -duration, h);
}

}  // namespace

JacobiTensorResult jacobi_tensor(const MagneticSystem& sys, const PhaseState& start,
                                 double duration, Anchor anchor, double h, double tol_sing) {
  JacobiTensorResult res{tensor_run(sys, start, duration, anchor, h), 0.0, {}, {}, {}, {}};
  const JacobiRun& run = res.run;
  const int m = run.n() - 1;
  const std::size_t N = run.size();
  res.t = run.times();
  res.sigma_min.resize(N);
  res.det.resize(N);
  for (std::size_t k = 0; k < N; ++k) {
    const Mat T = res.tensor(k);
    const Vec sv = singular_values(T);
    res.sigma_min[k] = sv[m - 1];
    res.det[k] = T.determinant();
    res.scale = std::max(res.scale, sv[0]);
  }
  if (res.scale == 0.0) return res;

  auto sigma_at = [&](double t) {
    const Eigen::VectorXd z = run.raw_at(t);
    return singular_values(Mat(run.F_of(z).topRows(m)));
  };
  std::vector<std::pair<double, double>> brackets;
  for (std::size_t k = 2; k + 1 < N; ++k) {
    const double s = res.sigma_min[k];
    if (res.det[k] * res.det[k + 1] < 0.0)
      brackets.emplace_back(res.t[k - 1], res.t[k + 1]);
    else if (s <= res.sigma_min[k - 1] && s < res.sigma_min[k + 1] && s < 1e-2 * res.scale)
      brackets.emplace_back(res.t[k - 1], res.t[k + 1]);
  }
  const double gr = 0.5 * (std::sqrt(5.0) - 1.0);
  for (auto [a, b] : brackets) {
    double c = b - gr * (b - a), d = a + gr * (b - a);
    double fc = sigma_at(c)[m - 1], fd = sigma_at(d)[m - 1];
    for (int it = 0; it < 100 && std::abs(b - a) > 1e-13; ++it) {
      if (fc < fd) {
        b = d;
        d = c;
        fd = fc;
        c = b - gr * (b - a);
        fc = sigma_at(c)[m - 1];
      } else {
        a = c;
        c = d;
        fc = fd;
        d = a + gr * (b - a);
        fd = sigma_at(d)[m - 1];
      }
    }
    const double tc = 0.5 * (a + b);
    const Vec sv = sigma_at(tc);
    const double thr = tol_sing * res.scale;
    ConjugatePoint cp;
    cp.t = tc;
    cp.sigma_min = sv[m - 1];
    double retained = std::numeric_limits<double>::infinity(), discarded = 0.0;
    for (int i = 0; i < m; ++i) {
      if (sv[i] < thr) {
        ++cp.order;
        discarded = std::max(discarded, sv[i]);
      } else {
        retained = std::min(retained, sv[i]);
      }
    }
    if (cp.order == 0) continue;
    if (!std::isfinite(retained)) retained = res.scale;
    cp.margin = discarded > 0.0 ? retained / discarded : std::numeric_limits<double>::infinity();
    bool dup = false;
    for (const auto& q : res.conjugate)
      if (std::abs(q.t - cp.t) < 2.0 * h) dup = true;
    if (!dup) res.conjugate.push_back(cp);
  }
  return res;
}

std::vector<double> parallel_component(const MagneticSystem& sys, const JacobiRun& run,
                                       int column, double f0) {
  const std::size_t N = run.size();
  std::vector<double> g(N);
  for (std::size_t k = 0; k < N; ++k) {
    const PhaseState s = run.state(k);
    const LocalGeometry geo = sys.local(s.x, 0);
    const Vec J = run.J(k).col(column);
    const Vec perp = J - J.dot(geo.g * s.theta) * s.theta;
    g[k] = perp.dot(geo.g * (geo.Y * s.theta));
  }
  std::vector<double> f(N, f0);
  for (std::size_t k = 0; k + 1 < N; ++k) {
    const double dt = run.time(k + 1) - run.time(k);
    double inc;
    if (k + 2 < N)
      inc = dt * (5.0 * g[k] + 8.0 * g[k + 1] - g[k + 2]) / 12.0;
    else if (k >= 1)
      inc = dt * (-g[k - 1] + 8.0 * g[k] + 5.0 * g[k + 1]) / 12.0;
    else
      inc = 0.5 * dt * (g[k] + g[k + 1]);
    f[k + 1] = f[k] + inc;
  }
  return f;
}

// --- conditions A and B --------------------------------------------------------

Certificate condition_A(const MagneticSystem& sys, const PhaseState& entry, const FlowOptions& opt,
                        double tol) {
  const ExitEvent ev = first_exit(sys, entry, opt);
  Certificate cert;
  cert.exit_time = ev.time;
  cert.min_sigma = std::numeric_limits<double>::infinity();
  if (ev.time <= 2.0 * opt.h) return cert;
  const JacobiTensorResult res = jacobi_tensor(sys, entry, ev.time, Anchor::Start, opt.h);
  const int m = sys.dim() - 1;
  std::vector<double> contacts = ev.grazing_times;
  contacts.push_back(ev.time);
  for (double tc : contacts) {
    if (tc <= 2.0 * opt.h) continue;
    const Eigen::VectorXd z = res.run.raw_at(std::min(tc, res.t.back()));
    const Vec sv = singular_values(Mat(res.run.F_of(z).topRows(m)));
    const double rel = sv[m - 1] / res.scale;
    cert.checked_times.push_back(tc);
    cert.min_sigma = std::min(cert.min_sigma, rel);
    if (rel < tol) {
      cert.holds = false;
      cert.violation_times.push_back(tc);
    }
  }
  return cert;
}

Certificate condition_B(const MagneticSystem& sys, const PhaseState& entry, const FlowOptions& opt,
                        double tol) {
  const ExitEvent ev = first_exit(sys, entry, opt);
  Certificate cert;
  cert.exit_time = ev.time;
  cert.min_sigma = std::numeric_limits<double>::infinity();
  if (ev.time <= 2.0 * opt.h) return cert;
  const JacobiTensorResult res = jacobi_tensor(sys, entry, ev.time, Anchor::End, opt.h, tol);
  const int m = sys.dim() - 1;
  for (std::size_t k = 0; k < res.t.size(); ++k)
    if (res.t[k] > 2.0 * opt.h && res.t[k] < ev.time - 2.0 * opt.h)
      cert.min_sigma = std::min(cert.min_sigma, res.sigma_min[k] / res.scale);
  for (const auto& cp : res.conjugate) {
    if (cp.t <= 2.0 * opt.h || cp.t >= ev.time - 2.0 * opt.h) continue;
    cert.checked_times.push_back(cp.t);
    if (cp.order == m) {
      cert.holds = false;
      cert.violation_times.push_back(cp.t);
    }
  }
  return cert;
}

}  // namespace magscat
