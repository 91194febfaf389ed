#include "magscat/recovery.hpp"

#include <Eigen/Cholesky>
#include <Eigen/SVD>
#include <boost/math/interpolators/cardinal_cubic_b_spline.hpp>
#include <algorithm>
#include <cmath>

namespace magscat {

namespace {

using Spline = boost::math::interpolators::cardinal_cubic_b_spline<double>;

Vec at(double u) { return Vec::Constant(1, u); }

double wrap(double d, double period) { return period > 0 ? wrap_periodic(d, period) : d; }

double d1(const std::function<double(double)>& f, double x, double h) {
  return (f(x - 2 * h) - 8 * f(x - h) + 8 * f(x + h) - f(x + 2 * h)) / (12 * h);
}

double d2(const std::function<double(double)>& f, double x, double h) {
  return (-f(x - 2 * h) + 16 * f(x - h) - 30 * f(x) + 16 * f(x + h) - f(x + 2 * h)) / (12 * h * h);
}

class CollarModelMetric final : public MetricField {
 public:
  CollarModelMetric(std::function<double(double)> E, double u0, Eigen::VectorXd p)
      : E_(std::move(E)), u0_(u0), p_(std::move(p)) {}
  int dim() const override { return 2; }

  Mat g(const Vec& x) const override {
    double E, Ep, D, Du, Dz;
    parts(x, E, Ep, D, Du, Dz);
    Mat m = Mat::Zero(2, 2);
    m(0, 0) = E / D;
    m(1, 1) = 1.0;
    return m;
  }

  MatArray dg(const Vec& x) const override {
    double E, Ep, D, Du, Dz;
    parts(x, E, Ep, D, Du, Dz);
    MatArray out;
    out[0] = Mat::Zero(2, 2);
    out[1] = Mat::Zero(2, 2);
    out[0](0, 0) = Ep / D - E * Du / (D * D);
    out[1](0, 0) = -E * Dz / (D * D);
    return out;
  }

  MatArray2 d2g(const Vec& x) const override {
    MatArray2 out;
    const double h = 1e-5;
    for (int m = 0; m < 2; ++m) {
      Vec xp = x, xm = x;
      xp(m) += h;
      xm(m) -= h;
      const MatArray a = dg(xp), b = dg(xm);
      for (int k = 0; k < 2; ++k) out[m][k] = (a[k] - b[k]) / (2 * h);
    }
    return out;
  }

 private:
  void parts(const Vec& x, double& E, double& Ep, double& D, double& Du, double& Dz) const {
    const double du = x(0), z = x(1), u = u0_ + du;
    E = E_(u);
    const double h = 1e-5;
    Ep = (E_(u + h) - E_(u - h)) / (2 * h);
    const double A = p_(0) + p_(1) * du + 0.5 * p_(2) * du * du;
    D = 1.0 + A * z + p_(3) * z * z + p_(8) * z * z * z;
    Du = (p_(1) + p_(2) * du) * z;
    Dz = A + 2 * p_(3) * z + 3 * p_(8) * z * z;
  }

  std::function<double(double)> E_;
  double u0_;
  Eigen::VectorXd p_;
};

class CollarModelField final : public MagneticField {
 public:
  explicit CollarModelField(Eigen::VectorXd p) : p_(std::move(p)) {}
  int dim() const override { return 2; }
  Mat omega(const Vec& x) const override {
    const double du = x(0), z = x(1);
    return plane(p_(4) + p_(5) * du + 0.5 * p_(6) * du * du + p_(7) * z + p_(9) * z * z);
  }
  MatArray domega(const Vec& x) const override {
    MatArray out;
    out[0] = plane(p_(5) + p_(6) * x(0));
    out[1] = plane(p_(7) + 2 * p_(9) * x(1));
    return out;
  }

 private:
  static Mat plane(double b) {
    Mat m(2, 2);
    m << 0, b, -b, 0;
    return m;
  }
  Eigen::VectorXd p_;
};

}  // namespace

const char* const CollarModelFit::kNames[CollarModelFit::kParams] = {"a1", "a1u",  "a1uu", "a2",
                                                                     "w0", "w0u", "w0uu", "w1",
                                                                     "a3", "w2"};

MagneticSystem collar_model_system(const std::function<double(double)>& induced, double u0,
                                   const Eigen::VectorXd& params) {
  if (params.size() != CollarModelFit::kParams)
    throw Error(ErrorCode::BadParams, "collar model takes 10 parameters");
  return MagneticSystem(std::make_shared<CollarModelMetric>(induced, u0, params),
                        std::make_shared<CollarModelField>(params),
                        std::make_shared<PlaneBoundary>(2, 1.0), 0.1, "collar_model");
}

// ---------------------------------------------------------------------------

BoundaryData tabulate_boundary_data(const MagneticSystem& sys,
                                    std::shared_ptr<const MagneticPotential> gauge, double u_lo,
                                    double u_hi, double du) {
  if (sys.dim() != 2) throw Error(ErrorCode::BadParams, "boundary data tables need n = 2");
  if (!(u_hi > u_lo) || !(du > 0.0)) throw Error(ErrorCode::BadParams, "bad tabulation range");
  QueryAudit::OracleScope scope;
  const int count = static_cast<int>(std::ceil((u_hi - u_lo) / du)) + 1;
  std::vector<double> E(count), zt(count), z0(count), z1(count), z2(count);
  const CollarGauge cg = collar_gauge(sys, gauge);
  parallel_for(count, [&](std::size_t i) {
    const double u = u_lo + du * static_cast<double>(i);
    E[i] = boundary_frame(sys, at(u)).induced(0, 0);
    zt[i] = cg.zeta_u(u, 0.0);
    auto zn = [&](double z) { return cg.zeta_z(u, z); };
    const double h = 5e-3;
    z0[i] = zn(0.0);
    z1[i] = d1(zn, 0.0, h);
    z2[i] = d2(zn, 0.0, h);
  });
  auto make = [&](const std::vector<double>& v) {
    return std::make_shared<Spline>(v.begin(), v.end(), u_lo, du);
  };
  auto sE = make(E), st = make(zt), s0 = make(z0), s1 = make(z1), s2 = make(z2);
  const double hi = u_lo + du * (count - 1);
  auto guard = [u_lo, hi](double u) {
    if (u < u_lo - 1e-12 || u > hi + 1e-12)
      throw Error(ErrorCode::BadParams, "boundary data not tabulated at u = " + std::to_string(u));
  };
  BoundaryData d;
  d.induced = [sE, guard](double u) {
    guard(u);
    return (*sE)(u);
  };
  d.zeta_t = [st, guard](double u) {
    guard(u);
    return (*st)(u);
  };
  d.zeta_n = [s0, s1, s2, guard](double u) {
    guard(u);
    return std::array<double, 3>{(*s0)(u), (*s1)(u), (*s2)(u)};
  };
  return d;
}

// ---------------------------------------------------------------------------
// weakly convex points

std::pair<double, double> collapse_indicator(const ScatteringOracle& oracle, double u0, double s) {
  const double E = oracle.induced(u0);
  std::array<double, 2> lam{};
  for (int k = 0; k < 2; ++k) {
    const int sign = k == 0 ? 1 : -1;
    const ScatteringRecord rec =
        oracle.query(boundary_direction(u0, sign > 0 ? s : M_PI - s, E));
    if (rec.status != RecordStatus::Ok) {
      lam[k] = 0.0;
      continue;
    }
    const double du = wrap(rec.exit.u(0) - u0, oracle.u_period());
    lam[k] = 2 * std::sin(s) / (std::sqrt(E) * sign * du);
  }
  return {lam[0], lam[1]};
}

std::vector<Probe> collect_probes(const ScatteringOracle& oracle, const BoundaryData& data,
                                  double u0, const RecoveryConfig& cfg) {
  std::vector<Probe> out;
  for (double off : cfg.offsets)
    for (int sign : {1, -1})
      for (double s : cfg.s_grid) {
        Probe p;
        p.u = u0 + off;
        p.alpha = sign > 0 ? s : M_PI - s;
        const ScatteringRecord rec =
            oracle.query(boundary_direction(p.u, p.alpha, data.induced(p.u)));
        if (rec.status != RecordStatus::Ok) continue;
        p.du = wrap(rec.exit.u(0) - p.u, oracle.u_period());
        p.w = rec.exit.w(0);
        p.time = rec.time;
        out.push_back(p);
      }
  return out;
}

namespace {

Eigen::VectorXd model_residual(const std::vector<Probe>& probes, const BoundaryData& data,
                               double u0, const Eigen::VectorXd& p, double h) {
  const MagneticSystem model = collar_model_system(data.induced, u0, p);
  Eigen::VectorXd r(3 * probes.size());
  FlowOptions opt;
  opt.h = h;
  for (std::size_t i = 0; i < probes.size(); ++i) {
    const Probe& q = probes[i];
    const BoundaryVector entry = boundary_direction(q.u - u0, q.alpha, data.induced(q.u));
    const ScatteringRecord rec = scatter_one(model, entry, opt);
    r(3 * i) = (rec.exit.u(0) - entry.u(0)) - q.du;
    r(3 * i + 1) = rec.exit.w(0) - q.w;
    r(3 * i + 2) = rec.time - q.time;
  }
  return r;
}

}  // namespace

CollarModelFit fit_collar_model(const std::vector<Probe>& probes, const BoundaryData& data,
                                double u0, const RecoveryConfig& cfg) {
  constexpr int P = CollarModelFit::kParams;
  if (probes.size() < 2 * P)
    throw Error(ErrorCode::ExtrapolationUnstable, "too few usable probes for the collar model");

  // start from the collapse rate at the smallest tilt
  const double E0 = data.induced(u0);
  double lp = 1.0, lm = 1.0;
  {
    double best = 1e300;
    for (const Probe& q : probes)
      if (q.u == u0 && std::sin(q.alpha) < best) best = std::sin(q.alpha);
    for (const Probe& q : probes)
      if (q.u == u0 && std::sin(q.alpha) == best) {
        const double l = 2 * std::sin(q.alpha) / (std::sqrt(E0) * std::abs(q.du));
        (std::cos(q.alpha) > 0 ? lp : lm) = l;
      }
  }
  Eigen::VectorXd p = Eigen::VectorXd::Zero(P);
  p(0) = lp + lm;
  p(4) = std::sqrt(E0) * (lm - lp) / 2;

  auto residual = [&](const Eigen::VectorXd& q) { return model_residual(probes, data, u0, q, cfg.model_h); };
  Eigen::VectorXd r = residual(p);
  double cost = r.squaredNorm();
  double mu = 1e-3;
  Eigen::MatrixXd J(r.size(), P);
  CollarModelFit fit;
  auto jacobian = [&]() {
    for (int j = 0; j < P; ++j) {
      Eigen::VectorXd q = p;
      const double d = 1e-6 * std::max(1.0, std::abs(p(j)));
      q(j) += d;
      J.col(j) = (residual(q) - r) / d;
    }
  };
  for (int it = 0; it < cfg.max_iter; ++it) {
    fit.iterations = it + 1;
    jacobian();
    const Eigen::MatrixXd A = J.transpose() * J;
    const Eigen::VectorXd g = J.transpose() * r;
    bool accepted = false;
    Eigen::VectorXd step;
    for (int k = 0; k < 12; ++k) {
      Eigen::MatrixXd M = A;
      M.diagonal() += mu * A.diagonal();
      step = M.ldlt().solve(-g);
      Eigen::VectorXd q = p + step;
      Eigen::VectorXd rq;
      try {
        rq = residual(q);
      } catch (const Error&) {
        mu *= 4;
        continue;
      }
      if (rq.squaredNorm() < cost) {
        p = q;
        r = rq;
        cost = rq.squaredNorm();
        mu = std::max(mu / 3, 1e-12);
        accepted = true;
        break;
      }
      mu *= 4;
    }
    if (!accepted || step.norm() <= 1e-12 * (1.0 + p.norm())) break;
  }
  jacobian();
  // column-scaled conditioning and widths
  Eigen::VectorXd scale = J.colwise().norm().transpose();
  for (int j = 0; j < P; ++j)
    if (scale(j) == 0.0) throw Error(ErrorCode::IllConditioned, "parameter has no influence");
  const Eigen::MatrixXd Js = J * scale.cwiseInverse().asDiagonal();
  Eigen::JacobiSVD<Eigen::MatrixXd> svd(Js);
  const auto& sv = svd.singularValues();
  fit.condition = sv(0) / sv(sv.size() - 1);
  if (!(fit.condition <= 1e6))
    throw Error(ErrorCode::IllConditioned,
                "collar model design condition " + std::to_string(fit.condition));
  const double dof = std::max<double>(1.0, static_cast<double>(r.size() - P));
  fit.rms = std::sqrt(cost / static_cast<double>(r.size()));
  const Eigen::MatrixXd cov = (Js.transpose() * Js).inverse() * (cost / dof);
  fit.params = p;
  fit.width = Eigen::VectorXd(P);
  for (int j = 0; j < P; ++j) fit.width(j) = std::sqrt(std::max(0.0, cov(j, j))) / scale(j);
  fit.probes = probes.size();
  if (fit.rms > cfg.max_rms)
    throw Error(ErrorCode::ExtrapolationUnstable,
                "collar model misfit " + std::to_string(fit.rms) + " exceeds " +
                    std::to_string(cfg.max_rms));
  return fit;
}

// ---------------------------------------------------------------------------
// concave points

BoundaryDrhoField boundary_drho_field(const ScatteringOracle& oracle, const BoundaryData& data,
                                      double u0, int sign, double s, double h_tan) {
  const double alpha_s = sign > 0 ? s : M_PI - s;
  const ScatteringRecord rec = oracle.query(boundary_direction(u0, alpha_s, data.induced(u0)));
  if (rec.status != RecordStatus::Ok)
    throw Error(ErrorCode::NoConvergence, "probe trajectory has no clean exit");
  BoundaryDrhoField out;
  out.y_exit = rec.exit.u(0);
  out.samples.resize(5);
  // march outwards from u0, each neighbour seeding the next inversion
  for (int k : {0, 1, 2, -1, -2}) {
    const double u = u0 + k * h_tan;
    const double guess = k == 0 ? alpha_s : out.samples[2 + k - (k > 0 ? 1 : -1)].alpha;
    const EntrySolution sol = entry_for_exit(oracle, u, out.y_exit, guess);
    const double E = data.induced(u);
    DrhoSample& d = out.samples[2 + k];
    d.u = u;
    d.alpha = sol.alpha;
    d.drho_t = data.zeta_t(u) - std::sqrt(E) * std::cos(sol.alpha);
    d.drho_n = data.zeta_n(u)[0] - std::sin(sol.alpha);
  }
  return out;
}

FitF fit_F(const ScatteringOracle& oracle, const BoundaryData& data, double u0, int sign,
           const RecoveryConfig& cfg) {
  const double s_min = *std::min_element(cfg.s_grid_concave.begin(), cfg.s_grid_concave.end());
  const auto la = collapse_indicator(oracle, u0, s_min), lb = collapse_indicator(oracle, u0, 0.5 * s_min);
  const double ia = sign > 0 ? la.first : la.second, ib = sign > 0 ? lb.first : lb.second;
  if (ia > 0.0 && ib > 0.0 && ib / ia > 0.8)
    throw Error(ErrorCode::ShortGeodesicRegime,
                "exit points collapse to the base point (weakly convex); use the collar-model route");
  const double E0 = data.induced(u0);
  const double dzn = data.zeta_n(u0)[1];
  FitF out;
  for (double s : cfg.s_grid_concave) {
    const BoundaryDrhoField f = boundary_drho_field(oracle, data, u0, sign, s, cfg.h_tan);
    const auto& q = f.samples;
    const double h = cfg.h_tan;
    const double dnt = (q[0].drho_n - 8 * q[1].drho_n + 8 * q[3].drho_n - q[4].drho_n) / (12 * h);
    const double w = std::cos(q[2].alpha) / std::sqrt(E0);
    out.s.push_back(s);
    out.measured.push_back(2 * w * dnt - 2 * std::sin(q[2].alpha) * dzn);
  }
  const int m = static_cast<int>(out.s.size());
  if (m < 2) throw Error(ErrorCode::ExtrapolationUnstable, "need at least two tilts");
  Eigen::MatrixXd A(m, 2);
  Eigen::VectorXd b(m);
  for (int i = 0; i < m; ++i) {
    A(i, 0) = 1.0;
    A(i, 1) = std::sin(out.s[i]);
    b(i) = out.measured[i];
  }
  const Eigen::VectorXd c = A.colPivHouseholderQr().solve(b);
  out.F = c(0);
  out.slope = c(1);
  out.rms = std::sqrt((A * c - b).squaredNorm() / m);
  return out;
}

std::pair<double, double> solve_jet_order1(double F_plus, double F_minus, double induced) {
  if (!(induced > 0.0)) throw Error(ErrorCode::IllConditioned, "degenerate induced metric");
  return {(F_plus + F_minus) / (2 * induced), std::sqrt(induced) * (F_plus - F_minus) / 4};
}

// ---------------------------------------------------------------------------

void solve_jet_order2(BoundaryJetEstimate& est, const BoundaryData& data) {
  if (std::isnan(est.g[1].value) || std::isnan(est.zeta[1].value))
    throw Error(ErrorCode::FirstJetRequired, "order-1 jet missing");
  if (est.fit.params.size() != CollarModelFit::kParams)
    throw Error(ErrorCode::FirstJetRequired, "order 2 needs the collar-model fit");
  const double E0 = data.induced(est.u0);
  const Eigen::VectorXd& p = est.fit.params;
  const Eigen::VectorXd& w = est.fit.width;
  auto dzz = [&](double u) { return data.zeta_n(u)[1]; };
  est.g[2] = {2 * p(3) / E0, 2 * w(3) / E0};
  est.omega[1] = {p(7), w(7)};
  est.zeta[2] = {d1(dzz, est.u0, 1e-3) - p(7), w(7)};
}

BoundaryJetEstimate recover_jet(const ScatteringOracle& oracle, const BoundaryData& data,
                                double u0, const RecoveryConfig& cfg) {
  if (oracle.dim() != 2) throw Error(ErrorCode::BadParams, "jet recovery is implemented for n = 2");
  if (cfg.K < 1 || cfg.K > 2) throw Error(ErrorCode::BadParams, "K must be 1 or 2");
  const std::size_t calls0 = oracle.calls();
  BoundaryJetEstimate est;
  est.u0 = u0;
  est.K = cfg.K;
  const double E0 = data.induced(u0);
  const double sq = std::sqrt(E0);
  auto zn = [&](double u) { return data.zeta_n(u)[0]; };
  const double dzn_u = d1(zn, u0, 1e-3);
  est.g[0] = {1.0 / E0, 0.0};
  est.zeta[0] = {data.zeta_t(u0), 0.0};

  // convex points: the exit curve collapses linearly (indicator stable under halving the tilt);
  // concave points: exits stay away (indicator halves with the tilt)
  const double s_test = cfg.s_grid.empty() ? 0.04 : *std::min_element(cfg.s_grid.begin(), cfg.s_grid.end());
  const auto l1 = collapse_indicator(oracle, u0, s_test);
  const auto l2 = collapse_indicator(oracle, u0, 0.5 * s_test);
  auto ratio = [](double a, double b) { return a > 0.0 && b > 0.0 ? b / a : 0.0; };
  const double r1 = ratio(l1.first, l2.first), r2 = ratio(l1.second, l2.second);
  auto flat_ratio = [](double r) { return r > 0.8 && r < 1.25; };
  auto half_ratio = [](double r) { return r > 0.3 && r < 0.7; };
  const bool convex = flat_ratio(r1) && flat_ratio(r2);
  const bool concave = half_ratio(r1) && half_ratio(r2);

  if (convex) {
    est.regime = "convex";
    const std::vector<Probe> probes = collect_probes(oracle, data, u0, cfg);
    est.fit = fit_collar_model(probes, data, u0, cfg);
    const Eigen::VectorXd& p = est.fit.params;
    const Eigen::VectorXd& w = est.fit.width;
    const double lp = p(0) / 2 - p(4) / sq, lm = p(0) / 2 + p(4) / sq;
    est.F_plus = 2 * lp + 2 * dzn_u / sq;
    est.F_minus = 2 * lm - 2 * dzn_u / sq;
    const auto o1 = solve_jet_order1(est.F_plus, est.F_minus, E0);
    est.g[1] = {o1.first, w(0) / E0};
    est.zeta[1] = {o1.second, w(4)};
    est.omega[0] = {dzn_u - o1.second, w(4)};
    if (cfg.K >= 2) solve_jet_order2(est, data);
  } else if (concave) {
    est.regime = "concave";
    const FitF fp = fit_F(oracle, data, u0, 1, cfg);
    const FitF fm = fit_F(oracle, data, u0, -1, cfg);
    est.F_plus = fp.F;
    est.F_minus = fm.F;
    const auto o1 = solve_jet_order1(fp.F, fm.F, E0);
    const double width = std::max(fp.rms, fm.rms);
    est.g[1] = {o1.first, width / E0};
    est.zeta[1] = {o1.second, width * sq};
    est.omega[0] = {dzn_u - o1.second, width * sq};
    // order 2 at concave points is left unreported (NaN)
  } else {
    throw Error(ErrorCode::ConvexityUndetermined,
                "boundary point is neither clearly convex nor clearly concave (collapse ratios " +
                    std::to_string(r1) + ", " + std::to_string(r2) + ")");
  }
  est.oracle_calls = oracle.calls() - calls0;
  return est;
}

// ---------------------------------------------------------------------------

TruthJets truth_jets(const MagneticSystem& sys, std::shared_ptr<const MagneticPotential> gauge,
                     double u0) {
  if (sys.dim() != 2) throw Error(ErrorCode::BadParams, "n = 2 only");
  const double h = 5e-3;
  auto ginv = [&](double z) { return collar_metric(sys, at(u0), z).inverse()(0, 0); };
  auto om = [&](double z) {
    Mat J;
    const Vec x = collar_map_jacobian(sys, at(u0), z, J);
    return J.col(0).dot(sys.omega(x) * J.col(1));
  };
  const CollarGauge cg = collar_gauge(sys, gauge);
  auto zu = [&](double z) { return cg.zeta_u(u0, z); };
  TruthJets t;
  t.g = {ginv(0.0), d1(ginv, 0.0, h), d2(ginv, 0.0, h)};
  t.omega = {om(0.0), d1(om, 0.0, h)};
  t.zeta = {zu(0.0), d1(zu, 0.0, h), d2(zu, 0.0, h)};
  return t;
}

std::vector<TruthRow> verify_against_truth(const TruthJets& truth, const BoundaryJetEstimate& est) {
  std::vector<TruthRow> rows;
  auto add = [&](const char* name, int k, double e, double t) {
    if (std::isnan(e)) return;
    TruthRow r;
    r.name = name;
    r.order = k;
    r.estimate = e;
    r.truth = t;
    r.abs_error = std::abs(e - t);
    r.rel_error = t != 0.0 ? r.abs_error / std::abs(t) : r.abs_error;
    rows.push_back(r);
  };
  for (int k = 1; k <= est.K && k < 3; ++k) {
    add("g^uu", k, est.g[k].value, truth.g[k]);
    add("zeta_u", k, est.zeta[k].value, truth.zeta[k]);
    add("Omega_un", k - 1, est.omega[k - 1].value, truth.omega[k - 1]);
  }
  return rows;
}

}  // namespace magscat
