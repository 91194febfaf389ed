#include "magscat/rigidity.hpp"

#include <algorithm>
#include <cmath>

namespace magscat {

Vec BoundaryFixingDiffeo::inverse(const Vec& y) const {
  Vec x = y;
  for (int iter = 0; iter < 60; ++iter) {
    const Vec r = map(x) - y;
    if (r.norm() < 1e-15) return x;
    x -= jacobian(x).fullPivLu().solve(r);
  }
  if ((map(x) - y).norm() > 1e-12)
    throw Error(ErrorCode::NoConvergence, "diffeomorphism inverse did not converge");
  return x;
}

BumpDiffeo::BumpDiffeo(Vec center, double radius, Vec shift)
    : c_(std::move(center)), e_(std::move(shift)), rho_(radius) {
  if (!(rho_ > 0.0) || c_.size() != e_.size())
    throw Error(ErrorCode::BadParams, "bump diffeomorphism needs radius > 0 and matching sizes");
}

Vec BumpDiffeo::map(const Vec& x) const {
  return x + bump_profile((x - c_).squaredNorm() / (rho_ * rho_)) * e_;
}

Mat BumpDiffeo::jacobian(const Vec& x) const {
  double d1 = 0.0;
  bump_profile((x - c_).squaredNorm() / (rho_ * rho_), &d1);
  const Vec grad = (2.0 * d1 / (rho_ * rho_)) * (x - c_);
  const int n = dim();
  return Mat(Mat::Identity(n, n) + e_ * grad.transpose());
}

void validate_diffeo(const MagneticSystem& sys, const BoundaryFixingDiffeo& phi, int samples) {
  if (phi.dim() != sys.dim()) throw Error(ErrorCode::BadParams, "diffeomorphism dimension");
  if (sys.dim() != 2) throw Error(ErrorCode::BadParams, "diffeomorphism checks need n = 2");
  const BoundaryChart& bd = sys.boundary();
  Vec lo = Vec::Constant(2, 1e300), hi = Vec::Constant(2, -1e300);
  const int nb = 4 * samples;
  for (int i = 0; i < nb; ++i) {
    const Vec x = bd.point(Vec::Constant(1, bd.extent() * i / nb));
    lo = lo.cwiseMin(x);
    hi = hi.cwiseMax(x);
    if ((phi.map(x) - x).norm() > 1e-12)
      throw Error(ErrorCode::BadParams, "diffeomorphism moves a boundary point");
  }
  const Vec pad = Vec::Constant(2, sys.epsilon());
  lo -= pad;
  hi += pad;
  for (int i = 0; i <= samples; ++i)
    for (int j = 0; j <= samples; ++j) {
      Vec x(2);
      x << lo(0) + (hi(0) - lo(0)) * i / samples, lo(1) + (hi(1) - lo(1)) * j / samples;
      if (sys.signed_depth(x) < -sys.epsilon()) continue;
      const double det = phi.jacobian(x).determinant();
      // det = 1 on the boundary, so a fold shows up as a sign change
      if (!(det >= 1e-12))
        throw Error(ErrorCode::JacobianSingular, "det D phi vanishes near the sample point");
    }
}

MagneticSystem pullback_system(const MagneticSystem& sys,
                               std::shared_ptr<const BoundaryFixingDiffeo> phi) {
  validate_diffeo(sys, *phi);
  auto metric = sys.metric_ptr();
  auto field = sys.magnetic_ptr();
  const int n = sys.dim();
  auto g = std::make_shared<FiniteDifferenceMetric>(n, [metric, phi](const Vec& x) {
    const Mat D = phi->jacobian(x);
    return Mat(D.transpose() * metric->g(phi->map(x)) * D);
  }, 1e-6);
  auto w = std::make_shared<FiniteDifferenceMagneticField>(n, [field, phi](const Vec& x) {
    const Mat D = phi->jacobian(x);
    return Mat(D.transpose() * field->omega(phi->map(x)) * D);
  }, 1e-6);
  return MagneticSystem(g, w, sys.boundary_ptr(), sys.epsilon(), sys.label() + "_pullback");
}

// ---------------------------------------------------------------------------

namespace {

void check_grids(const ScatteringDataset& a, const ScatteringDataset& b) {
  if (a.grid.nu != b.grid.nu || a.grid.ndir != b.grid.ndir || a.records.size() != b.records.size())
    throw Error(ErrorCode::GridMismatch, "datasets use different grids");
  for (std::size_t k = 0; k < a.records.size(); ++k) {
    const BoundaryVector& p = a.records[k].entry;
    const BoundaryVector& q = b.records[k].entry;
    if (p.u.size() != q.u.size() || (p.u - q.u).norm() > 1e-12 || (p.w - q.w).norm() > 1e-12 ||
        std::abs(p.r - q.r) > 1e-12)
      throw Error(ErrorCode::GridMismatch, "entry vectors differ at record " + std::to_string(k));
  }
}

bool near_tangent(const ScatteringRecord& r, double tol) {
  return std::abs(r.entry.r) < tol || std::abs(r.exit.r) < tol;
}

double periodic_gap(double a, double b, double period) {
  const double d = a - b;
  return period > 0.0 ? std::remainder(d, period) : d;
}

}  // namespace

ScatteringDistance scattering_distance(const ScatteringDataset& a, const ScatteringDataset& b,
                                       double tol_tangency) {
  check_grids(a, b);
  ScatteringDistance out;
  double se = 0.0, st = 0.0;
  for (std::size_t k = 0; k < a.records.size(); ++k) {
    const ScatteringRecord& p = a.records[k];
    const ScatteringRecord& q = b.records[k];
    const bool okp = p.status == RecordStatus::Ok, okq = q.status == RecordStatus::Ok;
    if (okp != okq) {
      ++out.status_mismatch;
      continue;
    }
    if (!okp || near_tangent(p, tol_tangency) || near_tangent(q, tol_tangency)) {
      ++out.excluded;
      continue;
    }
    RecordDiff d;
    d.index = k;
    for (int i = 0; i < p.exit.u.size(); ++i)
      d.exit = std::max(d.exit, std::abs(periodic_gap(p.exit.u(i), q.exit.u(i), a.u_period)));
    d.exit = std::max(d.exit, (p.exit.w - q.exit.w).cwiseAbs().maxCoeff());
    d.exit = std::max(d.exit, std::abs(p.exit.r - q.exit.r));
    d.time = std::abs(p.time - q.time);
    out.sup_exit = std::max(out.sup_exit, d.exit);
    if (std::isfinite(d.time)) out.sup_time = std::max(out.sup_time, d.time);
    se += d.exit * d.exit;
    if (std::isfinite(d.time)) st += d.time * d.time;
    out.diffs.push_back(d);
    ++out.compared;
  }
  if (out.compared > 0) {
    out.rms_exit = std::sqrt(se / out.compared);
    out.rms_time = std::sqrt(st / out.compared);
  }
  return out;
}

TravelTimeComparison compare_travel_times(const ScatteringDataset& a, const ScatteringDataset& b,
                                          const std::vector<std::size_t>& flag,
                                          double tol_tangency) {
  check_grids(a, b);
  std::vector<bool> flagged(a.records.size(), false);
  for (std::size_t k : flag)
    if (k < flagged.size()) flagged[k] = true;
  TravelTimeComparison out;
  double s2 = 0.0;
  for (std::size_t k = 0; k < a.records.size(); ++k) {
    const ScatteringRecord& p = a.records[k];
    const ScatteringRecord& q = b.records[k];
    if (p.status != RecordStatus::Ok || q.status != RecordStatus::Ok) continue;
    if (near_tangent(p, tol_tangency) || near_tangent(q, tol_tangency)) continue;
    if (!std::isfinite(p.time) || !std::isfinite(q.time))
      throw Error(ErrorCode::MissingTimes, "record " + std::to_string(k) + " carries no time");
    const double d = std::abs(p.time - q.time);
    if (flagged[k]) {
      ++out.flagged;
      out.sup_flagged = std::max(out.sup_flagged, d);
      continue;
    }
    out.diffs.push_back({k, 0.0, d});
    out.sup = std::max(out.sup, d);
    s2 += d * d;
    ++out.compared;
  }
  if (out.compared > 0) out.rms = std::sqrt(s2 / out.compared);
  return out;
}

std::vector<std::size_t> condition_B_violations(const MagneticSystem& sys,
                                                const ScatteringDataset& ds, std::size_t stride) {
  std::vector<std::size_t> picks;
  std::size_t seen = 0;
  for (std::size_t k = 0; k < ds.records.size(); ++k) {
    const ScatteringRecord& r = ds.records[k];
    if (r.status != RecordStatus::Ok || std::abs(r.entry.r) < 1e-6) continue;
    if (seen++ % std::max<std::size_t>(stride, 1) == 0) picks.push_back(k);
  }
  std::vector<char> bad(picks.size(), 0);
  parallel_for(picks.size(), [&](std::size_t i) {
    const PhaseState s = lambda_inverse(sys, ds.records[picks[i]].entry);
    try {
      bad[i] = condition_B(sys, s).holds ? 0 : 1;
    } catch (const Error&) {
      bad[i] = 1;
    }
  });
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < picks.size(); ++i)
    if (bad[i]) out.push_back(picks[i]);
  return out;
}

double jacobi_tensor_agreement(const MagneticSystem& a, const MagneticSystem& b,
                               const BoundaryVector& entry, double h) {
  const ScatteringRecord ra = scatter_one(a, entry);
  const JacobiTensorResult ja =
      jacobi_tensor(a, lambda_inverse(a, entry), ra.time, Anchor::Start, h);
  const JacobiTensorResult jb =
      jacobi_tensor(b, lambda_inverse(b, entry), ra.time, Anchor::Start, h);
  const std::size_t m = std::min(ja.run.size(), jb.run.size());
  double worst = 0.0;
  for (std::size_t k = 0; k < m; ++k)
    worst = std::max(worst, (ja.tensor(k) - jb.tensor(k)).cwiseAbs().maxCoeff());
  return worst;
}

// ---------------------------------------------------------------------------

Vec collar_identification(const MagneticSystem& sys1, const MagneticSystem& sys2, const Vec& x) {
  const CollarCoords c = collar_inverse(sys1, x);
  return collar_map(sys2, c.u, c.depth);
}

Extension extend_phi(const MagneticSystem& sys1, const MagneticSystem& sys2, const Vec& x,
                     const Vec& theta, const ExtensionOptions& opt) {
  if (!(opt.band_fraction > 0.0 && opt.band_fraction < 1.0))
    throw Error(ErrorCode::BadParams, "band fraction must lie in (0, 1)");
  // gamma(-t) solves the flow with the field reversed and initial direction -theta
  const MagneticSystem back = sys1.with_reversed_field();
  FlowOptions fo;
  fo.h = opt.h;
  fo.t_trap = opt.t_trap;
  const PhaseState start{x, -theta};
  const ExitEvent ex = first_exit(back, start, fo);

  const double eps = sys1.epsilon();
  double t = ex.time;
  PhaseState s = ex.exit;
  double hi = t;
  while (true) {
    const PhaseState nxt = flow_step(back, s, opt.h);
    if (!nxt.x.allFinite() || !back.in_extended_chart(nxt.x)) break;
    const double d = back.signed_depth(nxt.x);
    if (!(d < 0.0 && d > -eps)) break;
    s = nxt;
    t += opt.h;
    hi = t;
    if (t > opt.t_trap) throw Error(ErrorCode::Trapped, "backward flow stays in the collar");
  }
  if (hi - ex.time < 2.0 * opt.h)
    throw Error(ErrorCode::BackingBandEmpty, "backward trajectory crosses the collar band too fast");

  Extension out;
  out.band_lo = ex.time;
  out.band_hi = hi;
  out.T = ex.time + opt.band_fraction * (hi - ex.time);
  const PhaseState b = flow_for(back, start, out.T, opt.h);
  out.backing_point = b.x;
  const CollarCoords c = collar_inverse(sys1, b.x);
  if (!(c.depth < 0.0 && c.depth > -eps))
    throw Error(ErrorCode::BackingBandEmpty, "backing point is not in the outer collar band");
  out.collar_u = c.u;
  out.collar_depth = c.depth;

  Mat J1, J2;
  collar_map_jacobian(sys1, c.u, c.depth, J1);
  const Vec p2 = collar_map_jacobian(sys2, c.u, c.depth, J2);
  const Vec xi = -b.theta;
  const Vec xi2 = J2 * J1.fullPivLu().solve(xi);
  out.image = flow_for(sys2, PhaseState{p2, xi2}, out.T, opt.h).x;
  return out;
}

namespace {

Vec unit_direction(const MagneticSystem& sys, const Vec& x, double angle) {
  Vec v(2);
  v << std::cos(angle), std::sin(angle);
  return v / std::sqrt(v.dot(sys.metric(x) * v));
}

}  // namespace

ExtensionProbe theta_independence(const MagneticSystem& sys1, const MagneticSystem& sys2,
                                  const Vec& x, int k, const ExtensionOptions& opt) {
  if (sys1.dim() != 2 || k < 2) throw Error(ErrorCode::BadParams, "direction fans need n = 2, k >= 2");
  ExtensionProbe p;
  p.x = x;
  std::vector<std::optional<Extension>> res(k);
  std::vector<std::string> err(k);
  std::vector<std::optional<ErrorCode>> code(k);
  for (int j = 0; j < k; ++j) p.thetas.push_back(unit_direction(sys1, x, 2.0 * M_PI * j / k));
  parallel_for(static_cast<std::size_t>(k), [&](std::size_t j) {
    try {
      res[j] = extend_phi(sys1, sys2, x, p.thetas[j], opt);
    } catch (const Error& e) {
      err[j] = e.what();
      code[j] = e.code();
    }
  });
  for (int j = 0; j < k; ++j) {
    if (res[j]) {
      p.T.push_back(res[j]->T);
      p.images.push_back(res[j]->image);
    } else {
      p.failures.push_back("direction " + std::to_string(j) + ": " + err[j]);
    }
  }
  if (p.images.empty()) throw Error(*code[0], "every direction failed; first: " + err[0]);
  p.mean = Vec::Zero(2);
  for (const Vec& y : p.images) p.mean += y;
  p.mean /= static_cast<double>(p.images.size());
  for (std::size_t i = 0; i < p.images.size(); ++i)
    for (std::size_t j = i + 1; j < p.images.size(); ++j)
      p.spread = std::max(p.spread, (p.images[i] - p.images[j]).norm());
  return p;
}

double metric_compatibility(const MagneticSystem& sys1, const MagneticSystem& sys2, const Vec& x,
                            const Vec& theta, double h, const ExtensionOptions& opt) {
  const int n = sys1.dim();
  auto image = [&](const Vec& y) {
    Vec th = theta / std::sqrt(theta.dot(sys1.metric(y) * theta));
    return extend_phi(sys1, sys2, y, th, opt).image;
  };
  Mat D(n, n);
  for (int i = 0; i < n; ++i) {
    Vec e = Vec::Zero(n);
    e(i) = h;
    D.col(i) = (image(x + e) - image(x - e)) / (2 * h);
  }
  const Mat pulled = D.transpose() * sys2.metric(image(x)) * D;
  return (pulled - sys1.metric(x)).cwiseAbs().maxCoeff();
}

}  // namespace magscat
