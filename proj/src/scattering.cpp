#include "magscat/scattering.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <limits>

namespace magscat {

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

BoundaryVector nan_vector(int n) {
  BoundaryVector v;
  v.u = Vec::Constant(n - 1, kNaN);
  v.w = Vec::Constant(n - 1, kNaN);
  v.r = kNaN;
  return v;
}

}  // namespace

BoundaryVector lambda_map(const MagneticSystem& sys, const PhaseState& s) {
  if (std::abs(sys.level(s.x)) > 1e-8)
    throw Error(ErrorCode::NotOnBoundary, "base point is not on the boundary");
  const BoundaryChart& bd = sys.boundary();
  BoundaryVector out;
  out.u = bd.project(s.x);
  const Mat T = bd.tangents(out.u);
  const Mat g = sys.metric(s.x);
  const Vec nu = normal_field(sys, s.x);
  out.r = s.theta.dot(g * nu);
  const Vec tangential = s.theta - out.r * nu;
  const Mat induced = T.transpose() * g * T;
  out.w = induced.ldlt().solve(T.transpose() * g * tangential);
  return out;
}

PhaseState lambda_inverse(const MagneticSystem& sys, const BoundaryVector& v) {
  const BoundaryChart& bd = sys.boundary();
  PhaseState s;
  s.x = bd.point(v.u);
  s.theta = bd.tangents(v.u) * v.w + v.r * normal_field(sys, s.x);
  return s;
}

BoundaryVector boundary_direction(double u, double alpha, double induced_uu) {
  BoundaryVector v;
  v.u = Vec::Constant(1, u);
  v.w = Vec::Constant(1, std::cos(alpha) / std::sqrt(induced_uu));
  v.r = std::sin(alpha);
  return v;
}

double direction_angle(const BoundaryVector& v, double induced_uu) {
  return std::atan2(v.r, v.w[0] * std::sqrt(induced_uu));
}

const char* status_name(RecordStatus s) {
  switch (s) {
    case RecordStatus::Ok: return "ok";
    case RecordStatus::Tangent: return "tangent";
    case RecordStatus::Trapped: return "trapped";
    case RecordStatus::GrazingUnresolved: return "grazing_unresolved";
    case RecordStatus::LeftChart: return "left_chart";
    case RecordStatus::Failed: return "failed";
  }
  return "failed";
}

RecordStatus parse_status(const std::string& s) {
  for (auto st : {RecordStatus::Ok, RecordStatus::Tangent, RecordStatus::Trapped,
                  RecordStatus::GrazingUnresolved, RecordStatus::LeftChart, RecordStatus::Failed})
    if (s == status_name(st)) return st;
  throw Error(ErrorCode::FormatError, "unknown status '" + s + "'");
}

ScatteringRecord scatter_one(const MagneticSystem& sys, const BoundaryVector& entry,
                             const FlowOptions& opt) {
  if (entry.r < -1e-12) throw Error(ErrorCode::BadParams, "entry vector points outward");
  ScatteringRecord rec;
  rec.entry = entry;
  const ExitEvent ev = first_exit(sys, lambda_inverse(sys, entry), opt);
  rec.exit = lambda_map(sys, ev.exit);
  const double period = sys.boundary().period();
  if (period > 0.0) {
    rec.exit.u[0] = std::fmod(rec.exit.u[0], period);
    if (rec.exit.u[0] < 0) rec.exit.u[0] += period;
  }
  rec.time = ev.time;
  rec.transversal = ev.transversal;
  rec.status = entry.r <= opt.tol_tangency ? RecordStatus::Tangent : RecordStatus::Ok;
  return rec;
}

ScatteringDataset sample_dataset(const MagneticSystem& sys, const GridSpec& grid,
                                 const FlowOptions& opt) {
  ScatteringDataset ds;
  ds.system = sys.label();
  ds.dim = sys.dim();
  ds.u_period = sys.boundary().period();
  if (grid.nu <= 0 || grid.ndir <= 0) return ds;
  if (sys.dim() != 2) throw Error(ErrorCode::BadParams, "grid sampling is implemented for n = 2");
  ds.grid = grid;
  const double extent = sys.boundary().extent();
  std::vector<double> induced(grid.nu);
  for (int i = 0; i < grid.nu; ++i) {
    induced[i] = boundary_frame(sys, Vec::Constant(1, extent * i / grid.nu)).induced(0, 0);
    if (std::abs(induced[i] - 1.0) > 1e-12) ds.euclidean_tangent_norm = false;
  }
  ds.records.resize(static_cast<std::size_t>(grid.nu) * grid.ndir);
  parallel_for(ds.records.size(), [&](std::size_t k) {
    const int i = static_cast<int>(k) / grid.ndir, j = static_cast<int>(k) % grid.ndir;
    const double alpha = grid.ndir == 1 ? 0.5 * M_PI : M_PI * j / (grid.ndir - 1);
    BoundaryVector entry = boundary_direction(extent * i / grid.nu, alpha, induced[i]);
    if (j == 0 || j == grid.ndir - 1) entry.r = 0.0;
    ScatteringRecord& rec = ds.records[k];
    try {
      rec = scatter_one(sys, entry, opt);
    } catch (const Error& e) {
      rec.entry = entry;
      rec.exit = nan_vector(2);
      rec.time = kNaN;
      rec.transversal = false;
      switch (e.code()) {
        case ErrorCode::Trapped: rec.status = RecordStatus::Trapped; break;
        case ErrorCode::GrazingUnresolved: rec.status = RecordStatus::GrazingUnresolved; break;
        case ErrorCode::LeftChart: rec.status = RecordStatus::LeftChart; break;
        default: rec.status = RecordStatus::Failed; break;
      }
    }
  });
  return ds;
}

namespace {

bool same_double(double a, double b) {
  if (std::isnan(a) && std::isnan(b)) return true;
  return std::memcmp(&a, &b, sizeof(double)) == 0;
}

bool same_vec(const Vec& a, const Vec& b) {
  if (a.size() != b.size()) return false;
  for (int i = 0; i < a.size(); ++i)
    if (!same_double(a[i], b[i])) return false;
  return true;
}

bool same_bv(const BoundaryVector& a, const BoundaryVector& b) {
  return same_vec(a.u, b.u) && same_vec(a.w, b.w) && same_double(a.r, b.r);
}

}  // namespace

bool records_identical(const ScatteringRecord& a, const ScatteringRecord& b) {
  return same_bv(a.entry, b.entry) && same_bv(a.exit, b.exit) && same_double(a.time, b.time) &&
         a.transversal == b.transversal && a.status == b.status;
}

// --- oracles ---------------------------------------------------------------

LiveOracle::LiveOracle(const MagneticSystem& sys, FlowOptions opt) : sys_(sys), opt_(opt) {}

int LiveOracle::dim() const { return sys_.dim(); }

double LiveOracle::u_period() const { return sys_.boundary().period(); }

ScatteringRecord LiveOracle::query(const BoundaryVector& entry) const {
  QueryAudit::OracleScope scope;
  ++calls_;
  return scatter_one(sys_, entry, opt_);
}

double LiveOracle::induced(double u) const {
  QueryAudit::OracleScope scope;
  return boundary_frame(sys_, Vec::Constant(1, u)).induced(0, 0);
}

DatasetOracle::DatasetOracle(ScatteringDataset ds) : ds_(std::move(ds)) {
  if (ds_.dim != 2 || ds_.grid.nu < 1 || ds_.grid.ndir < 2 ||
      ds_.records.size() != static_cast<std::size_t>(ds_.grid.nu) * ds_.grid.ndir)
    throw Error(ErrorCode::GridMismatch, "dataset is not a complete (u, direction) grid");
  if (!(ds_.u_period > 0.0))
    throw Error(ErrorCode::GridMismatch, "dataset oracle needs a closed boundary");
}

ScatteringRecord DatasetOracle::query(const BoundaryVector& entry) const {
  ++calls_;
  const int nu = ds_.grid.nu, nd = ds_.grid.ndir;
  const double period = ds_.u_period;
  double u = std::fmod(entry.u[0], period);
  if (u < 0) u += period;
  const double alpha = std::atan2(entry.r, entry.w[0]);
  const double fu = u / (period / nu);
  const double fa = std::clamp(alpha / (M_PI / (nd - 1)), 0.0, nd - 1.0);
  const int i0 = std::min(static_cast<int>(fu), nu - 1);
  const int j0 = std::min(static_cast<int>(fa), nd - 2);
  const double su = fu - i0, sa = fa - j0;

  ScatteringRecord out;
  out.entry = entry;
  out.exit = nan_vector(2);
  out.time = kNaN;
  out.status = RecordStatus::Failed;
  const ScatteringRecord* corner[2][2];
  for (int a = 0; a < 2; ++a)
    for (int b = 0; b < 2; ++b) {
      const int i = (i0 + a) % nu;
      corner[a][b] = &ds_.records[static_cast<std::size_t>(i) * nd + j0 + b];
      const RecordStatus st = corner[a][b]->status;
      if (st != RecordStatus::Ok && st != RecordStatus::Tangent) return out;
    }
  const double base = corner[0][0]->exit.u[0];
  double uo = 0.0, wo = 0.0, ro = 0.0, t = 0.0;
  for (int a = 0; a < 2; ++a)
    for (int b = 0; b < 2; ++b) {
      const double wgt = (a ? su : 1.0 - su) * (b ? sa : 1.0 - sa);
      const ScatteringRecord& rc = *corner[a][b];
      uo += wgt * (base + wrap_periodic(rc.exit.u[0] - base, period));
      wo += wgt * rc.exit.w[0];
      ro += wgt * rc.exit.r;
      t += wgt * rc.time;
    }
  uo = std::fmod(uo, period);
  if (uo < 0) uo += period;
  out.exit.u[0] = uo;
  out.exit.w[0] = wo;
  out.exit.r = ro;
  out.time = t;
  out.transversal = ro < -1e-6;
  out.status = entry.r <= 1e-6 ? RecordStatus::Tangent : RecordStatus::Ok;
  return out;
}

// --- exit-map inversion ----------------------------------------------------

EntrySolution entry_for_exit(const ScatteringOracle& oracle, double u_x, double y0,
                             double alpha_guess, double tol) {
  if (oracle.dim() != 2) throw Error(ErrorCode::BadParams, "exit-map inversion needs n = 2");
  const double E = oracle.induced(u_x);
  const double period = oracle.u_period();
  EntrySolution sol;
  auto eval = [&](double alpha, ScatteringRecord* rec) {
    ScatteringRecord r = oracle.query(boundary_direction(u_x, alpha, E));
    if (r.status != RecordStatus::Ok)
      throw Error(ErrorCode::NoConvergence, "exit map undefined along the inversion");
    if (rec) *rec = r;
    return wrap_periodic(r.exit.u[0] - y0, period);
  };
  const double lo = 1e-9, hi = M_PI - 1e-9;
  double alpha = std::clamp(alpha_guess, lo, hi);
  double res = eval(alpha, &sol.record);
  double deriv = 0.0;
  auto derivative = [&](double a) {
    const double h = std::min({1e-6, 0.5 * (a - lo), 0.5 * (hi - a)});
    return (eval(a + h, nullptr) - eval(a - h, nullptr)) / (2.0 * h);
  };
  for (int iter = 0; iter < 60; ++iter) {
    deriv = derivative(alpha);
    if (std::abs(res) <= tol) break;
    if (deriv == 0.0) break;
    const double step = res / deriv;
    double lambda = 1.0;
    bool moved = false;
    for (int k = 0; k < 40; ++k) {
      const double trial = alpha - lambda * step;
      if (trial > lo && trial < hi) {
        ScatteringRecord rec;
        double r;
        try {
          r = eval(trial, &rec);
        } catch (const Error&) {
          lambda *= 0.5;
          continue;
        }
        if (std::abs(r) < std::abs(res)) {
          alpha = trial;
          res = r;
          sol.record = rec;
          moved = true;
          break;
        }
      }
      lambda *= 0.5;
    }
    if (!moved) break;
  }
  sol.alpha = alpha;
  sol.residual = std::abs(res);
  sol.condition = deriv == 0.0 ? std::numeric_limits<double>::infinity() : 1.0 / std::abs(deriv);
  sol.entry = boundary_direction(u_x, alpha, E);
  if (sol.condition > 1e8)
    throw Error(ErrorCode::KappaSingular, "exit map is singular: boundary points are conjugate");
  if (sol.residual > 1e-9) throw Error(ErrorCode::NoConvergence, "exit-map Newton did not converge");
  return sol;
}

}  // namespace magscat
