#include "magscat/config.hpp"

#include "CLI11.hpp"

#include <cmath>
#include <ctime>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <sstream>

using namespace magscat;

namespace {

constexpr const char* kVersion = "magscat 0.1.0";

struct Common {
  std::string system;
  std::string out;
  bool no_timestamp = false;
};

std::string timestamp() {
  std::time_t now = std::time(nullptr);
  std::tm tm{};
  gmtime_r(&now, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

std::vector<double> numbers(const std::string& text, const std::string& what) {
  std::vector<double> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    try {
      std::size_t used = 0;
      out.push_back(std::stod(item, &used));
      if (used != item.size()) throw std::invalid_argument(item);
    } catch (const std::exception&) {
      throw Error(ErrorCode::ConfigError, what + ": cannot parse '" + text + "'");
    }
  }
  return out;
}

Vec point(const std::string& text, const std::string& what) {
  const auto v = numbers(text, what);
  if (v.size() != 2) throw Error(ErrorCode::ConfigError, what + " needs two comma-separated values");
  Vec p(2);
  p << v[0], v[1];
  return p;
}

BoundaryVector entry_vector(const std::string& text) {
  const auto v = numbers(text, "--entry");
  if (v.size() != 3) throw Error(ErrorCode::ConfigError, "--entry needs u,w,r");
  BoundaryVector b;
  b.u = Vec::Constant(1, v[0]);
  b.w = Vec::Constant(1, v[1]);
  b.r = v[2];
  return b;
}

class Sink {
 public:
  explicit Sink(const std::string& path) {
    if (!path.empty()) {
      file_.open(path);
      if (!file_) throw Error(ErrorCode::ConfigError, "cannot write '" + path + "'");
    }
    stream().precision(17);
  }
  std::ostream& stream() { return file_.is_open() ? file_ : std::cout; }

 private:
  std::ofstream file_;
};

void provenance(std::ostream& out, const ExperimentConfig& cfg, const Common& c) {
  out << "# " << kVersion << "\n# system: " << cfg.system.name << "\n# config-hash: " << cfg.hash
      << "\n";
  if (!c.no_timestamp) out << "# generated: " << timestamp() << "\n";
}

int cmd_simulate(const Common& c, const std::string& entry, double h, double tmax) {
  const ExperimentConfig cfg = load_config(c.system);
  const MagneticSystem sys = make_system(cfg);
  const PhaseState s = lambda_inverse(sys, entry_vector(entry));
  FlowOptions fo = cfg.flow;
  fo.h = h;
  double T = tmax;
  try {
    T = std::min(tmax, first_exit(sys, s, fo).time);
  } catch (const Error& e) {
    if (e.code() != ErrorCode::Trapped) throw;
  }
  const GeodesicPath path = integrate_geodesic(sys, s, T, h, fo.t_trap);
  Sink sink(c.out);
  std::ostream& out = sink.stream();
  provenance(out, cfg, c);
  out << "t";
  for (int i = 0; i < sys.dim(); ++i) out << ",x" << i;
  for (int i = 0; i < sys.dim(); ++i) out << ",theta" << i;
  out << ",speed_err\n";
  for (std::size_t k = 0; k < path.t.size(); ++k) {
    const PhaseState& p = path.states[k];
    out << path.t[k];
    for (int i = 0; i < p.x.size(); ++i) out << "," << p.x(i);
    for (int i = 0; i < p.theta.size(); ++i) out << "," << p.theta(i);
    out << "," << std::abs(speed(sys, p) - 1.0) << "\n";
  }
  return 0;
}

int cmd_scatter(const Common& c, int nu, int ndir) {
  const ExperimentConfig cfg = load_config(c.system);
  const MagneticSystem sys = make_system(cfg);
  GridSpec grid = cfg.grid;
  if (nu >= 0) grid.nu = nu;
  if (ndir >= 0) grid.ndir = ndir;
  ScatteringDataset ds = sample_dataset(sys, grid, cfg.flow);
  ds.config_hash = cfg.hash;
  if (!c.no_timestamp) ds.timestamp = timestamp();
  Sink sink(c.out);
  write_dataset(sink.stream(), ds);
  return 0;
}

int cmd_jacobi(const Common& c, const std::string& entry, const std::string& anchor, double h) {
  const ExperimentConfig cfg = load_config(c.system);
  const MagneticSystem sys = make_system(cfg);
  if (anchor != "start" && anchor != "end")
    throw Error(ErrorCode::ConfigError, "--anchor must be start or end");
  const BoundaryVector v = entry_vector(entry);
  const ScatteringRecord rec = scatter_one(sys, v, cfg.flow);
  const PhaseState s = lambda_inverse(sys, v);
  const JacobiTensorResult jt =
      jacobi_tensor(sys, s, rec.time, anchor == "start" ? Anchor::Start : Anchor::End, h);
  const Certificate A = condition_A(sys, s, cfg.flow);
  const Certificate B = condition_B(sys, s, cfg.flow);

  Sink sink(c.out);
  std::ostream& out = sink.stream();
  provenance(out, cfg, c);
  out << "t,sigma_min,det,order\n";
  for (std::size_t k = 0; k < jt.t.size(); ++k) {
    int order = 0;
    for (const ConjugatePoint& p : jt.conjugate) {
      const double dt = std::abs(p.t - jt.t[k]);
      if (dt <= 0.5 * h) order = p.order;
    }
    out << jt.t[k] << "," << jt.sigma_min[k] << "," << jt.det[k] << "," << order << "\n";
  }
  auto fmt = [](const Certificate& cert) {
    std::ostringstream s;
    s.precision(10);
    s << (cert.holds ? "holds" : "violated");
    for (double t : cert.violation_times) s << " t=" << t;
    return s.str();
  };
  out << "# exit-time: " << rec.time << "; conjugate points: " << jt.conjugate.size()
      << "; condition A " << fmt(A) << "; condition B " << fmt(B) << "\n";
  return 0;
}

int cmd_action(const Common& c, const std::string& xs, const std::string& ys,
               const std::string& gauge, const std::string& center) {
  const ExperimentConfig cfg = load_config(c.system);
  const MagneticSystem sys = make_system(cfg);
  const Vec x = point(xs, "--x"), y = point(ys, "--y");
  Vec base;
  if (gauge == "radial") {
    base = center.empty() ? Vec(Vec::Zero(2)) : point(center, "--center");
  } else if (gauge == "collar") {
    base = sys.boundary().point(sys.boundary().project(x));
  } else {
    throw Error(ErrorCode::ConfigError, "--gauge must be radial or collar");
  }
  const auto zeta = radial_potential(sys, base);
  Vec th = y - x;
  const double len = std::sqrt(th.dot(sys.metric(x) * th));
  th /= len;
  const RhoValue r = rho(sys, *zeta, x, y, th, len);
  Vec w = Vec::Zero(2);
  w(0) = 1.0;
  Sink sink(c.out);
  std::ostream& out = sink.stream();
  provenance(out, cfg, c);
  out << "quantity,value\n";
  out << "rho," << r.rho << "\n";
  out << "tau," << r.connection.tau << "\n";
  out << "theta_x," << r.connection.theta(0) << "\ntheta_y," << r.connection.theta(1) << "\n";
  out << "shooting_residual," << r.connection.residual << "\n";
  out << "shooting_condition," << r.connection.condition << "\n";
  out << "potential_residual," << potential_residual(sys, *zeta, x) << "\n";
  out << "first_variation_residual," << first_variation_check(sys, *zeta, r, w) << "\n";
  out << "eikonal_residual," << eikonal_residual(sys, *zeta, r) << "\n";
  return 0;
}

int cmd_recover(const Common& c, const std::string& oracle_arg, double x0, int K,
                const std::string& s_grid, const std::string& fan, double span) {
  ExperimentConfig cfg = load_config(c.system);
  const MagneticSystem sys = make_system(cfg);
  if (K > 0) cfg.recovery.K = K;
  if (!s_grid.empty()) cfg.recovery.s_grid = numbers(s_grid, "--s-grid");
  if (!fan.empty()) cfg.recovery.offsets = numbers(fan, "--fan");
  Vec gc(2);
  gc << cfg.gauge_center_x, cfg.gauge_center_y;
  auto gauge = radial_potential(sys, gc);
  const BoundaryData data = tabulate_boundary_data(sys, gauge, x0 - span, x0 + span);

  std::unique_ptr<ScatteringOracle> oracle;
  if (oracle_arg == "live") {
    oracle = std::make_unique<LiveOracle>(sys, cfg.flow);
  } else {
    std::ifstream probe(oracle_arg);
    if (!probe) throw Error(ErrorCode::ConfigError, "cannot open dataset '" + oracle_arg + "'");
    oracle = std::make_unique<DatasetOracle>(read_dataset(oracle_arg));
  }
  sys.audit().reset();
  const BoundaryJetEstimate est = recover_jet(*oracle, data, x0, cfg.recovery);
  const std::size_t outside = sys.audit().outside_oracle();
  const TruthJets truth = truth_jets(sys, gauge, x0);

  Sink sink(c.out);
  std::ostream& out = sink.stream();
  provenance(out, cfg, c);
  out << "# u0: " << x0 << "; regime: " << est.regime << "; oracle calls: " << est.oracle_calls
      << "; non-oracle queries: " << outside << "\n";
  out << "quantity,order,estimate,width,truth,abs_error,rel_error\n";
  auto widths = [&](const std::string& name, int k) {
    if (name == "g^uu") return est.g[k].width;
    if (name == "zeta_u") return est.zeta[k].width;
    return est.omega[k].width;
  };
  for (const TruthRow& row : verify_against_truth(truth, est))
    out << row.name << "," << row.order << "," << row.estimate << "," << widths(row.name, row.order)
        << "," << row.truth << "," << row.abs_error << "," << row.rel_error << "\n";
  return 0;
}

int cmd_equiv(const Common& c, const std::string& sys2_path, const std::string& mode,
              const std::string& xs, int ndir, int certify_stride) {
  const ExperimentConfig cfg1 = load_config(c.system);
  const ExperimentConfig cfg2 = load_config(sys2_path);
  const MagneticSystem s1 = make_system(cfg1), s2 = make_system(cfg2);
  const Tolerances& tol = cfg1.tolerances;
  Sink sink(c.out);
  std::ostream& out = sink.stream();
  provenance(out, cfg1, c);
  out << "# sys2-config-hash: " << cfg2.hash << "\n";
  bool pass = false;
  std::ostringstream summary;
  summary.precision(6);

  if (mode == "scatter" || mode == "times") {
    const ScatteringDataset d1 = sample_dataset(s1, cfg1.grid, cfg1.flow);
    const ScatteringDataset d2 = sample_dataset(s2, cfg1.grid, cfg1.flow);
    if (mode == "scatter") {
      const ScatteringDistance sd = scattering_distance(d1, d2, cfg1.flow.tol_tangency);
      out << "index,u_in,r_in,exit_diff,time_diff\n";
      for (const RecordDiff& d : sd.diffs) {
        const auto& e = d1.records[d.index].entry;
        out << d.index << "," << e.u(0) << "," << e.r << "," << d.exit << "," << d.time << "\n";
      }
      pass = sd.sup_exit <= tol.scatter && sd.status_mismatch == 0;
      summary << "scatter sup_exit=" << sd.sup_exit << " rms_exit=" << sd.rms_exit
              << " status_mismatch=" << sd.status_mismatch << " tol=" << tol.scatter;
    } else {
      std::vector<std::size_t> flag;
      if (certify_stride > 0) {
        flag = condition_B_violations(s1, d1, certify_stride);
        const auto f2 = condition_B_violations(s2, d2, certify_stride);
        flag.insert(flag.end(), f2.begin(), f2.end());
      }
      const TravelTimeComparison tt = compare_travel_times(d1, d2, flag, cfg1.flow.tol_tangency);
      out << "index,u_in,r_in,time_diff\n";
      for (const RecordDiff& d : tt.diffs) {
        const auto& e = d1.records[d.index].entry;
        out << d.index << "," << e.u(0) << "," << e.r << "," << d.time << "\n";
      }
      pass = tt.sup <= tol.times;
      summary << "times sup=" << tt.sup << " rms=" << tt.rms << " flagged=" << tt.flagged
              << " sup_flagged=" << tt.sup_flagged << " tol=" << tol.times;
    }
  } else if (mode == "extend") {
    const Vec x = point(xs, "--x");
    const ExtensionProbe p = theta_independence(s1, s2, x, ndir);
    out << "direction,theta_x,theta_y,T,image_x,image_y\n";
    for (std::size_t j = 0; j < p.images.size(); ++j)
      out << j << "," << p.thetas[j](0) << "," << p.thetas[j](1) << "," << p.T[j] << ","
          << p.images[j](0) << "," << p.images[j](1) << "\n";
    for (const std::string& f : p.failures) out << "# failed " << f << "\n";
    pass = p.spread <= tol.theta_spread && p.failures.empty();
    summary << "extend spread=" << p.spread << " image=(" << p.mean(0) << "," << p.mean(1)
            << ") failures=" << p.failures.size() << " tol=" << tol.theta_spread;
  } else {
    throw Error(ErrorCode::ConfigError, "--mode must be scatter, times or extend");
  }
  std::cout << (pass ? "PASS " : "FAIL ") << summary.str() << "\n";
  return pass ? 0 : 4;
}

int exit_code(ErrorCode code) {
  switch (code) {
    case ErrorCode::ConfigError:
    case ErrorCode::BadParams:
    case ErrorCode::UnknownSystem:
    case ErrorCode::FormatError:
      return 2;
    case ErrorCode::InvariantViolation:
      return 4;
    default:
      return 3;
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Magnetic geodesic flow, scattering data and boundary rigidity"};
  app.set_version_flag("--version", kVersion);
  app.require_subcommand(1);
  Common c;
  int rc = 0;

  auto common = [&](CLI::App* sub, bool system_required = true) {
    auto* opt = sub->add_option("--system", c.system, "INI config with a [system] section");
    if (system_required) opt->required();
    sub->add_option("--out", c.out, "output file (default stdout)");
    sub->add_flag("--no-timestamp", c.no_timestamp, "omit the generation time from headers");
  };

  std::string entry, anchor = "start", xs, ys, gauge = "radial", center, oracle = "live", s_grid,
                     fan, sys2, mode = "scatter";
  double h = 1e-3, tmax = 10.0, x0 = 0.0, span = 1.2;
  int nu = -1, ndir = -1, K = 0, ndir_extend = 16, certify = 0;

  auto* sim = app.add_subcommand("simulate", "integrate one trajectory from a boundary vector");
  common(sim);
  sim->add_option("--entry", entry, "u,w,r")->required();
  sim->add_option("--step", h, "integration step");
  sim->add_option("--tmax", tmax, "maximal time");
  sim->callback([&] { rc = cmd_simulate(c, entry, h, tmax); });

  auto* sc = app.add_subcommand("scatter", "sample the scattering dataset");
  common(sc);
  sc->add_option("--nu", nu, "boundary samples (overrides [grid])");
  sc->add_option("--ndir", ndir, "directions per sample (overrides [grid])");
  sc->callback([&] { rc = cmd_scatter(c, nu, ndir); });

  auto* jc = app.add_subcommand("jacobi", "Jacobi tensor, conjugate points, conditions A and B");
  common(jc);
  jc->add_option("--entry", entry, "u,w,r")->required();
  jc->add_option("--anchor", anchor, "start|end");
  jc->add_option("--step", h, "integration step");
  jc->callback([&] { rc = cmd_jacobi(c, entry, anchor, h); });

  auto* ac = app.add_subcommand("action", "rho(x, y) with first-variation and eikonal residuals");
  common(ac);
  ac->add_option("--x", xs, "x0,x1")->required();
  ac->add_option("--y", ys, "y0,y1")->required();
  ac->add_option("--gauge", gauge, "radial|collar");
  ac->add_option("--center", center, "base point of the radial gauge");
  ac->callback([&] { rc = cmd_action(c, xs, ys, gauge, center); });

  auto* rc_ = app.add_subcommand("recover", "boundary jets from scattering data");
  common(rc_);
  rc_->add_option("--oracle", oracle, "live or a dataset CSV");
  rc_->add_option("--x0", x0, "boundary parameter of the base point");
  rc_->add_option("--K", K, "jet order (1 or 2)");
  rc_->add_option("--s-grid", s_grid, "comma-separated tilts");
  rc_->add_option("--fan", fan, "comma-separated tangential offsets of the probe fan");
  rc_->add_option("--span", span, "half-width of the tabulated boundary data");
  rc_->callback([&] { rc = cmd_recover(c, oracle, x0, K, s_grid, fan, span); });

  auto* eq = app.add_subcommand("equiv", "compare two presentations of a system");
  common(eq, false);
  eq->add_option("--sys1", c.system, "first system config")->required();
  eq->add_option("--sys2", sys2, "second system config")->required();
  eq->add_option("--mode", mode, "scatter|times|extend");
  eq->add_option("--x", xs, "interior point for extend mode");
  eq->add_option("--ndir", ndir_extend, "directions for extend mode");
  eq->add_option("--certify-stride", certify, "condition B check every k-th record (times mode)");
  eq->callback([&] { rc = cmd_equiv(c, sys2, mode, xs.empty() ? "0,0" : xs, ndir_extend, certify); });

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return exit_code(e.code());
  } catch (const std::exception& e) {
    std::cerr << "error: Internal: " << e.what() << "\n";
    return 3;
  }
  return rc;
}
