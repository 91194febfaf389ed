#pragma once

#include "magscat/action.hpp"

#include <array>
#include <limits>
#include <string>
#include <vector>

namespace magscat {

/// Boundary data accompanying scattering data (n = 2): iota^* g, iota^* zeta and
/// the normal component of the gauge with its first two normal derivatives.
struct BoundaryData {
  std::function<double(double u)> induced;
  std::function<double(double u)> zeta_t;
  std::function<std::array<double, 3>(double u)> zeta_n;  // zeta(d_z), d_z, d_z^2 at z = 0
};

/// Samples the declared boundary data of a system on [u_lo, u_hi] once (inside an
/// oracle scope) and serves cubic B-spline interpolants afterwards.
BoundaryData tabulate_boundary_data(const MagneticSystem& sys,
                                    std::shared_ptr<const MagneticPotential> gauge, double u_lo,
                                    double u_hi, double du = 5e-3);

struct RecoveryConfig {
  // weakly convex points: tilts and tangential offsets of the probe fan
  std::vector<double> s_grid{0.04, 0.06, 0.08, 0.12, 0.16};
  std::vector<double> offsets{-0.1, 0.0, 0.1};
  double model_h = 1e-3;
  int max_iter = 40;
  double max_rms = 1e-6;  // ExtrapolationUnstable above this misfit
  // concave points: tilts for the sin(s) extrapolation and the tangential step
  std::vector<double> s_grid_concave{0.02, 0.01, 0.005, 0.0025};
  double h_tan = 1e-3;
  int K = 2;
};

/// Local collar model around u0 (chart (u - u0, z)):
///   g^{uu} = (1 + A(u) z + a2 z^2 + a3 z^3) / E(u),  A = a1 + a1u du + a1uu du^2 / 2
///   Omega_uz = w0 + w0u du + w0uu du^2 / 2 + w1 z + w2 z^2
struct CollarModelFit {
  static constexpr int kParams = 10;
  static const char* const kNames[kParams];
  Eigen::VectorXd params;  // a1 a1u a1uu a2 w0 w0u w0uu w1 a3 w2
  Eigen::VectorXd width;   // one-sigma widths from the residual misfit
  double rms = 0.0;
  double condition = 0.0;  // column-scaled design condition
  int iterations = 0;
  std::size_t probes = 0;
};

MagneticSystem collar_model_system(const std::function<double(double)>& induced, double u0,
                                   const Eigen::VectorXd& params);

/// Probe record: entry (u, alpha) and observed exit.
struct Probe {
  double u = 0.0, alpha = 0.0;
  double du = 0.0, w = 0.0, time = 0.0;
};

std::vector<Probe> collect_probes(const ScatteringOracle& oracle, const BoundaryData& data,
                                  double u0, const RecoveryConfig& cfg);

/// Gauss-Newton / Levenberg-Marquardt fit of the collar model to the probes.
/// Throws IllConditioned (scaled design condition > 1e6) / ExtrapolationUnstable.
CollarModelFit fit_collar_model(const std::vector<Probe>& probes, const BoundaryData& data,
                                double u0, const RecoveryConfig& cfg);

/// sigma(v0) for +-d_u directions estimated from the collapse of the exit curve;
/// nonpositive values mean the exit curve does not collapse to the base point.
std::pair<double, double> collapse_indicator(const ScatteringOracle& oracle, double u0, double s);

struct DrhoSample {
  double u = 0.0;
  double alpha = 0.0;
  double drho_t = 0.0;  // d_u rho = zeta_u - vhat_u
  double drho_n = 0.0;  // d_n rho = zeta_n - r
};

struct BoundaryDrhoField {
  double y_exit = 0.0;
  std::vector<DrhoSample> samples;
};

/// d_x rho(x, y_s) at boundary points x = u0 + k h_tan (k = -2..2), y_s the exit of
/// the tilt-s vector at u0 in direction `sign`. Throws KappaSingular.
BoundaryDrhoField boundary_drho_field(const ScatteringOracle& oracle, const BoundaryData& data,
                                      double u0, int sign, double s, double h_tan);

struct FitF {
  double F = 0.0;
  double slope = 0.0;
  double rms = 0.0;
  std::vector<double> s, measured;
};

/// Concave points: RHS(s) = 2 g^{uu} vhat_u d_u d_n rho - 2 r d_n zeta_n fitted by F + C sin s.
/// Throws ShortGeodesicRegime when the exit curve collapses to the base point.
FitF fit_F(const ScatteringOracle& oracle, const BoundaryData& data, double u0, int sign,
           const RecoveryConfig& cfg);

/// P^{uu} = d_n g^{uu} and d_n zeta_u from F(+vhat), F(-vhat).
std::pair<double, double> solve_jet_order1(double F_plus, double F_minus, double induced);

struct JetValue {
  double value = std::numeric_limits<double>::quiet_NaN();
  double width = std::numeric_limits<double>::quiet_NaN();
};

struct BoundaryJetEstimate {
  double u0 = 0.0;
  int K = 0;
  std::string regime;  // "convex" or "concave"
  double F_plus = 0.0, F_minus = 0.0;
  std::array<JetValue, 3> g;      // d_n^k g^{uu}
  std::array<JetValue, 3> zeta;   // d_n^k zeta_u
  std::array<JetValue, 2> omega;  // d_n^k Omega_un
  CollarModelFit fit;
  std::size_t oracle_calls = 0;
};

/// Order-2 values from the fitted collar model and the order-1 estimate.
/// Throws FirstJetRequired when the order-1 entries are missing.
void solve_jet_order2(BoundaryJetEstimate& est, const BoundaryData& data);

BoundaryJetEstimate recover_jet(const ScatteringOracle& oracle, const BoundaryData& data,
                                double u0, const RecoveryConfig& cfg = {});

/// Collar-coordinate normal derivatives of the true g^{uu}, zeta_u (given gauge) and Omega_un.
struct TruthJets {
  std::array<double, 3> g{}, zeta{};
  std::array<double, 2> omega{};
};
TruthJets truth_jets(const MagneticSystem& sys, std::shared_ptr<const MagneticPotential> gauge,
                     double u0);

struct TruthRow {
  std::string name;
  int order = 0;
  double estimate = 0.0, truth = 0.0, abs_error = 0.0, rel_error = 0.0;
};
std::vector<TruthRow> verify_against_truth(const TruthJets& truth, const BoundaryJetEstimate& est);

}  // namespace magscat
