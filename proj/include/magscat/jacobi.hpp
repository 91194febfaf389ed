#pragma once

#include "magscat/flow.hpp"

#include <vector>

namespace magscat {

/// Coefficients of the frame form f'' + y^T f' + a^T f = 0 of the magnetic
/// Jacobi equation, for a frame E (columns e_i) transported by e' = Y e.
struct JacobiCoeffs {
  Mat y;  // y(i, j) = <Y e_i, e_j>
  Mat a;  // a(i, j) = <(nabla_theta Y) e_i + R(e_i, theta) theta - (nabla_{e_i} Y) theta, e_j>
};
JacobiCoeffs jacobi_coeffs(const MagneticSystem& sys, const PhaseState& s, const Mat& frame);

/// g-orthonormal frame with last vector theta (unit).
Mat adapted_frame(const MagneticSystem& sys, const PhaseState& s);

/// Trajectory, transported frame and m Jacobi fields (frame coefficients F, F')
/// on a uniform knot grid. Times run from the anchor: t[0] is the anchor time
/// and t decreases when integrating backwards.
class JacobiRun {
 public:
  JacobiRun(const MagneticSystem& sys, const PhaseState& anchor_state, double anchor_time,
            const Mat& frame0, const Mat& F0, const Mat& Fp0, double duration, double h = 1e-3);

  int n() const { return n_; }
  int m() const { return m_; }
  std::size_t size() const { return t_.size(); }
  double time(std::size_t k) const { return t_[k]; }
  const std::vector<double>& times() const { return t_; }

  PhaseState state(std::size_t k) const;
  Mat frame(std::size_t k) const;
  Mat F(std::size_t k) const;
  Mat Fp(std::size_t k) const;
  /// Jacobi field values and covariant derivatives in chart components (columns).
  Mat J(std::size_t k) const;
  Mat Jp(std::size_t k) const;

  /// Augmented state at time t, by a partial step from the nearest earlier knot.
  Eigen::VectorXd raw_at(double t) const;
  PhaseState state_of(const Eigen::VectorXd& z) const;
  Mat frame_of(const Eigen::VectorXd& z) const;
  Mat F_of(const Eigen::VectorXd& z) const;
  Mat Fp_of(const Eigen::VectorXd& z) const;

 private:
  Eigen::VectorXd rhs(const Eigen::VectorXd& z) const;

  const MagneticSystem* sys_;
  int n_, m_;
  double step_;
  std::vector<double> t_;
  std::vector<Eigen::VectorXd> z_;
};

/// Frame transport alone (F empty).
JacobiRun magnetic_frame(const MagneticSystem& sys, const PhaseState& start, double duration,
                         double h = 1e-3);

/// Jacobi field with J(0) = J0, J'(0) = J0p (chart components, covariant derivative).
JacobiRun solve_jacobi(const MagneticSystem& sys, const PhaseState& start, double duration,
                       const Vec& J0, const Vec& J0p, double h = 1e-3);

/// sup over knots of |J(t) - (gamma_s(t) - gamma_0(t)) / s| for the variation
/// x(s) = x + s J0, theta(s) = normalize(theta + s (J0p - Gamma(J0, theta))).
double jacobi_vs_variation(const MagneticSystem& sys, const PhaseState& start, double duration,
                           const Vec& J0, const Vec& J0p, double s, double h = 1e-3);

/// A(J) at interior knots (J'' by sixth-order central differences of J'); max chart norm.
double jacobi_residual(const MagneticSystem& sys, const JacobiRun& run, int column);

enum class Anchor { Start, End };

struct ConjugatePoint {
  double t = 0.0;
  int order = 0;
  double sigma_min = 0.0;
  double margin = 0.0;  // smallest retained / largest discarded singular value
};

struct JacobiTensorResult {
  JacobiRun run;
  double scale = 0.0;  // max ||J(t)|| over the path
  std::vector<double> t;
  std::vector<double> sigma_min;
  std::vector<double> det;
  std::vector<ConjugatePoint> conjugate;

  /// (n-1) x (n-1) tensor at knot k: J(i, k) = <J_k, e_i>, i < n.
  Mat tensor(std::size_t k) const;
};

/// Jacobi tensor with J = 0, J' = Id on the normal space at the anchor, for the
/// trajectory from start over [0, duration]. Conjugate times found from sign
/// changes / minima of sigma_min, refined by golden section.
JacobiTensorResult jacobi_tensor(const MagneticSystem& sys, const PhaseState& start,
                                 double duration, Anchor anchor, double h = 1e-3,
                                 double tol_sing = 1e-6);

/// f(t) = f0 + int_0^t <J_perp, Y gamma'> for Jacobi column `column` of the run.
std::vector<double> parallel_component(const MagneticSystem& sys, const JacobiRun& run,
                                       int column, double f0);

struct Certificate {
  bool holds = true;
  std::vector<double> violation_times;
  std::vector<double> checked_times;
  double min_sigma = 0.0;  // relative sigma_min at the checked times
  double exit_time = 0.0;
};

/// No boundary contact of gamma_v conjugate to its base point.
Certificate condition_A(const MagneticSystem& sys, const PhaseState& entry,
                        const FlowOptions& opt = {}, double tol = 1e-6);

/// No interior point conjugate of order n-1 to the exit point.
Certificate condition_B(const MagneticSystem& sys, const PhaseState& entry,
                        const FlowOptions& opt = {}, double tol = 1e-6);

}  // namespace magscat
