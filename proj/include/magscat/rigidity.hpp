#pragma once

#include "magscat/jacobi.hpp"
#include "magscat/scattering.hpp"

#include <optional>
#include <string>
#include <vector>

namespace magscat {

/// Diffeomorphism of the chart that is the identity on the boundary.
class BoundaryFixingDiffeo {
 public:
  virtual ~BoundaryFixingDiffeo() = default;
  virtual int dim() const = 0;
  virtual Vec map(const Vec& x) const = 0;
  virtual Mat jacobian(const Vec& x) const = 0;
  /// Newton inversion of map; override when a closed form exists.
  virtual Vec inverse(const Vec& y) const;
};

/// phi(x) = x + a psi(|x - c|^2 / rho^2) e with psi = bump_profile.
class BumpDiffeo final : public BoundaryFixingDiffeo {
 public:
  BumpDiffeo(Vec center, double radius, Vec shift);
  int dim() const override { return static_cast<int>(c_.size()); }
  Vec map(const Vec& x) const override;
  Mat jacobian(const Vec& x) const override;
  /// Support ball |x - c| < rho.
  double radius() const { return rho_; }
  const Vec& center() const { return c_; }

 private:
  Vec c_, e_;
  double rho_;
};

/// Samples det D phi on a grid over the boundary's bounding box and checks phi = id on
/// boundary samples. Throws JacobianSingular (|det| < 1e-12) / BadParams.
void validate_diffeo(const MagneticSystem& sys, const BoundaryFixingDiffeo& phi, int samples = 64);

/// (phi^* g, phi^* Omega): g'(x) = Dphi^T g(phi x) Dphi, same for Omega.
/// Partials by central differences of the composed evaluators.
MagneticSystem pullback_system(const MagneticSystem& sys,
                               std::shared_ptr<const BoundaryFixingDiffeo> phi);

struct RecordDiff {
  std::size_t index = 0;
  double exit = 0.0;  // max |Delta| over (u_out, w_out, r_out)
  double time = 0.0;
};

struct ScatteringDistance {
  double sup_exit = 0.0, rms_exit = 0.0;
  double sup_time = 0.0, rms_time = 0.0;
  std::size_t compared = 0;
  std::size_t excluded = 0;          // near-tangent or failed in both
  std::size_t status_mismatch = 0;   // Ok in one dataset only
  std::vector<RecordDiff> diffs;
};

/// Per-record comparison over identical grids. Records with |r| < tol_tangency at entry
/// or exit are excluded from the suprema. Throws GridMismatch.
ScatteringDistance scattering_distance(const ScatteringDataset& a, const ScatteringDataset& b,
                                       double tol_tangency = 1e-6);

struct TravelTimeComparison {
  double sup = 0.0, rms = 0.0;
  std::size_t compared = 0;
  std::size_t flagged = 0;       // condition B violated in either system
  double sup_flagged = 0.0;      // discrepancy on flagged records, reported apart
  std::vector<RecordDiff> diffs;
};

/// |l1 - l2| over corresponding records. `flag` lists record indices whose trajectories fail
/// condition B; their discrepancies are kept out of `sup`. Throws GridMismatch / MissingTimes.
TravelTimeComparison compare_travel_times(const ScatteringDataset& a, const ScatteringDataset& b,
                                          const std::vector<std::size_t>& flag = {},
                                          double tol_tangency = 1e-6);

/// Indices of records (every `stride`-th Ok record) whose trajectory fails condition B in sys.
std::vector<std::size_t> condition_B_violations(const MagneticSystem& sys,
                                                const ScatteringDataset& ds,
                                                std::size_t stride = 1);

/// max over knots of |J_1(t) - J_2(t)| for the Jacobi tensors (J = 0, J' = Id at entry)
/// of the trajectories entering at the same boundary vector in both systems.
double jacobi_tensor_agreement(const MagneticSystem& a, const MagneticSystem& b,
                               const BoundaryVector& entry, double h = 1e-3);

struct ExtensionOptions {
  double h = 1e-3;          // scan and flow step
  double t_trap = 100.0;
  double band_fraction = 0.5;  // position of T inside the backing band
};

struct Extension {
  Vec image;
  double T = 0.0;                 // backing time
  double band_lo = 0.0, band_hi = 0.0;  // admissible backing times
  Vec backing_point;              // gamma_{x,theta}(-T) in sys1
  Vec collar_u;
  double collar_depth = 0.0;      // negative: outside M
};

/// Flows (x, theta) back into the collar band outside M1, carries the state through the
/// collar identification and flows forward for the same time in sys2.
/// Throws Trapped / BackingBandEmpty.
Extension extend_phi(const MagneticSystem& sys1, const MagneticSystem& sys2, const Vec& x,
                     const Vec& theta, const ExtensionOptions& opt = {});

/// exp_nu2 o exp_nu1^{-1} on a point of the collar.
Vec collar_identification(const MagneticSystem& sys1, const MagneticSystem& sys2, const Vec& x);

struct ExtensionProbe {
  Vec x;
  std::vector<Vec> thetas;
  std::vector<double> T;
  std::vector<Vec> images;
  std::vector<std::string> failures;  // one line per direction that raised
  double spread = 0.0;                // max pairwise chart distance of the images
  Vec mean;
};

/// extend_phi over k g-unit directions at angles 2 pi j / k (n = 2).
ExtensionProbe theta_independence(const MagneticSystem& sys1, const MagneticSystem& sys2,
                                  const Vec& x, int k, const ExtensionOptions& opt = {});

/// max |(D phi~)^T g2(phi~ x) D phi~ - g1(x)| with D phi~ by central differences (step h)
/// of the point map x -> extend_phi(x, theta).
double metric_compatibility(const MagneticSystem& sys1, const MagneticSystem& sys2, const Vec& x,
                            const Vec& theta, double h = 1e-4, const ExtensionOptions& opt = {});

}  // namespace magscat
