#pragma once

#include "magscat/flow.hpp"

#include <atomic>
#include <iosfwd>
#include <string>
#include <vector>

namespace magscat {

/// Boundary vector (u, w, r): v = T w + r nu with T = dx/du.
struct BoundaryVector {
  Vec u;
  Vec w;
  double r = 0.0;
};

/// Throws NotOnBoundary when |b(x)| > 1e-8.
BoundaryVector lambda_map(const MagneticSystem& sys, const PhaseState& s);
PhaseState lambda_inverse(const MagneticSystem& sys, const BoundaryVector& v);

/// Unit inward boundary vector at u making angle alpha with the positive
/// u direction (alpha in [0, pi], r = sin alpha). n = 2 only.
BoundaryVector boundary_direction(double u, double alpha, double induced_uu);
double direction_angle(const BoundaryVector& v, double induced_uu);

enum class RecordStatus { Ok, Tangent, Trapped, GrazingUnresolved, LeftChart, Failed };
const char* status_name(RecordStatus s);
RecordStatus parse_status(const std::string& s);

struct ScatteringRecord {
  BoundaryVector entry;
  BoundaryVector exit;
  double time = 0.0;
  bool transversal = false;
  RecordStatus status = RecordStatus::Ok;
};

/// Composes lambda_inverse, first_exit and lambda_map. Throws flow errors.
ScatteringRecord scatter_one(const MagneticSystem& sys, const BoundaryVector& entry,
                             const FlowOptions& opt = {});

struct GridSpec {
  int nu = 64;
  int ndir = 32;
};

struct ScatteringDataset {
  static constexpr const char* kVersion = "magscat-dataset v1";
  std::string system;
  std::string config_hash;
  std::string timestamp;  // empty: not written
  GridSpec grid{0, 0};
  int dim = 2;
  double u_period = 0.0;
  bool euclidean_tangent_norm = true;  // |w| checked with the Euclidean norm on read
  std::vector<ScatteringRecord> records;
};

/// Grid u_i = extent * i / nu, alpha_j = pi * j / (ndir - 1). Failures are kept
/// with a status; records are ordered by (i, j).
ScatteringDataset sample_dataset(const MagneticSystem& sys, const GridSpec& grid,
                                 const FlowOptions& opt = {});

void write_dataset(std::ostream& out, const ScatteringDataset& ds);
void write_dataset(const std::string& path, const ScatteringDataset& ds);
/// Throws FormatError naming the line.
ScatteringDataset read_dataset(std::istream& in);
ScatteringDataset read_dataset(const std::string& path);

bool records_identical(const ScatteringRecord& a, const ScatteringRecord& b);

/// Black-box access to scattering data plus the boundary data (iota^* g, iota^* Omega)
/// that accompanies it.
class ScatteringOracle {
 public:
  virtual ~ScatteringOracle() = default;
  virtual int dim() const = 0;
  virtual double u_period() const = 0;
  virtual ScatteringRecord query(const BoundaryVector& entry) const = 0;
  /// Induced metric component on the boundary at u (n = 2).
  virtual double induced(double u) const = 0;
  std::size_t calls() const { return calls_.load(); }

 protected:
  mutable std::atomic<std::size_t> calls_{0};
};

/// Answers by live simulation of a hidden system.
class LiveOracle final : public ScatteringOracle {
 public:
  explicit LiveOracle(const MagneticSystem& sys, FlowOptions opt = {});
  int dim() const override;
  double u_period() const override;
  ScatteringRecord query(const BoundaryVector& entry) const override;
  double induced(double u) const override;

 private:
  MagneticSystem sys_;
  FlowOptions opt_;
};

/// Bilinear interpolation of a grid dataset in (u, alpha). Assumes arc-length u.
class DatasetOracle final : public ScatteringOracle {
 public:
  explicit DatasetOracle(ScatteringDataset ds);
  int dim() const override { return 2; }
  double u_period() const override { return ds_.u_period; }
  ScatteringRecord query(const BoundaryVector& entry) const override;
  double induced(double) const override { return 1.0; }

 private:
  ScatteringDataset ds_;
};

struct EntrySolution {
  BoundaryVector entry;
  double alpha = 0.0;
  double residual = 0.0;
  double condition = 0.0;
  ScatteringRecord record;
};

/// Entry direction at boundary point u_x whose trajectory exits at y0 (n = 2),
/// by damped Newton on the exit-point map starting from alpha_guess.
/// Throws KappaSingular (condition > 1e8) / NoConvergence.
EntrySolution entry_for_exit(const ScatteringOracle& oracle, double u_x, double y0,
                             double alpha_guess, double tol = 1e-11);

}  // namespace magscat
