#pragma once

#include <Eigen/Dense>

#include <array>
#include <atomic>
#include <cstddef>
#include <functional>
#include <memory>
#include <stdexcept>
#include <string>
#include <vector>

namespace magscat {

// Small fixed-capacity types: charts have dimension n <= 3, phase states 2n <= 6.
using Vec = Eigen::Matrix<double, Eigen::Dynamic, 1, 0, 6, 1>;
using Mat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, 0, 3, 3>;
using MatArray = std::array<Mat, 3>;
using MatArray2 = std::array<MatArray, 3>;

inline constexpr int kMaxDim = 3;

enum class ErrorCode {
  NotPositiveDefinite,
  DegenerateBoundary,
  OutsideCollar,
  InversionDiverged,
  UnknownSystem,
  BadParams,
  LeftChart,
  Trapped,
  GrazingUnresolved,
  NotOnBoundary,
  KappaSingular,
  NoConvergence,
  FormatError,
  AnchorAtConjugate,
  QuadratureFail,
  ConjugateDegenerate,
  HolonomyObstruction,
  NonSmoothExitCurve,
  ConvexityUndetermined,
  HalfNeighborhoodOnly,
  ExtrapolationUnstable,
  ShortGeodesicRegime,
  IllConditioned,
  FirstJetRequired,
  JacobianSingular,
  GridMismatch,
  MissingTimes,
  BackingBandEmpty,
  ConfigError,
  InvariantViolation,
};

const char* error_name(ErrorCode code);

/// Exception carrying a machine-readable error name.
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& what)
      : std::runtime_error(std::string(error_name(code)) + ": " + what), code_(code) {}
  ErrorCode code() const { return code_; }
  const char* name() const { return error_name(code_); }

 private:
  ErrorCode code_;
};

/// Counts evaluations of a system's fields. Queries made while an oracle
/// scope is active on the calling thread are attributed to the oracle.
class QueryAudit {
 public:
  void note() {
    total_.fetch_add(1, std::memory_order_relaxed);
    if (oracle_depth() == 0) outside_.fetch_add(1, std::memory_order_relaxed);
  }
  std::size_t total() const { return total_.load(); }
  std::size_t outside_oracle() const { return outside_.load(); }
  void reset() {
    total_ = 0;
    outside_ = 0;
  }

  static int& oracle_depth();

  class OracleScope {
   public:
    OracleScope() { ++oracle_depth(); }
    ~OracleScope() { --oracle_depth(); }
    OracleScope(const OracleScope&) = delete;
    OracleScope& operator=(const OracleScope&) = delete;
  };

 private:
  std::atomic<std::size_t> total_{0};
  std::atomic<std::size_t> outside_{0};
};

/// Runs body(i) for i in [0, count) on a small worker pool. Results must be
/// written to per-index slots so the output does not depend on scheduling.
void parallel_for(std::size_t count, const std::function<void(std::size_t)>& body);

/// Wraps an angle difference into (-period/2, period/2].
double wrap_periodic(double delta, double period);

/// Gauss-Legendre nodes and weights on [0, 1].
struct Quadrature {
  std::vector<double> nodes;
  std::vector<double> weights;
};
const Quadrature& gauss_legendre_unit(int order);

}  // namespace magscat
