#include "magscat/core.hpp"

#include <cmath>
#include <map>
#include <mutex>
#include <thread>
#include <vector>

namespace magscat {

const char* error_name(ErrorCode code) {
  switch (code) {
    case ErrorCode::NotPositiveDefinite: return "NotPositiveDefinite";
    case ErrorCode::DegenerateBoundary: return "DegenerateBoundary";
    case ErrorCode::OutsideCollar: return "OutsideCollar";
    case ErrorCode::InversionDiverged: return "InversionDiverged";
    case ErrorCode::UnknownSystem: return "UnknownSystem";
    case ErrorCode::BadParams: return "BadParams";
    case ErrorCode::LeftChart: return "LeftChart";
    case ErrorCode::Trapped: return "Trapped";
    case ErrorCode::GrazingUnresolved: return "GrazingUnresolved";
    case ErrorCode::NotOnBoundary: return "NotOnBoundary";
    case ErrorCode::KappaSingular: return "KappaSingular";
    case ErrorCode::NoConvergence: return "NoConvergence";
    case ErrorCode::FormatError: return "FormatError";
    case ErrorCode::AnchorAtConjugate: return "AnchorAtConjugate";
    case ErrorCode::QuadratureFail: return "QuadratureFail";
    case ErrorCode::ConjugateDegenerate: return "ConjugateDegenerate";
    case ErrorCode::HolonomyObstruction: return "HolonomyObstruction";
    case ErrorCode::NonSmoothExitCurve: return "NonSmoothExitCurve";
    case ErrorCode::ConvexityUndetermined: return "ConvexityUndetermined";
    case ErrorCode::HalfNeighborhoodOnly: return "HalfNeighborhoodOnly";
    case ErrorCode::ExtrapolationUnstable: return "ExtrapolationUnstable";
    case ErrorCode::ShortGeodesicRegime: return "ShortGeodesicRegime";
    case ErrorCode::IllConditioned: return "IllConditioned";
    case ErrorCode::FirstJetRequired: return "FirstJetRequired";
    case ErrorCode::JacobianSingular: return "JacobianSingular";
    case ErrorCode::GridMismatch: return "GridMismatch";
    case ErrorCode::MissingTimes: return "MissingTimes";
    case ErrorCode::BackingBandEmpty: return "BackingBandEmpty";
    case ErrorCode::ConfigError: return "ConfigError";
    case ErrorCode::InvariantViolation: return "InvariantViolation";
  }
  return "Unknown";
}

int& QueryAudit::oracle_depth() {
  thread_local int depth = 0;
  return depth;
}

void parallel_for(std::size_t count, const std::function<void(std::size_t)>& body) {
  const unsigned hw = std::max(1u, std::thread::hardware_concurrency());
  const std::size_t workers = std::min<std::size_t>(hw, count);
  if (workers <= 1) {
    for (std::size_t i = 0; i < count; ++i) body(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::exception_ptr failure;
  std::mutex failure_mutex;
  std::vector<std::thread> pool;
  pool.reserve(workers);
  for (std::size_t w = 0; w < workers; ++w) {
    pool.emplace_back([&] {
      for (std::size_t i = next++; i < count; i = next++) {
        try {
          body(i);
        } catch (...) {
          std::lock_guard<std::mutex> lock(failure_mutex);
          if (!failure) failure = std::current_exception();
        }
      }
    });
  }
  for (auto& t : pool) t.join();
  if (failure) std::rethrow_exception(failure);
}

double wrap_periodic(double delta, double period) {
  if (period <= 0.0) return delta;
  double r = std::fmod(delta, period);
  if (r > 0.5 * period) r -= period;
  if (r <= -0.5 * period) r += period;
  return r;
}

const Quadrature& gauss_legendre_unit(int order) {
  static std::mutex mutex;
  static std::map<int, Quadrature> cache;
  std::lock_guard<std::mutex> lock(mutex);
  auto it = cache.find(order);
  if (it != cache.end()) return it->second;

  // Newton iteration on P_order, then map [-1,1] -> [0,1].
  Quadrature q;
  q.nodes.resize(order);
  q.weights.resize(order);
  for (int i = 0; i < order; ++i) {
    double z = std::cos(M_PI * (i + 0.75) / (order + 0.5));
    double dp = 0.0;
    for (int iter = 0; iter < 100; ++iter) {
      double p0 = 1.0, p1 = 0.0;
      for (int k = 1; k <= order; ++k) {
        const double p2 = p1;
        p1 = p0;
        p0 = ((2.0 * k - 1.0) * z * p1 - (k - 1.0) * p2) / k;
      }
      dp = order * (z * p0 - p1) / (z * z - 1.0);
      const double dz = p0 / dp;
      z -= dz;
      if (std::abs(dz) < 1e-16) break;
    }
    q.nodes[i] = 0.5 * (1.0 - z);
    q.weights[i] = 1.0 / ((1.0 - z * z) * dp * dp);
  }
  return cache.emplace(order, std::move(q)).first->second;
}

}  // namespace magscat
