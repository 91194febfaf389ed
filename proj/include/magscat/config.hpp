#pragma once

#include "magscat/recovery.hpp"
#include "magscat/rigidity.hpp"

#include <string>
#include <vector>

namespace magscat {

struct PullbackSpec {
  double center_x = 0.1, center_y = 0.1;
  double radius = 0.0;  // 0: no pullback
  double shift_x = 0.0, shift_y = 0.0;
};

struct Tolerances {
  double scatter = 1e-6;
  double times = 1e-6;
  double theta_spread = 1e-5;
  double collar = 1e-9;
};

struct ExperimentConfig {
  std::string path;
  std::string hash;  // FNV-1a of the file bytes, 16 hex digits
  SystemSpec system;
  PullbackSpec pullback;
  GridSpec grid;
  FlowOptions flow;
  RecoveryConfig recovery;
  double gauge_center_x = 0.0, gauge_center_y = 0.0;
  Tolerances tolerances;
  unsigned long seed = 1;
};

/// INI file with sections system, pullback, grid, flow, recovery, tolerances, run.
/// Unknown sections or keys, malformed values and missing files raise ConfigError.
ExperimentConfig load_config(const std::string& path);
ExperimentConfig parse_config(const std::string& text, const std::string& origin = "<string>");

std::string fnv1a_hex(const std::string& bytes);

/// The configured built-in, pulled back by the configured bump diffeomorphism if any.
MagneticSystem make_system(const ExperimentConfig& cfg);

}  // namespace magscat
