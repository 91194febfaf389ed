#include "magscat/config.hpp"

#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>

#include <cstdint>
#include <cstdio>
#include <fstream>
#include <map>
#include <set>
#include <sstream>

namespace magscat {

namespace pt = boost::property_tree;

std::string fnv1a_hex(const std::string& bytes) {
  std::uint64_t h = 14695981039346656037ull;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 1099511628211ull;
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

namespace {

const std::map<std::string, std::set<std::string>> kSchema = {
    {"system",
     {"name", "R", "B", "phi0", "bump_center_x", "bump_center_y", "bump_radius", "bump_amplitude",
      "flower_amplitude", "flower_lobes", "epsilon"}},
    {"pullback", {"center_x", "center_y", "radius", "shift_x", "shift_y"}},
    {"grid", {"nu", "ndir"}},
    {"flow", {"h", "t_trap", "tol_tangency"}},
    {"recovery",
     {"K", "s_grid", "offsets", "max_rms", "s_grid_concave", "h_tan", "gauge_center_x",
      "gauge_center_y"}},
    {"tolerances", {"scatter", "times", "theta_spread", "collar"}},
    {"run", {"seed"}},
};

[[noreturn]] void bad(const std::string& origin, const std::string& msg) {
  throw Error(ErrorCode::ConfigError, origin + ": " + msg);
}

double number(const std::string& origin, const std::string& key, const std::string& v) {
  try {
    std::size_t used = 0;
    const double d = std::stod(v, &used);
    if (used != v.size() || !std::isfinite(d)) throw std::invalid_argument(v);
    return d;
  } catch (const std::exception&) {
    bad(origin, key + " = '" + v + "' is not a finite number");
  }
}

long integer(const std::string& origin, const std::string& key, const std::string& v) {
  try {
    std::size_t used = 0;
    const long n = std::stol(v, &used);
    if (used != v.size()) throw std::invalid_argument(v);
    return n;
  } catch (const std::exception&) {
    bad(origin, key + " = '" + v + "' is not an integer");
  }
}

std::vector<double> list(const std::string& origin, const std::string& key, const std::string& v) {
  std::vector<double> out;
  std::stringstream ss(v);
  std::string item;
  while (std::getline(ss, item, ',')) {
    const auto a = item.find_first_not_of(" \t"), b = item.find_last_not_of(" \t");
    if (a == std::string::npos) bad(origin, key + " has an empty list entry");
    out.push_back(number(origin, key, item.substr(a, b - a + 1)));
  }
  if (out.empty()) bad(origin, key + " is an empty list");
  return out;
}

}  // namespace

ExperimentConfig parse_config(const std::string& text, const std::string& origin) {
  pt::ptree tree;
  try {
    std::istringstream in(text);
    pt::read_ini(in, tree);
  } catch (const pt::ini_parser_error& e) {
    bad(origin, "line " + std::to_string(e.line()) + ": " + e.message());
  }
  ExperimentConfig cfg;
  cfg.path = origin;
  cfg.hash = fnv1a_hex(text);
  for (const auto& [section, body] : tree) {
    const auto it = kSchema.find(section);
    if (it == kSchema.end()) {
      if (body.empty()) bad(origin, "key '" + section + "' outside a section");
      bad(origin, "unknown section [" + section + "]");
    }
    for (const auto& [key, value] : body) {
      if (!it->second.count(key)) bad(origin, "unknown key '" + key + "' in [" + section + "]");
      const std::string v = value.data();
      const std::string k = section + "." + key;
      auto num = [&] { return number(origin, k, v); };
      auto whole = [&] { return integer(origin, k, v); };
      if (section == "system") {
        SystemSpec& s = cfg.system;
        if (key == "name") s.name = v;
        else if (key == "R") s.R = num();
        else if (key == "B") s.B = num();
        else if (key == "phi0") s.phi0 = num();
        else if (key == "bump_center_x") s.bump_center_x = num();
        else if (key == "bump_center_y") s.bump_center_y = num();
        else if (key == "bump_radius") s.bump_radius = num();
        else if (key == "bump_amplitude") s.bump_amplitude = num();
        else if (key == "flower_amplitude") s.flower_amplitude = num();
        else if (key == "flower_lobes") s.flower_lobes = static_cast<int>(whole());
        else if (key == "epsilon") s.epsilon = num();
      } else if (section == "pullback") {
        PullbackSpec& p = cfg.pullback;
        if (key == "center_x") p.center_x = num();
        else if (key == "center_y") p.center_y = num();
        else if (key == "radius") p.radius = num();
        else if (key == "shift_x") p.shift_x = num();
        else if (key == "shift_y") p.shift_y = num();
      } else if (section == "grid") {
        const long n = whole();
        if (n < 0) bad(origin, k + " must be >= 0");
        (key == "nu" ? cfg.grid.nu : cfg.grid.ndir) = static_cast<int>(n);
      } else if (section == "flow") {
        const double d = num();
        if (!(d > 0.0)) bad(origin, k + " must be positive");
        if (key == "h") cfg.flow.h = d;
        else if (key == "t_trap") cfg.flow.t_trap = d;
        else cfg.flow.tol_tangency = d;
      } else if (section == "recovery") {
        RecoveryConfig& r = cfg.recovery;
        if (key == "K") r.K = static_cast<int>(whole());
        else if (key == "s_grid") r.s_grid = list(origin, k, v);
        else if (key == "offsets") r.offsets = list(origin, k, v);
        else if (key == "max_rms") r.max_rms = num();
        else if (key == "s_grid_concave") r.s_grid_concave = list(origin, k, v);
        else if (key == "h_tan") r.h_tan = num();
        else if (key == "gauge_center_x") cfg.gauge_center_x = num();
        else if (key == "gauge_center_y") cfg.gauge_center_y = num();
      } else if (section == "tolerances") {
        const double d = num();
        if (!(d > 0.0)) bad(origin, k + " must be positive");
        if (key == "scatter") cfg.tolerances.scatter = d;
        else if (key == "times") cfg.tolerances.times = d;
        else if (key == "theta_spread") cfg.tolerances.theta_spread = d;
        else cfg.tolerances.collar = d;
      } else if (section == "run") {
        const long n = whole();
        if (n < 0) bad(origin, k + " must be >= 0");
        cfg.seed = static_cast<unsigned long>(n);
      }
    }
  }
  if (cfg.recovery.K < 1 || cfg.recovery.K > 2) bad(origin, "recovery.K must be 1 or 2");
  return cfg;
}

ExperimentConfig load_config(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::ConfigError, "cannot open config file '" + path + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse_config(ss.str(), path);
}

MagneticSystem make_system(const ExperimentConfig& cfg) {
  MagneticSystem sys = builtin_system(cfg.system);
  if (cfg.pullback.radius <= 0.0) return sys;
  Vec c(2), e(2);
  c << cfg.pullback.center_x, cfg.pullback.center_y;
  e << cfg.pullback.shift_x, cfg.pullback.shift_y;
  return pullback_system(sys, std::make_shared<BumpDiffeo>(c, cfg.pullback.radius, e));
}

}  // namespace magscat
