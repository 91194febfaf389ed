#include "magscat/scattering.hpp"

#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <istream>
#include <ostream>
#include <sstream>

namespace magscat {

namespace {

std::string fmt(double v) {
  if (std::isnan(v)) return "nan";
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

std::string column_header(int dim) {
  const int m = dim - 1;
  std::string h;
  auto add = [&](const std::string& name, bool vector) {
    if (!h.empty()) h += ',';
    if (!vector || m == 1) {
      h += name;
      return;
    }
    for (int a = 1; a <= m; ++a) h += (a > 1 ? "," : "") + name + std::to_string(a);
  };
  add("u_in", true);
  add("w_in", true);
  add("r_in", false);
  add("u_out", true);
  add("w_out", true);
  add("r_out", false);
  add("time", false);
  add("transversal", false);
  add("status", false);
  return h;
}

[[noreturn]] void fail(int line, const std::string& what) {
  throw Error(ErrorCode::FormatError, "line " + std::to_string(line) + ": " + what);
}

double parse_double(const std::string& s, int line) {
  if (s == "nan") return std::nan("");
  const char* begin = s.c_str();
  char* end = nullptr;
  const double v = std::strtod(begin, &end);
  if (s.empty() || end != begin + s.size()) fail(line, "malformed number '" + s + "'");
  return v;
}

std::string trim(const std::string& s) {
  const auto a = s.find_first_not_of(" \t\r");
  if (a == std::string::npos) return "";
  const auto b = s.find_last_not_of(" \t\r");
  return s.substr(a, b - a + 1);
}

}  // namespace

void write_dataset(std::ostream& out, const ScatteringDataset& ds) {
  out << "# " << ScatteringDataset::kVersion << "\n";
  out << "# system: " << ds.system << "\n";
  if (!ds.config_hash.empty()) out << "# config-hash: " << ds.config_hash << "\n";
  if (!ds.timestamp.empty()) out << "# generated: " << ds.timestamp << "\n";
  out << "# dim: " << ds.dim << "\n";
  out << "# grid: " << ds.grid.nu << " " << ds.grid.ndir << "\n";
  out << "# u-period: " << fmt(ds.u_period) << "\n";
  out << "# tangent-norm: " << (ds.euclidean_tangent_norm ? "euclidean" : "induced") << "\n";
  out << column_header(ds.dim) << "\n";
  for (const auto& r : ds.records) {
    std::string line;
    auto add = [&](double v) {
      if (!line.empty()) line += ',';
      line += fmt(v);
    };
    for (int a = 0; a < r.entry.u.size(); ++a) add(r.entry.u[a]);
    for (int a = 0; a < r.entry.w.size(); ++a) add(r.entry.w[a]);
    add(r.entry.r);
    for (int a = 0; a < r.exit.u.size(); ++a) add(r.exit.u[a]);
    for (int a = 0; a < r.exit.w.size(); ++a) add(r.exit.w[a]);
    add(r.exit.r);
    add(r.time);
    line += r.transversal ? ",1," : ",0,";
    line += status_name(r.status);
    out << line << "\n";
  }
}

void write_dataset(const std::string& path, const ScatteringDataset& ds) {
  std::ofstream out(path);
  if (!out) throw Error(ErrorCode::FormatError, "cannot open '" + path + "' for writing");
  write_dataset(out, ds);
  if (!out) throw Error(ErrorCode::FormatError, "write to '" + path + "' failed");
}

ScatteringDataset read_dataset(std::istream& in) {
  ScatteringDataset ds;
  ds.timestamp.clear();
  std::string line;
  int lineno = 0;
  bool header_seen = false, version_seen = false;
  while (std::getline(in, line)) {
    ++lineno;
    line = trim(line);
    if (line.empty()) continue;
    if (line[0] == '#') {
      const std::string body = trim(line.substr(1));
      if (!version_seen) {
        if (body != ScatteringDataset::kVersion)
          fail(lineno, "expected version '" + std::string(ScatteringDataset::kVersion) +
                           "', found '" + body + "'");
        version_seen = true;
        continue;
      }
      const auto colon = body.find(':');
      if (colon == std::string::npos) continue;
      const std::string key = trim(body.substr(0, colon)), value = trim(body.substr(colon + 1));
      if (key == "system") {
        ds.system = value;
      } else if (key == "config-hash") {
        ds.config_hash = value;
      } else if (key == "generated") {
        ds.timestamp = value;
      } else if (key == "dim") {
        ds.dim = static_cast<int>(parse_double(value, lineno));
        if (ds.dim < 2 || ds.dim > kMaxDim) fail(lineno, "unsupported dimension");
      } else if (key == "grid") {
        std::istringstream ss(value);
        if (!(ss >> ds.grid.nu >> ds.grid.ndir)) fail(lineno, "malformed grid line");
      } else if (key == "u-period") {
        ds.u_period = parse_double(value, lineno);
      } else if (key == "tangent-norm") {
        if (value != "euclidean" && value != "induced") fail(lineno, "unknown tangent norm");
        ds.euclidean_tangent_norm = value == "euclidean";
      }
      continue;
    }
    if (!version_seen) fail(lineno, "missing version line '# " +
                                        std::string(ScatteringDataset::kVersion) + "'");
    if (!header_seen) {
      if (line != column_header(ds.dim)) fail(lineno, "unexpected column header");
      header_seen = true;
      continue;
    }
    std::vector<std::string> fields;
    std::stringstream ss(line);
    std::string f;
    while (std::getline(ss, f, ',')) fields.push_back(trim(f));
    const int m = ds.dim - 1;
    const std::size_t expected = 4 * m + 5;
    if (fields.size() != expected)
      fail(lineno, "expected " + std::to_string(expected) + " fields, found " +
                       std::to_string(fields.size()));
    ScatteringRecord r;
    std::size_t k = 0;
    auto read_vec = [&](Vec& v) {
      v.resize(m);
      for (int a = 0; a < m; ++a) v[a] = parse_double(fields[k++], lineno);
    };
    read_vec(r.entry.u);
    read_vec(r.entry.w);
    r.entry.r = parse_double(fields[k++], lineno);
    read_vec(r.exit.u);
    read_vec(r.exit.w);
    r.exit.r = parse_double(fields[k++], lineno);
    r.time = parse_double(fields[k++], lineno);
    if (fields[k] != "0" && fields[k] != "1") fail(lineno, "transversal flag must be 0 or 1");
    r.transversal = fields[k++] == "1";
    try {
      r.status = parse_status(fields[k]);
    } catch (const Error&) {
      fail(lineno, "unknown status '" + fields[k] + "'");
    }
    if (ds.euclidean_tangent_norm) {
      auto check = [&](const BoundaryVector& v, const char* which) {
        const double norm = v.w.squaredNorm() + v.r * v.r;
        if (std::abs(norm - 1.0) > 1e-10)
          fail(lineno, std::string(which) + " vector has |w|^2 + r^2 = " + fmt(norm) + ", not 1");
      };
      check(r.entry, "entry");
      if (r.status == RecordStatus::Ok || r.status == RecordStatus::Tangent) check(r.exit, "exit");
    }
    ds.records.push_back(std::move(r));
  }
  if (!version_seen) fail(lineno, "empty file");
  if (!header_seen) fail(lineno, "missing column header");
  if (ds.records.size() != static_cast<std::size_t>(ds.grid.nu) * ds.grid.ndir)
    fail(lineno, "record count does not match the grid line");
  return ds;
}

ScatteringDataset read_dataset(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::FormatError, "cannot open '" + path + "'");
  return read_dataset(in);
}

}  // namespace magscat
