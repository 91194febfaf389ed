#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <sstream>
#include <string>
#include <sys/wait.h>

namespace {

const std::string kBin = MAGSCAT_CLI;
const std::string kCfg = MAGSCAT_CONFIGS;

struct Result {
  int code = -1;
  std::string out;
};

Result run(const std::string& args) {
  Result r;
  const std::string cmd = kBin + " " + args + " 2>&1";
  FILE* p = popen(cmd.c_str(), "r");
  REQUIRE(p != nullptr);
  char buf[4096];
  std::size_t n;
  while ((n = fread(buf, 1, sizeof buf, p)) > 0) r.out.append(buf, n);
  const int status = pclose(p);
  r.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  return r;
}

std::string body(const std::string& text) {
  std::istringstream in(text);
  std::string line, out;
  while (std::getline(in, line))
    if (line.rfind("#", 0) != 0) out += line + "\n";
  return out;
}

std::string cfg(const char* name) { return kCfg + "/" + name; }

}  // namespace

TEST_CASE("scatter writes the full grid deterministically") {
  const Result a = run("scatter --system " + cfg("flat_disk.ini") + " --no-timestamp");
  REQUIRE(a.code == 0);
  CHECK(a.out.find("# generated:") == std::string::npos);
  const std::string b = body(a.out);
  std::size_t lines = 0;
  for (char ch : b) lines += ch == '\n';
  CHECK(lines == 2048 + 1);
  const Result again = run("scatter --system " + cfg("flat_disk.ini") + " --no-timestamp");
  CHECK(again.out == a.out);
  const Result stamped = run("scatter --system " + cfg("flat_disk.ini") + " --nu 4 --ndir 3");
  CHECK(stamped.out.find("# generated:") != std::string::npos);
  CHECK(stamped.out.find("# config-hash:") != std::string::npos);
}

TEST_CASE("recover on the flat disk") {
  const Result r = run("recover --system " + cfg("flat_disk.ini") + " --K 1 --x0 1 --no-timestamp");
  REQUIRE(r.code == 0);
  const auto at = r.out.find("\ng^uu,1,");
  REQUIRE(at != std::string::npos);
  const double P = std::stod(r.out.substr(at + 8));
  CHECK(P == doctest::Approx(2.0).epsilon(1e-3));
  CHECK(r.out.find("non-oracle queries: 0") != std::string::npos);
}

TEST_CASE("other subcommands") {
  const Result sim = run("simulate --system " + cfg("magnetic_disk.ini") + " --entry 0,0,1 --no-timestamp");
  CHECK(sim.code == 0);
  CHECK(sim.out.find("t,x0,x1,theta0,theta1,speed_err") != std::string::npos);
  const Result jac = run("jacobi --system " + cfg("magnetic_disk.ini") + " --entry 0,0,1 --no-timestamp");
  CHECK(jac.code == 0);
  CHECK(jac.out.find("condition B holds") != std::string::npos);
  const Result act = run("action --system " + cfg("magnetic_disk.ini") +
                         " --x 0.1,0.2 --y -0.3,0.4 --gauge collar --no-timestamp");
  CHECK(act.code == 0);
  CHECK(act.out.find("eikonal_residual,") != std::string::npos);
  const Result eq = run("equiv --sys1 " + cfg("magnetic_disk.ini") + " --sys2 " +
                        cfg("magnetic_disk_pullback.ini") + " --mode scatter --no-timestamp");
  CHECK(eq.code == 0);
  CHECK(eq.out.find("PASS scatter") != std::string::npos);
}

TEST_CASE("non-equivalent pair fails the equivalence check") {
  const Result eq = run("equiv --sys1 " + cfg("flat_disk.ini") + " --sys2 " +
                        cfg("perturbed_disk.ini") + " --mode extend --x 0.3,0.05 --no-timestamp");
  CHECK(eq.code == 4);
  CHECK(eq.out.find("FAIL extend") != std::string::npos);
}

TEST_CASE("errors and exit codes") {
  const Result missing = run("scatter --system /nonexistent.ini");
  CHECK(missing.code == 2);
  CHECK(missing.out.find("error: ConfigError:") != std::string::npos);
  const Result unknown = run("scatter --system " + cfg("bad_key.ini"));
  CHECK(unknown.code == 2);
  CHECK(unknown.out.find("unknown key 'radius'") != std::string::npos);
  CHECK(run("scatter").code == 2);
  CHECK(run("frobnicate").code == 2);
  // antipodal points on the sphere are conjugate: the two-point problem degenerates
  const Result numeric = run("action --system " + cfg("cap.ini") + " --x 0.9,0 --y -1.1111111111111112,0");
  CHECK(numeric.code == 3);
  CHECK(numeric.out.find("error: ") != std::string::npos);
}
