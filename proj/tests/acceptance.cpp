// One line per acceptance criterion. Criteria 1-13 run in process; 14 runs
// the CLI twice and compares the summary files byte for byte.

#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>

#include <sys/wait.h>
#include <unistd.h>

#include "mage/suite.hpp"

#ifndef MAGE_CLI_PATH
#error "MAGE_CLI_PATH must name the mage executable"
#endif

namespace fs = std::filesystem;

namespace {

std::string slurp(const fs::path& p) {
  std::ifstream is(p, std::ios::binary);
  std::ostringstream ss;
  ss << is.rdbuf();
  return ss.str();
}

int run_verify(const fs::path& out) {
  fs::remove_all(out);
  fs::create_directories(out.parent_path());
  const std::string cmd = std::string("\"") + MAGE_CLI_PATH + "\" verify --suite core --out \"" + out.string() + "\" > \"" +
                          out.string() + ".log\" 2>&1";
  const int rc = std::system(cmd.c_str());
  return rc == -1 ? -1 : WEXITSTATUS(rc);
}

void line(bool pass, int id, const std::string& title, const std::string& detail) {
  std::printf("%s  %2d  %-34s %s\n", pass ? "PASS" : "FAIL", id, title.c_str(), detail.c_str());
}

}  // namespace

int main() {
  mage::SuiteOptions opt;
  opt.threads = mage::threads_from_env();
  const auto results = mage::run_core_suite(opt);
  bool all = true;
  for (const auto& c : results) {
    std::size_t passed = 0;
    for (const auto& r : c.rows) passed += r.pass;
    char buf[96];
    std::snprintf(buf, sizeof buf, "%zu/%zu rows, %.1f s", passed, c.rows.size(), c.seconds);
    line(c.pass, c.id, c.title, buf);
    for (const auto& r : c.rows)
      if (!r.pass)
        std::printf("        %s: lhs=%.6g rhs=%.6g slope=%.6g %s\n", r.name.c_str(), r.lhs, r.rhs, r.slope, r.message.c_str());
    all = all && c.pass;
  }

  const fs::path base = fs::temp_directory_path() / ("mage_acceptance_" + std::to_string(::getpid()));
  const int rc1 = run_verify(base / "a");
  const int rc2 = run_verify(base / "b");
  const std::string s1 = slurp(base / "a" / "summary.csv"), s2 = slurp(base / "b" / "summary.csv");
  const bool det = rc1 == 0 && rc2 == 0 && !s1.empty() && s1 == s2;
  line(det, 14, "determinism", "exit " + std::to_string(rc1) + "/" + std::to_string(rc2) + ", summary " +
                                   (s1 == s2 ? "identical" : "differs") + " (" + std::to_string(s1.size()) + " bytes)");
  if (det) fs::remove_all(base);
  all = all && det;
  return all ? 0 : 1;
}
