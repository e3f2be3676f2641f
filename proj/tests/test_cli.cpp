#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cstdlib>
#include <fstream>
#include <sstream>
#include <string>

#include "json.hpp"

namespace {

std::string cli_path() {
  const char* env = std::getenv("QUCOOP_BIN");
  REQUIRE(env != nullptr);
  return env;
}

int run(const std::string& args) {
  const std::string command = cli_path() + " " + args + " > /tmp/qucoop_cli_stdout.txt 2>/dev/null";
  const int status = std::system(command.c_str());
  return WEXITSTATUS(status);
}

std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_file(const std::string& path, const std::string& content) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  out << content;
}

const std::string kDataDir = QUCOOP_DATA_DIR;

}  // namespace

TEST_CASE("selftest exit codes") {
  CHECK(run("selftest --quick") == 0);
  CHECK(run("selftest --quick --inject-fault") != 0);
}

TEST_CASE("usage errors") {
  CHECK(run("") == 1);
  CHECK(run("qap-solve") == 1);
  CHECK(run("qap-solve /does/not/exist.dat") == 1);
  CHECK(run("no-such-command") == 1);
  CHECK(run("--help") == 0);
}

TEST_CASE("malformed instance file exits with the parse code") {
  write_file("/tmp/qucoop_bad.dat", "3 1 2 3");
  CHECK(run("qap-solve /tmp/qucoop_bad.dat") == 2);
}

TEST_CASE("qap-solve emits a consistent JSON report") {
  const std::string cmd = "qap-solve " + kDataDir + "/qaplib/nug12.dat --optima " + kDataDir +
                          "/known_optima.json --reads 10 --sweeps 200 --max-iters 10 "
                          "--out /tmp/qucoop_solve.json";
  REQUIRE(run(cmd) == 0);
  const nlohmann::json j = nlohmann::json::parse(read_file("/tmp/qucoop_solve.json"));
  CHECK(j["name"] == "nug12");
  CHECK(j["n"] == 12);
  CHECK(j["known_optimal"] == 578.0);
  CHECK(j["achieved"].get<double>() >= 578.0);
  CHECK(j["assignment"].size() == 12);
}

TEST_CASE("qap-bench is deterministic and atomic") {
  const std::string dir = "/tmp/qucoop_bench_dir";
  REQUIRE(std::system(("rm -rf " + dir + " && mkdir -p " + dir).c_str()) == 0);
  write_file(dir + "/tiny.dat", "2 0 1 1 0 0 2 2 0");
  write_file(dir + "/tiny2.dat", "3  0 1 2 1 0 3 2 3 0  0 2 1 2 0 4 1 4 0");

  const std::string flags =
      " --reads 5 --sweeps 100 --max-iters 5 --seeds 2 --omit-timing --out ";
  REQUIRE(run("qap-bench " + dir + flags + "/tmp/qucoop_bench1.csv") == 0);
  REQUIRE(run("qap-bench " + dir + flags + "/tmp/qucoop_bench2.csv") == 0);
  const std::string first = read_file("/tmp/qucoop_bench1.csv");
  CHECK(first == read_file("/tmp/qucoop_bench2.csv"));
  CHECK(first.find("name,n,known_optimal,achieved,gap_percent,iterations,wall_ms,seed") == 0);
  CHECK(first.find("summary") != std::string::npos);
  // no leftover temp file from the atomic write
  CHECK(!std::ifstream("/tmp/qucoop_bench1.csv.tmp").good());

  const std::string empty_dir = "/tmp/qucoop_bench_empty";
  REQUIRE(std::system(("rm -rf " + empty_dir + " && mkdir -p " + empty_dir).c_str()) == 0);
  REQUIRE(run("qap-bench " + empty_dir + flags + "/tmp/qucoop_bench_empty.csv") == 0);
  const std::string empty_csv = read_file("/tmp/qucoop_bench_empty.csv");
  CHECK(empty_csv.find("name,n,") == 0);
}

TEST_CASE("register validates the point dimension") {
  write_file("/tmp/qucoop_4d.csv", "1,2,3,4\n5,6,7,8\n");
  CHECK(run("register /tmp/qucoop_4d.csv /tmp/qucoop_4d.csv") == 1);
}

TEST_CASE("register on identical sets returns the identity transform") {
  write_file("/tmp/qucoop_pts.csv", "0.0,0.0\n1.0,0.2\n-0.4,0.9\n0.7,-1.1\n");
  REQUIRE(run("register /tmp/qucoop_pts.csv /tmp/qucoop_pts.csv --reads 10 --sweeps 200 "
              "--max-iters 6 --out /tmp/qucoop_reg.json") == 0);
  const nlohmann::json j = nlohmann::json::parse(read_file("/tmp/qucoop_reg.json"));
  CHECK(j["residual"].get<double>() <= 1e-2);
  CHECK(j["permutation"] == nlohmann::json::array({1, 2, 3, 4}));
  const auto R = j["R"];
  CHECK(R.size() == 4);
  CHECK(std::abs(R[0].get<double>() - 1.0) <= 0.05);
}

TEST_CASE("qap-synth reports recovery statistics") {
  REQUIRE(run("qap-synth --n 4 --instances 2 --seeds 2 --max-iters 10 --reads 20 --sweeps 400 "
              "--out /tmp/qucoop_synth.json") == 0);
  const nlohmann::json j = nlohmann::json::parse(read_file("/tmp/qucoop_synth.json"));
  CHECK(j["total"] == 4);
  CHECK(j["valid"] == 4);
  CHECK(j["recovery_rate"].get<double>() >= 0.5);
}
