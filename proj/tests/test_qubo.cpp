#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <random>
#include <sstream>

#include "qucoop/qubo.hpp"

using namespace qucoop;
using qubo::Backend;
using qubo::QuboInstance;
using qubo::SolveConfig;

namespace {

// reference energy, written out longhand and independent of qubo::energy
double energy_oracle(const QuboInstance& inst, const BitVec& bits) {
  double e = inst.offset();
  for (int i = 0; i < inst.k(); ++i) {
    if (!bits[i]) continue;
    e += inst.bias()[i];
    for (int j = 0; j < inst.k(); ++j)
      if (bits[j]) e += inst.coupling()(i, j);
  }
  return e;
}

BitVec bits_of(std::uint64_t v, int k) {
  BitVec b(k);
  for (int i = 0; i < k; ++i) b[i] = static_cast<std::uint8_t>((v >> i) & 1);
  return b;
}

QuboInstance random_instance(int k, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  Eigen::MatrixXd M(k, k);
  Eigen::VectorXd b(k);
  for (int i = 0; i < k; ++i) {
    b[i] = u(rng);
    for (int j = 0; j < k; ++j) M(i, j) = u(rng);
  }
  return QuboInstance(M, b, u(rng));
}

// independent exhaustive minimizer (first hit in integer-counting order)
double brute_force_min(const QuboInstance& inst) {
  double best = std::numeric_limits<double>::infinity();
  for (std::uint64_t v = 0; v < (std::uint64_t{1} << inst.k()); ++v)
    best = std::min(best, energy_oracle(inst, bits_of(v, inst.k())));
  return best;
}

}  // namespace

TEST_CASE("energy matches hand-computed values") {
  QuboInstance zero(Eigen::MatrixXd::Zero(2, 2), Eigen::VectorXd::Zero(2), 3.5);
  CHECK(qubo::energy(zero, {1, 0}) == doctest::Approx(3.5));

  Eigen::MatrixXd C(2, 2);
  C << 0, -2, -2, 0;
  Eigen::VectorXd b(2);
  b << 1, 1;
  QuboInstance inst(C, b, 0.0);
  CHECK(qubo::energy(inst, {1, 1}) == doctest::Approx(-2.0));
  // all four assignments by hand: 0, 1, 1, -2
  CHECK(qubo::energy(inst, {0, 0}) == doctest::Approx(0.0));
  CHECK(qubo::energy(inst, {1, 0}) == doctest::Approx(1.0));
  CHECK(qubo::energy(inst, {0, 1}) == doctest::Approx(1.0));

  CHECK(qubo::energy(inst, {0, 0}) == doctest::Approx(inst.offset()));
  CHECK_THROWS(qubo::energy(inst, {1, 0, 1}));
}

TEST_CASE("construction symmetrizes and rejects bad input") {
  std::mt19937_64 rng(7);
  std::uniform_real_distribution<double> u(-2.0, 2.0);
  const int k = 6;
  Eigen::MatrixXd M(k, k);
  for (int i = 0; i < k; ++i)
    for (int j = 0; j < k; ++j) M(i, j) = u(rng);
  Eigen::VectorXd b = Eigen::VectorXd::Zero(k);

  QuboInstance from_raw(M, b, 0.0);
  QuboInstance from_sym(0.5 * (M + M.transpose()), b, 0.0);
  for (std::uint64_t v = 0; v < (1u << k); ++v) {
    const BitVec bits = bits_of(v, k);
    CHECK(qubo::energy(from_raw, bits) ==
          doctest::Approx(qubo::energy(from_sym, bits)).epsilon(1e-12));
  }
  CHECK((from_raw.coupling() - from_raw.coupling().transpose()).cwiseAbs().maxCoeff() <= 1e-12);

  Eigen::MatrixXd bad = M;
  bad(0, 0) = std::numeric_limits<double>::quiet_NaN();
  CHECK_THROWS(QuboInstance(bad, b, 0.0));
  CHECK_THROWS(QuboInstance(M, Eigen::VectorXd::Zero(k + 1), 0.0));
}

TEST_CASE("exact backend returns a certified global minimizer") {
  std::mt19937_64 rng(11);
  SolveConfig config;
  config.backend = Backend::Exact;
  for (int k : {5, 10, 16}) {
    for (int rep = 0; rep < 3; ++rep) {
      QuboInstance inst = random_instance(k, rng);
      const qubo::Sample s = qubo::solve(inst, config);
      CHECK(s.energy == doctest::Approx(qubo::energy(inst, s.bits)).epsilon(1e-12));
      CHECK(s.energy == doctest::Approx(brute_force_min(inst)).epsilon(1e-12));
    }
  }
}

TEST_CASE("exact backend tie-breaking is lexicographic") {
  // zero instance: every assignment ties at the offset
  QuboInstance zero(Eigen::MatrixXd::Zero(4, 4), Eigen::VectorXd::Zero(4), 1.25);
  const qubo::Sample s = qubo::solve(zero, SolveConfig{.backend = Backend::Exact});
  CHECK(s.bits == BitVec{0, 0, 0, 0});
  CHECK(s.energy == doctest::Approx(1.25));

  // two tied minimizers (1,0) and (0,1); (0,1) is lexicographically smaller
  Eigen::VectorXd b(2);
  b << -1, -1;
  Eigen::MatrixXd C(2, 2);
  C << 0, 1, 1, 0; // picking both costs +2
  const qubo::Sample t = qubo::solve(QuboInstance(C, b, 0.0), SolveConfig{.backend = Backend::Exact});
  CHECK(t.bits == BitVec{0, 1});
  CHECK(t.energy == doctest::Approx(-1.0));
}

TEST_CASE("exact backend size guard and config validation") {
  QuboInstance big(Eigen::MatrixXd::Zero(27, 27), Eigen::VectorXd::Zero(27), 0.0);
  CHECK_THROWS(qubo::solve(big, SolveConfig{.backend = Backend::Exact}));

  QuboInstance small(Eigen::MatrixXd::Zero(2, 2), Eigen::VectorXd::Zero(2), 0.0);
  SolveConfig bad;
  bad.beta_start = 5.0;
  bad.beta_end = 1.0;
  CHECK_THROWS(qubo::solve(small, bad));
  bad = SolveConfig{};
  bad.num_reads = 0;
  CHECK_THROWS(qubo::solve(small, bad));
}

TEST_CASE("simulated annealing is deterministic given the config") {
  std::mt19937_64 rng(23);
  QuboInstance inst = random_instance(18, rng);
  SolveConfig config;
  config.num_reads = 5;
  config.num_sweeps = 200;
  config.seed = 99;
  const qubo::Sample a = qubo::solve(inst, config);
  const qubo::Sample b = qubo::solve(inst, config);
  CHECK(a.bits == b.bits);
  CHECK(a.energy == b.energy);
  CHECK(a.energy == doctest::Approx(qubo::energy(inst, a.bits)).epsilon(1e-12));
}

TEST_CASE("best-so-far trace within one read is non-increasing") {
  std::mt19937_64 rng(31);
  QuboInstance inst = random_instance(20, rng);
  std::vector<double> trace;
  qubo::detail::sa_single_read(inst, 400, 0.1, 10.0, 1234, &trace);
  REQUIRE(trace.size() == 400);
  for (std::size_t i = 1; i < trace.size(); ++i) CHECK(trace[i] <= trace[i - 1]);
}

TEST_CASE("simulated annealing matches the exact backend on most small instances") {
  std::mt19937_64 rng(47);
  SolveConfig sa;
  sa.num_reads = 50;
  sa.num_sweeps = 1000;
  sa.seed = 1;
  int hits = 0;
  const int total = 40;
  for (int rep = 0; rep < total; ++rep) {
    QuboInstance inst = random_instance(12, rng);
    const double exact = qubo::solve(inst, SolveConfig{.backend = Backend::Exact}).energy;
    const double got = qubo::solve(inst, sa).energy;
    CHECK(got >= exact - 1e-9);
    if (got <= exact + 1e-9) ++hits;
  }
  CHECK(hits >= 38); // 95% of 40
}

TEST_CASE("solve_batch equals element-wise solve") {
  CHECK(qubo::solve_batch({}, SolveConfig{}).empty());

  std::mt19937_64 rng(53);
  std::vector<QuboInstance> instances;
  for (int i = 0; i < 12; ++i) instances.push_back(random_instance(10, rng));
  SolveConfig config;
  config.num_reads = 4;
  config.num_sweeps = 100;
  config.seed = 5;

  const auto batch = qubo::solve_batch(instances, config);
  REQUIRE(batch.size() == instances.size());
  for (std::size_t i = 0; i < instances.size(); ++i) {
    const qubo::Sample s = qubo::solve(instances[i], config);
    CHECK(batch[i].bits == s.bits);
    CHECK(batch[i].energy == s.energy);
  }

  const auto single = qubo::solve_batch({instances[0]}, config);
  REQUIRE(single.size() == 1);
  CHECK(single[0].bits == qubo::solve(instances[0], config).bits);
}

TEST_CASE("dump format round trip") {
  Eigen::MatrixXd C(3, 3);
  C << 1.5, 0, -2, 0, 0, 0.25, -2, 0.25, 0;
  Eigen::VectorXd b(3);
  b << 0, -1, 0;
  QuboInstance inst(C, b, 7.0);

  std::stringstream ss;
  qubo::write_dump(inst, ss);
  const std::string dump = ss.str();
  CHECK(dump.find("3\n") == 0);
  CHECK(dump.find("offset 7") != std::string::npos);

  QuboInstance back = qubo::read_dump(ss);
  CHECK((back.coupling() - inst.coupling()).cwiseAbs().maxCoeff() <= 1e-12);
  CHECK((back.bias() - inst.bias()).cwiseAbs().maxCoeff() <= 1e-12);
  CHECK(back.offset() == doctest::Approx(inst.offset()));
}
