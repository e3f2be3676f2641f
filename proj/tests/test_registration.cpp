#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cstdio>
#include <fstream>
#include <random>

#include "qucoop/registration.hpp"

using namespace qucoop;
using registration::PointSetPair;
using registration::RotationCode;

namespace {

constexpr double kPi = 3.14159265358979323846;

BitVec bits_of(std::uint64_t v, int k) {
  BitVec b(k);
  for (int i = 0; i < k; ++i) b[i] = static_cast<std::uint8_t>((v >> i) & 1);
  return b;
}

Eigen::MatrixXd random_points(int d, int n, std::mt19937_64& rng) {
  std::normal_distribution<double> gauss(0.0, 1.0);
  Eigen::MatrixXd X(d, n);
  for (int i = 0; i < d; ++i)
    for (int j = 0; j < n; ++j) X(i, j) = gauss(rng);
  return X;
}

}  // namespace

TEST_CASE("rotation_matrix closed forms") {
  CHECK(registration::rotation_matrix(Eigen::VectorXd::Zero(1), 2)
            .isApprox(Eigen::MatrixXd::Identity(2, 2), 1e-14));
  CHECK(registration::rotation_matrix(Eigen::VectorXd::Zero(3), 3)
            .isApprox(Eigen::MatrixXd::Identity(3, 3), 1e-14));

  Eigen::VectorXd quarter(1);
  quarter << kPi / 2.0;
  Eigen::MatrixXd expected(2, 2);
  expected << 0, -1, 1, 0;
  CHECK(registration::rotation_matrix(quarter, 2).isApprox(expected, 1e-12));

  Eigen::VectorXd half_turn(3);
  half_turn << kPi, 0, 0;
  CHECK(registration::rotation_matrix(half_turn, 3)
            .isApprox(Eigen::Vector3d(1, -1, -1).asDiagonal().toDenseMatrix(), 1e-12));

  CHECK_THROWS(registration::rotation_matrix(Eigen::VectorXd::Zero(2), 2));
  CHECK_THROWS(registration::rotation_matrix(Eigen::VectorXd::Zero(1), 4));
}

TEST_CASE("rotation matrices are orthogonal with unit determinant") {
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> u(-kPi, kPi);
  for (int d : {2, 3}) {
    const int k_r = d == 2 ? 1 : 3;
    for (int rep = 0; rep < 500; ++rep) {
      Eigen::VectorXd y(k_r);
      for (int j = 0; j < k_r; ++j) y[j] = u(rng);
      const Eigen::MatrixXd R = registration::rotation_matrix(y, d);
      CHECK((R.transpose() * R - Eigen::MatrixXd::Identity(d, d)).cwiseAbs().maxCoeff() <= 1e-12);
      CHECK(R.determinant() == doctest::Approx(1.0).epsilon(1e-12));
    }
  }
}

TEST_CASE("rotation_jacobian closed forms at zero") {
  const Eigen::MatrixXd J2 = registration::rotation_jacobian(Eigen::VectorXd::Zero(1), 2);
  REQUIRE(J2.rows() == 1);
  CHECK(J2(0, 0) == doctest::Approx(0));
  CHECK(J2(0, 1) == doctest::Approx(-1));
  CHECK(J2(0, 2) == doctest::Approx(1));
  CHECK(J2(0, 3) == doctest::Approx(0));

  // at the identity the partials are the skew generators
  const Eigen::MatrixXd J3 = registration::rotation_jacobian(Eigen::VectorXd::Zero(3), 3);
  Eigen::Matrix3d G0;
  G0 << 0, 0, 0, 0, 0, -1, 0, 1, 0;
  for (int r = 0; r < 3; ++r)
    for (int c = 0; c < 3; ++c) CHECK(J3(0, r * 3 + c) == doctest::Approx(G0(r, c)));
}

TEST_CASE("rotation_jacobian matches central finite differences") {
  std::mt19937_64 rng(7);
  std::uniform_real_distribution<double> u(-kPi, kPi);
  const double h = 1e-6;
  for (int d : {2, 3}) {
    const int k_r = d == 2 ? 1 : 3;
    for (int rep = 0; rep < 50; ++rep) {
      Eigen::VectorXd y(k_r);
      for (int j = 0; j < k_r; ++j) y[j] = u(rng);
      const Eigen::MatrixXd J = registration::rotation_jacobian(y, d);
      for (int j = 0; j < k_r; ++j) {
        Eigen::VectorXd yp = y, ym = y;
        yp[j] += h;
        ym[j] -= h;
        const Eigen::MatrixXd diff = (registration::rotation_matrix(yp, d) -
                                      registration::rotation_matrix(ym, d)) /
                                     (2.0 * h);
        for (int r = 0; r < d; ++r)
          for (int c = 0; c < d; ++c)
            CHECK(std::abs(J(j, r * d + c) - diff(r, c)) <=
                  1e-5 * (1.0 + std::abs(J(j, r * d + c))));
      }
    }
  }
}

TEST_CASE("decode_bits endpoints and midpoints") {
  RotationCode code;
  code.m = 2;
  code.k_r = 1;
  code.lo = Eigen::VectorXd::Constant(1, 0.0);
  code.hi = Eigen::VectorXd::Constant(1, 3.0);
  code.center = Eigen::VectorXd::Zero(1);

  CHECK(registration::decode_bits(code, {0, 0})[0] == doctest::Approx(0.0)); // lo
  CHECK(registration::decode_bits(code, {1, 1})[0] == doctest::Approx(3.0)); // hi
  CHECK(registration::decode_bits(code, {0, 1})[0] == doctest::Approx(2.0)); // value 2 of 3
  CHECK(registration::decode_bits(code, {1, 0})[0] == doctest::Approx(1.0));
}

TEST_CASE("decode is monotone in the unsigned bit value") {
  RotationCode code;
  code.m = 5;
  code.k_r = 1;
  code.lo = Eigen::VectorXd::Constant(1, -2.0);
  code.hi = Eigen::VectorXd::Constant(1, 1.5);
  code.center = Eigen::VectorXd::Zero(1);
  double previous = -std::numeric_limits<double>::infinity();
  for (std::uint64_t v = 0; v < 32; ++v) {
    const double y = registration::decode_bits(code, bits_of(v, 5))[0];
    CHECK(y > previous);
    previous = y;
  }
}

TEST_CASE("centered code: anchor bits decode exactly to the center") {
  for (int d : {2, 3}) {
    const int k_r = d == 2 ? 1 : 3;
    Eigen::VectorXd center(k_r);
    for (int j = 0; j < k_r; ++j) center[j] = 0.3 * (j + 1);
    for (int m : {4, 10}) {
      const RotationCode code = RotationCode::centered(center, 1.25, m, d);
      const Eigen::VectorXd decoded = registration::decode_bits(code, code.anchor_bits());
      CHECK((decoded - center).cwiseAbs().maxCoeff() <= 1e-14);
      CHECK((code.hi - code.lo).cwiseAbs().maxCoeff() == doctest::Approx(1.25));
    }
  }
}

TEST_CASE("project_to_rotation returns the nearest rotation") {
  std::mt19937_64 rng(11);
  const Eigen::MatrixXd R0 = registration::rotation_matrix(Eigen::VectorXd::Constant(1, 0.7), 2);
  Eigen::MatrixXd noisy = R0;
  noisy(0, 0) += 0.05;
  const Eigen::MatrixXd R = registration::project_to_rotation(noisy);
  CHECK((R.transpose() * R - Eigen::MatrixXd::Identity(2, 2)).cwiseAbs().maxCoeff() <= 1e-12);
  CHECK(R.determinant() == doctest::Approx(1.0));
  CHECK(registration::rotation_error_deg(R, R0) <= 5.0);
}

TEST_CASE("cross term reproduces the correlation of transformed sets") {
  std::mt19937_64 rng(13);
  const int n = 4, d = 2;
  const PointSetPair pair = PointSetPair::make(random_points(d, n, rng), random_points(d, n, rng));
  const RotationCode code = RotationCode::centered(Eigen::VectorXd::Zero(1), 2.0 * kPi, 4, d);
  const auto problem = registration::build_joint_problem(pair, 0.0, 0.0, code);

  std::vector<int> image = {0, 1, 2, 3};
  std::uniform_real_distribution<double> u(-kPi, kPi);
  for (int rep = 0; rep < 10; ++rep) {
    std::shuffle(image.begin(), image.end(), rng);
    const Eigen::MatrixXd P = perm::image_to_matrix(image);
    const Eigen::MatrixXd R = registration::rotation_matrix(Eigen::VectorXd::Constant(1, u(rng)), d);

    Eigen::VectorXd s(n * n + d * d);
    s.head(n * n) = perm::vec_rowmajor(P);
    s.tail(d * d) = perm::vec_rowmajor(R);
    const double via_quadratic = problem.objective.value(s);
    const double direct = -((pair.X * P).transpose() * (R * pair.Y)).trace();
    CHECK(via_quadratic == doctest::Approx(direct).epsilon(1e-9));
  }
}

TEST_CASE("joint QUBO fidelity on an exhaustive small case") {
  std::mt19937_64 rng(17);
  const int n = 3, d = 2, m = 2;
  const PointSetPair pair = PointSetPair::make(random_points(d, n, rng), random_points(d, n, rng));
  const RotationCode code = RotationCode::centered(Eigen::VectorXd::Zero(1), 2.0 * kPi, m, d);
  const auto problem =
      registration::build_joint_problem(pair, pair.X.squaredNorm(), 0.1 * pair.Y.squaredNorm(), code);
  const auto& param = *problem.parametrisation;

  const int k = param.dim_params();
  REQUIRE(k == 5); // 3 permutation bits + 2 rotation bits

  const BitVec anchor = bits_of(9, k);
  const engine::Linearization lin = engine::linearize(param, anchor);
  const qubo::QuboInstance inst =
      engine::assemble_qubo(problem.objective, lin, engine::PenaltySpec{0.0});
  for (std::uint64_t v = 0; v < (std::uint64_t{1} << k); ++v) {
    const BitVec x = bits_of(v, k);
    const double direct = problem.objective.value(lin.apply(x));
    CHECK(qubo::energy(inst, x) == doctest::Approx(direct).epsilon(1e-9));
  }
}

TEST_CASE("joint parametrisation: binary evaluation, smooth extension, jacobian") {
  std::mt19937_64 rng(19);
  const int n = 4, d = 3, m = 3;
  const PointSetPair pair = PointSetPair::make(random_points(d, n, rng), random_points(d, n, rng));
  const RotationCode code =
      RotationCode::centered(Eigen::VectorXd::Constant(3, 0.2), kPi, m, d);
  const auto problem = registration::build_joint_problem(pair, 1.0, 1.0, code);
  const auto& param = *problem.parametrisation;
  const int k = param.dim_params();

  for (int rep = 0; rep < 5; ++rep) {
    BitVec bits(k);
    for (auto& b : bits) b = static_cast<std::uint8_t>(rng() & 1);
    Eigen::VectorXd lifted(k);
    for (int i = 0; i < k; ++i) lifted[i] = bits[i] ? 1.0 : 0.0;
    CHECK((param.evaluate(bits) - param.evaluate_real(lifted)).cwiseAbs().maxCoeff() <= 1e-12);

    const Eigen::MatrixXd J = param.jacobian(bits);
    const double h = 1e-6;
    for (int i = 0; i < k; ++i) {
      Eigen::VectorXd xp = lifted, xm = lifted;
      xp[i] += h;
      xm[i] -= h;
      const Eigen::VectorXd fd = (param.evaluate_real(xp) - param.evaluate_real(xm)) / (2.0 * h);
      for (int c = 0; c < param.dim_ambient(); ++c)
        CHECK(std::abs(J(i, c) - fd[c]) <= 1e-5 * (1.0 + std::abs(J(i, c))));
    }
  }
}

TEST_CASE("joint recover: permutation re-encoded, rotation bits pass through") {
  std::mt19937_64 rng(23);
  const int n = 3, d = 2, m = 4;
  const PointSetPair pair = PointSetPair::make(random_points(d, n, rng), random_points(d, n, rng));
  const RotationCode code = RotationCode::centered(Eigen::VectorXd::Zero(1), kPi, m, d);
  const auto problem = registration::build_joint_problem(pair, 1.0, 1.0, code);
  const auto& param = *problem.parametrisation;

  BitVec bits(param.dim_params());
  for (auto& b : bits) b = static_cast<std::uint8_t>(rng() & 1);
  const Eigen::VectorXd point = param.evaluate(bits);
  REQUIRE(param.is_feasible(point));

  const auto rec = param.recover(point, bits);
  REQUIRE(rec.has_value());
  // same permutation matrix, identical rotation bits
  CHECK((param.evaluate(*rec).head(n * n) - point.head(n * n)).cwiseAbs().maxCoeff() <= 1e-12);
  CHECK(BitVec(rec->begin() + n * (n - 1) / 2, rec->end()) ==
        BitVec(bits.begin() + n * (n - 1) / 2, bits.end()));
}

TEST_CASE("certificate attains the minimum among random feasible candidates") {
  std::mt19937_64 rng(29);
  const int n = 5, d = 2;
  const Eigen::MatrixXd X = random_points(d, n, rng);
  std::vector<int> image = {3, 0, 4, 2, 1};
  const Eigen::MatrixXd P_gt = perm::image_to_matrix(image);
  const Eigen::MatrixXd R_gt =
      registration::rotation_matrix(Eigen::VectorXd::Constant(1, 0.6), d);
  const Eigen::MatrixXd Y = R_gt.transpose() * X * P_gt; // zero-residual construction

  const PointSetPair pair = PointSetPair::make(X, Y);
  const RotationCode code = RotationCode::centered(Eigen::VectorXd::Zero(1), 2 * kPi, 6, d);
  const auto problem =
      registration::build_joint_problem(pair, pair.X.squaredNorm(), 0.1 * pair.Y.squaredNorm(), code);

  auto value_at = [&](const Eigen::MatrixXd& P, const Eigen::MatrixXd& R) {
    Eigen::VectorXd s(n * n + d * d);
    s.head(n * n) = perm::vec_rowmajor(P);
    s.tail(d * d) = perm::vec_rowmajor(R);
    return problem.objective.value(s);
  };

  const double certificate_value = value_at(P_gt, R_gt);
  std::uniform_real_distribution<double> u(-kPi, kPi);
  std::vector<int> candidate = image;
  for (int rep = 0; rep < 1000; ++rep) {
    std::shuffle(candidate.begin(), candidate.end(), rng);
    const Eigen::MatrixXd R =
        registration::rotation_matrix(Eigen::VectorXd::Constant(1, u(rng)), d);
    CHECK(certificate_value <= value_at(perm::image_to_matrix(candidate), R) + 1e-9);
  }
}

TEST_CASE("register_sets: already aligned pair stays aligned") {
  std::mt19937_64 rng(31);
  const Eigen::MatrixXd X = random_points(2, 6, rng);
  const PointSetPair pair = PointSetPair::make(X, X);

  registration::RegistrationConfig config;
  config.max_iters = 8;
  config.solver.num_reads = 20;
  config.solver.num_sweeps = 400;
  config.seed = 4;
  const auto result = registration::register_sets(pair, config);

  CHECK(registration::rotation_error_deg(result.rotation, Eigen::MatrixXd::Identity(2, 2)) <= 5.0);
  CHECK(result.residual <= 1e-2 * X.squaredNorm());
  const std::vector<int> identity_image = {0, 1, 2, 3, 4, 5};
  CHECK(result.permutation == identity_image);
}

TEST_CASE("register_sets: 45-degree isomorphic pairs, most seeds fully recovered") {
  std::mt19937_64 rng(41);
  const int n = 10, d = 2;
  int good = 0;
  for (int seed = 0; seed < 10; ++seed) {
    const Eigen::MatrixXd X = random_points(d, n, rng);
    const Eigen::MatrixXd R_gt =
        registration::rotation_matrix(Eigen::VectorXd::Constant(1, kPi / 4.0), d);
    std::vector<int> image(n);
    std::iota(image.begin(), image.end(), 0);
    std::shuffle(image.begin(), image.end(), rng);
    const Eigen::MatrixXd P_gt = perm::image_to_matrix(image);
    const Eigen::MatrixXd Y = R_gt.transpose() * X * P_gt;

    registration::RegistrationConfig config;
    config.max_iters = 15;
    config.noise_flips = 1;
    config.restarts = 7;
    config.solver.num_reads = 25;
    config.solver.num_sweeps = 500;
    config.seed = static_cast<std::uint64_t>(seed);
    const auto result =
        registration::register_sets(registration::PointSetPair::make(X, Y), config);
    if (registration::rotation_error_deg(result.rotation, R_gt) <= 5.0 &&
        result.permutation == perm::matrix_to_image(P_gt))
      ++good;
  }
  CHECK(good >= 7);
}

TEST_CASE("register_sets: interval widths halve each iteration") {
  std::mt19937_64 rng(37);
  const PointSetPair pair = PointSetPair::make(random_points(2, 4, rng), random_points(2, 4, rng));
  registration::RegistrationConfig config;
  config.max_iters = 6;
  config.solver.num_reads = 5;
  config.solver.num_sweeps = 100;
  const auto result = registration::register_sets(pair, config);
  REQUIRE(result.interval_widths.size() == 6);
  CHECK(result.interval_widths[0] == doctest::Approx(2.0 * kPi));
  for (std::size_t i = 1; i < result.interval_widths.size(); ++i)
    CHECK(result.interval_widths[i] == doctest::Approx(0.5 * result.interval_widths[i - 1]));
}

TEST_CASE("point set pair zero-pads the smaller set") {
  Eigen::MatrixXd X(2, 4), Y(2, 2);
  X << 1, 2, 3, 4, 5, 6, 7, 8;
  Y << 9, 10, 11, 12;
  const PointSetPair pair = PointSetPair::make(X, Y);
  CHECK(pair.n() == 4);
  CHECK(pair.Y.col(2).cwiseAbs().maxCoeff() == doctest::Approx(0.0));
  CHECK(pair.Y.col(3).cwiseAbs().maxCoeff() == doctest::Approx(0.0));
  CHECK(pair.Y(0, 0) == doctest::Approx(9));
}

TEST_CASE("rotation_error_deg") {
  const Eigen::MatrixXd I2 = Eigen::MatrixXd::Identity(2, 2);
  const Eigen::MatrixXd R30 =
      registration::rotation_matrix(Eigen::VectorXd::Constant(1, kPi / 6.0), 2);
  CHECK(registration::rotation_error_deg(R30, I2) == doctest::Approx(30.0).epsilon(1e-9));
  CHECK(registration::rotation_error_deg(R30, R30) == doctest::Approx(0.0));

  const Eigen::MatrixXd R3 = registration::rotation_matrix(Eigen::Vector3d(0, kPi / 4, 0), 3);
  CHECK(registration::rotation_error_deg(R3, Eigen::MatrixXd::Identity(3, 3)) ==
        doctest::Approx(45.0).epsilon(1e-9));
}

TEST_CASE("load_points reads CSV and JSON") {
  const std::string csv_path = "/tmp/qucoop_test_points.csv";
  {
    std::ofstream out(csv_path);
    out << "1.0, 2.0\n3.0, 4.0\n5.0, 6.0\n";
  }
  const Eigen::MatrixXd from_csv = registration::load_points(csv_path);
  CHECK(from_csv.rows() == 2);
  CHECK(from_csv.cols() == 3);
  CHECK(from_csv(1, 2) == doctest::Approx(6.0));

  const std::string json_path = "/tmp/qucoop_test_points.json";
  {
    std::ofstream out(json_path);
    out << "[[1.0, 2.0], [3.0, 4.0]]";
  }
  const Eigen::MatrixXd from_json = registration::load_points(json_path);
  CHECK(from_json.rows() == 2);
  CHECK(from_json.cols() == 2);
  CHECK(from_json(0, 1) == doctest::Approx(3.0));

  CHECK_THROWS(registration::load_points("/tmp/qucoop_does_not_exist.csv"));
  std::remove(csv_path.c_str());
  std::remove(json_path.c_str());
}
