#include "qucoop/registration.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <fstream>
#include <limits>
#include <numeric>
#include <random>
#include <sstream>
#include <stdexcept>

#include "json.hpp"

namespace qucoop::registration {

namespace {

constexpr double kPi = 3.14159265358979323846;

Eigen::Matrix3d skew(const Eigen::Vector3d& v) {
  Eigen::Matrix3d M;
  M << 0, -v.z(), v.y(), v.z(), 0, -v.x(), -v.y(), v.x(), 0;
  return M;
}

int rotation_dof(int d) {
  if (d == 2) return 1;
  if (d == 3) return 3;
  throw std::invalid_argument("rotation: d must be 2 or 3");
}

}  // namespace

PointSetPair PointSetPair::make(const Eigen::MatrixXd& X_in, const Eigen::MatrixXd& Y_in) {
  if (X_in.rows() != Y_in.rows())
    throw std::invalid_argument("PointSetPair: dimension mismatch between sets");
  const int d = static_cast<int>(X_in.rows());
  rotation_dof(d);
  const int n = static_cast<int>(std::max(X_in.cols(), Y_in.cols()));

  PointSetPair pair;
  pair.d = d;
  pair.X = Eigen::MatrixXd::Zero(d, n);
  pair.Y = Eigen::MatrixXd::Zero(d, n);
  pair.X.leftCols(X_in.cols()) = X_in;
  pair.Y.leftCols(Y_in.cols()) = Y_in;
  return pair;
}

RotationCode RotationCode::centered(const Eigen::VectorXd& center, double width, int m, int d) {
  if (m < 1 || m > 30) throw std::invalid_argument("RotationCode: m out of range");
  const int k_r = rotation_dof(d);
  if (center.size() != k_r) throw std::invalid_argument("RotationCode: center size mismatch");

  RotationCode code;
  code.m = m;
  code.k_r = k_r;
  code.center = center;
  const double denom = static_cast<double>((std::uint64_t{1} << m) - 1);
  const double anchor_fraction = static_cast<double>(std::uint64_t{1} << (m - 1)) / denom;
  code.lo = center.array() - width * anchor_fraction;
  code.hi = code.lo.array() + width;
  code.bits = code.anchor_bits();
  return code;
}

BitVec RotationCode::anchor_bits() const {
  BitVec bits(static_cast<std::size_t>(m) * k_r, 0);
  for (int j = 0; j < k_r; ++j) bits[static_cast<std::size_t>(j) * m + (m - 1)] = 1;
  return bits;
}

Eigen::MatrixXd rotation_matrix(const Eigen::VectorXd& y, int d) {
  if (y.size() != rotation_dof(d)) throw std::invalid_argument("rotation_matrix: bad y size");
  if (d == 2) {
    const double c = std::cos(y[0]), s = std::sin(y[0]);
    Eigen::Matrix2d R;
    R << c, -s, s, c;
    return R;
  }
  const Eigen::Vector3d v = y.head<3>();
  const double theta = v.norm();
  const Eigen::Matrix3d K = skew(v);
  if (theta < 1e-12) return Eigen::Matrix3d::Identity() + K + 0.5 * K * K;
  return Eigen::Matrix3d::Identity() + std::sin(theta) / theta * K +
         (1.0 - std::cos(theta)) / (theta * theta) * K * K;
}

Eigen::MatrixXd rotation_jacobian(const Eigen::VectorXd& y, int d) {
  const int k_r = rotation_dof(d);
  if (y.size() != k_r) throw std::invalid_argument("rotation_jacobian: bad y size");
  Eigen::MatrixXd J(k_r, d * d);
  if (d == 2) {
    const double c = std::cos(y[0]), s = std::sin(y[0]);
    J << -s, -c, c, -s; // row-major vec of dR/dtheta
    return J;
  }

  const Eigen::Vector3d v = y.head<3>();
  const double theta2 = v.squaredNorm();
  const Eigen::Matrix3d R = rotation_matrix(y, 3);
  for (int j = 0; j < 3; ++j) {
    Eigen::Matrix3d dR;
    if (theta2 < 1e-8) {
      // derivative of the exponential near zero, to second order
      const Eigen::Matrix3d G = skew(Eigen::Vector3d::Unit(j));
      const Eigen::Matrix3d K = skew(v);
      dR = G + 0.5 * (G * K + K * G);
    } else {
      const Eigen::Vector3d w = v.cross((Eigen::Matrix3d::Identity() - R).col(j));
      dR = (v[j] * skew(v) + skew(w)) / theta2 * R;
    }
    for (int r = 0; r < 3; ++r)
      for (int c = 0; c < 3; ++c) J(j, r * 3 + c) = dR(r, c);
  }
  return J;
}

Eigen::VectorXd decode_bits(const RotationCode& code, const BitVec& bits) {
  if (bits.size() != static_cast<std::size_t>(code.m) * code.k_r)
    throw std::invalid_argument("decode_bits: bit length mismatch");
  Eigen::VectorXd y(code.k_r);
  const double denom = static_cast<double>((std::uint64_t{1} << code.m) - 1);
  for (int j = 0; j < code.k_r; ++j) {
    double value = 0.0;
    for (int l = 0; l < code.m; ++l)
      if (bits[static_cast<std::size_t>(j) * code.m + l]) value += static_cast<double>(std::uint64_t{1} << l);
    y[j] = code.lo[j] + (code.hi[j] - code.lo[j]) * value / denom;
  }
  return y;
}

Eigen::VectorXd decode_bits(const RotationCode& code) { return decode_bits(code, code.bits); }

Eigen::MatrixXd project_to_rotation(const Eigen::MatrixXd& M) {
  Eigen::JacobiSVD<Eigen::MatrixXd> svd(M, Eigen::ComputeFullU | Eigen::ComputeFullV);
  Eigen::MatrixXd R = svd.matrixU() * svd.matrixV().transpose();
  if (R.determinant() < 0.0) {
    Eigen::MatrixXd flip = Eigen::MatrixXd::Identity(M.rows(), M.cols());
    flip(M.rows() - 1, M.cols() - 1) = -1.0;
    R = svd.matrixU() * flip * svd.matrixV().transpose();
  }
  return R;
}

JointParametrisation::JointParametrisation(int n, RotationCode code, int d)
    : perm_(n), code_(std::move(code)), d_(d) {
  if (code_.k_r != rotation_dof(d)) throw std::invalid_argument("JointParametrisation: k_r/d mismatch");
}

int JointParametrisation::dim_params() const { return perm_.dim_params() + code_.m * code_.k_r; }

int JointParametrisation::dim_ambient() const { return perm_.dim_ambient() + d_ * d_; }

Eigen::VectorXd JointParametrisation::decode_rotation(const BitVec& joint_bits) const {
  const int kp = perm_.dim_params();
  BitVec rot(joint_bits.begin() + kp, joint_bits.end());
  return decode_bits(code_, rot);
}

Eigen::VectorXd JointParametrisation::evaluate(const BitVec& bits) const {
  if (static_cast<int>(bits.size()) != dim_params())
    throw std::invalid_argument("JointParametrisation: bit length mismatch");
  const int kp = perm_.dim_params();
  const BitVec perm_bits_vec(bits.begin(), bits.begin() + kp);
  const Eigen::VectorXd p = perm_.evaluate(perm_bits_vec);
  const Eigen::MatrixXd R = rotation_matrix(decode_rotation(bits), d_);

  Eigen::VectorXd out(dim_ambient());
  out.head(p.size()) = p;
  out.tail(d_ * d_) = perm::vec_rowmajor(R);
  return out;
}

Eigen::VectorXd JointParametrisation::evaluate_real(const Eigen::VectorXd& x) const {
  if (x.size() != dim_params())
    throw std::invalid_argument("JointParametrisation: parameter length mismatch");
  const int kp = perm_.dim_params();
  const Eigen::VectorXd p = perm_.evaluate_real(x.head(kp));

  Eigen::VectorXd y(code_.k_r);
  const double denom = static_cast<double>((std::uint64_t{1} << code_.m) - 1);
  for (int j = 0; j < code_.k_r; ++j) {
    double value = 0.0;
    for (int l = 0; l < code_.m; ++l)
      value += x[kp + j * code_.m + l] * static_cast<double>(std::uint64_t{1} << l);
    y[j] = code_.lo[j] + (code_.hi[j] - code_.lo[j]) * value / denom;
  }
  const Eigen::MatrixXd R = rotation_matrix(y, d_);

  Eigen::VectorXd out(dim_ambient());
  out.head(p.size()) = p;
  out.tail(d_ * d_) = perm::vec_rowmajor(R);
  return out;
}

Eigen::MatrixXd JointParametrisation::jacobian(const BitVec& bits) const {
  if (static_cast<int>(bits.size()) != dim_params())
    throw std::invalid_argument("JointParametrisation: bit length mismatch");
  const int kp = perm_.dim_params();
  const int n2 = perm_.dim_ambient();
  const BitVec perm_bits_vec(bits.begin(), bits.begin() + kp);

  Eigen::MatrixXd J = Eigen::MatrixXd::Zero(dim_params(), dim_ambient());
  J.topLeftCorner(kp, n2) = perm_.jacobian(perm_bits_vec);

  const Eigen::VectorXd y = decode_rotation(bits);
  const Eigen::MatrixXd Jy = rotation_jacobian(y, d_); // k_r x d^2
  const double denom = static_cast<double>((std::uint64_t{1} << code_.m) - 1);
  for (int j = 0; j < code_.k_r; ++j) {
    const double scale = (code_.hi[j] - code_.lo[j]) / denom;
    for (int l = 0; l < code_.m; ++l) {
      const double weight = scale * static_cast<double>(std::uint64_t{1} << l);
      J.row(kp + j * code_.m + l).tail(d_ * d_) = weight * Jy.row(j);
    }
  }
  return J;
}

bool JointParametrisation::is_feasible(const Eigen::VectorXd& point) const {
  if (point.size() != dim_ambient()) return false;
  if (!point.allFinite()) return false;
  return perm_.is_feasible(point.head(perm_.dim_ambient()));
}

std::optional<BitVec> JointParametrisation::recover(const Eigen::VectorXd& point,
                                                    const BitVec& candidate_bits) const {
  if (point.size() != dim_ambient() || static_cast<int>(candidate_bits.size()) != dim_params())
    return std::nullopt;
  auto perm_rec = perm_.recover(point.head(perm_.dim_ambient()), {});
  if (!perm_rec) return std::nullopt;
  BitVec out = std::move(*perm_rec);
  out.insert(out.end(), candidate_bits.begin() + perm_.dim_params(), candidate_bits.end());
  return out;
}

JointProblem build_joint_problem(const PointSetPair& pair, double alpha, double beta,
                                 const RotationCode& code_template) {
  if (alpha < 0.0 || beta < 0.0)
    throw std::invalid_argument("build_joint_problem: penalties must be >= 0");
  const int n = pair.n();
  const int d = pair.d;
  const int n2 = n * n;
  const int d2 = d * d;

  Eigen::MatrixXd Q = Eigen::MatrixXd::Zero(n2 + d2, n2 + d2);
  Q.topLeftCorner(n2, n2).diagonal().array() += alpha;
  Q.bottomRightCorner(d2, d2).diagonal().array() += beta;

  // -<XP, RY> = -vec(P)' kron(X', Y') vec(R) under row-major vec
  Eigen::MatrixXd K(n2, d2);
  const Eigen::MatrixXd Xt = pair.X.transpose(); // n x d
  const Eigen::MatrixXd Yt = pair.Y.transpose(); // n x d
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < d; ++j)
      K.block(i * n, j * d, n, d) = Xt(i, j) * Yt;
  Q.topRightCorner(n2, d2) = -0.5 * K;
  Q.bottomLeftCorner(d2, n2) = -0.5 * K.transpose();

  return JointProblem{engine::QuadraticObjective(Q, Eigen::VectorXd::Zero(n2 + d2)),
                      std::make_shared<JointParametrisation>(n, code_template, d)};
}

namespace {

struct JointRun {
  BitVec best_perm;
  Eigen::VectorXd best_y;
  double best_objective = std::numeric_limits<double>::infinity();
  std::vector<double> objectives;
  std::vector<double> widths;
  bool all_feasible = true;
};

JointRun run_joint(const PointSetPair& pair, const RegistrationConfig& config, int m,
                   double alpha, double beta, const BitVec& perm_start,
                   std::uint64_t run_seed) {
  const int d = pair.d;
  const int n = pair.n();
  const int kp = n * (n - 1) / 2;

  JointRun run;
  BitVec perm_anchor = perm_start;
  Eigen::VectorXd y = Eigen::VectorXd::Zero(rotation_dof(d));
  double width = 2.0 * kPi;

  run.best_perm = perm_anchor;
  run.best_y = y;

  qubo::SolveConfig solver = config.solver;
  solver.seed = config.solver.seed + run_seed;
  std::mt19937_64 noise_rng(run_seed * 0x9e3779b97f4a7c15ULL + 1);

  for (int iter = 0; iter < config.max_iters; ++iter) {
    const RotationCode code = RotationCode::centered(y, width, m, d);
    const JointProblem problem = build_joint_problem(pair, alpha, beta, code);
    const JointParametrisation& param = *problem.parametrisation;

    BitVec anchor = perm_anchor;
    if (config.noise_flips > 0 && iter > 0) {
      const int flips = std::min(config.noise_flips, kp);
      std::vector<int> idx(kp);
      std::iota(idx.begin(), idx.end(), 0);
      std::shuffle(idx.begin(), idx.end(), noise_rng);
      for (int f = 0; f < flips; ++f) anchor[idx[f]] ^= 1;
    }
    const BitVec rot_anchor = code.anchor_bits();
    anchor.insert(anchor.end(), rot_anchor.begin(), rot_anchor.end());

    solver.seed += 1;
    const engine::StepResult sr = engine::step(problem.objective, param, anchor,
                                               engine::PenaltySpec{0.0}, solver,
                                               config.use_reparametrisation);
    if (sr.infeasible_step) run.all_feasible = false;

    perm_anchor.assign(sr.next.begin(), sr.next.begin() + kp);
    y = param.decode_rotation(sr.next);

    run.objectives.push_back(sr.objective);
    run.widths.push_back(width);
    if (sr.objective < run.best_objective) {
      run.best_objective = sr.objective;
      run.best_perm = perm_anchor;
      run.best_y = y;
    }
    width *= 0.5;
  }
  return run;
}

}  // namespace

RegistrationResult register_sets(const PointSetPair& pair, const RegistrationConfig& config) {
  const auto t0 = std::chrono::steady_clock::now();
  const int d = pair.d;
  const int n = pair.n();
  const int m = config.m > 0 ? config.m : (d == 2 ? 10 : 4);
  const double alpha = config.alpha >= 0.0 ? config.alpha : pair.X.squaredNorm();
  const double beta = config.beta >= 0.0 ? config.beta : 0.1 * pair.Y.squaredNorm();
  const int kp = n * (n - 1) / 2;

  JointRun best = run_joint(pair, config, m, alpha, beta, BitVec(kp, 0), config.seed);
  bool all_feasible = best.all_feasible;
  for (int r = 1; r <= config.restarts; ++r) {
    const std::uint64_t restart_seed = config.seed + static_cast<std::uint64_t>(r) * 7919;
    std::mt19937_64 rng(restart_seed);
    BitVec start(kp);
    for (auto& b : start) b = static_cast<std::uint8_t>(rng() & 1);
    JointRun run = run_joint(pair, config, m, alpha, beta, start, restart_seed);
    all_feasible = all_feasible && run.all_feasible;
    if (run.best_objective < best.best_objective) best = std::move(run);
  }

  RegistrationResult result;
  result.all_steps_feasible = all_feasible;
  result.objective_trajectory = best.objectives;
  result.interval_widths = best.widths;
  result.best_objective = best.best_objective;
  result.rotation = project_to_rotation(rotation_matrix(best.best_y, d));
  const perm::PermutationParametrisation perm_param(n);
  result.permutation = perm::matrix_to_image(
      perm::apply(perm::PermutationCode(perm_param.order(), best.best_perm)));
  const Eigen::MatrixXd P = perm::image_to_matrix(result.permutation);
  result.residual = (pair.X * P - result.rotation * pair.Y).squaredNorm();
  result.wall_ms =
      std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count();
  return result;
}

double rotation_error_deg(const Eigen::MatrixXd& R_est, const Eigen::MatrixXd& R_gt) {
  if (R_est.rows() != R_gt.rows() || R_est.cols() != R_gt.cols())
    throw std::invalid_argument("rotation_error_deg: size mismatch");
  const Eigen::MatrixXd rel = R_est.transpose() * R_gt;
  double angle = 0.0;
  if (R_est.rows() == 2) {
    angle = std::abs(std::atan2(rel(1, 0), rel(0, 0)));
  } else {
    const double c = std::clamp((rel.trace() - 1.0) / 2.0, -1.0, 1.0);
    angle = std::acos(c);
  }
  return angle * 180.0 / kPi;
}

Eigen::MatrixXd load_points(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("load_points: cannot open " + path);

  std::vector<std::vector<double>> rows;
  if (path.size() >= 5 && path.substr(path.size() - 5) == ".json") {
    nlohmann::json j;
    in >> j;
    if (!j.is_array()) throw std::runtime_error("load_points: expected a JSON array of points");
    for (const auto& item : j) {
      std::vector<double> row;
      for (const auto& v : item) row.push_back(v.get<double>());
      rows.push_back(std::move(row));
    }
  } else {
    std::string line;
    while (std::getline(in, line)) {
      for (auto& ch : line)
        if (ch == ',' || ch == ';') ch = ' ';
      std::istringstream ls(line);
      std::vector<double> row;
      double v;
      while (ls >> v) row.push_back(v);
      if (!row.empty()) rows.push_back(std::move(row));
    }
  }
  if (rows.empty()) throw std::runtime_error("load_points: no points in " + path);
  const std::size_t d = rows.front().size();
  for (const auto& row : rows)
    if (row.size() != d) throw std::runtime_error("load_points: ragged rows in " + path);

  Eigen::MatrixXd points(d, rows.size());
  for (std::size_t i = 0; i < rows.size(); ++i)
    for (std::size_t j = 0; j < d; ++j) points(j, i) = rows[i][j];
  return points;
}

}  // namespace qucoop::registration
