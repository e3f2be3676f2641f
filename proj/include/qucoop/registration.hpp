#ifndef QUCOOP_REGISTRATION_HPP
#define QUCOOP_REGISTRATION_HPP

#include <cstdint>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "qucoop/engine.hpp"
#include "qucoop/perm.hpp"

namespace qucoop::registration {

// Reference set X and template set Y, d x n each; the smaller set is
// zero-padded (points at the origin) to the larger cardinality.
struct PointSetPair {
  Eigen::MatrixXd X;
  Eigen::MatrixXd Y;
  int d = 2;

  int n() const { return static_cast<int>(X.cols()); }

  static PointSetPair make(const Eigen::MatrixXd& X_in, const Eigen::MatrixXd& Y_in);
};

// m-bit discretization of the k_r = d(d-1)/2 rotation coordinates over a
// per-coordinate interval [lo, hi]; `center` is the current linearization
// anchor y^t.
struct RotationCode {
  int m = 10;
  int k_r = 1;
  Eigen::VectorXd lo;
  Eigen::VectorXd hi;
  BitVec bits;
  Eigen::VectorXd center;

  // Interval of the given width positioned so that the mid-range bit pattern
  // (value 2^{m-1} per coordinate) decodes exactly to `center`.
  static RotationCode centered(const Eigen::VectorXd& center, double width, int m, int d);

  BitVec anchor_bits() const; // the mid-range pattern decoding to `center`
};

// exp of the skew-symmetric matrix with the given coordinates: the planar
// rotation by y(0) for d = 2, the Rodrigues formula for d = 3.
Eigen::MatrixXd rotation_matrix(const Eigen::VectorXd& y, int d);

// Row j = row-major vec of dR/dy_j, shape k_r x d^2.
Eigen::MatrixXd rotation_jacobian(const Eigen::VectorXd& y, int d);

// y_j = lo_j + (hi_j - lo_j) * (unsigned value of coordinate j's m bits) /
// (2^m - 1); bit 0 of each coordinate is the least significant.
Eigen::VectorXd decode_bits(const RotationCode& code);
Eigen::VectorXd decode_bits(const RotationCode& code, const BitVec& bits);

// Nearest rotation in Frobenius norm (orthogonal polar factor with
// determinant correction).
Eigen::MatrixXd project_to_rotation(const Eigen::MatrixXd& M);

// Concatenated permutation-plus-rotation encoding: bits [0, n(n-1)/2) drive
// the permutation block, the remaining m*k_r bits the rotation block. The
// Jacobian is block-diagonal with the linear decode map folded into the
// rotation rows. Feasibility of a point is validity of its permutation
// block; rotation bits pass through `recover` unchanged.
class JointParametrisation final : public engine::Parametrisation {
 public:
  JointParametrisation(int n, RotationCode code, int d);

  int dim_params() const override;
  int dim_ambient() const override;
  Eigen::VectorXd evaluate(const BitVec& bits) const override;
  Eigen::VectorXd evaluate_real(const Eigen::VectorXd& x) const override;
  Eigen::MatrixXd jacobian(const BitVec& bits) const override;
  bool is_feasible(const Eigen::VectorXd& point) const override;
  std::optional<BitVec> recover(const Eigen::VectorXd& point,
                                const BitVec& candidate_bits) const override;

  const RotationCode& code() const { return code_; }
  const perm::PermutationParametrisation& perm_param() const { return perm_; }
  int perm_bits() const { return perm_.dim_params(); }

  Eigen::VectorXd decode_rotation(const BitVec& joint_bits) const;

 private:
  perm::PermutationParametrisation perm_;
  RotationCode code_;
  int d_;
};

struct JointProblem {
  engine::QuadraticObjective objective; // over n^2 + d^2 ambient dims
  std::shared_ptr<JointParametrisation> parametrisation;
};

// Q = [[alpha I, -1/2 K], [-1/2 K', beta I]] with K the Kronecker coupling
// of vec(P) and vec(R) reproducing -<XP, RY>_F.
JointProblem build_joint_problem(const PointSetPair& pair, double alpha, double beta,
                                 const RotationCode& code_template);

struct RegistrationConfig {
  int max_iters = 15;
  int m = 0;                 // 0 = default (10 in 2D, 4 per coordinate in 3D)
  double alpha = -1.0;       // < 0 = |X|_F^2
  double beta = -1.0;        // < 0 = 0.1 |Y|_F^2
  int noise_flips = 0;       // permutation bits flipped before each linearization
  int restarts = 0;          // additional runs from random permutation anchors
  qubo::SolveConfig solver;
  bool use_reparametrisation = true;
  std::uint64_t seed = 0;
};

struct RegistrationResult {
  Eigen::MatrixXd rotation;     // d x d, projected to the nearest rotation
  std::vector<int> permutation; // image list, 0-indexed
  std::vector<double> objective_trajectory;
  std::vector<double> interval_widths; // rotation interval width per iteration
  double best_objective = 0.0;
  double residual = 0.0; // |X P - R Y|_F^2 at the reported pair
  bool all_steps_feasible = true;
  double wall_ms = 0.0;
};

// Joint alternating run: one engine step per iteration, then the rotation
// interval is re-centered at the decoded y and halved, and the permutation
// anchor is re-encoded.
RegistrationResult register_sets(const PointSetPair& pair, const RegistrationConfig& config);

// Angle of R_est relative to R_gt, in degrees.
double rotation_error_deg(const Eigen::MatrixXd& R_est, const Eigen::MatrixXd& R_gt);

// CSV (one point per row, d columns) or JSON (array of length-d arrays),
// selected by file extension. Returns a d x n matrix.
Eigen::MatrixXd load_points(const std::string& path);

}  // namespace qucoop::registration

#endif
