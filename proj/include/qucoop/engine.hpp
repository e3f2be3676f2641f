#ifndef QUCOOP_ENGINE_HPP
#define QUCOOP_ENGINE_HPP

#include <cstdint>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "json.hpp"
#include "qucoop/qubo.hpp"

namespace qucoop::engine {

// Outer objective f(s) = <s, Q s + c> over the ambient space.
class QuadraticObjective {
 public:
  QuadraticObjective(const Eigen::MatrixXd& Q_in, const Eigen::VectorXd& c_in);

  const Eigen::MatrixXd& Q() const { return Q_; }
  const Eigen::VectorXd& c() const { return c_; }
  int dim() const { return static_cast<int>(c_.size()); }

  double value(const Eigen::VectorXd& point) const;

 private:
  Eigen::MatrixXd Q_;
  Eigen::VectorXd c_;
};

// Coefficient of the identity block added to Q at assembly time; makes
// infeasible linearized iterates energetically unfavorable.
struct PenaltySpec {
  double alpha = 0.0;
};

// A smooth map g: R^k -> R^n whose restriction to {0,1}^k covers the feasible
// set S. Implementations supply the Jacobian for the linearization step and a
// `recover` that re-expresses an ambient point in canonical bits where the
// inverse g^{-1} is defined.
class Parametrisation {
 public:
  virtual ~Parametrisation() = default;

  virtual int dim_params() const = 0;  // k
  virtual int dim_ambient() const = 0; // n

  virtual Eigen::VectorXd evaluate(const BitVec& bits) const = 0;
  // smooth extension, for gradient checking
  virtual Eigen::VectorXd evaluate_real(const Eigen::VectorXd& x) const = 0;
  // row i = partial derivative of g with respect to x_i; shape k x n
  virtual Eigen::MatrixXd jacobian(const BitVec& bits) const = 0;
  virtual bool is_feasible(const Eigen::VectorXd& point) const = 0;
  // candidate_bits are the raw subproblem bits the point came from; blocks of
  // the encoding that cannot be recovered from the ambient point pass through.
  virtual std::optional<BitVec> recover(const Eigen::VectorXd& point,
                                        const BitVec& candidate_bits) const = 0;
};

// First-order model of g at the anchor: apply(x) = base + J' x with
// base = g(anchor) - J' anchor, so apply(anchor) == g(anchor) exactly.
struct Linearization {
  Eigen::VectorXd base;
  Eigen::MatrixXd jac; // k x n
  BitVec anchor;

  Eigen::VectorXd apply(const BitVec& x) const;
  Eigen::VectorXd apply_real(const Eigen::VectorXd& x) const;
};

Linearization linearize(const Parametrisation& param, const BitVec& anchor);

// QUBO of the local model: coupling = J (Q + alpha I) J', bias = J (c + 2 (Q
// + alpha I) g_c), offset = g_c' (Q + alpha I) g_c + c' g_c. The resulting
// energy equals the penalized objective at g^t(x) for every bit vector.
qubo::QuboInstance assemble_qubo(const QuadraticObjective& obj, const Linearization& lin,
                                 const PenaltySpec& penalty);

// Penalized objective <s, (Q + alpha I) s + c> at an ambient point.
double penalized_value(const QuadraticObjective& obj, const PenaltySpec& penalty,
                       const Eigen::VectorXd& point);

struct StepResult {
  BitVec next;
  double subproblem_energy = 0.0;
  double objective = 0.0;     // penalized objective at g(next)
  bool infeasible_step = false; // minimizer left S; anchor kept
  bool moved = false;           // next differs from the anchor
};

// One outer iteration from a feasible anchor: linearize, solve the QUBO,
// and either adopt the minimizer or keep the anchor. With reparametrisation
// the minimizer is re-encoded through `recover`; a recovered point whose true
// objective would increase (possible when recovery is inexact) is rejected,
// which keeps the objective sequence non-increasing.
StepResult step(const QuadraticObjective& obj, const Parametrisation& param, const BitVec& anchor,
                const PenaltySpec& penalty, const qubo::SolveConfig& solver_config,
                bool use_reparametrisation);

struct IterationConfig {
  int max_iters = 50;
  qubo::SolveConfig solver;
  bool stop_on_fixed_point = true;
  int restarts = 0;    // additional runs from random starting points
  int noise_flips = 0; // bits flipped before each linearization
  bool use_reparametrisation = true;
  std::uint64_t seed = 0;
};

struct IterationEntry {
  BitVec bits;
  Eigen::VectorXd point; // g(bits)
  double objective = 0.0;
  double subproblem_energy = 0.0;
  bool feasible_step = true;
  double wall_ms = 0.0;
};

struct RunRecord {
  std::vector<IterationEntry> trajectory; // entry 0 is the initial point
  BitVec best_bits;
  double best_objective = 0.0;
  int iterations = 0;
  bool feasible = true; // no step was flagged infeasible
  std::uint64_t seed = 0;
  double wall_ms = 0.0;

  nlohmann::json to_json() const;
};

// Full solver run. With restarts > 0 the run repeats from uniformly random
// starting points (seed + restart index) and the record with the lowest best
// objective is returned. With noise_flips > 0 the iterate is perturbed before
// each linearization and the best iterate over the trajectory is reported.
RunRecord run(const QuadraticObjective& obj, const Parametrisation& param, const BitVec& x0,
              const PenaltySpec& penalty, const IterationConfig& config);

enum class MajorizerVariant { H1, H2 };

// Empirical check that f(g(x)) <= f(g^t(x)) + alpha * h(x, anchor) over all
// binary x (exhaustive for k <= 12, sampled otherwise), with H = I.
// h1 = |x - anchor|^2, h2 = |J'(x - anchor)|^2.
bool penalty_majorizer_check(const QuadraticObjective& obj, const Parametrisation& param,
                             const BitVec& anchor, double alpha, MajorizerVariant variant,
                             std::uint64_t sample_seed = 0);

}  // namespace qucoop::engine

#endif
