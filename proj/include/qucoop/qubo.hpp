#ifndef QUCOOP_QUBO_HPP
#define QUCOOP_QUBO_HPP

#include <cstdint>
#include <iosfwd>
#include <vector>

#include <Eigen/Dense>

namespace qucoop {

// Binary assignment vector, one entry per QUBO variable (values 0 or 1).
using BitVec = std::vector<std::uint8_t>;

namespace qubo {

// minimize  bits' * coupling * bits + bias' * bits + offset  over bits in {0,1}^k.
// The offset is irrelevant for the argmin but carried so that reported
// energies equal the objective values of the problem the QUBO came from.
class QuboInstance {
 public:
  // Symmetrizes `coupling_in` as (M + M')/2. Rejects non-finite entries and
  // dimension mismatch between matrix and bias.
  QuboInstance(const Eigen::MatrixXd& coupling_in, const Eigen::VectorXd& bias_in,
               double offset_in = 0.0);

  const Eigen::MatrixXd& coupling() const { return coupling_; }
  const Eigen::VectorXd& bias() const { return bias_; }
  double offset() const { return offset_; }
  int k() const { return static_cast<int>(bias_.size()); }

 private:
  Eigen::MatrixXd coupling_;
  Eigen::VectorXd bias_;
  double offset_;
};

enum class Backend { SimulatedAnnealing, Exact };

struct SolveConfig {
  Backend backend = Backend::SimulatedAnnealing;
  int num_reads = 50;    // independent annealing runs
  int num_sweeps = 1000; // full-variable sweeps per read
  // geometric inverse-temperature ramp; both zero = derive the range from
  // the instance's single-flip energy scale
  double beta_start = 0.0;
  double beta_end = 0.0;
  std::uint64_t seed = 0;
};

// The schedule used when the config leaves beta_start/beta_end at zero.
std::pair<double, double> default_beta_schedule(const QuboInstance& instance);

struct Sample {
  BitVec bits;
  double energy = 0.0; // includes the instance offset
};

double energy(const QuboInstance& instance, const BitVec& bits);

// Exact backend enumerates all 2^k assignments (k <= 26) and breaks energy
// ties by the lexicographically smallest bit vector. SimulatedAnnealing
// returns the best sample over num_reads independent reads; deterministic
// for a fixed (instance, config).
Sample solve(const QuboInstance& instance, const SolveConfig& config);

std::vector<Sample> solve_batch(const std::vector<QuboInstance>& instances,
                                const SolveConfig& config);

// Debug dump: line "k", one "i j value" per nonzero upper-triangular coupling
// entry, one "b i value" per nonzero bias, then "offset value". 0-based indices.
void write_dump(const QuboInstance& instance, std::ostream& out);
QuboInstance read_dump(std::istream& in);

namespace detail {
// One annealing read; fills `best_trace` (if non-null) with the best energy
// seen after each sweep. Exposed for the monotonicity tests.
Sample sa_single_read(const QuboInstance& instance, int num_sweeps, double beta_start,
                      double beta_end, std::uint64_t seed, std::vector<double>* best_trace);
}  // namespace detail

}  // namespace qubo
}  // namespace qucoop

#endif
