#include "qucoop/qubo.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <future>
#include <istream>
#include <numeric>
#include <ostream>
#include <random>
#include <sstream>
#include <stdexcept>
#include <string>
#include <thread>

namespace qucoop::qubo {

QuboInstance::QuboInstance(const Eigen::MatrixXd& coupling_in, const Eigen::VectorXd& bias_in,
                           double offset_in)
    : bias_(bias_in), offset_(offset_in) {
  if (coupling_in.rows() != coupling_in.cols())
    throw std::invalid_argument("QuboInstance: coupling matrix must be square");
  if (coupling_in.rows() != bias_in.size())
    throw std::invalid_argument("QuboInstance: coupling/bias dimension mismatch");
  if (!coupling_in.allFinite() || !bias_in.allFinite() || !std::isfinite(offset_in))
    throw std::invalid_argument("QuboInstance: non-finite entry");
  coupling_ = 0.5 * (coupling_in + coupling_in.transpose());
}

double energy(const QuboInstance& instance, const BitVec& bits) {
  const int k = instance.k();
  if (static_cast<int>(bits.size()) != k)
    throw std::invalid_argument("energy: bit vector length does not match instance");
  Eigen::VectorXd x(k);
  for (int i = 0; i < k; ++i) x[i] = bits[i] ? 1.0 : 0.0;
  return x.dot(instance.coupling() * x) + instance.bias().dot(x) + instance.offset();
}

namespace {

void validate(const QuboInstance& instance, const SolveConfig& config) {
  if (config.num_reads < 1 || config.num_sweeps < 1)
    throw std::invalid_argument("SolveConfig: num_reads and num_sweeps must be >= 1");
  const bool auto_schedule = config.beta_start == 0.0 && config.beta_end == 0.0;
  if (!auto_schedule && (!(config.beta_start > 0.0) || !(config.beta_end > 0.0) ||
                         !(config.beta_start < config.beta_end)))
    throw std::invalid_argument("SolveConfig: need 0 < beta_start < beta_end");
  if (config.backend == Backend::Exact && instance.k() > 26)
    throw std::invalid_argument("Exact backend limited to k <= 26 variables, got k = " +
                                std::to_string(instance.k()));
}

// Local fields L[i] = sum_{j != i} C_ij b_j. Flipping bit i changes the
// energy by delta * (2 L[i] + C_ii + bias_i) with delta = 1 - 2 b_i.
struct FlipState {
  const QuboInstance* inst;
  BitVec bits;
  std::vector<double> local;
  double value; // energy including offset

  explicit FlipState(const QuboInstance& instance)
      : inst(&instance), bits(instance.k(), 0), local(instance.k(), 0.0),
        value(instance.offset()) {}

  double flip_delta(int i) const {
    const double delta = bits[i] ? -1.0 : 1.0;
    return delta * (2.0 * local[i] + inst->coupling()(i, i) + inst->bias()[i]);
  }

  void flip(int i) {
    const double delta = bits[i] ? -1.0 : 1.0;
    value += flip_delta(i);
    bits[i] ^= 1;
    const int k = inst->k();
    for (int j = 0; j < k; ++j)
      if (j != i) local[j] += delta * inst->coupling()(i, j);
  }
};

Sample solve_exact(const QuboInstance& instance) {
  const int k = instance.k();
  // Enumerate assignments in lexicographic order (bit 0 is the most
  // significant position), so the first strict minimum found is the
  // lexicographically smallest minimizer.
  FlipState state(instance);
  BitVec best_bits = state.bits;
  double best = state.value;
  const std::uint64_t total = std::uint64_t{1} << k;
  for (std::uint64_t v = 1; v < total; ++v) {
    const std::uint64_t changed = v ^ (v - 1); // trailing bits that flip on increment
    for (int bit = 0; bit < k; ++bit)
      if (changed & (std::uint64_t{1} << bit)) state.flip(k - 1 - bit);
    if (state.value < best) {
      best = state.value;
      best_bits = state.bits;
    }
  }
  return Sample{std::move(best_bits), best};
}

}  // namespace

namespace detail {

Sample sa_single_read(const QuboInstance& instance, int num_sweeps, double beta_start,
                      double beta_end, std::uint64_t seed, std::vector<double>* best_trace) {
  const int k = instance.k();
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);

  FlipState state(instance);
  for (int i = 0; i < k; ++i)
    if (rng() & 1) state.flip(i);

  std::vector<int> order(k);
  std::iota(order.begin(), order.end(), 0);
  std::shuffle(order.begin(), order.end(), rng);

  BitVec best_bits = state.bits;
  double best = state.value;
  const double ratio = beta_end / beta_start;
  for (int sweep = 0; sweep < num_sweeps; ++sweep) {
    const double frac = num_sweeps > 1 ? static_cast<double>(sweep) / (num_sweeps - 1) : 1.0;
    const double beta = beta_start * std::pow(ratio, frac);
    for (int i : order) {
      const double delta = state.flip_delta(i);
      if (delta <= 0.0 || unit(rng) < std::exp(-beta * delta)) {
        state.flip(i);
        if (state.value < best) {
          best = state.value;
          best_bits = state.bits;
        }
      }
    }
    if (best_trace) best_trace->push_back(best);
  }
  return Sample{std::move(best_bits), best};
}

}  // namespace detail

std::pair<double, double> default_beta_schedule(const QuboInstance& instance) {
  // hot end melts the largest single-flip move, cold end freezes the smallest
  const int k = instance.k();
  double max_scale = 0.0;
  double min_scale = std::numeric_limits<double>::infinity();
  for (int i = 0; i < k; ++i) {
    double scale = std::abs(instance.coupling()(i, i) + instance.bias()[i]);
    for (int j = 0; j < k; ++j)
      if (j != i) scale += 2.0 * std::abs(instance.coupling()(i, j));
    if (scale > 0.0) {
      max_scale = std::max(max_scale, scale);
      min_scale = std::min(min_scale, scale);
    }
  }
  if (max_scale == 0.0) return {0.1, 10.0}; // flat landscape
  const double beta_start = std::log(2.0) / max_scale;
  double beta_end = std::log(1e4) / min_scale;
  if (beta_end <= beta_start) beta_end = 100.0 * beta_start;
  return {beta_start, beta_end};
}

Sample solve(const QuboInstance& instance, const SolveConfig& config) {
  validate(instance, config);
  if (instance.k() == 0) return Sample{BitVec{}, instance.offset()};
  if (config.backend == Backend::Exact) return solve_exact(instance);

  double beta_start = config.beta_start;
  double beta_end = config.beta_end;
  if (beta_start == 0.0 && beta_end == 0.0)
    std::tie(beta_start, beta_end) = default_beta_schedule(instance);

  std::mt19937_64 seeder(config.seed);
  Sample best;
  bool have = false;
  for (int read = 0; read < config.num_reads; ++read) {
    const std::uint64_t read_seed = seeder();
    Sample s = detail::sa_single_read(instance, config.num_sweeps, beta_start, beta_end,
                                      read_seed, nullptr);
    if (!have || s.energy < best.energy) {
      best = std::move(s);
      have = true;
    }
  }
  return best;
}

std::vector<Sample> solve_batch(const std::vector<QuboInstance>& instances,
                                const SolveConfig& config) {
  for (const auto& inst : instances) validate(inst, config);

  std::vector<Sample> out(instances.size());
  const unsigned workers =
      std::min<unsigned>(std::max(1u, std::thread::hardware_concurrency()),
                         static_cast<unsigned>(instances.size()));
  if (workers <= 1) {
    for (std::size_t i = 0; i < instances.size(); ++i) {
      try {
        out[i] = solve(instances[i], config);
      } catch (const std::exception& e) {
        throw std::runtime_error("solve_batch: instance " + std::to_string(i) + ": " + e.what());
      }
    }
    return out;
  }

  std::atomic<std::size_t> next{0};
  std::vector<std::future<void>> futures;
  futures.reserve(workers);
  for (unsigned w = 0; w < workers; ++w) {
    futures.push_back(std::async(std::launch::async, [&] {
      for (std::size_t i = next.fetch_add(1); i < instances.size(); i = next.fetch_add(1))
        out[i] = solve(instances[i], config);
    }));
  }
  std::size_t index = 0;
  for (auto& f : futures) {
    try {
      f.get();
    } catch (const std::exception& e) {
      throw std::runtime_error("solve_batch: worker failure near instance " +
                               std::to_string(index) + ": " + e.what());
    }
    ++index;
  }
  return out;
}

void write_dump(const QuboInstance& instance, std::ostream& out) {
  const int k = instance.k();
  out << k << "\n";
  for (int i = 0; i < k; ++i)
    for (int j = i; j < k; ++j)
      if (instance.coupling()(i, j) != 0.0)
        out << i << " " << j << " " << instance.coupling()(i, j) << "\n";
  for (int i = 0; i < k; ++i)
    if (instance.bias()[i] != 0.0) out << "b " << i << " " << instance.bias()[i] << "\n";
  out << "offset " << instance.offset() << "\n";
}

QuboInstance read_dump(std::istream& in) {
  int k = -1;
  if (!(in >> k) || k < 0) throw std::runtime_error("qubo dump: missing variable count");
  Eigen::MatrixXd coupling = Eigen::MatrixXd::Zero(k, k);
  Eigen::VectorXd bias = Eigen::VectorXd::Zero(k);
  double offset = 0.0;
  std::string tok;
  while (in >> tok) {
    if (tok == "b") {
      int i;
      double v;
      if (!(in >> i >> v) || i < 0 || i >= k) throw std::runtime_error("qubo dump: bad bias line");
      bias[i] = v;
    } else if (tok == "offset") {
      if (!(in >> offset)) throw std::runtime_error("qubo dump: bad offset line");
    } else {
      int i = std::stoi(tok), j;
      double v;
      if (!(in >> j >> v) || i < 0 || j < i || j >= k)
        throw std::runtime_error("qubo dump: bad coupling line");
      coupling(i, j) = v;
      coupling(j, i) = v;
    }
  }
  return QuboInstance(coupling, bias, offset);
}

}  // namespace qucoop::qubo
