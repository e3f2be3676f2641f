#include "qucoop/engine.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <random>
#include <stdexcept>

#include "json.hpp"

namespace qucoop::engine {

namespace {

Eigen::VectorXd lift(const BitVec& bits) {
  Eigen::VectorXd x(bits.size());
  for (std::size_t i = 0; i < bits.size(); ++i) x[i] = bits[i] ? 1.0 : 0.0;
  return x;
}

double elapsed_ms(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count();
}

}  // namespace

QuadraticObjective::QuadraticObjective(const Eigen::MatrixXd& Q_in, const Eigen::VectorXd& c_in)
    : Q_(Q_in), c_(c_in) {
  if (Q_in.rows() != Q_in.cols() || Q_in.rows() != c_in.size())
    throw std::invalid_argument("QuadraticObjective: dimension mismatch");
  if (!Q_in.allFinite() || !c_in.allFinite())
    throw std::invalid_argument("QuadraticObjective: non-finite entry");
  const double asym = (Q_in - Q_in.transpose()).cwiseAbs().maxCoeff();
  if (asym > 1e-12) Q_ = 0.5 * (Q_in + Q_in.transpose());
}

double QuadraticObjective::value(const Eigen::VectorXd& point) const {
  return point.dot(Q_ * point) + c_.dot(point);
}

Eigen::VectorXd Linearization::apply(const BitVec& x) const {
  return base + jac.transpose() * lift(x);
}

Eigen::VectorXd Linearization::apply_real(const Eigen::VectorXd& x) const {
  return base + jac.transpose() * x;
}

Linearization linearize(const Parametrisation& param, const BitVec& anchor) {
  if (static_cast<int>(anchor.size()) != param.dim_params())
    throw std::invalid_argument("linearize: anchor length mismatch");
  Linearization lin;
  lin.jac = param.jacobian(anchor);
  lin.base = param.evaluate(anchor) - lin.jac.transpose() * lift(anchor);
  lin.anchor = anchor;
  return lin;
}

qubo::QuboInstance assemble_qubo(const QuadraticObjective& obj, const Linearization& lin,
                                 const PenaltySpec& penalty) {
  const int n = obj.dim();
  if (lin.base.size() != n || lin.jac.cols() != n)
    throw std::invalid_argument("assemble_qubo: objective/linearization dimension mismatch");
  Eigen::MatrixXd q_eff = obj.Q();
  if (penalty.alpha != 0.0) q_eff.diagonal().array() += penalty.alpha;

  const Eigen::MatrixXd jq = lin.jac * q_eff; // k x n
  Eigen::MatrixXd coupling = jq * lin.jac.transpose();
  Eigen::VectorXd bias = lin.jac * obj.c() + 2.0 * (jq * lin.base);
  const double offset = lin.base.dot(q_eff * lin.base) + obj.c().dot(lin.base);
  return qubo::QuboInstance(coupling, bias, offset);
}

double penalized_value(const QuadraticObjective& obj, const PenaltySpec& penalty,
                       const Eigen::VectorXd& point) {
  return obj.value(point) + penalty.alpha * point.squaredNorm();
}

StepResult step(const QuadraticObjective& obj, const Parametrisation& param, const BitVec& anchor,
                const PenaltySpec& penalty, const qubo::SolveConfig& solver_config,
                bool use_reparametrisation) {
  const Linearization lin = linearize(param, anchor);
  const qubo::QuboInstance instance = assemble_qubo(obj, lin, penalty);
  const qubo::Sample sample = qubo::solve(instance, solver_config);

  StepResult result;
  result.subproblem_energy = sample.energy;

  const Eigen::VectorXd point = lin.apply(sample.bits);
  if (!param.is_feasible(point)) {
    result.next = anchor;
    result.infeasible_step = true;
    result.objective = penalized_value(obj, penalty, param.evaluate(anchor));
    return result;
  }

  BitVec next = sample.bits;
  if (use_reparametrisation) {
    auto recovered = param.recover(point, sample.bits);
    if (!recovered) {
      result.next = anchor;
      result.infeasible_step = true;
      result.objective = penalized_value(obj, penalty, param.evaluate(anchor));
      return result;
    }
    next = std::move(*recovered);
    const double f_next = penalized_value(obj, penalty, param.evaluate(next));
    const double f_cur = penalized_value(obj, penalty, param.evaluate(anchor));
    if (f_next > f_cur) {
      // recovery was inexact and the true objective would rise; keep the anchor
      result.next = anchor;
      result.objective = f_cur;
      return result;
    }
    result.objective = f_next;
  } else {
    result.objective = penalized_value(obj, penalty, param.evaluate(next));
  }
  result.next = std::move(next);
  result.moved = result.next != anchor;
  return result;
}

namespace {

RunRecord run_single(const QuadraticObjective& obj, const Parametrisation& param, const BitVec& x0,
                     const PenaltySpec& penalty, const IterationConfig& config,
                     std::uint64_t noise_seed) {
  const auto t0 = std::chrono::steady_clock::now();
  std::mt19937_64 noise_rng(noise_seed);

  RunRecord record;
  record.seed = config.solver.seed;

  BitVec current = x0;
  {
    IterationEntry init;
    init.bits = current;
    init.point = param.evaluate(current);
    init.objective = penalized_value(obj, penalty, init.point);
    init.subproblem_energy = init.objective;
    init.wall_ms = elapsed_ms(t0);
    record.trajectory.push_back(std::move(init));
  }
  record.best_bits = current;
  record.best_objective = record.trajectory.front().objective;

  const bool noisy = config.noise_flips > 0;
  for (int iter = 0; iter < config.max_iters; ++iter) {
    BitVec anchor = current;
    if (noisy) {
      // flip noise_flips distinct uniformly random indices
      const int k = static_cast<int>(anchor.size());
      const int flips = std::min(config.noise_flips, k);
      std::vector<int> idx(k);
      std::iota(idx.begin(), idx.end(), 0);
      std::shuffle(idx.begin(), idx.end(), noise_rng);
      for (int f = 0; f < flips; ++f) anchor[idx[f]] ^= 1;
    }

    const StepResult sr =
        step(obj, param, anchor, penalty, config.solver, config.use_reparametrisation);

    IterationEntry entry;
    entry.bits = sr.next;
    entry.point = param.evaluate(sr.next);
    entry.objective = sr.objective;
    entry.subproblem_energy = sr.subproblem_energy;
    entry.feasible_step = !sr.infeasible_step;
    entry.wall_ms = elapsed_ms(t0);
    record.trajectory.push_back(entry);
    record.iterations = iter + 1;
    if (sr.infeasible_step) record.feasible = false;

    if (entry.objective < record.best_objective) {
      record.best_objective = entry.objective;
      record.best_bits = sr.next;
    }

    const double improvement = record.trajectory[record.trajectory.size() - 2].objective -
                               entry.objective;
    const bool fixed_point = sr.next == current;
    current = sr.next;
    if (!noisy) {
      if (config.stop_on_fixed_point && fixed_point) break;
      if (improvement < 1e-12) break;
    }
  }
  record.wall_ms = elapsed_ms(t0);
  return record;
}

}  // namespace

RunRecord run(const QuadraticObjective& obj, const Parametrisation& param, const BitVec& x0,
              const PenaltySpec& penalty, const IterationConfig& config) {
  if (static_cast<int>(x0.size()) != param.dim_params())
    throw std::invalid_argument("run: x0 length mismatch");

  IterationConfig base_config = config;
  RunRecord best = run_single(obj, param, x0, penalty, base_config, config.seed);
  for (int r = 1; r <= config.restarts; ++r) {
    const std::uint64_t restart_seed = config.seed + static_cast<std::uint64_t>(r);
    std::mt19937_64 rng(restart_seed);
    BitVec start(param.dim_params());
    for (auto& b : start) b = static_cast<std::uint8_t>(rng() & 1);
    IterationConfig rc = config;
    rc.solver.seed = config.solver.seed + static_cast<std::uint64_t>(r);
    RunRecord rec = run_single(obj, param, start, penalty, rc, restart_seed);
    if (rec.best_objective < best.best_objective) best = std::move(rec);
  }
  return best;
}

nlohmann::json RunRecord::to_json() const {
  nlohmann::json iters = nlohmann::json::array();
  for (const auto& e : trajectory) {
    nlohmann::json bits = nlohmann::json::array();
    for (auto b : e.bits) bits.push_back(static_cast<int>(b));
    iters.push_back({{"bits", bits},
                     {"objective", e.objective},
                     {"subproblem_energy", e.subproblem_energy},
                     {"feasible", e.feasible_step},
                     {"wall_ms", e.wall_ms}});
  }
  nlohmann::json best_bits_json = nlohmann::json::array();
  for (auto b : best_bits) best_bits_json.push_back(static_cast<int>(b));
  return {{"iterations_log", iters},
          {"summary",
           {{"best_objective", best_objective},
            {"best_bits", best_bits_json},
            {"iterations", iterations},
            {"feasible", feasible},
            {"seed", seed},
            {"wall_ms", wall_ms}}}};
}

bool penalty_majorizer_check(const QuadraticObjective& obj, const Parametrisation& param,
                             const BitVec& anchor, double alpha, MajorizerVariant variant,
                             std::uint64_t sample_seed) {
  const int k = param.dim_params();
  const Linearization lin = linearize(param, anchor);
  const Eigen::VectorXd anchor_real = lift(anchor);

  auto holds_at = [&](const BitVec& x) {
    const Eigen::VectorXd xr = lift(x);
    const double lhs = obj.value(param.evaluate(x));
    const Eigen::VectorXd diff = xr - anchor_real;
    double h = 0.0;
    if (variant == MajorizerVariant::H1)
      h = diff.squaredNorm();
    else
      h = (lin.jac.transpose() * diff).squaredNorm();
    const double rhs = obj.value(lin.apply(x)) + alpha * h;
    return lhs <= rhs + 1e-9 * (1.0 + std::abs(rhs));
  };

  if (k <= 12) {
    BitVec x(k, 0);
    const std::uint64_t total = std::uint64_t{1} << k;
    for (std::uint64_t v = 0; v < total; ++v) {
      for (int i = 0; i < k; ++i) x[i] = static_cast<std::uint8_t>((v >> i) & 1);
      if (!holds_at(x)) return false;
    }
    return true;
  }
  std::mt19937_64 rng(sample_seed);
  BitVec x(k, 0);
  for (int s = 0; s < 10000; ++s) {
    for (int i = 0; i < k; ++i) x[i] = static_cast<std::uint8_t>(rng() & 1);
    if (!holds_at(x)) return false;
  }
  return true;
}

}  // namespace qucoop::engine
