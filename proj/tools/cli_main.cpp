#include <atomic>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <future>
#include <iostream>
#include <map>
#include <optional>
#include <random>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"

#include "qucoop/engine.hpp"
#include "qucoop/perm.hpp"
#include "qucoop/qap.hpp"
#include "qucoop/qubo.hpp"
#include "qucoop/registration.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace qucoop;

namespace {

constexpr int kExitUsage = 1;
constexpr int kExitParse = 2;
constexpr int kExitSolver = 3;

struct SolverFlags {
  std::string solver = "sa";
  int reads = 50;
  int sweeps = 1000;
  int max_iters = 50;
  int restarts = 0;
  int noise_flips = 0;
  double alpha = -1.0; // < 0 = default_alpha
  std::uint64_t seed = 0;
  int num_seeds = 1;
  std::string out;
  bool omit_timing = false;

  void attach(CLI::App* cmd) {
    cmd->add_option("--solver", solver, "QUBO backend: sa or exact")
        ->check(CLI::IsMember({"sa", "exact"}));
    cmd->add_option("--reads", reads, "annealing reads per solve")->check(CLI::PositiveNumber);
    cmd->add_option("--sweeps", sweeps, "sweeps per read");
    cmd->add_option("--max-iters", max_iters, "iteration budget per run");
    cmd->add_option("--restarts", restarts, "additional runs from random starts");
    cmd->add_option("--noise-flips", noise_flips, "bits flipped per iteration");
    cmd->add_option("--alpha", alpha, "penalty factor (default: |lowest eigenvalue of A (x) B|)");
    cmd->add_option("--seed", seed, "base random seed");
    cmd->add_option("--seeds", num_seeds, "number of seeds to sweep")->check(CLI::PositiveNumber);
    cmd->add_option("--out", out, "output file (written atomically)");
    cmd->add_flag("--omit-timing", omit_timing, "write wall_ms as 0 for reproducible output");
  }

  qubo::SolveConfig solve_config(std::uint64_t run_seed) const {
    qubo::SolveConfig config;
    config.backend = solver == "exact" ? qubo::Backend::Exact : qubo::Backend::SimulatedAnnealing;
    config.num_reads = reads;
    config.num_sweeps = sweeps;
    config.seed = run_seed;
    return config;
  }

  engine::IterationConfig iteration_config(std::uint64_t run_seed) const {
    engine::IterationConfig config;
    config.max_iters = max_iters;
    config.solver = solve_config(run_seed);
    config.restarts = restarts;
    config.noise_flips = noise_flips;
    config.seed = run_seed;
    return config;
  }
};

int worker_count(int flag_value) {
  if (flag_value > 0) return flag_value;
  if (const char* env = std::getenv("QUCOOP_WORKERS")) {
    const int parsed = std::atoi(env);
    if (parsed > 0) return parsed;
  }
  return static_cast<int>(std::max(1u, std::thread::hardware_concurrency()));
}

void atomic_write(const std::string& path, const std::string& content) {
  const fs::path target(path);
  fs::path tmp = target;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error("cannot open " + tmp.string());
    out << content;
  }
  fs::rename(tmp, target);
}

void emit(const std::string& out_path, const std::string& content) {
  if (out_path.empty())
    std::cout << content;
  else
    atomic_write(out_path, content);
}

std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::map<std::string, double> load_optima(const std::string& path) {
  std::map<std::string, double> out;
  if (path.empty()) return out;
  const json j = json::parse(read_file(path));
  for (auto it = j.begin(); it != j.end(); ++it) out[it.key()] = it.value().get<double>();
  return out;
}

struct QapRunResult {
  std::string name;
  int n = 0;
  std::optional<double> known_optimal;
  double achieved = 0.0;
  double gap_percent = 0.0;
  int iterations = 0;
  double wall_ms = 0.0;
  std::uint64_t seed = 0;
  bool feasible = true;
  std::vector<int> image; // best permutation, 0-indexed
};

double gap_percent_vs(double achieved, double optimal) {
  if (optimal == 0.0) return achieved == 0.0 ? 0.0 : std::numeric_limits<double>::infinity();
  return 100.0 * (achieved - optimal) / std::abs(optimal);
}

QapRunResult run_qap_once(const qap::QapInstance& instance, const SolverFlags& flags,
                          std::uint64_t seed) {
  const double alpha = flags.alpha >= 0.0 ? flags.alpha : qap::default_alpha(instance);
  const auto problem = qap::build_composite(instance, alpha, qap::Convention::Qaplib);
  const auto& param = *problem.parametrisation;

  const BitVec x0(param.dim_params(), 0);
  const engine::RunRecord rec = engine::run(problem.objective, param, x0, engine::PenaltySpec{0.0},
                                            flags.iteration_config(seed));

  const int n = instance.n();
  const Eigen::MatrixXd P = perm::unvec_rowmajor(param.evaluate(rec.best_bits), n, n);

  QapRunResult result;
  result.name = instance.name;
  result.n = n;
  result.known_optimal = instance.known_optimal;
  result.achieved = qap::kb_objective(instance, P);
  result.gap_percent = instance.known_optimal
                           ? gap_percent_vs(result.achieved, *instance.known_optimal)
                           : 0.0;
  result.iterations = rec.iterations;
  result.wall_ms = rec.wall_ms;
  result.seed = seed;
  result.feasible = rec.feasible;
  result.image = perm::matrix_to_image(P);
  return result;
}

QapRunResult best_over_seeds(const qap::QapInstance& instance, const SolverFlags& flags) {
  QapRunResult best;
  double total_ms = 0.0;
  for (int s = 0; s < flags.num_seeds; ++s) {
    QapRunResult r = run_qap_once(instance, flags, flags.seed + static_cast<std::uint64_t>(s));
    total_ms += r.wall_ms;
    if (s == 0 || r.achieved < best.achieved) best = std::move(r);
  }
  best.wall_ms = total_ms;
  return best;
}

json result_to_json(const QapRunResult& r, bool omit_timing) {
  json j{{"name", r.name},
         {"n", r.n},
         {"achieved", r.achieved},
         {"iterations", r.iterations},
         {"wall_ms", omit_timing ? 0.0 : r.wall_ms},
         {"seed", r.seed},
         {"feasible", r.feasible}};
  if (r.known_optimal) {
    j["known_optimal"] = *r.known_optimal;
    j["gap_percent"] = r.gap_percent;
  }
  json image = json::array();
  std::ostringstream line;
  for (std::size_t i = 0; i < r.image.size(); ++i) {
    image.push_back(r.image[i] + 1); // 1-indexed image list
    line << (i ? " " : "") << r.image[i] + 1;
  }
  j["assignment"] = image;
  j["assignment_line"] = line.str();
  return j;
}

std::string csv_row(const QapRunResult& r, bool omit_timing) {
  std::ostringstream row;
  row.precision(12);
  row << r.name << "," << r.n << ",";
  if (r.known_optimal) row << *r.known_optimal;
  row << "," << r.achieved << ",";
  if (r.known_optimal) row << r.gap_percent;
  row << "," << r.iterations << "," << (omit_timing ? 0.0 : r.wall_ms) << "," << r.seed << "\n";
  return row.str();
}

int cmd_qap_solve(const std::string& path, const SolverFlags& flags, const std::string& optima) {
  qap::QapInstance instance =
      qap::parse_qaplib(read_file(path), fs::path(path).stem().string());
  const auto known = load_optima(optima);
  if (auto it = known.find(instance.name); it != known.end()) instance.known_optimal = it->second;

  const QapRunResult best = best_over_seeds(instance, flags);
  emit(flags.out, result_to_json(best, flags.omit_timing).dump(2) + "\n");
  return 0;
}

int cmd_qap_bench(const std::string& dir, const SolverFlags& flags, const std::string& optima,
                  int workers_flag) {
  std::vector<fs::path> files;
  for (const auto& entry : fs::directory_iterator(dir))
    if (entry.is_regular_file() && entry.path().extension() == ".dat")
      files.push_back(entry.path());
  std::sort(files.begin(), files.end());

  const auto known = load_optima(optima);

  std::vector<qap::QapInstance> instances;
  instances.reserve(files.size());
  for (const auto& file : files) {
    qap::QapInstance inst = qap::parse_qaplib(read_file(file.string()), file.stem().string());
    if (auto it = known.find(inst.name); it != known.end()) inst.known_optimal = it->second;
    instances.push_back(std::move(inst));
  }

  struct Task {
    std::size_t file_index;
    std::uint64_t seed;
  };
  std::vector<Task> tasks;
  for (std::size_t f = 0; f < instances.size(); ++f)
    for (int s = 0; s < flags.num_seeds; ++s)
      tasks.push_back({f, flags.seed + static_cast<std::uint64_t>(s)});

  std::vector<QapRunResult> results(tasks.size());
  const int workers =
      std::min<int>(worker_count(workers_flag), std::max<int>(static_cast<int>(tasks.size()), 1));
  std::atomic<std::size_t> next{0};
  std::vector<std::future<void>> futures;
  for (int w = 0; w < workers; ++w)
    futures.push_back(std::async(std::launch::async, [&] {
      for (std::size_t t = next.fetch_add(1); t < tasks.size(); t = next.fetch_add(1))
        results[t] = run_qap_once(instances[tasks[t].file_index], flags, tasks[t].seed);
    }));
  for (auto& f : futures) f.get();

  std::ostringstream csv;
  csv << "name,n,known_optimal,achieved,gap_percent,iterations,wall_ms,seed\n";
  double gap_sum = 0.0;
  int gap_count = 0;
  for (const auto& r : results) {
    csv << csv_row(r, flags.omit_timing);
    if (r.known_optimal) {
      gap_sum += r.gap_percent;
      ++gap_count;
    }
  }
  csv.precision(12);
  csv << "summary,,,," << (gap_count ? gap_sum / gap_count : 0.0) << ",,,\n";
  emit(flags.out, csv.str());
  return 0;
}

int cmd_qap_synth(int n, int instances, const SolverFlags& flags) {
  int recovered = 0, valid = 0, total = 0;
  json runs = json::array();
  for (int inst = 0; inst < instances; ++inst) {
    const auto synth = qap::synth_instance(n, 1000 * (inst + 1) + 7);
    const double alpha = flags.alpha >= 0.0 ? flags.alpha : qap::default_alpha(synth.instance);
    const auto problem =
        qap::build_composite(synth.instance, alpha, qap::Convention::GraphMatching);
    const auto& param = *problem.parametrisation;
    for (int s = 0; s < flags.num_seeds; ++s) {
      const engine::RunRecord rec =
          engine::run(problem.objective, param, BitVec(param.dim_params(), 0),
                      engine::PenaltySpec{0.0},
                      flags.iteration_config(flags.seed + static_cast<std::uint64_t>(s)));
      const Eigen::MatrixXd P = perm::unvec_rowmajor(param.evaluate(rec.best_bits), n, n);
      const double gm = qap::gm_objective(synth.instance, P);
      const bool is_valid = perm::is_valid_permutation(P);
      ++total;
      if (gm <= 1e-9) ++recovered;
      if (is_valid) ++valid;
      runs.push_back({{"instance", inst},
                      {"seed", flags.seed + s},
                      {"gm_objective", gm},
                      {"valid", is_valid}});
    }
  }
  const json report{{"n", n},
                    {"instances", instances},
                    {"seeds", flags.num_seeds},
                    {"recovered", recovered},
                    {"valid", valid},
                    {"total", total},
                    {"recovery_rate", total ? static_cast<double>(recovered) / total : 0.0},
                    {"runs", runs}};
  emit(flags.out, report.dump(2) + "\n");
  return 0;
}

int cmd_register(const std::string& ref_path, const std::string& tmpl_path,
                 const SolverFlags& flags, int m_bits, double beta,
                 const std::string& gt_rotation_path) {
  const Eigen::MatrixXd X = registration::load_points(ref_path);
  const Eigen::MatrixXd Y = registration::load_points(tmpl_path);
  if (X.rows() != Y.rows()) throw CLI::ValidationError("point sets have different dimensions");
  if (X.rows() != 2 && X.rows() != 3)
    throw CLI::ValidationError("point dimension must be 2 or 3, got " + std::to_string(X.rows()));

  const registration::PointSetPair pair = registration::PointSetPair::make(X, Y);

  registration::RegistrationConfig config;
  config.max_iters = flags.max_iters;
  config.m = m_bits;
  config.alpha = flags.alpha;
  config.beta = beta;
  config.noise_flips = flags.noise_flips;
  config.restarts = flags.restarts;
  config.solver = flags.solve_config(flags.seed);

  registration::RegistrationResult best;
  double best_objective = std::numeric_limits<double>::infinity();
  for (int s = 0; s < flags.num_seeds; ++s) {
    config.seed = flags.seed + static_cast<std::uint64_t>(s);
    registration::RegistrationResult r = registration::register_sets(pair, config);
    if (s == 0 || r.best_objective < best_objective) {
      best_objective = r.best_objective;
      best = std::move(r);
    }
  }

  json rotation = json::array();
  for (int r = 0; r < best.rotation.rows(); ++r)
    for (int c = 0; c < best.rotation.cols(); ++c) rotation.push_back(best.rotation(r, c));
  json image = json::array();
  std::ostringstream perm_line;
  for (std::size_t i = 0; i < best.permutation.size(); ++i) {
    image.push_back(best.permutation[i] + 1);
    perm_line << (i ? " " : "") << best.permutation[i] + 1;
  }

  json report{{"d", pair.d},
              {"n", pair.n()},
              {"R", rotation},
              {"permutation", image},
              {"permutation_line", perm_line.str()},
              {"objective_trajectory", best.objective_trajectory},
              {"best_objective", best.best_objective},
              {"residual", best.residual},
              {"wall_ms", flags.omit_timing ? 0.0 : best.wall_ms}};
  if (!gt_rotation_path.empty()) {
    const json gt = json::parse(read_file(gt_rotation_path));
    const int d = pair.d;
    Eigen::MatrixXd R_gt(d, d);
    if (static_cast<int>(gt.size()) != d * d)
      throw CLI::ValidationError("ground-truth rotation must have d*d entries");
    for (int r = 0; r < d; ++r)
      for (int c = 0; c < d; ++c) R_gt(r, c) = gt[r * d + c].get<double>();
    report["rotation_error_deg"] = registration::rotation_error_deg(best.rotation, R_gt);
  }
  emit(flags.out, report.dump(2) + "\n");
  return 0;
}

struct SelftestCheck {
  std::string name;
  bool passed;
};

int cmd_selftest(bool quick, bool inject_fault) {
  std::vector<SelftestCheck> checks;

  { // permutation round trip
    bool ok = true;
    const int n_max = quick ? 4 : 6;
    for (int n = 2; n <= n_max && ok; ++n) {
      perm::TranspositionOrder order(n);
      std::vector<int> image(n);
      std::iota(image.begin(), image.end(), 0);
      do {
        const Eigen::MatrixXd P = perm::image_to_matrix(image);
        const BitVec bits = perm::decompose(P, order);
        if (!perm::apply(perm::PermutationCode(order, bits)).isApprox(P)) {
          ok = false;
          break;
        }
      } while (std::next_permutation(image.begin(), image.end()));
    }
    checks.push_back({"permutation round trip", ok});
  }

  { // QUBO assembly fidelity on a planted instance
    bool ok = true;
    const auto synth = qap::synth_instance(quick ? 3 : 4, 11);
    const auto problem = qap::build_composite(synth.instance, qap::default_alpha(synth.instance),
                                              qap::Convention::GraphMatching);
    const auto& param = *problem.parametrisation;
    const int k = param.dim_params();
    std::mt19937_64 rng(5);
    BitVec anchor(k);
    for (auto& b : anchor) b = static_cast<std::uint8_t>(rng() & 1);
    const engine::Linearization lin = engine::linearize(param, anchor);
    const qubo::QuboInstance inst =
        engine::assemble_qubo(problem.objective, lin, engine::PenaltySpec{0.0});
    for (std::uint64_t v = 0; v < (std::uint64_t{1} << k) && ok; ++v) {
      BitVec x(k);
      for (int i = 0; i < k; ++i) x[i] = static_cast<std::uint8_t>((v >> i) & 1);
      const double direct = problem.objective.value(lin.apply(x));
      if (std::abs(qubo::energy(inst, x) - direct) > 1e-9 * (1.0 + std::abs(direct))) ok = false;
    }
    checks.push_back({"qubo assembly fidelity", ok});
  }

  { // SA against the exact backend
    std::mt19937_64 rng(17);
    std::uniform_real_distribution<double> u(-1.0, 1.0);
    const int k = 10;
    const int reps = quick ? 10 : 30;
    int hits = 0;
    for (int rep = 0; rep < reps; ++rep) {
      Eigen::MatrixXd M(k, k);
      Eigen::VectorXd b(k);
      for (int i = 0; i < k; ++i) {
        b[i] = u(rng);
        for (int j = 0; j < k; ++j) M(i, j) = u(rng);
      }
      const qubo::QuboInstance inst(M, b, 0.0);
      qubo::SolveConfig sa;
      sa.num_reads = 20;
      sa.num_sweeps = 500;
      sa.seed = static_cast<std::uint64_t>(rep);
      const double exact =
          qubo::solve(inst, qubo::SolveConfig{.backend = qubo::Backend::Exact}).energy;
      if (qubo::solve(inst, sa).energy <= exact + 1e-9) ++hits;
    }
    checks.push_back({"sa matches exact backend", hits >= reps * 9 / 10});
  }

  { // disjoint conjugate cycles vs validity
    bool ok = true;
    std::mt19937_64 rng(23);
    for (int n : {3, 4}) {
      perm::TranspositionOrder order(n);
      const int k = order.k();
      for (int rep = 0; rep < (quick ? 300 : 2000) && ok; ++rep) {
        BitVec anchor(k), candidate(k);
        for (auto& b : anchor) b = static_cast<std::uint8_t>(rng() & 1);
        for (auto& b : candidate) b = static_cast<std::uint8_t>(rng() & 1);
        const bool predicted = perm::disjoint_conjugates_check(anchor, candidate, order);
        const bool valid = perm::is_valid_permutation(
            perm::linearized_iterate(perm::PermutationCode(order, anchor), candidate));
        if (predicted != valid) ok = false;
      }
    }
    checks.push_back({"conjugate cycle characterization", ok});
  }

  { // rotation jacobian against finite differences
    bool ok = true;
    std::mt19937_64 rng(31);
    std::uniform_real_distribution<double> u(-3.0, 3.0);
    for (int d : {2, 3}) {
      const int k_r = d == 2 ? 1 : 3;
      for (int rep = 0; rep < (quick ? 10 : 50) && ok; ++rep) {
        Eigen::VectorXd y(k_r);
        for (int j = 0; j < k_r; ++j) y[j] = u(rng);
        const Eigen::MatrixXd J = registration::rotation_jacobian(y, d);
        const double h = 1e-6;
        for (int j = 0; j < k_r; ++j) {
          Eigen::VectorXd yp = y, ym = y;
          yp[j] += h;
          ym[j] -= h;
          const Eigen::MatrixXd fd =
              (registration::rotation_matrix(yp, d) - registration::rotation_matrix(ym, d)) /
              (2.0 * h);
          for (int r = 0; r < d; ++r)
            for (int c = 0; c < d; ++c)
              if (std::abs(J(j, r * d + c) - fd(r, c)) > 1e-5 * (1.0 + std::abs(J(j, r * d + c))))
                ok = false;
        }
      }
    }
    checks.push_back({"rotation jacobian", ok});
  }

  if (inject_fault) checks.push_back({"injected fault", false});

  bool all_ok = true;
  int passed = 0;
  for (const auto& check : checks) {
    std::printf("%-36s %s\n", check.name.c_str(), check.passed ? "PASS" : "FAIL");
    all_ok = all_ok && check.passed;
    if (check.passed) ++passed;
  }
  std::printf("%d/%zu checks passed\n", passed, checks.size());
  return all_ok ? 0 : kExitSolver;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"composite binary optimization via iterated QUBO subproblems"};
  app.require_subcommand(1);

  SolverFlags flags;
  std::string input_path, tmpl_path, optima_path, gt_rotation_path;
  int workers = 0;
  int synth_n = 5, synth_instances = 5;
  int m_bits = 0;
  double beta = -1.0;
  bool quick = false, inject_fault = false;

  auto* solve_cmd = app.add_subcommand("qap-solve", "solve one QAPLIB .dat instance");
  solve_cmd->add_option("file", input_path, "QAPLIB .dat file")
      ->required()
      ->check(CLI::ExistingFile);
  solve_cmd->add_option("--optima", optima_path, "JSON sidecar of known optima");
  flags.attach(solve_cmd);

  auto* bench_cmd = app.add_subcommand("qap-bench", "run every .dat in a directory");
  bench_cmd->add_option("dir", input_path, "directory of .dat files")
      ->required()
      ->check(CLI::ExistingDirectory);
  bench_cmd->add_option("--optima", optima_path, "JSON sidecar of known optima");
  bench_cmd->add_option("--workers", workers, "parallel worker cap (env QUCOOP_WORKERS)");
  flags.attach(bench_cmd);

  auto* synth_cmd = app.add_subcommand("qap-synth", "planted-isomorphism recovery experiment");
  synth_cmd->add_option("--n", synth_n, "problem size");
  synth_cmd->add_option("--instances", synth_instances, "instances to generate");
  flags.attach(synth_cmd);

  auto* register_cmd = app.add_subcommand("register", "rigid point-set registration");
  register_cmd->add_option("reference", input_path, "reference point set (CSV or JSON)")
      ->required()
      ->check(CLI::ExistingFile);
  register_cmd->add_option("template", tmpl_path, "template point set (CSV or JSON)")
      ->required()
      ->check(CLI::ExistingFile);
  register_cmd->add_option("--m-bits", m_bits, "bits per rotation coordinate");
  register_cmd->add_option("--beta", beta, "rotation penalty (default 0.1*|Y|_F^2)");
  register_cmd->add_option("--gt-rotation", gt_rotation_path,
                           "JSON row-major ground-truth rotation for error reporting");
  flags.attach(register_cmd);

  auto* selftest_cmd = app.add_subcommand("selftest", "run the invariant suites");
  selftest_cmd->add_flag("--quick", quick, "restrict to the small exhaustive suites");
  selftest_cmd->add_flag("--inject-fault", inject_fault, "force one failing check (test hook)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : kExitUsage;
  }

  try {
    if (solve_cmd->parsed()) return cmd_qap_solve(input_path, flags, optima_path);
    if (bench_cmd->parsed()) return cmd_qap_bench(input_path, flags, optima_path, workers);
    if (synth_cmd->parsed()) return cmd_qap_synth(synth_n, synth_instances, flags);
    if (register_cmd->parsed())
      return cmd_register(input_path, tmpl_path, flags, m_bits, beta, gt_rotation_path);
    if (selftest_cmd->parsed()) return cmd_selftest(quick, inject_fault);
  } catch (const qap::ParseError& e) {
    std::cerr << "parse error: " << e.what() << "\n";
    return kExitParse;
  } catch (const CLI::ValidationError& e) {
    std::cerr << "usage error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitSolver;
  }
  return kExitUsage;
}
