#include "qucoop/qap.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <numeric>
#include <random>
#include <sstream>
#include <stdexcept>
#include <vector>

namespace qucoop::qap {

ParseError::ParseError(const std::string& message, std::size_t byte_offset)
    : std::runtime_error(message + " (byte " + std::to_string(byte_offset) + ")"),
      byte_offset_(byte_offset) {}

namespace {

struct Tokenizer {
  const std::string& text;
  std::size_t pos = 0;

  // next whitespace-separated token; returns false at end of input
  bool next(std::string& token, std::size_t& offset) {
    while (pos < text.size() && std::isspace(static_cast<unsigned char>(text[pos]))) ++pos;
    if (pos >= text.size()) return false;
    offset = pos;
    const std::size_t start = pos;
    while (pos < text.size() && !std::isspace(static_cast<unsigned char>(text[pos]))) ++pos;
    token = text.substr(start, pos - start);
    return true;
  }

  double number(const char* what) {
    std::string token;
    std::size_t offset;
    if (!next(token, offset))
      throw ParseError(std::string("unexpected end of input while reading ") + what, text.size());
    try {
      std::size_t used = 0;
      const double value = std::stod(token, &used);
      if (used != token.size()) throw std::invalid_argument(token);
      return value;
    } catch (const std::exception&) {
      throw ParseError(std::string("non-numeric token '") + token + "' while reading " + what,
                       offset);
    }
  }
};

void check_symmetric(const Eigen::MatrixXd& M, const char* which) {
  const double asym = (M - M.transpose()).cwiseAbs().maxCoeff();
  if (asym > 1e-9)
    throw ParseError(std::string("matrix ") + which + " is asymmetric by " + std::to_string(asym),
                     0);
}

}  // namespace

QapInstance parse_qaplib(const std::string& text, const std::string& name) {
  Tokenizer tok{text};
  const double n_raw = tok.number("problem size");
  if (n_raw <= 0 || n_raw != std::floor(n_raw))
    throw ParseError("problem size must be a positive integer", 0);
  const int n = static_cast<int>(n_raw);

  QapInstance instance;
  instance.name = name;
  instance.A.resize(n, n);
  instance.B.resize(n, n);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j) instance.A(i, j) = tok.number("first matrix");
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j) instance.B(i, j) = tok.number("second matrix");

  std::string extra;
  std::size_t offset;
  if (tok.next(extra, offset))
    throw ParseError("trailing token '" + extra + "' after both matrices", offset);

  check_symmetric(instance.A, "A");
  check_symmetric(instance.B, "B");
  return instance;
}

std::string serialize_qaplib(const QapInstance& instance) {
  std::ostringstream out;
  out.precision(17);
  const int n = instance.n();
  out << n << "\n\n";
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < n; ++j) out << (j ? " " : "") << instance.A(i, j);
    out << "\n";
  }
  out << "\n";
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < n; ++j) out << (j ? " " : "") << instance.B(i, j);
    out << "\n";
  }
  return out.str();
}

double kb_objective(const QapInstance& instance, const Eigen::MatrixXd& P) {
  if (!perm::is_valid_permutation(P))
    throw std::invalid_argument("kb_objective: P is not a permutation matrix");
  return (instance.A * P * instance.B * P.transpose()).trace();
}

double gm_objective(const QapInstance& instance, const Eigen::MatrixXd& P) {
  return (instance.A * P - P * instance.B).squaredNorm();
}

double default_alpha(const QapInstance& instance) {
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> ev_a(instance.A);
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> ev_b(instance.B);
  const Eigen::VectorXd la = ev_a.eigenvalues();
  const Eigen::VectorXd lb = ev_b.eigenvalues();
  // eigenvalues of A (x) B are all pairwise products
  double min_product = la[0] * lb[0];
  for (int i = 0; i < la.size(); ++i)
    for (int j = 0; j < lb.size(); ++j) min_product = std::min(min_product, la[i] * lb[j]);
  return std::abs(min_product);
}

CompositeProblem build_composite(const QapInstance& instance, double alpha,
                                 Convention convention) {
  if (alpha < 0.0) throw std::invalid_argument("build_composite: alpha must be >= 0");
  const int n = instance.n();
  const int ambient = n * n;
  const double sign = convention == Convention::Qaplib ? 1.0 : -1.0;

  Eigen::MatrixXd Q = Eigen::MatrixXd::Zero(ambient, ambient);
  // kron(A, B) under row-major vec: block (i, j) is A_ij * B
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j)
      Q.block(i * n, j * n, n, n) = sign * instance.A(i, j) * instance.B;
  Q.diagonal().array() += alpha;

  return CompositeProblem{engine::QuadraticObjective(Q, Eigen::VectorXd::Zero(ambient)),
                          std::make_shared<perm::PermutationParametrisation>(n)};
}

SynthInstance synth_instance(int n, std::uint64_t seed) {
  if (n < 2) throw std::invalid_argument("synth_instance: n must be >= 2");
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> gauss(0.0, 1.0);

  Eigen::MatrixXd points(2, n);
  for (int j = 0; j < n; ++j) {
    points(0, j) = gauss(rng);
    points(1, j) = gauss(rng);
  }
  Eigen::MatrixXd A(n, n);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j) A(i, j) = (points.col(i) - points.col(j)).norm();

  std::vector<int> image(n);
  std::iota(image.begin(), image.end(), 0);
  std::shuffle(image.begin(), image.end(), rng);
  const Eigen::MatrixXd P = perm::image_to_matrix(image);

  SynthInstance out;
  out.certificate = P;
  out.instance.A = A;
  out.instance.B = P.transpose() * A * P;
  out.instance.name = "synth_n" + std::to_string(n) + "_s" + std::to_string(seed);
  out.instance.known_optimal = 0.0; // graph-matching residual at the certificate
  return out;
}

}  // namespace qucoop::qap
