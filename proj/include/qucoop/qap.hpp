#ifndef QUCOOP_QAP_HPP
#define QUCOOP_QAP_HPP

#include <cstddef>
#include <memory>
#include <optional>
#include <string>
#include <utility>

#include <Eigen/Dense>

#include "qucoop/engine.hpp"
#include "qucoop/perm.hpp"

namespace qucoop::qap {

// Thrown by parse_qaplib; byte_offset points at the offending token (or end
// of input for truncation).
class ParseError : public std::runtime_error {
 public:
  ParseError(const std::string& message, std::size_t byte_offset);
  std::size_t byte_offset() const { return byte_offset_; }

 private:
  std::size_t byte_offset_;
};

struct QapInstance {
  Eigen::MatrixXd A;
  Eigen::MatrixXd B;
  std::string name;
  std::optional<double> known_optimal;

  int n() const { return static_cast<int>(A.rows()); }
};

// QAPLIB .dat format: n, then the n^2 entries of A, then the n^2 entries of
// B, whitespace-separated with arbitrary line breaks. Asymmetric matrices
// (beyond 1e-9) are rejected.
QapInstance parse_qaplib(const std::string& text, const std::string& name = "");

std::string serialize_qaplib(const QapInstance& instance);

// Koopmans-Beckmann value trace(A P B P'), the convention QAPLIB optima are
// quoted in.
double kb_objective(const QapInstance& instance, const Eigen::MatrixXd& P);

// Graph-matching residual |A P - P B|_F^2.
double gm_objective(const QapInstance& instance, const Eigen::MatrixXd& P);

// |min_{i,j} lambda_i(A) * lambda_j(B)|: the magnitude of the lowest
// eigenvalue of A (x) B, computed from the factor spectra.
double default_alpha(const QapInstance& instance);

// Which sign the Kronecker cross term enters the composite objective with.
// QAPLIB instances minimize trace(A P B P'); graph-matching and synthetic
// instances maximize it (equivalently minimize |AP - PB|_F^2).
enum class Convention { Qaplib, GraphMatching };

struct CompositeProblem {
  engine::QuadraticObjective objective; // over n^2 ambient dims, penalty included
  std::shared_ptr<perm::PermutationParametrisation> parametrisation;
};

CompositeProblem build_composite(const QapInstance& instance, double alpha,
                                 Convention convention);

struct SynthInstance {
  QapInstance instance;            // B = P' A P, so gm_objective vanishes at P
  Eigen::MatrixXd certificate;     // the planted permutation
};

// Euclidean distance matrix of n standard-normal points in the plane,
// conjugated by a uniformly random permutation.
SynthInstance synth_instance(int n, std::uint64_t seed);

}  // namespace qucoop::qap

#endif
