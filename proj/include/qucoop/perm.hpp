#ifndef QUCOOP_PERM_HPP
#define QUCOOP_PERM_HPP

#include <optional>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "qucoop/engine.hpp"
#include "qucoop/qubo.hpp"

namespace qucoop::perm {

// The canonical tuple of 2-cycles (1,2),(1,3),...,(1,n),(2,3),...,(n-1,n),
// k = n(n-1)/2 of them. Pairs are 1-indexed at the API surface and 0-indexed
// internally.
class TranspositionOrder {
 public:
  explicit TranspositionOrder(int n);

  int n() const { return n_; }
  int k() const { return static_cast<int>(pairs_.size()); }

  // 1-indexed (a, b) with a < b of the i-th 2-cycle, i in [0, k).
  std::pair<int, int> cycle(int i) const {
    return {pairs_[i].first + 1, pairs_[i].second + 1};
  }
  // canonical index of the 2-cycle swapping a and b (1-indexed, a < b)
  int index_of(int a, int b) const;

  std::pair<int, int> cycle0(int i) const { return pairs_[i]; }

 private:
  int n_;
  std::vector<std::pair<int, int>> pairs_; // 0-indexed
};

// A permutation matrix encoded as the ordered product of binary-activated
// transpositions: P(x) = prod_i T_i^{x_i}, left-to-right in canonical order.
struct PermutationCode {
  TranspositionOrder order;
  BitVec bits;

  PermutationCode(TranspositionOrder order_in, BitVec bits_in);
};

// P(x) as an n x n 0/1 matrix.
Eigen::MatrixXd apply(const PermutationCode& code);

// Image list of P(x): image[j] = pi(j), 0-indexed, where P e_j = e_{pi(j)}.
std::vector<int> apply_image(const PermutationCode& code);

// Bits such that apply(bits) == P, by peeling each disjoint cycle at its
// minimal element. Throws if P is not a permutation matrix.
BitVec decompose(const Eigen::MatrixXd& P, const TranspositionOrder& order);

// Row i = row-major vec of  (prod_{j<i} P_j) (T_i - I) (prod_{j>i} P_j),
// the partial derivative of the smooth extension P_i(x_i) = x_i(T_i - I) + I.
// Shape k x n^2; every row holds exactly two +1 and two -1 entries.
Eigen::MatrixXd jacobian(const PermutationCode& code);

// Smooth extension prod_i (I + x_i (T_i - I)) evaluated at real parameters.
Eigen::MatrixXd apply_real(const Eigen::VectorXd& x, const TranspositionOrder& order);

bool is_valid_permutation(const Eigen::MatrixXd& M);

std::pair<Eigen::VectorXd, Eigen::VectorXd> rowcol_sums(const Eigen::MatrixXd& M);

// The linearized iterate P^t(x) = P(anchor) + <grad P(anchor), x - anchor>.
Eigen::MatrixXd linearized_iterate(const PermutationCode& anchor, const BitVec& x);

// Whether the cycles conjugated by the anchor prefix are pairwise disjoint at
// every index where anchor and candidate differ. Equivalent to
// is_valid_permutation(linearized_iterate(anchor, candidate)).
bool disjoint_conjugates_check(const BitVec& anchor, const BitVec& candidate,
                               const TranspositionOrder& order);

// Permutation image -> matrix and back.
Eigen::MatrixXd image_to_matrix(const std::vector<int>& image);
std::vector<int> matrix_to_image(const Eigen::MatrixXd& P);

// g(x) = row-major vec of P(x), the parametrisation of Pi_n by k = n(n-1)/2
// bits. `recover` rounds the ambient point, validates it and re-encodes via
// decompose; by the coincidence of the linearized and exact parametrisations
// on valid permutations this realizes x = g^{-1}(g^t(x)).
class PermutationParametrisation final : public engine::Parametrisation {
 public:
  explicit PermutationParametrisation(int n) : order_(n) {}

  int dim_params() const override { return order_.k(); }
  int dim_ambient() const override { return order_.n() * order_.n(); }

  Eigen::VectorXd evaluate(const BitVec& bits) const override;
  Eigen::VectorXd evaluate_real(const Eigen::VectorXd& x) const override;
  Eigen::MatrixXd jacobian(const BitVec& bits) const override;
  bool is_feasible(const Eigen::VectorXd& point) const override;
  std::optional<BitVec> recover(const Eigen::VectorXd& point,
                                const BitVec& candidate_bits) const override;

  const TranspositionOrder& order() const { return order_; }

 private:
  TranspositionOrder order_;
};

// row-major vec and its inverse
Eigen::VectorXd vec_rowmajor(const Eigen::MatrixXd& M);
Eigen::MatrixXd unvec_rowmajor(const Eigen::VectorXd& v, int rows, int cols);

}  // namespace qucoop::perm

#endif
