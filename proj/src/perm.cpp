#include "qucoop/perm.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>
#include <string>

namespace qucoop::perm {

namespace {

// pi as lookup table: pi[j] is the row of the 1 in column j.
using Image = std::vector<int>;

Image identity_image(int n) {
  Image id(n);
  std::iota(id.begin(), id.end(), 0);
  return id;
}

// Right-composition with the 2-cycle (a b): pi <- pi o tau, i.e. the matrix
// product P * T. As a lookup table this swaps the entries at a and b.
void compose_transposition(Image& pi, int a, int b) { std::swap(pi[a], pi[b]); }

Eigen::MatrixXd image_matrix(const Image& pi) {
  const int n = static_cast<int>(pi.size());
  Eigen::MatrixXd P = Eigen::MatrixXd::Zero(n, n);
  for (int j = 0; j < n; ++j) P(pi[j], j) = 1.0;
  return P;
}

}  // namespace

TranspositionOrder::TranspositionOrder(int n) : n_(n) {
  if (n < 1) throw std::invalid_argument("TranspositionOrder: n must be >= 1");
  pairs_.reserve(n * (n - 1) / 2);
  for (int a = 0; a < n; ++a)
    for (int b = a + 1; b < n; ++b) pairs_.emplace_back(a, b);
}

int TranspositionOrder::index_of(int a, int b) const {
  if (a < 1 || b <= a || b > n_)
    throw std::invalid_argument("TranspositionOrder: pair out of range");
  const int a0 = a - 1;
  // pairs with first element < a0, then offset within the a0 block
  return a0 * (2 * n_ - a0 - 1) / 2 + (b - a - 1);
}

PermutationCode::PermutationCode(TranspositionOrder order_in, BitVec bits_in)
    : order(std::move(order_in)), bits(std::move(bits_in)) {
  if (static_cast<int>(bits.size()) != order.k())
    throw std::invalid_argument("PermutationCode: expected " + std::to_string(order.k()) +
                                " bits, got " + std::to_string(bits.size()));
}

std::vector<int> apply_image(const PermutationCode& code) {
  Image pi = identity_image(code.order.n());
  for (int i = 0; i < code.order.k(); ++i)
    if (code.bits[i]) {
      auto [a, b] = code.order.cycle0(i);
      compose_transposition(pi, a, b);
    }
  return pi;
}

Eigen::MatrixXd apply(const PermutationCode& code) { return image_matrix(apply_image(code)); }

BitVec decompose(const Eigen::MatrixXd& P, const TranspositionOrder& order) {
  if (!is_valid_permutation(P)) throw std::invalid_argument("decompose: not a permutation matrix");
  const int n = order.n();
  if (P.rows() != n) throw std::invalid_argument("decompose: size mismatch with order");

  Image pi(n);
  for (int j = 0; j < n; ++j)
    for (int i = 0; i < n; ++i)
      if (P(i, j) > 0.5) pi[j] = i;

  BitVec bits(order.k(), 0);
  std::vector<char> seen(n, 0);
  for (int start = 0; start < n; ++start) {
    if (seen[start] || pi[start] == start) {
      seen[start] = 1;
      continue;
    }
    // collect the cycle (c_0, c_1, ...) with pi(c_j) = c_{j+1}
    std::vector<int> cycle;
    for (int v = start; !seen[v]; v = pi[v]) {
      seen[v] = 1;
      cycle.push_back(v);
    }
    // Peel at the minimal element: (g_1,...,g_l) equals the matrix product of
    // (g_1 g_2) with the shorter cycle (g_3,...,g_l,g_2). Repeating emits the
    // 2-cycles with strictly increasing minimal elements, i.e. already in
    // canonical order.
    while (cycle.size() >= 2) {
      const auto min_it = std::min_element(cycle.begin(), cycle.end());
      std::rotate(cycle.begin(), min_it, cycle.end());
      const int a = cycle[0], b = cycle[1];
      bits[order.index_of(a + 1, b + 1)] = 1;
      std::vector<int> rest(cycle.begin() + 2, cycle.end());
      rest.push_back(b);
      cycle = std::move(rest);
      if (cycle.size() == 1) break;
    }
  }
  return bits;
}

Eigen::MatrixXd jacobian(const PermutationCode& code) {
  const int n = code.order.n();
  const int k = code.order.k();

  // prefix[i] = product of factors before i, suffix[i] = product after i
  std::vector<Image> prefix(k + 1), suffix(k + 1);
  prefix[0] = identity_image(n);
  for (int i = 0; i < k; ++i) {
    prefix[i + 1] = prefix[i];
    if (code.bits[i]) {
      auto [a, b] = code.order.cycle0(i);
      compose_transposition(prefix[i + 1], a, b);
    }
  }
  suffix[k] = identity_image(n);
  for (int i = k - 1; i >= 0; --i) {
    suffix[i] = suffix[i + 1];
    if (code.bits[i]) {
      auto [a, b] = code.order.cycle0(i);
      // left-composition: (tau o pi)[j] = tau(pi[j])
      for (int j = 0; j < n; ++j) {
        if (suffix[i][j] == a)
          suffix[i][j] = b;
        else if (suffix[i][j] == b)
          suffix[i][j] = a;
      }
    }
  }

  Eigen::MatrixXd J = Eigen::MatrixXd::Zero(k, n * n);
  Image with_cycle(n), without_cycle(n);
  for (int i = 0; i < k; ++i) {
    auto [a, b] = code.order.cycle0(i);
    for (int j = 0; j < n; ++j) {
      int mid = suffix[i + 1][j]; // factors strictly after i
      without_cycle[j] = prefix[i][mid];
      if (mid == a)
        mid = b;
      else if (mid == b)
        mid = a;
      with_cycle[j] = prefix[i][mid];
    }
    // row-major vec: entry (r, c) lands at r*n + c
    for (int j = 0; j < n; ++j) {
      J(i, with_cycle[j] * n + j) += 1.0;
      J(i, without_cycle[j] * n + j) -= 1.0;
    }
  }
  return J;
}

Eigen::MatrixXd apply_real(const Eigen::VectorXd& x, const TranspositionOrder& order) {
  const int n = order.n();
  if (x.size() != order.k()) throw std::invalid_argument("apply_real: wrong parameter count");
  Eigen::MatrixXd P = Eigen::MatrixXd::Identity(n, n);
  for (int i = 0; i < order.k(); ++i) {
    auto [a, b] = order.cycle0(i);
    Eigen::MatrixXd factor = Eigen::MatrixXd::Identity(n, n);
    factor(a, a) = 1.0 - x[i];
    factor(b, b) = 1.0 - x[i];
    factor(a, b) = x[i];
    factor(b, a) = x[i];
    P = P * factor;
  }
  return P;
}

bool is_valid_permutation(const Eigen::MatrixXd& M) {
  if (M.rows() != M.cols() || M.rows() == 0) return false;
  const int n = static_cast<int>(M.rows());
  constexpr double tol = 1e-9;
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j) {
      const double v = M(i, j);
      if (std::abs(v) > tol && std::abs(v - 1.0) > tol) return false;
    }
  for (int i = 0; i < n; ++i) {
    if (std::abs(M.row(i).sum() - 1.0) > tol) return false;
    if (std::abs(M.col(i).sum() - 1.0) > tol) return false;
  }
  return true;
}

std::pair<Eigen::VectorXd, Eigen::VectorXd> rowcol_sums(const Eigen::MatrixXd& M) {
  return {M.rowwise().sum(), M.colwise().sum().transpose()};
}

Eigen::MatrixXd linearized_iterate(const PermutationCode& anchor, const BitVec& x) {
  if (x.size() != anchor.bits.size())
    throw std::invalid_argument("linearized_iterate: bit length mismatch");
  const int n = anchor.order.n();
  const Eigen::MatrixXd J = jacobian(anchor);
  Eigen::MatrixXd Pt = apply(anchor);
  for (int i = 0; i < anchor.order.k(); ++i) {
    const double diff = static_cast<double>(x[i]) - static_cast<double>(anchor.bits[i]);
    if (diff == 0.0) continue;
    for (int r = 0; r < n; ++r)
      for (int c = 0; c < n; ++c) Pt(r, c) += diff * J(i, r * n + c);
  }
  return Pt;
}

bool disjoint_conjugates_check(const BitVec& anchor, const BitVec& candidate,
                               const TranspositionOrder& order) {
  if (anchor.size() != candidate.size() || static_cast<int>(anchor.size()) != order.k())
    throw std::invalid_argument("disjoint_conjugates_check: bit length mismatch");
  const int n = order.n();
  // prefix of the anchor product up to (excluding) index i
  Image prefix = identity_image(n);
  std::vector<char> used(n, 0);
  for (int i = 0; i < order.k(); ++i) {
    auto [a, b] = order.cycle0(i);
    if (anchor[i] != candidate[i]) {
      // The conjugated 2-cycle C_i swaps prefix(a) and prefix(b); the
      // transpositions are involutions, so the sign of the exponent is moot.
      const int u = prefix[a];
      const int v = prefix[b];
      if (used[u] || used[v]) return false;
      used[u] = 1;
      used[v] = 1;
    }
    if (anchor[i]) compose_transposition(prefix, a, b);
  }
  return true;
}

Eigen::MatrixXd image_to_matrix(const std::vector<int>& image) {
  const int n = static_cast<int>(image.size());
  Eigen::MatrixXd P = Eigen::MatrixXd::Zero(n, n);
  for (int j = 0; j < n; ++j) {
    if (image[j] < 0 || image[j] >= n) throw std::invalid_argument("image_to_matrix: bad image");
    P(image[j], j) = 1.0;
  }
  return P;
}

std::vector<int> matrix_to_image(const Eigen::MatrixXd& P) {
  if (!is_valid_permutation(P))
    throw std::invalid_argument("matrix_to_image: not a permutation matrix");
  const int n = static_cast<int>(P.rows());
  std::vector<int> image(n);
  for (int j = 0; j < n; ++j)
    for (int i = 0; i < n; ++i)
      if (P(i, j) > 0.5) image[j] = i;
  return image;
}

Eigen::VectorXd vec_rowmajor(const Eigen::MatrixXd& M) {
  Eigen::VectorXd v(M.rows() * M.cols());
  for (int r = 0; r < M.rows(); ++r)
    for (int c = 0; c < M.cols(); ++c) v[r * M.cols() + c] = M(r, c);
  return v;
}

Eigen::MatrixXd unvec_rowmajor(const Eigen::VectorXd& v, int rows, int cols) {
  if (v.size() != static_cast<Eigen::Index>(rows) * cols)
    throw std::invalid_argument("unvec_rowmajor: size mismatch");
  Eigen::MatrixXd M(rows, cols);
  for (int r = 0; r < rows; ++r)
    for (int c = 0; c < cols; ++c) M(r, c) = v[r * cols + c];
  return M;
}

Eigen::VectorXd PermutationParametrisation::evaluate(const BitVec& bits) const {
  return vec_rowmajor(apply(PermutationCode(order_, bits)));
}

Eigen::VectorXd PermutationParametrisation::evaluate_real(const Eigen::VectorXd& x) const {
  return vec_rowmajor(apply_real(x, order_));
}

Eigen::MatrixXd PermutationParametrisation::jacobian(const BitVec& bits) const {
  return perm::jacobian(PermutationCode(order_, bits));
}

bool PermutationParametrisation::is_feasible(const Eigen::VectorXd& point) const {
  if (point.size() != dim_ambient()) return false;
  return is_valid_permutation(unvec_rowmajor(point, order_.n(), order_.n()));
}

std::optional<BitVec> PermutationParametrisation::recover(const Eigen::VectorXd& point,
                                                          const BitVec&) const {
  if (point.size() != dim_ambient()) return std::nullopt;
  Eigen::MatrixXd P = unvec_rowmajor(point, order_.n(), order_.n());
  for (int r = 0; r < P.rows(); ++r)
    for (int c = 0; c < P.cols(); ++c) P(r, c) = std::round(P(r, c));
  if (!is_valid_permutation(P)) return std::nullopt;
  return decompose(P, order_);
}

}  // namespace qucoop::perm
