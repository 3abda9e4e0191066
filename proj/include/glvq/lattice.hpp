#pragma once

// Lattice geometry: generation matrices, Gram-Schmidt, LLL, Babai rounding,
// an enumeration CVP oracle, and the Babai rounding error bound.

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>
#include <utility>

#include <Eigen/Dense>

#include "glvq/types.hpp"

namespace glvq {

/// Square full-rank lattice basis. Column i is basis vector b_i.
///
/// Construction validates finiteness and full rank
/// (|det| > 1e-12 * ||G||_2^d) and caches an LU factorization used by
/// every coordinate solve.
template <typename Scalar>
class GenerationMatrix {
 public:
  using MatrixType = Matrix<Scalar>;

  explicit GenerationMatrix(MatrixType entries) : entries_(std::move(entries)) {
    if (entries_.rows() != entries_.cols() || entries_.rows() == 0)
      throw ShapeError("generation matrix must be square and non-empty");
    if (!entries_.allFinite()) throw NonFiniteError("generation matrix has non-finite entries");
    Eigen::JacobiSVD<MatrixType> svd(entries_);
    const auto& sv = svd.singularValues();
    const Scalar top = sv(0);
    if (!(top > Scalar(0))) throw SingularBasisError("generation matrix is zero");
    // log-domain form of prod(sigma_i) > 1e-12 * sigma_max^d
    Scalar log_ratio = 0;
    for (Index i = 0; i < sv.size(); ++i) {
      if (!(sv(i) > Scalar(0))) throw SingularBasisError("generation matrix is rank deficient");
      log_ratio += std::log(sv(i) / top);
    }
    if (!(log_ratio > std::log(Scalar(1e-12))))
      throw SingularBasisError("generation matrix is numerically rank deficient");
    lu_.compute(entries_);
  }

  static GenerationMatrix identity(Index dim, Scalar scale = Scalar(1)) {
    return GenerationMatrix(MatrixType::Identity(dim, dim) * scale);
  }

  Index dim() const { return entries_.rows(); }
  const MatrixType& matrix() const { return entries_; }
  auto col(Index i) const { return entries_.col(i); }

  /// Real coordinates G^{-1} t of one or more targets (one per column).
  template <typename Derived>
  MatrixType solve(const Eigen::MatrixBase<Derived>& targets) const {
    if (targets.rows() != dim()) throw ShapeError("target dimension does not match basis");
    return lu_.solve(targets.template cast<Scalar>());
  }

 private:
  MatrixType entries_;
  Eigen::PartialPivLU<MatrixType> lu_;
};

/// Gram-Schmidt decomposition b_i = b*_i + sum_{j<i} coeffs(j,i) b*_j.
template <typename Scalar>
struct GramSchmidtBasis {
  Matrix<Scalar> ortho;   // column j is b*_j
  Matrix<Scalar> coeffs;  // strictly upper triangular, coeffs(j,i) = <b_i,b*_j>/|b*_j|^2

  Vector<Scalar> squared_norms() const { return ortho.colwise().squaredNorm().transpose(); }
};

namespace detail {

template <typename Scalar>
GramSchmidtBasis<Scalar> gram_schmidt_columns(const Matrix<Scalar>& basis) {
  const Index d = basis.cols();
  GramSchmidtBasis<Scalar> gs{basis, Matrix<Scalar>::Zero(d, d)};
  Vector<Scalar> norms(d);
  for (Index i = 0; i < d; ++i) {
    for (Index j = 0; j < i; ++j) {
      const Scalar c = basis.col(i).dot(gs.ortho.col(j)) / norms(j);
      gs.coeffs(j, i) = c;
      gs.ortho.col(i) -= c * gs.ortho.col(j);
    }
    norms(i) = gs.ortho.col(i).squaredNorm();
    if (!(norms(i) > Scalar(0)))
      throw SingularBasisError("Gram-Schmidt produced a zero vector");
  }
  return gs;
}

}  // namespace detail

template <typename Scalar>
GramSchmidtBasis<Scalar> gram_schmidt(const GenerationMatrix<Scalar>& basis) {
  return detail::gram_schmidt_columns(basis.matrix());
}

/// LLL reduction on a copy of `basis`. The result spans the same lattice,
/// is size reduced (|coeff| <= 1/2) and satisfies the Lovasz condition at
/// `delta`.
template <typename Scalar>
GenerationMatrix<Scalar> lll_reduce(const GenerationMatrix<Scalar>& basis,
                                    Scalar delta = Scalar(0.75)) {
  if (!(delta > Scalar(0.25) && delta <= Scalar(1)))
    throw std::invalid_argument("LLL delta must lie in (1/4, 1]");
  constexpr Scalar kSizeSlack = Scalar(1e-12);

  Matrix<Scalar> b = basis.matrix();
  const Index d = b.cols();
  auto gs = detail::gram_schmidt_columns(b);
  Index k = 1;
  while (k < d) {
    for (Index j = k - 1; j >= 0; --j) {
      const Scalar c = gs.coeffs(j, k);
      if (std::abs(c) <= Scalar(0.5) + kSizeSlack) continue;
      const Scalar q = std::round(c);
      b.col(k) -= q * b.col(j);
      for (Index i = 0; i < j; ++i) gs.coeffs(i, k) -= q * gs.coeffs(i, j);
      gs.coeffs(j, k) -= q;
    }
    const Scalar c = gs.coeffs(k - 1, k);
    const Scalar lhs = gs.ortho.col(k).squaredNorm();
    const Scalar rhs = (delta - c * c) * gs.ortho.col(k - 1).squaredNorm();
    if (lhs >= rhs) {
      ++k;
    } else {
      b.col(k).swap(b.col(k - 1));
      gs = detail::gram_schmidt_columns(b);
      k = std::max<Index>(k - 1, 1);
    }
  }
  return GenerationMatrix<Scalar>(std::move(b));
}

namespace detail {

template <typename Scalar>
std::int64_t round_half_up(Scalar x) {
  return static_cast<std::int64_t>(std::floor(x + Scalar(0.5)));
}

}  // namespace detail

/// Babai rounding: floor(G^{-1} t + 1/2) per coordinate, ties toward +inf.
template <typename Scalar, typename Derived>
CodeVector babai_round(const GenerationMatrix<Scalar>& basis,
                       const Eigen::MatrixBase<Derived>& target) {
  const Vector<Scalar> coords = basis.solve(target);
  return coords.unaryExpr([](Scalar x) { return detail::round_half_up(x); });
}

template <typename Scalar>
Vector<Scalar> decode(const GenerationMatrix<Scalar>& basis, const CodeVector& codes) {
  if (codes.size() != basis.dim()) throw ShapeError("code length does not match basis");
  return basis.matrix() * codes.cast<Scalar>();
}

/// Exhaustive closest-vector search over the integer box of half-width
/// `search_radius` around the Babai point. Ties go to the lexicographically
/// smallest code. Test oracle only; cost is (2r+1)^d.
template <typename Scalar, typename Derived>
CodeVector exact_cvp(const GenerationMatrix<Scalar>& basis,
                     const Eigen::MatrixBase<Derived>& target, int search_radius = 2) {
  const Index d = basis.dim();
  if (d > 8) throw std::invalid_argument("exact_cvp supports d <= 8");
  if (search_radius < 1) throw std::invalid_argument("search radius must be >= 1");

  const Vector<Scalar> t = target.template cast<Scalar>();
  const CodeVector center = babai_round(basis, t);
  CodeVector offset = CodeVector::Constant(d, -search_radius);
  CodeVector best = center;
  Scalar best_dist = std::numeric_limits<Scalar>::infinity();
  for (;;) {
    const CodeVector z = center + offset;
    const Scalar dist = (t - basis.matrix() * z.cast<Scalar>()).squaredNorm();
    if (dist < best_dist) {
      best_dist = dist;
      best = z;
    }
    // odometer with the first coordinate most significant
    Index pos = d - 1;
    while (pos >= 0 && offset(pos) == search_radius) offset(pos--) = -search_radius;
    if (pos < 0) break;
    ++offset(pos);
  }
  return best;
}

template <typename Scalar>
struct BabaiErrorBound {
  Scalar lll_form;  // 1/2 sqrt(sum_j (1 + (n-j)/2)^2 |b*_j|^2), valid for LLL-reduced bases
  Scalar general;   // 1/2 sqrt(sum_j (1 + sum_{i>j} |coeff(j,i)|)^2 |b*_j|^2), any basis
};

template <typename Scalar>
BabaiErrorBound<Scalar> babai_error_bound(const GramSchmidtBasis<Scalar>& gs) {
  const Index n = gs.ortho.cols();
  const Vector<Scalar> norms = gs.squared_norms();
  Scalar lll_sum = 0;
  Scalar general_sum = 0;
  for (Index j = 0; j < n; ++j) {
    const Scalar lll_factor = Scalar(1) + Scalar(n - 1 - j) / Scalar(2);
    Scalar coeff_sum = 0;
    for (Index i = j + 1; i < n; ++i) coeff_sum += std::abs(gs.coeffs(j, i));
    const Scalar general_factor = Scalar(1) + coeff_sum;
    lll_sum += lll_factor * lll_factor * norms(j);
    general_sum += general_factor * general_factor * norms(j);
  }
  return {Scalar(0.5) * std::sqrt(lll_sum), Scalar(0.5) * std::sqrt(general_sum)};
}

}  // namespace glvq
