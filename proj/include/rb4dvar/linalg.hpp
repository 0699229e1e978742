#pragma once

// Shared linear-algebra vocabulary: the sparse (full-order) and dense
// (reduced-order) operator sets differ only in the matrix type, so every
// solver in the library is templated on it and picks its factorizations
// through SolverTraits.

#include <Eigen/Dense>
#include <Eigen/Sparse>
#include <Eigen/SparseCholesky>
#include <Eigen/SparseLU>

#include <atomic>
#include <cmath>
#include <cstddef>
#include <stdexcept>
#include <string>
#include <type_traits>
#include <vector>

namespace rb4dvar {

using Vec = Eigen::VectorXd;
using Mat = Eigen::MatrixXd;
using SpMat = Eigen::SparseMatrix<double>;
using Triplet = Eigen::Triplet<double>;

/// Raised when a linear system cannot be factorized.
class SingularSystemError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Raised when inputs violate a documented precondition.
class ContractError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

template <class MatrixT>
struct SolverTraits;

template <>
struct SolverTraits<SpMat> {
  using Spd = Eigen::SimplicialLLT<SpMat>;
  using General = Eigen::SparseLU<SpMat, Eigen::COLAMDOrdering<int>>;
};

template <>
struct SolverTraits<Mat> {
  using Spd = Eigen::LLT<Mat>;
  using General = Eigen::PartialPivLU<Mat>;
};

namespace detail {

inline std::atomic<std::size_t>& factorization_counter() {
  static std::atomic<std::size_t> counter{0};
  return counter;
}

}  // namespace detail

/// Number of time-stepping system factorizations performed so far in this
/// process. Used by tests to check that one factorization of M + tau*A(mu)
/// serves both directions of time.
inline std::size_t factorization_count() {
  return detail::factorization_counter().load();
}

/// Cholesky factorization of an SPD matrix (sparse or dense).
template <class MatrixT>
class SpdSolver {
 public:
  SpdSolver() = default;
  explicit SpdSolver(const MatrixT& m) { compute(m); }

  void compute(const MatrixT& m) {
    size_ = m.rows();
    if (size_ == 0) return;
    solver_.compute(m);
    if (solver_.info() != Eigen::Success) {
      throw SingularSystemError("Cholesky factorization failed (matrix not SPD)");
    }
    if constexpr (std::is_same_v<MatrixT, Mat>) {
      // Dense LLT does not flag indefiniteness reliably; check the diagonal.
      const Mat l = solver_.matrixL();
      if (!(l.diagonal().array() > 0.0).all() || !l.allFinite()) {
        throw SingularSystemError("Cholesky factorization failed (matrix not SPD)");
      }
    }
  }

  template <class Rhs>
  auto solve(const Rhs& b) const {
    using Out = std::conditional_t<Rhs::ColsAtCompileTime == 1, Vec, Mat>;
    if (size_ == 0) return Out(b);
    return Out(solver_.solve(b));
  }

  Eigen::Index size() const { return size_; }

 private:
  typename SolverTraits<MatrixT>::Spd solver_;
  Eigen::Index size_ = 0;
};

/// LU factorization supporting solves with the matrix and its transpose.
template <class MatrixT>
class LuSolver {
 public:
  LuSolver() = default;
  explicit LuSolver(const MatrixT& m) { compute(m); }

  void compute(const MatrixT& m) {
    size_ = m.rows();
    if constexpr (std::is_same_v<MatrixT, SpMat>) {
      MatrixT c = m;
      c.makeCompressed();
      solver_.analyzePattern(c);
      solver_.factorize(c);
      if (solver_.info() != Eigen::Success) {
        throw SingularSystemError("sparse LU factorization failed: " +
                                  solver_.lastErrorMessage());
      }
    } else {
      if (size_ > 0) {
        solver_.compute(m);
        if (!std::isfinite(solver_.rcond()) || solver_.rcond() < 1e-15) {
          throw SingularSystemError("dense LU factorization is singular");
        }
      }
    }
    detail::factorization_counter().fetch_add(1);
  }

  Vec solve(const Vec& b) const {
    if (size_ == 0) return b;
    return solver_.solve(b);
  }

  Vec solve_transposed(const Vec& b) const {
    if (size_ == 0) return b;
    if constexpr (std::is_same_v<MatrixT, SpMat>) {
      // SparseLU's transpose view is non-const in Eigen 3.4.
      auto& s = const_cast<typename SolverTraits<MatrixT>::General&>(solver_);
      return s.transpose().solve(b);
    } else {
      return solver_.transpose().solve(b);
    }
  }

 private:
  typename SolverTraits<MatrixT>::General solver_;
  Eigen::Index size_ = 0;
};

inline Mat to_dense(const SpMat& m) { return Mat(m); }
inline const Mat& to_dense(const Mat& m) { return m; }

/// Congruence V^T A W for sparse A and dense bases.
inline Mat congruence(const Mat& v, const SpMat& a, const Mat& w) {
  return v.transpose() * (a * w);
}

/// Symmetric part (A + A^T)/2.
inline SpMat symmetric_part(const SpMat& a) {
  SpMat at = a.transpose();
  return 0.5 * (a + at);
}

/// Extract the principal submatrix on the given index set.
inline SpMat restrict_to(const SpMat& a, const std::vector<int>& rows,
                         const std::vector<int>& cols) {
  std::vector<int> row_map(a.rows(), -1), col_map(a.cols(), -1);
  for (std::size_t i = 0; i < rows.size(); ++i) row_map[rows[i]] = static_cast<int>(i);
  for (std::size_t j = 0; j < cols.size(); ++j) col_map[cols[j]] = static_cast<int>(j);
  std::vector<Triplet> t;
  t.reserve(a.nonZeros());
  for (int k = 0; k < a.outerSize(); ++k) {
    for (SpMat::InnerIterator it(a, k); it; ++it) {
      const int r = row_map[it.row()];
      const int c = col_map[it.col()];
      if (r >= 0 && c >= 0) t.emplace_back(r, c, it.value());
    }
  }
  SpMat out(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(cols.size()));
  out.setFromTriplets(t.begin(), t.end());
  return out;
}

}  // namespace rb4dvar
