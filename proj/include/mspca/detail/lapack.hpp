#pragma once

// Dense symmetric eigensolver over LAPACKE: one Householder tridiagonalisation
// yields all eigenvalues (dsterf) and, when asked, the top-k eigenvectors
// (dstemr on the tridiagonal matrix, back-transformed with dormtr).

#include <lapacke.h>

#include <Eigen/Dense>
#include <algorithm>
#include <string>
#include <utility>
#include <vector>

#include "mspca/error.hpp"

namespace mspca::detail {

struct SymmetricEigen {
  Eigen::VectorXd values;   ///< all eigenvalues, descending
  Eigen::MatrixXd vectors;  ///< columns aligned with values(0..k-1)
};

inline void check_lapack(lapack_int info, const char* routine) {
  if (info != 0) {
    throw DataError(std::string(routine) + " failed with info = " + std::to_string(info));
  }
}

/// Eigen-decomposition of the symmetric matrix `a` (lower triangle is read;
/// the matrix is consumed). Returns every eigenvalue and the eigenvectors of
/// the largest `choose_k(values)` of them, where `values` is descending.
template <class ChooseK>
SymmetricEigen symmetric_top_eigen(Eigen::MatrixXd a, ChooseK&& choose_k) {
  const auto n = static_cast<lapack_int>(a.rows());
  if (a.rows() != a.cols()) throw ArgumentError("symmetric_top_eigen: matrix must be square");
  SymmetricEigen out;
  if (n == 0) return out;

  std::vector<double> diag(n), off(n > 1 ? n - 1 : 1), tau(n > 1 ? n - 1 : 1);
  check_lapack(LAPACKE_dsytrd(LAPACK_COL_MAJOR, 'L', n, a.data(), n, diag.data(), off.data(),
                              tau.data()),
               "dsytrd");

  std::vector<double> ascending(diag);
  {
    std::vector<double> e(off);
    check_lapack(LAPACKE_dsterf(n, ascending.data(), e.data()), "dsterf");
  }
  out.values.resize(n);
  for (lapack_int i = 0; i < n; ++i) out.values(i) = ascending[n - 1 - i];

  const Eigen::Index top_k = choose_k(static_cast<const Eigen::VectorXd&>(out.values));
  if (top_k < 0 || top_k > a.rows()) throw ArgumentError("symmetric_top_eigen: bad top_k");
  const auto k = static_cast<lapack_int>(top_k);
  if (k == 0) {
    out.vectors.resize(n, 0);
    return out;
  }

  std::vector<double> d2(diag), e2(n, 0.0);
  std::copy(off.begin(), off.begin() + (n - 1), e2.begin());
  std::vector<double> w(n);
  std::vector<lapack_int> support(2 * static_cast<std::size_t>(n));
  Eigen::MatrixXd z(n, k);
  lapack_int found = 0;
  lapack_logical tryrac = 1;
  check_lapack(LAPACKE_dstemr(LAPACK_COL_MAJOR, 'V', 'I', n, d2.data(), e2.data(), 0.0, 0.0,
                              n - k + 1, n, &found, w.data(), z.data(), n, k, support.data(),
                              &tryrac),
               "dstemr");
  if (found != k) throw DataError("dstemr returned an unexpected number of eigenpairs");
  if (n > 1) {
    check_lapack(LAPACKE_dormtr(LAPACK_COL_MAJOR, 'L', 'L', 'N', n, k, a.data(), n, tau.data(),
                                z.data(), n),
                 "dormtr");
  }
  // dstemr returns ascending order; flip to descending.
  out.vectors.resize(n, k);
  for (lapack_int j = 0; j < k; ++j) out.vectors.col(j) = z.col(k - 1 - j);
  return out;
}

inline SymmetricEigen symmetric_top_eigen(Eigen::MatrixXd a, Eigen::Index top_k) {
  return symmetric_top_eigen(std::move(a), [top_k](const Eigen::VectorXd&) { return top_k; });
}

}  // namespace mspca::detail
