#pragma once

// Comparison estimators: plain PCA, centred PCA, winsorised PCA and PCA on
// Tyler's M-estimator of shape.

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <limits>
#include <string>
#include <vector>

#include "mspca/detail/lapack.hpp"
#include "mspca/error.hpp"
#include "mspca/spectral.hpp"

namespace mspca {

enum class BaselineMethod { vanilla, center, winsorize, tyler };

inline const char* to_string(BaselineMethod m) {
  switch (m) {
    case BaselineMethod::vanilla: return "vanilla";
    case BaselineMethod::center: return "center";
    case BaselineMethod::winsorize: return "winsorize";
    case BaselineMethod::tyler: return "tyler";
  }
  return "?";
}

struct BaselineResult {
  BaselineMethod method = BaselineMethod::vanilla;
  Eigen::VectorXd eigenvalues;   ///< top-k, descending
  Eigen::MatrixXd eigenvectors;  ///< d x k
  int iterations = 0;            ///< Tyler only
  bool converged = true;         ///< Tyler only
};

namespace detail {

inline void check_k(const DataMatrix& x, Eigen::Index k) {
  if (k < 0 || k > x.dim()) throw ArgumentError("baseline: k must lie in [0, d]");
}

inline BaselineResult pca_of(const DataMatrix& x, Eigen::Index k, BaselineMethod m) {
  check_k(x, k);
  BaselineResult out;
  out.method = m;
  if (k == 0) {
    out.eigenvectors.resize(x.dim(), 0);
    return out;
  }
  SpectrumRequest req;
  req.min_values = k;
  req.min_vectors = k;
  auto s = leading_spectrum(x, req);
  out.eigenvalues = s.eigenvalues.head(k);
  out.eigenvectors = s.eigenvectors.leftCols(k);
  return out;
}

inline Eigen::MatrixXd centered(Eigen::MatrixXd v) {
  const Eigen::VectorXd mean = v.rowwise().mean();
  v.colwise() -= mean;
  return v;
}

/// Sample quantile with linear interpolation between order statistics
/// (position (n - 1) p of the sorted values).
inline double quantile_sorted(const std::vector<double>& sorted, double p) {
  const double pos = p * static_cast<double>(sorted.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  const std::size_t hi = std::min(lo + 1, sorted.size() - 1);
  return sorted[lo] + (pos - static_cast<double>(lo)) * (sorted[hi] - sorted[lo]);
}

}  // namespace detail

/// Top-k eigenpairs of XX^T/n with no centring.
inline BaselineResult vanilla_pca(const DataMatrix& x, Eigen::Index k) {
  return detail::pca_of(x, k, BaselineMethod::vanilla);
}

/// Row means removed, then vanilla PCA.
inline BaselineResult center_pca(const DataMatrix& x, Eigen::Index k) {
  detail::check_k(x, k);
  return detail::pca_of(DataMatrix(detail::centered(x.values())), k, BaselineMethod::center);
}

/// Each row clipped to its [1 - q, q] empirical quantiles.
inline Eigen::MatrixXd winsorize_rows(const Eigen::MatrixXd& v, double q) {
  if (!(q > 0.5 && q < 1.0)) throw ArgumentError("winsorize: q must lie in (0.5, 1)");
  Eigen::MatrixXd out = v;
  std::vector<double> row(static_cast<std::size_t>(v.cols()));
  for (Eigen::Index i = 0; i < v.rows(); ++i) {
    for (Eigen::Index j = 0; j < v.cols(); ++j) row[static_cast<std::size_t>(j)] = v(i, j);
    std::sort(row.begin(), row.end());
    const double lo = detail::quantile_sorted(row, 1.0 - q);
    const double hi = detail::quantile_sorted(row, q);
    out.row(i) = out.row(i).cwiseMax(lo).cwiseMin(hi);
  }
  return out;
}

/// Winsorised rows, then centred PCA.
inline BaselineResult winsorize_pca(const DataMatrix& x, Eigen::Index k, double q = 0.95) {
  detail::check_k(x, k);
  DataMatrix clipped(detail::centered(winsorize_rows(x.values(), q)));
  return detail::pca_of(clipped, k, BaselineMethod::winsorize);
}

struct TylerShape {
  Eigen::MatrixXd shape;  ///< trace d
  int iterations = 0;
  bool converged = false;
};

/// Fixed point Sigma <- (d/n) sum_i x_i x_i^T / (x_i^T Sigma^{-1} x_i),
/// normalised to trace d, from Sigma = I. Stops when the relative Frobenius
/// change drops below tol or after max_iter iterations.
inline TylerShape tyler_shape(const DataMatrix& x, int max_iter = 200, double tol = 1e-6) {
  const Eigen::Index d = x.dim();
  const Eigen::Index n = x.samples();
  if (n <= d) throw RankDeficiencyError("tyler: needs more samples than dimensions");
  if (max_iter < 1) throw ArgumentError("tyler: max_iter must be positive");
  if (!(tol >= 0.0)) throw ArgumentError("tyler: tol must be non-negative");
  const Eigen::MatrixXd& v = x.values();
  if ((v.colwise().squaredNorm().array() == 0.0).any()) {
    throw DataError("tyler: zero columns are not allowed");
  }

  TylerShape out;
  out.shape = Eigen::MatrixXd::Identity(d, d);
  Eigen::MatrixXd scaled(d, n);
  for (int it = 1; it <= max_iter; ++it) {
    Eigen::LLT<Eigen::MatrixXd> llt(out.shape);
    if (llt.info() != Eigen::Success) throw DataError("tyler: shape iterate is not positive definite");
    // x^T Sigma^{-1} x = ||L^{-1} x||^2
    const Eigen::MatrixXd solved = llt.matrixL().solve(v);
    const Eigen::VectorXd q = solved.colwise().squaredNorm().transpose();
    for (Eigen::Index j = 0; j < n; ++j) scaled.col(j) = v.col(j) / std::sqrt(q(j));
    Eigen::MatrixXd next = Eigen::MatrixXd::Zero(d, d);
    next.selfadjointView<Eigen::Lower>().rankUpdate(scaled, static_cast<double>(d) / static_cast<double>(n));
    next = Eigen::MatrixXd(next.selfadjointView<Eigen::Lower>());
    next *= static_cast<double>(d) / next.trace();
    const double change = (next - out.shape).norm() / out.shape.norm();
    out.shape = std::move(next);
    out.iterations = it;
    if (change < tol || !std::isfinite(tol)) {
      out.converged = true;
      break;
    }
  }
  return out;
}

inline BaselineResult tyler_pca(const DataMatrix& x, Eigen::Index k, int max_iter = 200,
                                double tol = 1e-6) {
  detail::check_k(x, k);
  auto t = tyler_shape(x, max_iter, tol);
  BaselineResult out;
  out.method = BaselineMethod::tyler;
  out.iterations = t.iterations;
  out.converged = t.converged;
  auto eig = detail::symmetric_top_eigen(std::move(t.shape), k);
  out.eigenvalues = eig.values.head(k);
  out.eigenvectors = std::move(eig.vectors);
  detail::fix_signs(out.eigenvectors);
  return out;
}

}  // namespace mspca
