#pragma once

// Sample covariance spectra of column-sample data matrices.
//
// Two routes compute the leading eigenpairs of XX^T/n:
//  * dense: the smaller of XX^T/n (d x d) and the Gram matrix X^T X/n (n x n)
//    is decomposed with LAPACK; Gram eigenvectors are lifted by u = Xw/sqrt(n lambda).
//  * krylov: Lanczos with full reorthogonalisation on u -> X(X^T u)/n, which
//    returns only the outliers above a floor (plus a minimum count).
// Solver::automatic picks dense while min(d, n) <= dense_limit.

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <string>
#include <vector>

#include "mspca/detail/lapack.hpp"
#include "mspca/error.hpp"
#include "mspca/rmt.hpp"
#include "mspca/rng.hpp"

namespace mspca {

/// d x n real matrix whose columns are observations. All entries finite, d, n >= 1.
class DataMatrix {
 public:
  explicit DataMatrix(Eigen::MatrixXd values) : values_(std::move(values)) {
    if (values_.rows() < 1 || values_.cols() < 1) {
      throw ArgumentError("DataMatrix: need at least one row and one column");
    }
    if (!values_.allFinite()) throw DataError("DataMatrix: non-finite entries");
  }

  Eigen::Index dim() const { return values_.rows(); }
  Eigen::Index samples() const { return values_.cols(); }
  double aspect_ratio() const {
    return static_cast<double>(values_.rows()) / static_cast<double>(values_.cols());
  }
  const Eigen::MatrixXd& values() const { return values_; }

  /// Releases the storage; the object must not be used afterwards.
  Eigen::MatrixXd release() && { return std::move(values_); }

 private:
  Eigen::MatrixXd values_;
};

/// Leading spectrum of XX^T/n.
struct SpectrumResult {
  /// Descending. Complete spectra hold d values (zero tail when d > n);
  /// Krylov spectra hold only the requested leading values.
  Eigen::VectorXd eigenvalues;
  /// Unit eigenvectors of the leading eigenvalues, one per column.
  Eigen::MatrixXd eigenvectors;
  bool complete = true;

  Eigen::Index top_k() const { return eigenvectors.cols(); }
  std::vector<double> values() const {
    return {eigenvalues.data(), eigenvalues.data() + eigenvalues.size()};
  }
};

enum class Solver { automatic, dense, krylov };
enum class GramMode { automatic, direct, gram };

/// What a caller needs from a spectrum. Every eigenvalue above value_floor is
/// returned (and at least min_values of them); eigenvectors are returned for
/// the min_vectors leading values, or for all values above vector_floor plus
/// extra_vectors more when that is larger.
struct SpectrumRequest {
  Eigen::Index min_values = 1;
  double value_floor = std::numeric_limits<double>::infinity();
  Eigen::Index min_vectors = 0;
  double vector_floor = std::numeric_limits<double>::infinity();
  Eigen::Index extra_vectors = 0;
  Solver solver = Solver::automatic;
  Eigen::Index dense_limit = 1200;
};

/// (1/n) X (X^T u) without forming XX^T.
inline Eigen::VectorXd cov_apply(const DataMatrix& x, const Eigen::Ref<const Eigen::VectorXd>& u) {
  if (u.size() != x.dim()) {
    throw ArgumentError("cov_apply: vector length " + std::to_string(u.size()) +
                        " does not match dimension " + std::to_string(x.dim()));
  }
  const Eigen::VectorXd t = x.values().transpose() * u;
  Eigen::VectorXd out = x.values() * t;
  out /= static_cast<double>(x.samples());
  return out;
}

namespace detail {

/// Flip each column so that its entry of largest magnitude is positive.
inline void fix_signs(Eigen::MatrixXd& vectors) {
  for (Eigen::Index j = 0; j < vectors.cols(); ++j) {
    Eigen::Index arg = 0;
    vectors.col(j).cwiseAbs().maxCoeff(&arg);
    if (vectors(arg, j) < 0.0) vectors.col(j) *= -1.0;
  }
}

/// Extend the first `filled` orthonormal columns of `basis` with unit vectors
/// orthogonal to them, trying standard basis vectors in order.
inline void complete_orthonormal(Eigen::MatrixXd& basis, Eigen::Index filled) {
  const Eigen::Index d = basis.rows();
  // Residual of e_i after projecting out the first j columns is 1 - |row i|^2.
  Eigen::VectorXd residual = Eigen::VectorXd::Ones(d) - basis.leftCols(filled).rowwise().squaredNorm();
  for (Eigen::Index j = filled; j < basis.cols(); ++j) {
    Eigen::Index best = 0;
    if (residual.maxCoeff(&best) <= 1e-8) throw DataError("complete_orthonormal: ran out of candidate directions");
    Eigen::VectorXd v = Eigen::VectorXd::Unit(d, best);
    for (int pass = 0; pass < 2; ++pass) {
      v -= basis.leftCols(j) * (basis.leftCols(j).transpose() * v);
    }
    basis.col(j) = v / v.norm();
    residual -= basis.col(j).cwiseAbs2();
  }
}

/// Dense route. `choose_k` maps the descending eigenvalues of XX^T/n (first
/// min(d, n) of them) to the number of leading eigenvectors wanted.
template <class ChooseK>
SpectrumResult dense_spectrum(const DataMatrix& x, GramMode mode, ChooseK&& choose_k) {
  const Eigen::Index d = x.dim();
  const Eigen::Index n = x.samples();
  const auto inv_n = 1.0 / static_cast<double>(n);
  const bool use_gram = mode == GramMode::gram || (mode == GramMode::automatic && n < d);
  SpectrumResult out;

  if (!use_gram) {
    Eigen::MatrixXd cov = Eigen::MatrixXd::Zero(d, d);
    cov.selfadjointView<Eigen::Lower>().rankUpdate(x.values(), inv_n);
    auto eig = symmetric_top_eigen(std::move(cov), choose_k);
    out.eigenvalues = std::move(eig.values);
    out.eigenvectors = std::move(eig.vectors);
    fix_signs(out.eigenvectors);
    return out;
  }

  Eigen::MatrixXd gram = Eigen::MatrixXd::Zero(n, n);
  gram.selfadjointView<Eigen::Lower>().rankUpdate(x.values().transpose(), inv_n);
  const Eigen::Index rank_bound = std::min(d, n);
  Eigen::Index top_k = 0;
  auto eig = symmetric_top_eigen(std::move(gram), [&](const Eigen::VectorXd& gram_values) {
    Eigen::VectorXd side = Eigen::VectorXd::Zero(d);
    side.head(rank_bound) = gram_values.head(rank_bound);
    top_k = choose_k(static_cast<const Eigen::VectorXd&>(side));
    if (top_k < 0 || top_k > d) throw ArgumentError("dense_spectrum: bad eigenvector count");
    return std::min(top_k, rank_bound);
  });
  const Eigen::Index lifted_k = std::min(top_k, rank_bound);

  out.eigenvalues = Eigen::VectorXd::Zero(d);
  out.eigenvalues.head(rank_bound) = eig.values.head(rank_bound);

  // Lift w -> Xw / sqrt(n lambda) for numerically non-zero eigenvalues.
  const double largest = eig.values.size() > 0 ? std::max(eig.values(0), 0.0) : 0.0;
  const double null_tol = 1e-10 * std::max(largest, std::numeric_limits<double>::min());
  out.eigenvectors = Eigen::MatrixXd::Zero(d, top_k);
  Eigen::Index lifted = 0;
  for (; lifted < lifted_k; ++lifted) {
    const double lambda = eig.values(lifted);
    if (!(lambda > null_tol)) break;
    Eigen::VectorXd u = x.values() * eig.vectors.col(lifted);
    u /= std::sqrt(static_cast<double>(n) * lambda);
    u /= u.norm();
    out.eigenvectors.col(lifted) = u;
  }
  for (Eigen::Index j = lifted; j < top_k; ++j) out.eigenvalues(j) = std::max(out.eigenvalues(j), 0.0);
  complete_orthonormal(out.eigenvectors, lifted);
  fix_signs(out.eigenvectors);
  return out;
}

inline SpectrumResult krylov_spectrum(const DataMatrix& x, const SpectrumRequest& req,
                                      bool& converged) {
  const Eigen::Index d = x.dim();
  const Eigen::Index max_dim = std::min<Eigen::Index>(d, 600);
  const double tol = 1e-11;
  converged = false;

  Rng rng = Rng::stream(0x6D737063615F6B72ULL, Stream::solver_start);
  auto random_unit = [&](const Eigen::MatrixXd& q, Eigen::Index used) {
    Eigen::VectorXd v(d);
    for (Eigen::Index i = 0; i < d; ++i) v(i) = rng.normal();
    for (int pass = 0; pass < 2; ++pass) {
      v -= q.leftCols(used) * (q.leftCols(used).transpose() * v);
    }
    return Eigen::VectorXd(v / v.norm());
  };

  Eigen::Index capacity = std::min<Eigen::Index>(max_dim + 1, 96);
  Eigen::MatrixXd q(d, capacity);
  std::vector<double> alpha, beta;
  q.col(0) = random_unit(q, 0);

  Eigen::VectorXd ritz;
  Eigen::MatrixXd ritz_vecs;
  Eigen::Index wanted = 0, last_wanted = -1;
  Eigen::Index m = 0;
  double scale = 0.0;

  const Eigen::Index first_check = std::max<Eigen::Index>(req.min_values, req.min_vectors) + 8;

  while (m < max_dim) {
    Eigen::VectorXd w = cov_apply(x, q.col(m));
    const double a = q.col(m).dot(w);
    alpha.push_back(a);
    scale = std::max(scale, std::abs(a));
    for (int pass = 0; pass < 2; ++pass) {
      w -= q.leftCols(m + 1) * (q.leftCols(m + 1).transpose() * w);
    }
    double b = w.norm();
    ++m;
    if (m + 1 > capacity) {
      capacity = std::min<Eigen::Index>(max_dim + 1, capacity * 2);
      q.conservativeResize(Eigen::NoChange, capacity);
    }
    const bool breakdown = b <= 1e-12 * std::max(scale, 1.0);
    if (m < max_dim) {
      if (breakdown) {
        // Invariant subspace found; continue from a fresh orthogonal direction.
        b = 0.0;
        q.col(m) = random_unit(q, m);
      } else {
        q.col(m) = w / b;
      }
    }
    beta.push_back(b);

    const bool at_end = m == max_dim;
    if (!at_end && (m < first_check || (m - first_check) % 8 != 0)) continue;

    Eigen::VectorXd diag = Eigen::Map<Eigen::VectorXd>(alpha.data(), m);
    Eigen::VectorXd sub = Eigen::Map<Eigen::VectorXd>(beta.data(), m - 1);
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> tri;
    tri.computeFromTridiagonal(diag, sub, Eigen::ComputeEigenvectors);
    ritz = tri.eigenvalues().reverse();
    ritz_vecs = tri.eigenvectors().rowwise().reverse();

    Eigen::Index above = 0;
    while (above < m && ritz(above) > req.value_floor) ++above;
    Eigen::Index vec_above = 0;
    while (vec_above < m && ritz(vec_above) > req.vector_floor) ++vec_above;
    const Eigen::Index vec_target = std::max(req.min_vectors, vec_above + req.extra_vectors);
    wanted = std::min<Eigen::Index>(m, std::max({req.min_values, above, vec_target}));

    bool ok = wanted < m;
    for (Eigen::Index i = 0; ok && i < wanted; ++i) {
      const double residual = std::abs(b * ritz_vecs(m - 1, i));
      ok = residual <= tol * std::max(1.0, std::abs(ritz(i)));
    }
    if (ok && wanted == last_wanted) {
      converged = true;
      break;
    }
    last_wanted = ok ? wanted : -1;
  }

  SpectrumResult out;
  out.complete = false;
  out.eigenvalues = ritz.head(wanted);
  Eigen::Index vec_above = 0;
  while (vec_above < wanted && out.eigenvalues(vec_above) > req.vector_floor) ++vec_above;
  const Eigen::Index vec_count =
      std::min(wanted, std::max(req.min_vectors, vec_above + req.extra_vectors));
  out.eigenvectors = q.leftCols(m) * ritz_vecs.leftCols(vec_count);
  for (Eigen::Index j = 0; j < vec_count; ++j) out.eigenvectors.col(j).normalize();
  fix_signs(out.eigenvectors);
  return out;
}

}  // namespace detail

/// Eigen-decomposition of XX^T/n: every eigenvalue (descending, d of them)
/// and the top_k leading unit eigenvectors. Uses the n x n Gram matrix when
/// n < d unless `mode` forces a route.
inline SpectrumResult sample_cov_eigs(const DataMatrix& x, Eigen::Index top_k,
                                      GramMode mode = GramMode::automatic) {
  if (top_k < 0 || top_k > x.dim()) {
    throw ArgumentError("sample_cov_eigs: top_k must lie in [0, d]");
  }
  return detail::dense_spectrum(x, mode, [top_k](const Eigen::VectorXd&) { return top_k; });
}

/// Leading spectrum according to `req`. Dense spectra are complete; Krylov
/// spectra contain only what was requested. Falls back to the dense route if
/// Lanczos does not converge within its subspace budget.
inline SpectrumResult leading_spectrum(const DataMatrix& x, const SpectrumRequest& req) {
  const Eigen::Index small_side = std::min(x.dim(), x.samples());
  const bool dense = req.solver == Solver::dense ||
                     (req.solver == Solver::automatic && small_side <= req.dense_limit);
  if (!dense) {
    bool converged = false;
    auto out = detail::krylov_spectrum(x, req, converged);
    if (converged) return out;
  }
  return detail::dense_spectrum(x, GramMode::automatic, [&req](const Eigen::VectorXd& values) {
    const Eigen::Index cap = values.size();
    Eigen::Index above = 0;
    while (above < cap && values(above) > req.vector_floor) ++above;
    return std::min(cap, std::max(req.min_vectors, above + req.extra_vectors));
  });
}

/// Uniform empirical measure on a spectrum.
inline EmpiricalMeasure esd_of(const std::vector<double>& eigenvalues) {
  if (eigenvalues.empty()) throw ArgumentError("esd_of: empty eigenvalue list");
  for (double v : eigenvalues) {
    if (!std::isfinite(v)) throw ArgumentError("esd_of: non-finite eigenvalue");
  }
  return EmpiricalMeasure::uniform(eigenvalues);
}

}  // namespace mspca
