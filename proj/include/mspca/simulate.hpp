#pragma once

// Synthetic data under the mean-shift model X~ = X + sum_i m_i gamma_i^T with
// spiked-covariance inliers X = (I + P)^{1/2} Z, plus the mean-shift plus
// covariance-shift variant.
//
// All draws for one dataset come from a single seed split into named streams
// (noise, spike basis, directions, memberships, covariance shift).

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <string>
#include <utility>
#include <vector>

#include "mspca/error.hpp"
#include "mspca/rng.hpp"
#include "mspca/spectral.hpp"

namespace mspca {

/// Population covariance I + sum_i ell_i u_i u_i^T.
struct SpikedCovSpec {
  std::vector<double> ells;

  Eigen::Index rank() const { return static_cast<Eigen::Index>(ells.size()); }

  void validate() const {
    for (double l : ells) {
      if (!std::isfinite(l) || !(l > -1.0)) {
        throw InvalidCovarianceError("covariance spike " + std::to_string(l) +
                                     " must be finite and greater than -1");
      }
    }
  }
};

enum class DirectionMode {
  haar_sphere,     ///< uniform on the unit sphere
  iid_gaussian,    ///< i.i.d. N(0, 1/d) entries, norm close to one
  iid_rademacher,  ///< i.i.d. +-1/sqrt(d) entries, exactly unit norm
};

enum class EntryLaw { gaussian, rademacher };

/// Mean-shift components: magnitudes ||m_i|| and weights pi_i (sum < 1).
struct MixtureSpec {
  std::vector<double> magnitudes;
  std::vector<double> weights;
  DirectionMode direction_mode = DirectionMode::haar_sphere;
  /// Orthonormalise the component directions against each other.
  bool orthogonal_directions = false;

  Eigen::Index k() const { return static_cast<Eigen::Index>(magnitudes.size()); }

  void validate() const {
    if (magnitudes.size() != weights.size()) {
      throw ArgumentError("MixtureSpec: magnitudes and weights must have equal length");
    }
    double total = 0.0;
    for (std::size_t i = 0; i < weights.size(); ++i) {
      if (!std::isfinite(magnitudes[i]) || magnitudes[i] < 0.0) {
        throw ArgumentError("MixtureSpec: magnitudes must be finite and non-negative");
      }
      if (!(weights[i] > 0.0 && weights[i] < 1.0)) {
        throw InfeasibleWeightsError("MixtureSpec: weights must lie in (0, 1), got " +
                                     std::to_string(weights[i]));
      }
      total += weights[i];
    }
    if (!(total < 1.0)) throw InfeasibleWeightsError("MixtureSpec: weights must sum below 1");
  }
};

/// Component assignment of the n samples. labels[j] = 0 for inliers and i + 1
/// for component i; members[i] lists the sample indices of component i.
struct Membership {
  Eigen::Index n = 0;
  std::vector<int> labels;
  std::vector<std::vector<Eigen::Index>> members;

  /// Binary indicator gamma_i (component i >= 0) or the inlier indicator (i = -1).
  Eigen::VectorXd indicator(int component) const {
    Eigen::VectorXd g = Eigen::VectorXd::Zero(n);
    for (Eigen::Index j = 0; j < n; ++j) {
      if (labels[static_cast<std::size_t>(j)] == component + 1) g(j) = 1.0;
    }
    return g;
  }

  /// Realised weight (1/n) sum_j gamma_ij.
  double weight(std::size_t component) const {
    return static_cast<double>(members[component].size()) / static_cast<double>(n);
  }
};

/// Realised contamination factors of A = sum_i m_i gamma_i^T.
struct Contamination {
  Eigen::MatrixXd means;       ///< d x k, column i is m_i
  Eigen::MatrixXd directions;  ///< d x k, column i is m_i / ||m_i|| (or the drawn direction when m_i = 0)
  Eigen::VectorXd weights;     ///< realised pi_i
  Eigen::VectorXd theta;       ///< sqrt(pi_i) ||m_i||
  Membership membership;

  Eigen::Index k() const { return means.cols(); }

  /// Strengths theta_i^2.
  std::vector<double> thetas_sq() const {
    std::vector<double> out;
    for (Eigen::Index i = 0; i < theta.size(); ++i) out.push_back(theta(i) * theta(i));
    return out;
  }
};

struct Dataset {
  DataMatrix X;         ///< clean inliers
  DataMatrix X_tilde;   ///< contaminated data
  Eigen::MatrixXd truth_U;  ///< d x r population spike basis
  std::vector<double> ells;
  Contamination contamination;
  std::uint64_t seed = 0;
};

/// Uniform unit vector: normalised i.i.d. standard normals.
inline Eigen::VectorXd haar_unit_vector(Eigen::Index d, Rng& rng) {
  if (d < 1) throw ArgumentError("haar_unit_vector: dimension must be positive");
  Eigen::VectorXd v(d);
  double norm = 0.0;
  do {
    for (Eigen::Index i = 0; i < d; ++i) v(i) = rng.normal();
    norm = v.norm();
  } while (!(norm > 0.0));
  return v / norm;
}

/// Thin orthonormal factor of a d x r standard Gaussian matrix.
inline Eigen::MatrixXd orthonormal_spike_basis(Eigen::Index d, Eigen::Index r, Rng& rng) {
  if (r < 0 || r > d) throw ArgumentError("orthonormal_spike_basis: need 0 <= r <= d");
  Eigen::MatrixXd g(d, r);
  for (Eigen::Index j = 0; j < r; ++j)
    for (Eigen::Index i = 0; i < d; ++i) g(i, j) = rng.normal();
  if (r == 0) return g;
  Eigen::HouseholderQR<Eigen::MatrixXd> qr(g);
  Eigen::MatrixXd q = qr.householderQ() * Eigen::MatrixXd::Identity(d, r);
  // Fix the sign so that column j has positive projection on g_j (the QR
  // factor with positive R diagonal), which makes r = 1 equal to g / ||g||.
  for (Eigen::Index j = 0; j < r; ++j) {
    if (q.col(j).dot(g.col(j)) < 0.0) q.col(j) = -q.col(j);
  }
  return q;
}

/// d x n matrix with i.i.d. entries of the given law, filled column by column.
inline Eigen::MatrixXd noise_matrix(Eigen::Index d, Eigen::Index n, EntryLaw law, Rng& rng) {
  Eigen::MatrixXd z(d, n);
  double* p = z.data();
  const Eigen::Index total = d * n;
  if (law == EntryLaw::gaussian) {
    for (Eigen::Index i = 0; i < total; ++i) p[i] = rng.normal();
  } else {
    for (Eigen::Index i = 0; i < total; ++i) p[i] = rng.rademacher();
  }
  return z;
}

/// In place z <- (I + U diag(ells) U^T)^{1/2} z for orthonormal U, i.e.
/// z + sum_i (sqrt(1 + ell_i) - 1) u_i (u_i^T z). Zero spikes are skipped.
inline void apply_sqrt_spiked(const Eigen::MatrixXd& u, const std::vector<double>& ells,
                              Eigen::Ref<Eigen::MatrixXd> z) {
  for (Eigen::Index i = 0; i < u.cols(); ++i) {
    const double s = std::sqrt(1.0 + ells[static_cast<std::size_t>(i)]) - 1.0;
    if (s == 0.0) continue;
    const Eigen::RowVectorXd proj = u.col(i).transpose() * z;
    z.noalias() += (s * u.col(i)) * proj;
  }
}

struct Inliers {
  DataMatrix X;
  Eigen::MatrixXd U;
};

/// X = (I + P)^{1/2} Z with P = sum_i ell_i u_i u_i^T; Z and U come from the
/// noise and spike-basis streams of `seed`.
inline Inliers generate_inliers(Eigen::Index d, Eigen::Index n, const SpikedCovSpec& cov,
                                std::uint64_t seed, EntryLaw law = EntryLaw::gaussian) {
  if (d < 1 || n < 1) throw ArgumentError("generate_inliers: d and n must be positive");
  cov.validate();
  Rng basis_rng = Rng::stream(seed, Stream::spike_basis);
  Rng noise_rng = Rng::stream(seed, Stream::noise);
  Eigen::MatrixXd u = orthonormal_spike_basis(d, cov.rank(), basis_rng);
  Eigen::MatrixXd x = noise_matrix(d, n, law, noise_rng);
  apply_sqrt_spiked(u, cov.ells, x);
  return {DataMatrix(std::move(x)), std::move(u)};
}

/// Exactly round(pi_i n) members per component at uniformly permuted positions.
inline Membership membership_vectors(Eigen::Index n, const std::vector<double>& weights, Rng& rng) {
  if (n < 1) throw ArgumentError("membership_vectors: n must be positive");
  std::vector<Eigen::Index> counts;
  Eigen::Index total = 0;
  for (double w : weights) {
    if (!std::isfinite(w) || w < 0.0) throw InfeasibleWeightsError("membership weights must be non-negative");
    const auto cnt = static_cast<Eigen::Index>(std::llround(w * static_cast<double>(n)));
    counts.push_back(cnt);
    total += cnt;
  }
  if (total > n) {
    throw InfeasibleWeightsError("membership counts " + std::to_string(total) +
                                 " exceed the sample size " + std::to_string(n));
  }
  std::vector<Eigen::Index> perm(static_cast<std::size_t>(n));
  std::iota(perm.begin(), perm.end(), Eigen::Index{0});
  std::shuffle(perm.begin(), perm.end(), rng.engine());

  Membership out;
  out.n = n;
  out.labels.assign(static_cast<std::size_t>(n), 0);
  out.members.resize(weights.size());
  std::size_t pos = 0;
  for (std::size_t i = 0; i < counts.size(); ++i) {
    for (Eigen::Index c = 0; c < counts[i]; ++c, ++pos) {
      out.members[i].push_back(perm[pos]);
      out.labels[static_cast<std::size_t>(perm[pos])] = static_cast<int>(i) + 1;
    }
    std::sort(out.members[i].begin(), out.members[i].end());
  }
  return out;
}

namespace detail {

inline Eigen::MatrixXd draw_directions(Eigen::Index d, const MixtureSpec& mix, Rng& rng) {
  const Eigen::Index k = mix.k();
  Eigen::MatrixXd v(d, k);
  const double scale = 1.0 / std::sqrt(static_cast<double>(d));
  for (Eigen::Index i = 0; i < k; ++i) {
    switch (mix.direction_mode) {
      case DirectionMode::haar_sphere:
        v.col(i) = haar_unit_vector(d, rng);
        break;
      case DirectionMode::iid_gaussian:
        for (Eigen::Index r = 0; r < d; ++r) v(r, i) = scale * rng.normal();
        break;
      case DirectionMode::iid_rademacher:
        for (Eigen::Index r = 0; r < d; ++r) v(r, i) = scale * rng.rademacher();
        break;
    }
  }
  if (mix.orthogonal_directions && k > 0) {
    if (k > d) throw ArgumentError("cannot orthogonalise more directions than dimensions");
    const Eigen::VectorXd norms = v.colwise().norm().transpose();
    Eigen::HouseholderQR<Eigen::MatrixXd> qr(v);
    Eigen::MatrixXd q = qr.householderQ() * Eigen::MatrixXd::Identity(d, k);
    for (Eigen::Index i = 0; i < k; ++i) {
      if (q.col(i).dot(v.col(i)) < 0.0) q.col(i) = -q.col(i);
      v.col(i) = norms(i) * q.col(i);
    }
  }
  return v;
}

/// Directions and memberships for `mix` from the streams of `seed`; X~ = X + A.
inline Contamination draw_contamination(Eigen::Index d, Eigen::Index n, const MixtureSpec& mix,
                                        std::uint64_t seed) {
  mix.validate();
  Rng dir_rng = Rng::stream(seed, Stream::directions);
  Rng member_rng = Rng::stream(seed, Stream::membership);
  Contamination out;
  out.directions = draw_directions(d, mix, dir_rng);
  out.membership = membership_vectors(n, mix.weights, member_rng);
  const Eigen::Index k = mix.k();
  out.means.resize(d, k);
  out.weights.resize(k);
  out.theta.resize(k);
  for (Eigen::Index i = 0; i < k; ++i) {
    out.means.col(i) = mix.magnitudes[static_cast<std::size_t>(i)] * out.directions.col(i);
    const double nm = out.means.col(i).norm();
    if (nm > 0.0) out.directions.col(i) = out.means.col(i) / nm;
    out.weights(i) = out.membership.weight(static_cast<std::size_t>(i));
    out.theta(i) = std::sqrt(out.weights(i)) * nm;
  }
  return out;
}

inline Eigen::MatrixXd add_means(Eigen::MatrixXd x, const Contamination& a) {
  for (Eigen::Index i = 0; i < a.k(); ++i) {
    for (Eigen::Index j : a.membership.members[static_cast<std::size_t>(i)]) x.col(j) += a.means.col(i);
  }
  return x;
}

}  // namespace detail

/// X~ = X + sum_i m_i gamma_i^T with directions and memberships drawn from
/// the streams of `seed`. `truth_U` is carried into the dataset unchanged.
inline Dataset contaminate(const DataMatrix& x, const MixtureSpec& mix, std::uint64_t seed,
                           Eigen::MatrixXd truth_U = {}, std::vector<double> ells = {}) {
  auto a = detail::draw_contamination(x.dim(), x.samples(), mix, seed);
  DataMatrix tilde(detail::add_means(x.values(), a));
  return {x, std::move(tilde), std::move(truth_U), std::move(ells), std::move(a), seed};
}

/// Full simulation setup.
struct SimulationSpec {
  Eigen::Index d = 900;
  Eigen::Index n = 1000;
  SpikedCovSpec cov;
  MixtureSpec mix;
  EntryLaw law = EntryLaw::gaussian;
};

/// Default experiment setting for aspect ratio c and weight pi1: one covariance
/// spike ell_1 = 2 sqrt(c) and one mean shift with ||m_1|| = 2 sqrt(sqrt(c)/pi1),
/// so theta_1^2 = 4 sqrt(c).
inline SimulationSpec standard_setting(Eigen::Index d, Eigen::Index n, double pi1) {
  SimulationSpec s;
  s.d = d;
  s.n = n;
  const double c = static_cast<double>(d) / static_cast<double>(n);
  s.cov.ells = {2.0 * std::sqrt(c)};
  if (pi1 > 0.0) {
    s.mix.weights = {pi1};
    s.mix.magnitudes = {2.0 * std::sqrt(std::sqrt(c) / pi1)};
  }
  return s;
}

inline Dataset simulate(const SimulationSpec& spec, std::uint64_t seed) {
  auto in = generate_inliers(spec.d, spec.n, spec.cov, seed, spec.law);
  return contaminate(in.X, spec.mix, seed, std::move(in.U), spec.cov.ells);
}

/// Mean-shift plus covariance-shift mixture: inliers (I + P1)^{1/2} z and
/// outliers (I + P1)^{1/2} (I + P2)^{1/2} z + m1, with P2 = sum ell2_i w_i w_i^T
/// on a basis from the covariance-shift stream. With all ell2 = 0 the result
/// is bit-identical to simulate() with the same seed.
inline Dataset contaminate_mean_cov_shift(Eigen::Index d, Eigen::Index n, const SpikedCovSpec& cov1,
                                          double m1_norm, double pi1, const SpikedCovSpec& cov2,
                                          std::uint64_t seed,
                                          DirectionMode mode = DirectionMode::haar_sphere) {
  if (!(pi1 > 0.0 && pi1 < 1.0)) throw InfeasibleWeightsError("pi1 must lie in (0, 1)");
  cov2.validate();
  MixtureSpec mix;
  mix.magnitudes = {m1_norm};
  mix.weights = {pi1};
  mix.direction_mode = mode;
  auto in = generate_inliers(d, n, cov1, seed);
  auto a = detail::draw_contamination(d, n, mix, seed);

  Eigen::MatrixXd tilde = in.X.values();
  const bool shifted = std::any_of(cov2.ells.begin(), cov2.ells.end(), [](double l) { return l != 0.0; });
  if (shifted) {
    Rng shift_rng = Rng::stream(seed, Stream::covariance_shift);
    const Eigen::MatrixXd w = orthonormal_spike_basis(d, cov2.rank(), shift_rng);
    // Regenerate the outlier noise columns and add (I+P1)^{1/2}((I+P2)^{1/2} - I) z.
    Rng noise_rng = Rng::stream(seed, Stream::noise);
    const Eigen::MatrixXd z = noise_matrix(d, n, EntryLaw::gaussian, noise_rng);
    const auto& outliers = a.membership.members[0];
    Eigen::MatrixXd delta(d, static_cast<Eigen::Index>(outliers.size()));
    for (std::size_t j = 0; j < outliers.size(); ++j) delta.col(static_cast<Eigen::Index>(j)) = z.col(outliers[j]);
    Eigen::MatrixXd base = delta;
    apply_sqrt_spiked(w, cov2.ells, delta);
    delta -= base;
    apply_sqrt_spiked(in.U, cov1.ells, delta);
    for (std::size_t j = 0; j < outliers.size(); ++j) tilde.col(outliers[j]) += delta.col(static_cast<Eigen::Index>(j));
  }
  DataMatrix x_tilde(detail::add_means(std::move(tilde), a));
  return {std::move(in.X), std::move(x_tilde), std::move(in.U), cov1.ells, std::move(a), seed};
}

/// sigma_{k+1} / sigma_1 of a matrix (0 when it has at most k non-zero
/// singular values or is zero).
inline double singular_value_ratio(const Eigen::MatrixXd& m, Eigen::Index k) {
  Eigen::BDCSVD<Eigen::MatrixXd> svd(m);
  const auto& s = svd.singularValues();
  if (s.size() == 0 || s(0) == 0.0 || k >= s.size()) return 0.0;
  return s(k) / s(0);
}

}  // namespace mspca
