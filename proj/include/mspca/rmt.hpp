#pragma once

// Closed-form random-matrix quantities for the Marcenko-Pastur (MP) law with
// aspect ratio c = d/n: support edges, Stieltjes and companion transforms, the
// D-transform and the spike-forward map g with its inverse.

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <string>
#include <utility>
#include <vector>

#include "mspca/error.hpp"

namespace mspca {

struct MpEdges {
  double lambda_minus;
  double lambda_plus;
};

namespace detail {

inline void require_ratio(double c) {
  if (!(c > 0.0) || !std::isfinite(c)) {
    throw DomainError("aspect ratio c must be positive and finite, got " + std::to_string(c));
  }
}

}  // namespace detail

inline MpEdges mp_edges(double c) {
  detail::require_ratio(c);
  const double s = std::sqrt(c);
  return {(1.0 - s) * (1.0 - s), (1.0 + s) * (1.0 + s)};
}

/// Upper edge (1 + sqrt(c))^2 of the MP support.
inline double bulk_edge(double c) { return mp_edges(c).lambda_plus; }

/// Aspect ratio together with its MP support edges.
struct RmtModel {
  double c;
  double lambda_minus;
  double lambda_plus;

  static RmtModel from_ratio(double c) {
    const auto e = mp_edges(c);
    return {c, e.lambda_minus, e.lambda_plus};
  }
};

/// Stieltjes transform S_c(z) = int 1/(t - z) dmu_c(t) of the MP law on the
/// real axis outside [lambda_-, lambda_+]. The square root takes the branch
/// that behaves like z - (1 + c) at infinity, so S_c(z) ~ -1/z for |z| large.
inline double stieltjes_mp(double z, double c) {
  const auto e = mp_edges(c);
  if (!std::isfinite(z) || z == 0.0) {
    throw DomainError("stieltjes_mp: z must be finite and non-zero");
  }
  if (z >= e.lambda_minus && z <= e.lambda_plus) {
    throw DomainError("stieltjes_mp: z = " + std::to_string(z) + " lies inside the MP support");
  }
  const double root = std::sqrt((z - e.lambda_plus) * (z - e.lambda_minus));
  const double signed_root = z > e.lambda_plus ? root : -root;
  return (-(z + c - 1.0) + signed_root) / (2.0 * z * c);
}

/// Stieltjes transform of the companion (Gram side, X^T X / n) MP measure:
/// c S_c(z) + (c - 1)/z. Identical to stieltjes_mp when c == 1.
inline double companion_stieltjes(double z, double c) {
  const double s = stieltjes_mp(z, c);
  return c * s + (c - 1.0) / z;
}

/// D(lambda) = lambda S_c(lambda) S_{1/c}(lambda) for lambda above the bulk.
/// Strictly decreasing on (lambda_+, inf); a mean-shift spike of strength
/// theta^2 sits where D(lambda) = 1/theta^2.
inline double d_transform_mp(double lambda, double c) {
  const auto e = mp_edges(c);
  if (!(lambda > e.lambda_plus) || !std::isfinite(lambda)) {
    throw DomainError("d_transform_mp: lambda must exceed the bulk edge " +
                      std::to_string(e.lambda_plus));
  }
  return lambda * stieltjes_mp(lambda, c) * companion_stieltjes(lambda, c);
}

/// Discrete spectral measure: atoms with non-negative weights summing to one.
class EmpiricalMeasure {
 public:
  EmpiricalMeasure(std::vector<double> atoms, std::vector<double> weights)
      : atoms_(std::move(atoms)), weights_(std::move(weights)) {
    if (atoms_.empty() || atoms_.size() != weights_.size()) {
      throw ArgumentError("EmpiricalMeasure: atoms and weights must be non-empty and equal length");
    }
    // Compensated sum: 1e4 equal weights would otherwise drift near 1e-12.
    double total = 0.0;
    double carry = 0.0;
    for (std::size_t i = 0; i < atoms_.size(); ++i) {
      if (!std::isfinite(atoms_[i]) || !std::isfinite(weights_[i]) || weights_[i] < 0.0) {
        throw ArgumentError("EmpiricalMeasure: atoms must be finite and weights non-negative");
      }
      const double y = weights_[i] - carry;
      const double t = total + y;
      carry = (t - total) - y;
      total = t;
    }
    if (std::abs(total - 1.0) > 1e-12) {
      throw ArgumentError("EmpiricalMeasure: weights must sum to 1");
    }
    max_atom_ = *std::max_element(atoms_.begin(), atoms_.end());
  }

  /// Uniform measure 1/len on the given values.
  static EmpiricalMeasure uniform(std::vector<double> atoms) {
    if (atoms.empty()) throw ArgumentError("EmpiricalMeasure::uniform: empty atom list");
    std::vector<double> w(atoms.size(), 1.0 / static_cast<double>(atoms.size()));
    return EmpiricalMeasure(std::move(atoms), std::move(w));
  }

  const std::vector<double>& atoms() const { return atoms_; }
  const std::vector<double>& weights() const { return weights_; }
  double max_atom() const { return max_atom_; }

  /// int f(t) dmu(t)
  template <class F>
  double integrate(F&& f) const {
    double acc = 0.0;
    for (std::size_t i = 0; i < atoms_.size(); ++i) acc += weights_[i] * f(atoms_[i]);
    return acc;
  }

  /// S_mu(z) = int 1/(t - z) dmu(t)
  double stieltjes(double z) const {
    return integrate([z](double t) { return 1.0 / (t - z); });
  }

 private:
  std::vector<double> atoms_;
  std::vector<double> weights_;
  double max_atom_ = 0.0;
};

/// D-transform of a discrete measure mu of XX^T/n, with the companion measure
/// taken as the matching Gram-side law (c <= 1):
///   D(lambda) = (int lambda/(lambda - t) dmu) * (c int 1/(lambda - t) dmu + (1 - c)/lambda).
inline double d_transform_esd(double lambda, const EmpiricalMeasure& mu, double c) {
  detail::require_ratio(c);
  if (c > 1.0) {
    throw UnsupportedError("d_transform_esd: only aspect ratios c <= 1 are supported");
  }
  if (!(lambda > mu.max_atom()) || !std::isfinite(lambda)) {
    throw DomainError("d_transform_esd: lambda must exceed the largest atom");
  }
  const double resolvent = mu.integrate([lambda](double t) { return 1.0 / (lambda - t); });
  return lambda * resolvent * (c * resolvent + (1.0 - c) / lambda);
}

/// g(l) = 1 + l + c (1 + l)/l, the almost-sure limit of a sample eigenvalue
/// driven by a population spike (or mean-shift strength theta^2) l > sqrt(c).
inline double spike_forward(double ell, double c) {
  detail::require_ratio(c);
  if (!(ell > std::sqrt(c)) || !std::isfinite(ell)) {
    throw SubThresholdError("spike_forward: strength " + std::to_string(ell) +
                            " does not exceed sqrt(c) = " + std::to_string(std::sqrt(c)));
  }
  return 1.0 + ell + c * (1.0 + ell) / ell;
}

/// g^{-1}(lambda) on ((1 + sqrt c)^2, inf).
inline double spike_inverse(double lambda, double c) {
  const double edge = bulk_edge(c);
  if (!(lambda > edge) || !std::isfinite(lambda)) {
    throw DomainError("spike_inverse: lambda must exceed the bulk edge " + std::to_string(edge));
  }
  const double a = lambda - 1.0 - c;
  const double disc = std::max(0.0, a * a - 4.0 * c);
  return 0.5 * (a + std::sqrt(disc));
}

/// True iff the strength lies strictly above the BBP threshold sqrt(c).
inline bool bbp_detectable(double strength, double c) {
  detail::require_ratio(c);
  return strength > std::sqrt(c);
}

struct SpikePrediction {
  std::vector<double> lambda_P;  ///< covariance-induced spikes, descending
  std::vector<double> lambda_A;  ///< mean-shift-induced spikes, descending
  std::vector<double> merged;    ///< descending union
  double bulk_edge = 0.0;
  std::vector<double> sub_threshold_ells;
  std::vector<double> sub_threshold_thetas_sq;
};

/// Asymptotic outlier locations for population spikes `ells` and mean-shift
/// strengths `thetas_sq`. Strengths at or below sqrt(c) collapse onto the
/// bulk edge and are listed in the sub_threshold fields.
inline SpikePrediction predict_spikes(const std::vector<double>& ells,
                                      const std::vector<double>& thetas_sq, double c) {
  detail::require_ratio(c);
  SpikePrediction out;
  out.bulk_edge = bulk_edge(c);
  auto place = [c](const std::vector<double>& in, std::vector<double>& hit,
                   std::vector<double>& miss) {
    for (double s : in) {
      if (!std::isfinite(s)) throw ArgumentError("predict_spikes: non-finite strength");
      if (bbp_detectable(s, c)) {
        hit.push_back(spike_forward(s, c));
      } else {
        miss.push_back(s);
      }
    }
    std::sort(hit.begin(), hit.end(), std::greater<>());
  };
  place(ells, out.lambda_P, out.sub_threshold_ells);
  place(thetas_sq, out.lambda_A, out.sub_threshold_thetas_sq);
  out.merged = out.lambda_P;
  out.merged.insert(out.merged.end(), out.lambda_A.begin(), out.lambda_A.end());
  std::sort(out.merged.begin(), out.merged.end(), std::greater<>());
  return out;
}

/// Mean-shift strength theta^2 = 1/D_mu(lambda) implied by an outlier at
/// lambda; the empirical-measure analogue of spike_inverse.
inline double strength_from_esd(double lambda, const EmpiricalMeasure& mu, double c) {
  const double d = d_transform_esd(lambda, mu, c);
  if (!(d > 0.0)) throw DomainError("strength_from_esd: non-positive D-transform");
  return 1.0 / d;
}

}  // namespace mspca
