#pragma once

// Mean-Shift PCA.
//
// 1. Decompose X~X~^T/n and collect the eigenvalues above the bulk edge.
// 2. Draw a knockoff mean m' gamma'^T of strength theta'^2 = 2 g^{-1}(lambda~_1)
//    in a uniformly random direction and add it to the data.
// 3. Decompose again. An original spike is stable when some perturbed
//    eigenvalue lies within eps = C n^{-1/2} of it; covariance spikes stay put
//    while mean-shift spikes move by a constant amount.
// Stable eigenpairs are those of the first decomposition.

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "mspca/error.hpp"
#include "mspca/rmt.hpp"
#include "mspca/rng.hpp"
#include "mspca/simulate.hpp"
#include "mspca/spectral.hpp"

namespace mspca {

inline constexpr std::uint64_t kDefaultSeed = 20240917;

enum class KnockoffRule {
  auto_double_inverse,  ///< theta'^2 = 2 g^{-1}(lambda~_1)
  fixed,                ///< theta'^2 = MsPcaConfig::theta_prime_sq
  empirical,            ///< theta'^2 = 2 / D_mu(lambda~_1), mu the non-spike ESD (c <= 1)
};

struct MsPcaConfig {
  Eigen::Index top_k_out = 1;
  std::optional<double> C;             ///< threshold constant; default max(1, 1/c)
  double pi_prime = 1.0;
  KnockoffRule theta_rule = KnockoffRule::auto_double_inverse;
  double theta_prime_sq = 0.0;         ///< used by KnockoffRule::fixed
  std::optional<double> spike_margin;  ///< bulk-exit margin; default eps
  int num_knockoffs = 1;
  std::uint64_t seed = kDefaultSeed;
  Solver solver = Solver::automatic;
  DirectionMode knockoff_direction = DirectionMode::haar_sphere;
  /// Minimum number of leading eigenvalues kept in both reported spectra.
  Eigen::Index report_values = 1;
  /// Lowest value the perturbed spectrum must reach (default: smallest spike - eps).
  std::optional<double> perturbed_floor;

  void validate() const {
    if (top_k_out < 0) throw ArgumentError("top_k_out must be non-negative");
    if (C && !(*C > 0.0 && std::isfinite(*C))) throw ArgumentError("C must be positive and finite");
    if (!(pi_prime > 0.0 && pi_prime <= 1.0)) throw ArgumentError("pi_prime must lie in (0, 1]");
    if (spike_margin && !(*spike_margin >= 0.0)) throw ArgumentError("spike_margin must be >= 0");
    if (report_values < 0) throw ArgumentError("report_values must be non-negative");
    if (num_knockoffs < 1) throw ArgumentError("num_knockoffs must be at least 1");
    if (theta_rule == KnockoffRule::fixed && !(theta_prime_sq > 0.0 && std::isfinite(theta_prime_sq))) {
      throw ArgumentError("fixed knockoff strength must be positive and finite");
    }
  }
};

struct KnockoffSpec {
  Eigen::VectorXd m_prime;
  std::vector<Eigen::Index> members;  ///< sample indices with gamma'_j = 1
  Eigen::Index n = 0;
  double pi_prime = 1.0;              ///< realised weight |gamma'| / n
  double theta_prime_sq = 0.0;        ///< pi' ||m'||^2
  bool no_initial_spike = false;

  Eigen::VectorXd gamma() const {
    Eigen::VectorXd g = Eigen::VectorXd::Zero(n);
    for (Eigen::Index j : members) g(j) = 1.0;
    return g;
  }
};

struct MatchEntry {
  Eigen::Index index = 0;  ///< position in the original spectrum
  double lambda = 0.0;
  double matched = 0.0;    ///< nearest perturbed eigenvalue
  double distance = 0.0;
  bool stable = false;
};

struct Eigenpair {
  Eigen::Index index = 0;
  double lambda = 0.0;
  Eigen::VectorXd u;
  /// Largest nearest-match distance over knockoff repeats (NaN for fill).
  double matched_distance = std::numeric_limits<double>::quiet_NaN();
};

struct MsPcaResult {
  std::vector<Eigenpair> stable;   ///< descending
  std::vector<Eigenpair> removed;  ///< descending
  /// Leading non-spike eigenpairs padding the output up to top_k_out.
  std::vector<Eigenpair> fill;
  double epsilon = 0.0;
  double spike_threshold = 0.0;
  Eigen::Index spike_count = 0;
  /// Per knockoff repeat, one entry per examined spike.
  std::vector<std::vector<MatchEntry>> match_report;
  std::vector<KnockoffSpec> knockoffs;
  bool neutral = false;  ///< no eigenvalue left the bulk
  std::vector<double> eigenvalues;            ///< leading spectrum of X~X~^T/n
  std::vector<double> perturbed_eigenvalues;  ///< leading spectrum after the first knockoff

  /// Stable components followed by fill, at most top_k_out of them.
  std::vector<const Eigenpair*> components(Eigen::Index top_k_out) const {
    std::vector<const Eigenpair*> out;
    for (const auto& e : stable) out.push_back(&e);
    for (const auto& e : fill) out.push_back(&e);
    if (static_cast<Eigen::Index>(out.size()) > top_k_out) out.resize(static_cast<std::size_t>(top_k_out));
    return out;
  }
};

/// eps = C n^{-1/2}, with C = max(1, 1/c) unless overridden.
inline double default_threshold(double c, Eigen::Index n, std::optional<double> C_override = {}) {
  detail::require_ratio(c);
  if (n < 1) throw ArgumentError("default_threshold: n must be positive");
  const double C = C_override ? *C_override : std::max(1.0, 1.0 / c);
  return C / std::sqrt(static_cast<double>(n));
}

/// Indices of eigenvalues above (1 + sqrt c)^2 + margin, where the margin
/// defaults to default_threshold(c, n).
inline std::vector<Eigen::Index> detect_outlying(const std::vector<double>& eigenvalues, double c,
                                                 Eigen::Index n,
                                                 std::optional<double> spike_margin = {}) {
  const double margin = spike_margin ? *spike_margin : default_threshold(c, n);
  const double floor = bulk_edge(c) + margin;
  std::vector<Eigen::Index> out;
  for (std::size_t i = 0; i < eigenvalues.size() && eigenvalues[i] > floor; ++i) {
    out.push_back(static_cast<Eigen::Index>(i));
  }
  return out;
}

/// Knockoff of strength theta'^2 = 2 g^{-1}(lambda1) (or 4 sqrt(c) when
/// lambda1 does not exceed the bulk edge) with pi' n members.
inline KnockoffSpec select_knockoff(double lambda1, double c, Eigen::Index n, Eigen::Index d,
                                    double pi_prime, Rng& rng,
                                    DirectionMode mode = DirectionMode::haar_sphere) {
  if (!(pi_prime > 0.0 && pi_prime <= 1.0)) throw ArgumentError("pi_prime must lie in (0, 1]");
  KnockoffSpec k;
  if (lambda1 > bulk_edge(c)) {
    k.theta_prime_sq = 2.0 * spike_inverse(lambda1, c);
  } else {
    k.theta_prime_sq = 4.0 * std::sqrt(c);
    k.no_initial_spike = true;
  }
  MixtureSpec dir;
  dir.magnitudes = {1.0};
  dir.weights = {0.5};
  dir.direction_mode = mode;
  Eigen::VectorXd v = detail::draw_directions(d, dir, rng).col(0);
  v /= v.norm();
  k.m_prime = std::sqrt(k.theta_prime_sq / pi_prime) * v;
  auto member = membership_vectors(n, {pi_prime}, rng);
  k.members = std::move(member.members[0]);
  k.n = n;
  k.pi_prime = static_cast<double>(k.members.size()) / static_cast<double>(n);
  return k;
}

/// X~' = X~ + m' gamma'^T.
inline DataMatrix inject(const DataMatrix& x, const KnockoffSpec& k) {
  if (k.m_prime.size() != x.dim() || k.n != x.samples()) {
    throw ArgumentError("inject: knockoff dimensions do not match the data");
  }
  Eigen::MatrixXd out = x.values();
  for (Eigen::Index j : k.members) out.col(j) += k.m_prime;
  return DataMatrix(std::move(out));
}

/// Nearest perturbed eigenvalue of every spike; stable iff the distance is
/// below eps. A perturbed eigenvalue may serve several spikes.
inline std::vector<MatchEntry> match_invariant(const std::vector<std::pair<Eigen::Index, double>>& spikes,
                                               const std::vector<double>& perturbed, double epsilon) {
  if (perturbed.empty()) throw ArgumentError("match_invariant: empty perturbed spectrum");
  std::vector<MatchEntry> out;
  for (const auto& [index, lambda] : spikes) {
    MatchEntry e;
    e.index = index;
    e.lambda = lambda;
    e.distance = std::numeric_limits<double>::infinity();
    for (double p : perturbed) {
      const double dist = std::abs(lambda - p);
      if (dist < e.distance) {
        e.distance = dist;
        e.matched = p;
      }
    }
    e.stable = e.distance < epsilon;
    out.push_back(e);
  }
  return out;
}

namespace detail {

inline double knockoff_strength(const MsPcaConfig& cfg, const SpectrumResult& spec,
                                Eigen::Index spike_count, double c) {
  const double lambda1 = spec.eigenvalues(0);
  switch (cfg.theta_rule) {
    case KnockoffRule::fixed:
      return cfg.theta_prime_sq;
    case KnockoffRule::empirical: {
      if (!spec.complete) throw UnsupportedError("empirical knockoff rule needs the dense solver");
      if (spike_count == 0) return 4.0 * std::sqrt(c);
      std::vector<double> bulk(spec.eigenvalues.data() + spike_count,
                               spec.eigenvalues.data() + spec.eigenvalues.size());
      return 2.0 * strength_from_esd(lambda1, esd_of(bulk), c);
    }
    case KnockoffRule::auto_double_inverse:
      break;
  }
  return lambda1 > bulk_edge(c) ? 2.0 * spike_inverse(lambda1, c) : 4.0 * std::sqrt(c);
}

}  // namespace detail

inline MsPcaResult run_ms_pca(const DataMatrix& x_tilde, const MsPcaConfig& cfg = {}) {
  cfg.validate();
  const Eigen::Index d = x_tilde.dim();
  const Eigen::Index n = x_tilde.samples();
  if (d < 2 || n < 2) throw ArgumentError("run_ms_pca: need d >= 2 and n >= 2");
  if (cfg.top_k_out > d) throw ArgumentError("run_ms_pca: top_k_out exceeds the dimension");
  const double c = x_tilde.aspect_ratio();

  MsPcaResult res;
  res.epsilon = default_threshold(c, n, cfg.C);
  const double margin = cfg.spike_margin ? *cfg.spike_margin : res.epsilon;
  res.spike_threshold = bulk_edge(c) + margin;

  SpectrumRequest first;
  first.value_floor = res.spike_threshold;
  first.vector_floor = res.spike_threshold;
  first.min_values = std::max<Eigen::Index>(1, cfg.report_values);
  first.min_vectors = cfg.top_k_out;
  first.extra_vectors = cfg.top_k_out;
  first.solver = cfg.theta_rule == KnockoffRule::empirical ? Solver::dense : cfg.solver;
  const SpectrumResult initial = leading_spectrum(x_tilde, first);
  res.eigenvalues = initial.values();

  const auto spikes = detect_outlying(res.eigenvalues, c, n, margin);
  res.spike_count = static_cast<Eigen::Index>(spikes.size());
  res.neutral = spikes.empty();
  std::vector<std::pair<Eigen::Index, double>> spike_values;
  for (Eigen::Index i : spikes) spike_values.emplace_back(i, initial.eigenvalues(i));

  const double theta_sq = detail::knockoff_strength(cfg, initial, res.spike_count, c);
  std::vector<double> worst(spikes.size(), 0.0);
  for (int r = 0; r < cfg.num_knockoffs; ++r) {
    Rng rng = Rng::stream(hash_combine(cfg.seed, static_cast<std::uint64_t>(r)), Stream::knockoff);
    KnockoffSpec k = select_knockoff(initial.eigenvalues(0), c, n, d, cfg.pi_prime, rng,
                                     cfg.knockoff_direction);
    if (cfg.theta_rule != KnockoffRule::auto_double_inverse) {
      k.m_prime *= std::sqrt(theta_sq / k.theta_prime_sq);
      k.theta_prime_sq = theta_sq;
    }
    // Report the strength actually realised by the rounded membership count.
    k.theta_prime_sq = k.pi_prime * k.m_prime.squaredNorm();

    SpectrumRequest second;
    second.value_floor = spikes.empty() ? res.spike_threshold
                                        : spike_values.back().second - res.epsilon;
    if (cfg.perturbed_floor) second.value_floor = std::min(second.value_floor, *cfg.perturbed_floor);
    second.min_values = std::max({Eigen::Index{1}, res.spike_count + 1, cfg.report_values});
    second.solver = cfg.solver;
    const SpectrumResult perturbed = leading_spectrum(inject(x_tilde, k), second);
    const auto perturbed_values = perturbed.values();
    if (r == 0) res.perturbed_eigenvalues = perturbed_values;

    if (!spikes.empty()) {
      auto report = match_invariant(spike_values, perturbed_values, res.epsilon);
      for (std::size_t i = 0; i < report.size(); ++i) worst[i] = std::max(worst[i], report[i].distance);
      res.match_report.push_back(std::move(report));
    } else {
      res.match_report.emplace_back();
    }
    res.knockoffs.push_back(std::move(k));
  }

  for (std::size_t i = 0; i < spikes.size(); ++i) {
    Eigenpair e;
    e.index = spikes[i];
    e.lambda = spike_values[i].second;
    e.u = initial.eigenvectors.col(spikes[i]);
    e.matched_distance = worst[i];
    (worst[i] < res.epsilon ? res.stable : res.removed).push_back(std::move(e));
  }

  const auto wanted_fill = cfg.top_k_out - static_cast<Eigen::Index>(res.stable.size());
  for (Eigen::Index i = res.spike_count;
       i < initial.top_k() && static_cast<Eigen::Index>(res.fill.size()) < wanted_fill; ++i) {
    Eigenpair e;
    e.index = i;
    e.lambda = initial.eigenvalues(i);
    e.u = initial.eigenvectors.col(i);
    res.fill.push_back(std::move(e));
  }
  return res;
}

}  // namespace mspca
