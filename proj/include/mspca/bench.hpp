#pragma once

// Monte-Carlo experiment harness: metrics, scenario runners, aggregation,
// log-log slope fits and CSV / JSON / SVG output.
//
// Every (grid cell, trial) pair gets a seed hashed from the base seed, the
// scenario, the cell coordinates and the trial index; all methods of a trial
// see the same dataset.

#include <Eigen/Dense>
#include <algorithm>
#include <atomic>
#include <bit>
#include <boost/math/distributions/students_t.hpp>
#include <cmath>
#include <cstdint>
#include <cstdlib>
#include <iomanip>
#include <istream>
#include <limits>
#include <map>
#include <optional>
#include <ostream>
#include <sstream>
#include <string>
#include <thread>
#include <tuple>
#include <utility>
#include <vector>

#include "json.hpp"
#include "mspca/baselines.hpp"
#include "mspca/error.hpp"
#include "mspca/ms_pca.hpp"
#include "mspca/rmt.hpp"
#include "mspca/rng.hpp"
#include "mspca/simulate.hpp"
#include "mspca/spectral.hpp"

namespace mspca {

// ---------------------------------------------------------------- metrics

inline void require_unit(const Eigen::VectorXd& v, const char* what) {
  if (!(std::abs(v.norm() - 1.0) <= 1e-8)) {
    throw ArgumentError(std::string(what) + ": vector is not unit norm");
  }
}

/// |<u, v>| for unit vectors.
inline double alignment(const Eigen::VectorXd& u, const Eigen::VectorXd& v) {
  if (u.size() != v.size()) throw ArgumentError("alignment: length mismatch");
  require_unit(u, "alignment");
  require_unit(v, "alignment");
  return std::min(1.0, std::abs(u.dot(v)));
}

/// ||(1/n) X X^T u - lambda u||_2.
inline double residual_norm(const DataMatrix& x, const Eigen::VectorXd& u, double lambda) {
  require_unit(u, "residual_norm");
  return (cov_apply(x, u) - lambda * u).norm();
}

// ---------------------------------------------------------------- config

enum class Scenario { residual_decay, alignment_sweep, knockoff_spectrum, fluctuation, mean_cov_shift };
enum class Method { ms_pca, vanilla, center, winsorize, tyler };

inline const char* to_string(Scenario s) {
  switch (s) {
    case Scenario::residual_decay: return "residual_decay";
    case Scenario::alignment_sweep: return "alignment_sweep";
    case Scenario::knockoff_spectrum: return "knockoff_spectrum";
    case Scenario::fluctuation: return "fluctuation";
    case Scenario::mean_cov_shift: return "mean_cov_shift";
  }
  return "?";
}

inline const char* to_string(Method m) {
  switch (m) {
    case Method::ms_pca: return "ms_pca";
    case Method::vanilla: return "vanilla";
    case Method::center: return "center";
    case Method::winsorize: return "winsorize";
    case Method::tyler: return "tyler";
  }
  return "?";
}

inline std::optional<Scenario> parse_scenario(const std::string& s) {
  for (auto v : {Scenario::residual_decay, Scenario::alignment_sweep, Scenario::knockoff_spectrum,
                 Scenario::fluctuation, Scenario::mean_cov_shift}) {
    if (s == to_string(v)) return v;
  }
  return std::nullopt;
}

inline std::optional<Method> parse_method(const std::string& s) {
  for (auto v : {Method::ms_pca, Method::vanilla, Method::center, Method::winsorize, Method::tyler}) {
    if (s == to_string(v)) return v;
  }
  return std::nullopt;
}

/// Grid and options of one experiment. Empty `ells` / `thetas_sq` select the
/// default rules ell_1 = 2 sqrt(c) and theta_1^2 = 4 sqrt(c). In the
/// mean_cov_shift scenario `ells` lists the covariance-shift spikes ell_2
/// (ell_1 always follows the rule).
struct ExperimentConfig {
  Scenario scenario = Scenario::alignment_sweep;
  std::vector<Eigen::Index> dims;
  std::vector<double> ratios;
  std::vector<double> pi1s;
  std::vector<double> ells;
  std::vector<double> thetas_sq;
  std::vector<Method> methods;
  int trials = 25;
  std::uint64_t base_seed = kDefaultSeed;
  MsPcaConfig mspca;
  double winsor_q = 0.95;
  int tyler_max_iter = 200;
  double tyler_tol = 1e-6;
  unsigned threads = 0;  ///< 0: MSPCA_THREADS or 1

  static ExperimentConfig defaults(Scenario s) {
    ExperimentConfig c;
    c.scenario = s;
    c.methods = {Method::ms_pca};
    switch (s) {
      case Scenario::residual_decay:
        c.dims = {1000, 2000, 4000};
        c.ratios = {1.0};
        c.pi1s = {0.01, 0.1, 0.3, 0.5};
        break;
      case Scenario::alignment_sweep:
        c.dims = {900};
        c.ratios = {0.9};
        c.pi1s = {0.05, 0.10, 0.15, 0.20};
        c.methods = {Method::ms_pca, Method::vanilla, Method::center, Method::winsorize, Method::tyler};
        break;
      case Scenario::knockoff_spectrum:
        c.dims = {1000};
        c.ratios = {1.0};
        c.pi1s = {0.5};
        break;
      case Scenario::fluctuation:
        c.dims = {500, 1000, 2000, 4000};
        c.ratios = {1.0};
        c.pi1s = {0.01, 0.1, 0.5};
        break;
      case Scenario::mean_cov_shift:
        c.dims = {900};
        c.ratios = {0.9};
        c.pi1s = {0.05};
        c.ells = {2.0};
        c.methods = {Method::ms_pca, Method::vanilla, Method::center, Method::winsorize, Method::tyler};
        break;
    }
    return c;
  }

  void validate() const {
    if (trials < 1) throw ArgumentError("trials must be at least 1");
    if (dims.empty() || ratios.empty() || pi1s.empty() || methods.empty()) {
      throw ArgumentError("experiment grid must be non-empty");
    }
    for (auto d : dims) {
      if (d < 2) throw ArgumentError("grid dimensions must be at least 2");
    }
    for (double c : ratios) {
      if (!(c > 0.0) || !std::isfinite(c)) throw ArgumentError("aspect ratios must be positive");
    }
    for (double p : pi1s) {
      if (!(p >= 0.0 && p < 1.0)) throw ArgumentError("pi1 must lie in [0, 1)");
      if (scenario == Scenario::mean_cov_shift && p == 0.0) {
        throw ArgumentError("mean_cov_shift needs pi1 > 0");
      }
    }
    for (double t : thetas_sq) {
      if (!(t >= 0.0) || !std::isfinite(t)) throw ArgumentError("theta_sq values must be non-negative");
    }
    for (double l : ells) {
      if (!(l > -1.0) || !std::isfinite(l)) throw ArgumentError("ell values must exceed -1");
    }
    mspca.validate();
  }
};

/// One grid point. `ell` is ell_1 (ell_2 for mean_cov_shift); theta_sq is the
/// nominal pi_1 ||m_1||^2.
struct Cell {
  Eigen::Index d = 0;
  Eigen::Index n = 0;
  double c = 1.0;
  double pi1 = 0.0;
  double ell = 0.0;
  double theta_sq = 0.0;
};

struct TrialRecord {
  std::string scenario;
  Eigen::Index d = 0;
  Eigen::Index n = 0;
  double c = 0.0;
  double pi1 = 0.0;
  double ell = 0.0;
  double theta_sq = 0.0;
  std::string method;
  int trial = 0;
  std::uint64_t seed = 0;
  std::string metric;
  double value = 0.0;

  bool operator==(const TrialRecord&) const = default;
};

inline std::vector<Cell> grid_cells(const ExperimentConfig& cfg) {
  std::vector<Cell> out;
  const std::vector<double> nan_list{std::numeric_limits<double>::quiet_NaN()};
  const auto& ells = cfg.ells.empty() ? nan_list : cfg.ells;
  const auto& thetas = cfg.thetas_sq.empty() ? nan_list : cfg.thetas_sq;
  for (auto d : cfg.dims) {
    for (double c : cfg.ratios) {
      const auto n = static_cast<Eigen::Index>(std::llround(static_cast<double>(d) / c));
      if (n < 2) throw ArgumentError("grid produces fewer than two samples");
      const double realised_c = static_cast<double>(d) / static_cast<double>(n);
      for (double p : cfg.pi1s) {
        for (double l : ells) {
          for (double t : thetas) {
            Cell cell;
            cell.d = d;
            cell.n = n;
            cell.c = realised_c;
            cell.pi1 = p;
            const bool mcs = cfg.scenario == Scenario::mean_cov_shift;
            cell.ell = std::isnan(l) ? (mcs ? 0.0 : 2.0 * std::sqrt(realised_c)) : l;
            cell.theta_sq = std::isnan(t) ? (p > 0.0 ? 4.0 * std::sqrt(realised_c) : 0.0) : t;
            if (p == 0.0) cell.theta_sq = 0.0;
            out.push_back(cell);
          }
        }
      }
    }
  }
  return out;
}

inline std::uint64_t hash_double(std::uint64_t h, double v) {
  return hash_combine(h, std::bit_cast<std::uint64_t>(v == 0.0 ? 0.0 : v));
}

/// Seed of (base seed, scenario, cell, trial); independent of grid order and method.
inline std::uint64_t derive_seed(std::uint64_t base, Scenario s, const Cell& cell, int trial) {
  std::uint64_t h = splitmix64(base);
  h = hash_combine(h, static_cast<std::uint64_t>(s));
  h = hash_combine(h, static_cast<std::uint64_t>(cell.d));
  h = hash_combine(h, static_cast<std::uint64_t>(cell.n));
  h = hash_double(h, cell.c);
  h = hash_double(h, cell.pi1);
  h = hash_double(h, cell.ell);
  h = hash_double(h, cell.theta_sq);
  return hash_combine(h, static_cast<std::uint64_t>(trial));
}

// ---------------------------------------------------------------- helpers

/// Greedy nearest assignment: repeatedly pairs the closest (prediction, value)
/// among unused ones. Returns, per prediction, the index of its value or -1.
inline std::vector<int> assign_nearest(const std::vector<double>& predictions,
                                       const std::vector<double>& values) {
  std::vector<int> out(predictions.size(), -1);
  std::vector<bool> used(values.size(), false);
  for (std::size_t round = 0; round < std::min(predictions.size(), values.size()); ++round) {
    double best = std::numeric_limits<double>::infinity();
    std::size_t bp = 0, bv = 0;
    for (std::size_t p = 0; p < predictions.size(); ++p) {
      if (out[p] >= 0) continue;
      for (std::size_t v = 0; v < values.size(); ++v) {
        if (used[v]) continue;
        const double dist = std::abs(predictions[p] - values[v]);
        if (dist < best) {
          best = dist;
          bp = p;
          bv = v;
        }
      }
    }
    if (!std::isfinite(best)) break;
    out[bp] = static_cast<int>(bv);
    used[bv] = true;
  }
  return out;
}

/// Mean-shift strengths theta_j^2: eigenvalues of (M^T M)(G^T G)/n for the
/// means M (d x k) and indicator matrix G (n x k).
inline std::vector<double> mean_shift_strengths(const Eigen::MatrixXd& means, const Eigen::MatrixXd& gamma) {
  const Eigen::Index k = means.cols();
  if (k == 0) return {};
  const double n = static_cast<double>(gamma.rows());
  const Eigen::MatrixXd mtm = means.transpose() * means;
  const Eigen::MatrixXd gtg = gamma.transpose() * gamma / n;
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(gtg);
  const Eigen::MatrixXd root = es.operatorSqrt();
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> prod(root * mtm * root, Eigen::EigenvaluesOnly);
  std::vector<double> out;
  for (Eigen::Index i = 0; i < k; ++i) out.push_back(std::max(0.0, prod.eigenvalues()(i)));
  std::sort(out.begin(), out.end(), std::greater<>());
  return out;
}

/// Predicted outlier locations g(s) of the detectable strengths in `s` above `floor`.
inline std::vector<double> predicted_outliers(const std::vector<double>& s, double c, double floor) {
  std::vector<double> out;
  for (double v : s) {
    if (bbp_detectable(v, c)) {
      const double g = spike_forward(v, c);
      if (g > floor) out.push_back(g);
    }
  }
  return out;
}

namespace detail {

struct TrialContext {
  const ExperimentConfig& cfg;
  const Cell& cell;
  int trial;
  std::uint64_t seed;
  std::vector<TrialRecord>& out;

  void emit(Method m, const std::string& metric, double value) const {
    emit(to_string(m), metric, value);
  }
  void emit(const std::string& method, const std::string& metric, double value) const {
    if (!std::isfinite(value)) return;
    out.push_back({to_string(cfg.scenario), cell.d, cell.n, cell.c, cell.pi1, cell.ell, cell.theta_sq,
                   method, trial, seed, metric, value});
  }
};

inline Dataset make_dataset(const ExperimentConfig& cfg, const Cell& cell, std::uint64_t seed) {
  if (cfg.scenario == Scenario::mean_cov_shift) {
    SpikedCovSpec cov1{{2.0 * std::sqrt(cell.c)}};
    SpikedCovSpec cov2{{cell.ell}};
    return contaminate_mean_cov_shift(cell.d, cell.n, cov1, std::sqrt(cell.theta_sq / cell.pi1), cell.pi1,
                                      cov2, seed);
  }
  SimulationSpec spec;
  spec.d = cell.d;
  spec.n = cell.n;
  spec.cov.ells = {cell.ell};
  if (cell.pi1 > 0.0) {
    spec.mix.weights = {cell.pi1};
    spec.mix.magnitudes = {std::sqrt(cell.theta_sq / cell.pi1)};
  }
  return simulate(spec, seed);
}

inline MsPcaConfig trial_mspca(const ExperimentConfig& cfg, std::uint64_t seed) {
  MsPcaConfig m = cfg.mspca;
  m.seed = hash_combine(seed, static_cast<std::uint64_t>(Stream::knockoff));
  m.top_k_out = std::max<Eigen::Index>(1, m.top_k_out);
  return m;
}

inline Eigen::MatrixXd indicator_matrix(const Membership& mem) {
  Eigen::MatrixXd g(mem.n, static_cast<Eigen::Index>(mem.members.size()));
  for (std::size_t i = 0; i < mem.members.size(); ++i) g.col(static_cast<Eigen::Index>(i)) = mem.indicator(static_cast<int>(i));
  return g;
}

/// Leading eigenvector of XX^T/n.
inline Eigen::VectorXd top_eigenvector(const DataMatrix& x) {
  SpectrumRequest req;
  req.min_vectors = 1;
  return leading_spectrum(x, req).eigenvectors.col(0);
}

inline Eigen::VectorXd estimate_top(const ExperimentConfig& cfg, Method m, const DataMatrix& x,
                                    const MsPcaConfig& ms, std::vector<double>* removed_count) {
  switch (m) {
    case Method::ms_pca: {
      auto r = run_ms_pca(x, ms);
      if (removed_count) removed_count->push_back(static_cast<double>(r.removed.size()));
      return r.components(1).front()->u;
    }
    case Method::vanilla: return vanilla_pca(x, 1).eigenvectors.col(0);
    case Method::center: return center_pca(x, 1).eigenvectors.col(0);
    case Method::winsorize: return winsorize_pca(x, 1, cfg.winsor_q).eigenvectors.col(0);
    case Method::tyler: return tyler_pca(x, 1, cfg.tyler_max_iter, cfg.tyler_tol).eigenvectors.col(0);
  }
  throw ArgumentError("unknown method");
}

inline void trial_alignment(const TrialContext& t) {
  const Dataset ds = make_dataset(t.cfg, t.cell, t.seed);
  const Eigen::VectorXd truth = top_eigenvector(ds.X);
  const Eigen::VectorXd population = ds.truth_U.col(0);
  const MsPcaConfig ms = trial_mspca(t.cfg, t.seed);
  for (Method m : t.cfg.methods) {
    std::vector<double> removed;
    const Eigen::VectorXd est = estimate_top(t.cfg, m, ds.X_tilde, ms, &removed);
    t.emit(m, "alignment", alignment(truth, est));
    t.emit(m, "alignment_population", alignment(population, est));
    if (!removed.empty()) t.emit(m, "removed_count", removed.front());
  }
}

/// Examined spikes of `r` that are not assigned to a predicted mean-shift outlier.
inline std::vector<std::size_t> non_mean_spikes(const MsPcaResult& r, const std::vector<double>& lambda_a) {
  std::vector<double> spikes(r.eigenvalues.begin(), r.eigenvalues.begin() + r.spike_count);
  const auto assigned = assign_nearest(lambda_a, spikes);
  std::vector<bool> taken(spikes.size(), false);
  for (int a : assigned) {
    if (a >= 0) taken[static_cast<std::size_t>(a)] = true;
  }
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < spikes.size(); ++i) {
    if (!taken[i]) out.push_back(i);
  }
  return out;
}

inline void trial_residual(const TrialContext& t) {
  const Dataset ds = make_dataset(t.cfg, t.cell, t.seed);
  const auto r = run_ms_pca(ds.X_tilde, trial_mspca(t.cfg, t.seed));
  // Stable spikes sitting at a predicted mean-shift location are not scored.
  const auto lambda_a = predicted_outliers(ds.contamination.thetas_sq(), t.cell.c, r.spike_threshold);
  const auto scored = non_mean_spikes(r, lambda_a);
  double worst = -1.0;
  for (const auto& e : r.stable) {
    if (std::find(scored.begin(), scored.end(), static_cast<std::size_t>(e.index)) == scored.end()) continue;
    worst = std::max(worst, residual_norm(ds.X, e.u, e.lambda));
  }
  if (worst >= 0.0) t.emit(Method::ms_pca, "max_residual", worst);
  t.emit(Method::ms_pca, "stable_count", static_cast<double>(r.stable.size()));
  t.emit(Method::ms_pca, "removed_count", static_cast<double>(r.removed.size()));
}

/// Perturbed eigenvalues left after removing those assigned to the predicted
/// outliers of the combined (original + knockoff) mean shift.
inline std::vector<double> perturbed_without_mean(const MsPcaResult& r, const Dataset& ds, double c) {
  const auto& k = r.knockoffs.front();
  Eigen::MatrixXd means(ds.X.dim(), ds.contamination.k() + 1);
  means << ds.contamination.means, k.m_prime;
  Eigen::MatrixXd gamma(ds.X.samples(), ds.contamination.k() + 1);
  gamma << indicator_matrix(ds.contamination.membership), k.gamma();
  const auto lambda_a = predicted_outliers(mean_shift_strengths(means, gamma), c, r.spike_threshold);
  const auto assigned = assign_nearest(lambda_a, r.perturbed_eigenvalues);
  std::vector<bool> taken(r.perturbed_eigenvalues.size(), false);
  for (int a : assigned) {
    if (a >= 0) taken[static_cast<std::size_t>(a)] = true;
  }
  std::vector<double> out;
  for (std::size_t i = 0; i < taken.size(); ++i) {
    if (!taken[i]) out.push_back(r.perturbed_eigenvalues[i]);
  }
  return out;
}

inline void trial_knockoff_spectrum(const TrialContext& t) {
  const Dataset ds = make_dataset(t.cfg, t.cell, t.seed);
  MsPcaConfig ms = trial_mspca(t.cfg, t.seed);
  ms.report_values = 5;
  const auto r = run_ms_pca(ds.X_tilde, ms);
  SpectrumRequest clean_req;
  clean_req.min_values = 5;
  const auto clean = leading_spectrum(ds.X, clean_req).values();
  const std::string method = to_string(Method::ms_pca);
  for (std::size_t i = 0; i < 5; ++i) {
    const std::string idx = std::to_string(i + 1);
    if (i < clean.size()) t.emit(method, "clean_eig_" + idx, clean[i]);
    if (i < r.eigenvalues.size()) t.emit(method, "contaminated_eig_" + idx, r.eigenvalues[i]);
    if (i < r.perturbed_eigenvalues.size()) t.emit(method, "perturbed_eig_" + idx, r.perturbed_eigenvalues[i]);
  }
  t.emit(method, "epsilon", r.epsilon);

  // Identify the covariance and mean-shift outliers by their predicted locations.
  const double c = t.cell.c;
  const auto lambda_p = predicted_outliers({t.cell.ell}, c, r.spike_threshold);
  const auto lambda_a = predicted_outliers(ds.contamination.thetas_sq(), c, r.spike_threshold);
  std::vector<double> predictions = lambda_p;
  predictions.insert(predictions.end(), lambda_a.begin(), lambda_a.end());
  std::vector<double> spikes(r.eigenvalues.begin(), r.eigenvalues.begin() + r.spike_count);
  const auto assigned = assign_nearest(predictions, spikes);
  const auto& report = r.match_report.front();
  for (std::size_t p = 0; p < predictions.size(); ++p) {
    if (assigned[p] < 0) continue;
    const auto& e = report[static_cast<std::size_t>(assigned[p])];
    const std::string kind = p < lambda_p.size() ? "cov_spike" : "mean_spike";
    t.emit(method, kind + "_distance", e.distance);
    t.emit(method, kind + "_error", std::abs(e.lambda - predictions[p]));
  }
  t.emit(method, "spike_count", static_cast<double>(r.spike_count));
}

inline void trial_fluctuation(const TrialContext& t) {
  const Dataset ds = make_dataset(t.cfg, t.cell, t.seed);
  MsPcaConfig ms = trial_mspca(t.cfg, t.seed);
  const double c = t.cell.c;
  ms.perturbed_floor = bulk_edge(c) + default_threshold(c, t.cell.n, ms.C);
  const auto r = run_ms_pca(ds.X_tilde, ms);
  if (r.spike_count == 0) return;
  const auto lambda_a = predicted_outliers(ds.contamination.thetas_sq(), c, r.spike_threshold);
  const auto candidates = non_mean_spikes(r, lambda_a);
  const auto perturbed = perturbed_without_mean(r, ds, c);
  if (candidates.empty() || perturbed.empty()) return;
  double worst = 0.0;
  for (std::size_t i : candidates) {
    double best = std::numeric_limits<double>::infinity();
    for (double p : perturbed) best = std::min(best, std::abs(r.eigenvalues[i] - p));
    worst = std::max(worst, best);
  }
  t.emit(Method::ms_pca, "max_fluctuation", worst);
}

inline unsigned resolve_threads(unsigned requested) {
  if (requested > 0) return requested;
  if (const char* env = std::getenv("MSPCA_THREADS")) {
    char* end = nullptr;
    const long v = std::strtol(env, &end, 10);
    if (end != env && *end == '\0' && v > 0) return static_cast<unsigned>(v);
  }
  return 1;
}

}  // namespace detail

/// All records of one experiment, ordered by grid cell, then trial, then method.
inline std::vector<TrialRecord> run_experiment(const ExperimentConfig& cfg) {
  cfg.validate();
  const auto cells = grid_cells(cfg);
  const std::size_t tasks = cells.size() * static_cast<std::size_t>(cfg.trials);
  std::vector<std::vector<TrialRecord>> slots(tasks);
  std::vector<std::string> errors(tasks);

  auto work = [&](std::size_t task) {
    const Cell& cell = cells[task / static_cast<std::size_t>(cfg.trials)];
    const int trial = static_cast<int>(task % static_cast<std::size_t>(cfg.trials));
    const detail::TrialContext t{cfg, cell, trial, derive_seed(cfg.base_seed, cfg.scenario, cell, trial),
                                 slots[task]};
    switch (cfg.scenario) {
      case Scenario::residual_decay: detail::trial_residual(t); break;
      case Scenario::alignment_sweep:
      case Scenario::mean_cov_shift: detail::trial_alignment(t); break;
      case Scenario::knockoff_spectrum: detail::trial_knockoff_spectrum(t); break;
      case Scenario::fluctuation: detail::trial_fluctuation(t); break;
    }
  };

  const unsigned threads = std::min<std::size_t>(detail::resolve_threads(cfg.threads), tasks);
  if (threads <= 1) {
    for (std::size_t i = 0; i < tasks; ++i) work(i);
  } else {
    std::atomic<std::size_t> next{0};
    std::vector<std::thread> pool;
    for (unsigned w = 0; w < threads; ++w) {
      pool.emplace_back([&] {
        for (std::size_t i = next++; i < tasks; i = next++) {
          try {
            work(i);
          } catch (const std::exception& e) {
            errors[i] = e.what();
          }
        }
      });
    }
    for (auto& th : pool) th.join();
    for (const auto& e : errors) {
      if (!e.empty()) throw DataError("trial failed: " + e);
    }
  }

  std::vector<TrialRecord> out;
  for (auto& s : slots) out.insert(out.end(), s.begin(), s.end());
  return out;
}

inline std::vector<TrialRecord> exp_residual_decay(ExperimentConfig cfg) {
  cfg.scenario = Scenario::residual_decay;
  return run_experiment(cfg);
}
inline std::vector<TrialRecord> exp_alignment_sweep(ExperimentConfig cfg) {
  cfg.scenario = Scenario::alignment_sweep;
  return run_experiment(cfg);
}
inline std::vector<TrialRecord> exp_knockoff_spectrum(ExperimentConfig cfg) {
  cfg.scenario = Scenario::knockoff_spectrum;
  return run_experiment(cfg);
}
inline std::vector<TrialRecord> exp_fluctuation(ExperimentConfig cfg) {
  cfg.scenario = Scenario::fluctuation;
  return run_experiment(cfg);
}
inline std::vector<TrialRecord> exp_mean_cov_shift(ExperimentConfig cfg) {
  cfg.scenario = Scenario::mean_cov_shift;
  return run_experiment(cfg);
}

// ---------------------------------------------------------------- aggregation

struct Summary {
  std::size_t count = 0;
  double mean = 0.0;
  double std = 0.0;  ///< sample standard deviation (0 for one value)
  double median = 0.0;
  double q1 = 0.0;
  double q3 = 0.0;
  double iqr() const { return q3 - q1; }
};

inline Summary summarize(std::vector<double> v) {
  Summary s;
  s.count = v.size();
  if (v.empty()) return s;
  std::sort(v.begin(), v.end());
  double sum = 0.0;
  for (double x : v) sum += x;
  s.mean = sum / static_cast<double>(v.size());
  double ss = 0.0;
  for (double x : v) ss += (x - s.mean) * (x - s.mean);
  s.std = v.size() > 1 ? std::sqrt(ss / static_cast<double>(v.size() - 1)) : 0.0;
  s.median = detail::quantile_sorted(v, 0.5);
  s.q1 = detail::quantile_sorted(v, 0.25);
  s.q3 = detail::quantile_sorted(v, 0.75);
  return s;
}

struct Aggregate {
  TrialRecord key;  ///< trial, seed and value unused
  Summary summary;
};

/// Groups records by (scenario, cell, method, metric) in first-appearance order.
inline std::vector<Aggregate> aggregate(const std::vector<TrialRecord>& records) {
  using Key = std::tuple<std::string, Eigen::Index, Eigen::Index, double, double, double, double,
                         std::string, std::string>;
  std::map<Key, std::size_t> index;
  std::vector<Aggregate> out;
  std::vector<std::vector<double>> values;
  for (const auto& r : records) {
    Key k{r.scenario, r.d, r.n, r.c, r.pi1, r.ell, r.theta_sq, r.method, r.metric};
    auto [it, fresh] = index.emplace(k, out.size());
    if (fresh) {
      Aggregate a;
      a.key = r;
      a.key.trial = 0;
      a.key.seed = 0;
      a.key.value = 0.0;
      out.push_back(a);
      values.emplace_back();
    }
    values[it->second].push_back(r.value);
  }
  for (std::size_t i = 0; i < out.size(); ++i) out[i].summary = summarize(values[i]);
  return out;
}

struct SlopeFit {
  double slope = 0.0;
  double intercept = 0.0;
  double std_error = 0.0;
  double ci_low = 0.0;   ///< 95% t interval
  double ci_high = 0.0;
  std::size_t points = 0;
};

/// Least-squares fit of log y = a + b log x.
inline SlopeFit fit_loglog(const std::vector<double>& x, const std::vector<double>& y) {
  if (x.size() != y.size() || x.size() < 2) throw ArgumentError("fit_loglog: need at least two points");
  const auto m = static_cast<double>(x.size());
  double sx = 0, sy = 0;
  std::vector<double> lx, ly;
  for (std::size_t i = 0; i < x.size(); ++i) {
    if (!(x[i] > 0.0 && y[i] > 0.0)) throw ArgumentError("fit_loglog: values must be positive");
    lx.push_back(std::log(x[i]));
    ly.push_back(std::log(y[i]));
    sx += lx.back();
    sy += ly.back();
  }
  const double mx = sx / m, my = sy / m;
  double sxx = 0, sxy = 0;
  for (std::size_t i = 0; i < lx.size(); ++i) {
    sxx += (lx[i] - mx) * (lx[i] - mx);
    sxy += (lx[i] - mx) * (ly[i] - my);
  }
  if (!(sxx > 0.0)) throw ArgumentError("fit_loglog: x values must differ");
  SlopeFit f;
  f.points = x.size();
  f.slope = sxy / sxx;
  f.intercept = my - f.slope * mx;
  if (x.size() > 2) {
    double rss = 0.0;
    for (std::size_t i = 0; i < lx.size(); ++i) {
      const double e = ly[i] - f.intercept - f.slope * lx[i];
      rss += e * e;
    }
    f.std_error = std::sqrt(rss / (m - 2.0) / sxx);
    boost::math::students_t dist(m - 2.0);
    const double t = boost::math::quantile(boost::math::complement(dist, 0.025));
    f.ci_low = f.slope - t * f.std_error;
    f.ci_high = f.slope + t * f.std_error;
  } else {
    f.std_error = std::numeric_limits<double>::infinity();
    f.ci_low = -std::numeric_limits<double>::infinity();
    f.ci_high = std::numeric_limits<double>::infinity();
  }
  return f;
}

// ---------------------------------------------------------------- IO

inline const char* kCsvHeader = "scenario,d,n,c,pi1,ell,theta_sq,method,trial,seed,metric,value";

/// Empty when the record is complete and well formed, else the problem.
inline std::optional<std::string> validate_record(const TrialRecord& r) {
  if (!parse_scenario(r.scenario)) return "unknown scenario '" + r.scenario + "'";
  if (!parse_method(r.method)) return "unknown method '" + r.method + "'";
  if (r.d < 1 || r.n < 1) return std::string("d and n must be positive");
  if (!(r.c > 0.0) || !std::isfinite(r.c)) return std::string("c must be positive");
  if (!(r.pi1 >= 0.0 && r.pi1 < 1.0)) return std::string("pi1 out of range");
  if (!std::isfinite(r.ell) || !std::isfinite(r.theta_sq)) return std::string("non-finite grid value");
  if (r.trial < 0) return std::string("negative trial index");
  if (r.metric.empty()) return std::string("empty metric name");
  if (r.metric.find_first_of(",\"\n") != std::string::npos) return std::string("metric contains separators");
  if (!std::isfinite(r.value)) return std::string("non-finite value");
  return std::nullopt;
}

inline std::string format_double(double v) {
  std::ostringstream s;
  s << std::setprecision(17) << v;
  return s.str();
}

inline void write_csv(std::ostream& os, const std::vector<TrialRecord>& records) {
  os << kCsvHeader << '\n';
  for (const auto& r : records) {
    os << r.scenario << ',' << r.d << ',' << r.n << ',' << format_double(r.c) << ','
       << format_double(r.pi1) << ',' << format_double(r.ell) << ',' << format_double(r.theta_sq) << ','
       << r.method << ',' << r.trial << ',' << r.seed << ',' << r.metric << ','
       << format_double(r.value) << '\n';
  }
}

inline std::vector<TrialRecord> read_csv(std::istream& is) {
  std::string line;
  if (!std::getline(is, line) || line != kCsvHeader) throw DataError("read_csv: missing or wrong header");
  std::vector<TrialRecord> out;
  std::size_t lineno = 1;
  while (std::getline(is, line)) {
    ++lineno;
    if (line.empty()) continue;
    std::vector<std::string> f;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) f.push_back(cell);
    if (f.size() != 12) throw DataError("read_csv: line " + std::to_string(lineno) + " has wrong field count");
    try {
      TrialRecord r;
      r.scenario = f[0];
      r.d = std::stoll(f[1]);
      r.n = std::stoll(f[2]);
      r.c = std::stod(f[3]);
      r.pi1 = std::stod(f[4]);
      r.ell = std::stod(f[5]);
      r.theta_sq = std::stod(f[6]);
      r.method = f[7];
      r.trial = std::stoi(f[8]);
      r.seed = std::stoull(f[9]);
      r.metric = f[10];
      r.value = std::stod(f[11]);
      out.push_back(std::move(r));
    } catch (const std::logic_error&) {
      throw DataError("read_csv: malformed number on line " + std::to_string(lineno));
    }
  }
  return out;
}

inline nlohmann::json to_json(const TrialRecord& r) {
  return {{"scenario", r.scenario}, {"d", r.d}, {"n", r.n}, {"c", r.c}, {"pi1", r.pi1},
          {"ell", r.ell}, {"theta_sq", r.theta_sq}, {"method", r.method}, {"trial", r.trial},
          {"seed", r.seed}, {"metric", r.metric}, {"value", r.value}};
}

inline nlohmann::json to_json(const std::vector<TrialRecord>& records) {
  nlohmann::json arr = nlohmann::json::array();
  for (const auto& r : records) arr.push_back(to_json(r));
  return arr;
}

inline std::vector<TrialRecord> records_from_json(const nlohmann::json& j) {
  if (!j.is_array()) throw DataError("records JSON must be an array");
  std::vector<TrialRecord> out;
  try {
    for (const auto& o : j) {
      TrialRecord r;
      r.scenario = o.at("scenario").get<std::string>();
      r.d = o.at("d").get<Eigen::Index>();
      r.n = o.at("n").get<Eigen::Index>();
      r.c = o.at("c").get<double>();
      r.pi1 = o.at("pi1").get<double>();
      r.ell = o.at("ell").get<double>();
      r.theta_sq = o.at("theta_sq").get<double>();
      r.method = o.at("method").get<std::string>();
      r.trial = o.at("trial").get<int>();
      r.seed = o.at("seed").get<std::uint64_t>();
      r.metric = o.at("metric").get<std::string>();
      r.value = o.at("value").get<double>();
      out.push_back(std::move(r));
    }
  } catch (const nlohmann::json::exception& e) {
    throw DataError(std::string("records JSON: ") + e.what());
  }
  return out;
}

inline nlohmann::json to_json(const std::vector<Aggregate>& aggs) {
  nlohmann::json arr = nlohmann::json::array();
  for (const auto& a : aggs) {
    const auto& k = a.key;
    arr.push_back({{"scenario", k.scenario}, {"d", k.d}, {"n", k.n}, {"c", k.c}, {"pi1", k.pi1},
                   {"ell", k.ell}, {"theta_sq", k.theta_sq}, {"method", k.method}, {"metric", k.metric},
                   {"count", a.summary.count}, {"mean", a.summary.mean}, {"std", a.summary.std},
                   {"median", a.summary.median}, {"q1", a.summary.q1}, {"q3", a.summary.q3},
                   {"iqr", a.summary.iqr()}});
  }
  return arr;
}

/// Line plot of the mean of `metric` against d (log scale), one polyline per
/// (method, c, pi1, ell) series, with IQR bars.
inline void write_svg(std::ostream& os, const std::vector<Aggregate>& aggs, const std::string& metric) {
  struct Point {
    double x, y, lo, hi;
  };
  std::map<std::string, std::vector<Point>> series;
  double xmin = std::numeric_limits<double>::infinity(), xmax = -xmin;
  double ymin = xmin, ymax = -xmin;
  for (const auto& a : aggs) {
    if (a.key.metric != metric) continue;
    const auto& k = a.key;
    const std::string name = k.method + " c=" + format_double(k.c) + " pi1=" + format_double(k.pi1) +
                             " ell=" + format_double(k.ell);
    const double x = std::log10(static_cast<double>(k.d));
    series[name].push_back({x, a.summary.mean, a.summary.q1, a.summary.q3});
    xmin = std::min(xmin, x);
    xmax = std::max(xmax, x);
    ymin = std::min({ymin, a.summary.q1, a.summary.mean});
    ymax = std::max({ymax, a.summary.q3, a.summary.mean});
  }
  const double w = 640, h = 400, pad = 60;
  if (series.empty()) {
    xmin = 0, xmax = 1, ymin = 0, ymax = 1;
  }
  if (xmax <= xmin) xmax = xmin + 1;
  if (ymax <= ymin) ymax = ymin + 1;
  auto sx = [&](double x) { return pad + (x - xmin) / (xmax - xmin) * (w - 2 * pad); };
  auto sy = [&](double y) { return h - pad - (y - ymin) / (ymax - ymin) * (h - 2 * pad); };
  static const char* colors[] = {"#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b", "#e377c2"};
  os << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << w << "\" height=\"" << h << "\">\n";
  os << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  os << "<text x=\"" << pad << "\" y=\"24\" font-size=\"14\">" << metric << " vs log10 d</text>\n";
  os << "<line x1=\"" << pad << "\" y1=\"" << h - pad << "\" x2=\"" << w - pad << "\" y2=\"" << h - pad
     << "\" stroke=\"black\"/>\n";
  os << "<line x1=\"" << pad << "\" y1=\"" << pad << "\" x2=\"" << pad << "\" y2=\"" << h - pad
     << "\" stroke=\"black\"/>\n";
  os << "<text x=\"4\" y=\"" << sy(ymax) << "\" font-size=\"10\">" << format_double(ymax).substr(0, 8) << "</text>\n";
  os << "<text x=\"4\" y=\"" << sy(ymin) << "\" font-size=\"10\">" << format_double(ymin).substr(0, 8) << "</text>\n";
  std::size_t ci = 0;
  for (auto& [name, pts] : series) {
    std::sort(pts.begin(), pts.end(), [](const Point& a, const Point& b) { return a.x < b.x; });
    const char* col = colors[ci % 7];
    os << "<polyline fill=\"none\" stroke=\"" << col << "\" points=\"";
    for (const auto& p : pts) os << sx(p.x) << ',' << sy(p.y) << ' ';
    os << "\"/>\n";
    for (const auto& p : pts) {
      os << "<line x1=\"" << sx(p.x) << "\" y1=\"" << sy(p.lo) << "\" x2=\"" << sx(p.x) << "\" y2=\""
         << sy(p.hi) << "\" stroke=\"" << col << "\"/>\n";
      os << "<circle cx=\"" << sx(p.x) << "\" cy=\"" << sy(p.y) << "\" r=\"3\" fill=\"" << col << "\"/>\n";
    }
    os << "<text x=\"" << w - pad - 150 << "\" y=\"" << pad + 14 * static_cast<double>(ci) << "\" font-size=\"10\" fill=\""
       << col << "\">" << name << "</text>\n";
    ++ci;
  }
  os << "</svg>\n";
}

/// Metric plotted by default for a scenario.
inline const char* primary_metric(Scenario s) {
  switch (s) {
    case Scenario::residual_decay: return "max_residual";
    case Scenario::alignment_sweep:
    case Scenario::mean_cov_shift: return "alignment";
    case Scenario::knockoff_spectrum: return "mean_spike_distance";
    case Scenario::fluctuation: return "max_fluctuation";
  }
  return "";
}

}  // namespace mspca
