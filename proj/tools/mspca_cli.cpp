// mspca: spike prediction, data simulation, MS-PCA runs and benchmarks.
//
// Exit codes: 0 success, 1 usage error, 2 data error.

#include <CLI11.hpp>

#include <cmath>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"
#include "mspca.hpp"

namespace {

using nlohmann::json;

constexpr int kUsageError = 1;
constexpr int kDataError = 2;

enum class Format { csv, json };

struct OutputTarget {
  std::string path;
  std::ofstream file;
  std::ostream& stream() { return path.empty() ? std::cout : file; }
  void open() {
    if (path.empty()) return;
    file.open(path, std::ios::trunc);
    if (!file) throw mspca::DataError("cannot open " + path + " for writing");
  }
};

std::string num(double v) { return mspca::format_double(v); }

void add_format_option(CLI::App* cmd, Format& f) {
  cmd->add_option("--format", f, "Output format")
      ->transform(CLI::CheckedTransformer(std::map<std::string, Format>{{"csv", Format::csv}, {"json", Format::json}}));
}

// ---------------------------------------------------------------- predict

struct PredictOpts {
  double c = 1.0;
  std::vector<double> ells;
  std::vector<double> thetas_sq;
  Format format = Format::csv;
};

int cmd_predict(const PredictOpts& o) {
  const auto p = mspca::predict_spikes(o.ells, o.thetas_sq, o.c);
  if (o.format == Format::json) {
    json j{{"c", o.c},
           {"lambda_P", p.lambda_P},
           {"lambda_A", p.lambda_A},
           {"merged", p.merged},
           {"bulk_edge", p.bulk_edge},
           {"sub_threshold_ells", p.sub_threshold_ells},
           {"sub_threshold_thetas_sq", p.sub_threshold_thetas_sq}};
    std::cout << j.dump(2) << '\n';
    return 0;
  }
  std::cout << "set,value\n";
  for (double v : p.lambda_P) std::cout << "lambda_P," << num(v) << '\n';
  for (double v : p.lambda_A) std::cout << "lambda_A," << num(v) << '\n';
  for (double v : p.merged) std::cout << "merged," << num(v) << '\n';
  std::cout << "bulk_edge," << num(p.bulk_edge) << '\n';
  for (double v : p.sub_threshold_ells) std::cout << "sub_threshold_ell," << num(v) << '\n';
  for (double v : p.sub_threshold_thetas_sq) std::cout << "sub_threshold_theta_sq," << num(v) << '\n';
  return 0;
}

// ---------------------------------------------------------------- simulate

struct SimulateOpts {
  long long d = 900;
  long long n = 1000;
  std::vector<double> pi1{0.05};
  std::vector<double> ells;
  bool no_spike = false;
  std::vector<double> thetas_sq;
  std::vector<double> ell2;
  std::string direction = "haar";
  std::string entries = "gaussian";
  std::uint64_t seed = mspca::kDefaultSeed;
  std::string out;
  Format format = Format::csv;
};

int cmd_simulate(const SimulateOpts& o) {
  const double c = static_cast<double>(o.d) / static_cast<double>(o.n);
  mspca::SimulationSpec spec;
  spec.d = o.d;
  spec.n = o.n;
  spec.cov.ells = o.no_spike ? std::vector<double>{} : (o.ells.empty() ? std::vector<double>{2.0 * std::sqrt(c)} : o.ells);
  // A single --pi1 0 means no contamination.
  const std::vector<double> pi1 = o.pi1 == std::vector<double>{0.0} ? std::vector<double>{} : o.pi1;
  for (double p : pi1) {
    if (!(p > 0.0 && p < 1.0)) throw mspca::InfeasibleWeightsError("--pi1 values must lie in (0, 1)");
  }
  if (!o.thetas_sq.empty() && o.thetas_sq.size() != pi1.size()) {
    throw mspca::ArgumentError("--theta-sq needs one value per --pi1 component");
  }
  spec.mix.weights = pi1;
  for (std::size_t i = 0; i < pi1.size(); ++i) {
    const double t = o.thetas_sq.empty() ? 4.0 * std::sqrt(c) : o.thetas_sq[i];
    if (!(t >= 0.0)) throw mspca::ArgumentError("--theta-sq must be non-negative");
    spec.mix.magnitudes.push_back(std::sqrt(t / pi1[i]));
  }
  spec.mix.direction_mode = o.direction == "haar"       ? mspca::DirectionMode::haar_sphere
                            : o.direction == "gaussian" ? mspca::DirectionMode::iid_gaussian
                                                        : mspca::DirectionMode::iid_rademacher;
  spec.law = o.entries == "gaussian" ? mspca::EntryLaw::gaussian : mspca::EntryLaw::rademacher;

  std::optional<mspca::Dataset> ds;
  if (!o.ell2.empty()) {
    if (spec.mix.weights.size() != 1) throw mspca::ArgumentError("--ell2 needs exactly one --pi1 component");
    ds.emplace(mspca::contaminate_mean_cov_shift(o.d, o.n, spec.cov, spec.mix.magnitudes[0], spec.mix.weights[0],
                                                 mspca::SpikedCovSpec{o.ell2}, o.seed, spec.mix.direction_mode));
  } else {
    ds.emplace(mspca::simulate(spec, o.seed));
  }
  mspca::write_dataset(o.out, *ds);

  const auto& a = ds->contamination;
  if (o.format == Format::json) {
    json comps = json::array();
    for (Eigen::Index i = 0; i < a.k(); ++i) {
      comps.push_back({{"component", i + 1},
                       {"weight", a.weights(i)},
                       {"magnitude", a.means.col(i).norm()},
                       {"theta_sq", a.theta(i) * a.theta(i)}});
    }
    std::cout << json{{"base", o.out}, {"d", o.d}, {"n", o.n}, {"seed", o.seed}, {"components", comps}}.dump(2)
              << '\n';
  } else {
    std::cout << "component,weight,magnitude,theta_sq\n";
    for (Eigen::Index i = 0; i < a.k(); ++i) {
      std::cout << i + 1 << ',' << num(a.weights(i)) << ',' << num(a.means.col(i).norm()) << ','
                << num(a.theta(i) * a.theta(i)) << '\n';
    }
  }
  return 0;
}

// ---------------------------------------------------------------- run

struct RunOpts {
  std::string input;
  std::string out;
  long long top_k = 1;
  std::optional<double> C;
  double pi_prime = 1.0;
  std::string theta_rule = "auto";
  double theta_prime_sq = 0.0;
  std::optional<double> margin;
  int num_knockoffs = 1;
  std::uint64_t seed = mspca::kDefaultSeed;
  std::string solver = "auto";
  bool vectors = true;
  Format format = Format::json;
};

json pair_json(const mspca::Eigenpair& e, bool vectors) {
  json j{{"index", e.index}, {"lambda", e.lambda}};
  if (!std::isnan(e.matched_distance)) j["matched_distance"] = e.matched_distance;
  if (vectors) j["u"] = std::vector<double>(e.u.data(), e.u.data() + e.u.size());
  return j;
}

int cmd_run(const RunOpts& o) {
  const auto loaded = mspca::read_dataset(o.input);
  mspca::MsPcaConfig cfg;
  cfg.top_k_out = o.top_k;
  cfg.C = o.C;
  cfg.pi_prime = o.pi_prime;
  cfg.theta_rule = o.theta_rule == "auto"    ? mspca::KnockoffRule::auto_double_inverse
                   : o.theta_rule == "fixed" ? mspca::KnockoffRule::fixed
                                             : mspca::KnockoffRule::empirical;
  cfg.theta_prime_sq = o.theta_prime_sq;
  cfg.spike_margin = o.margin;
  cfg.num_knockoffs = o.num_knockoffs;
  cfg.seed = o.seed;
  cfg.solver = o.solver == "auto" ? mspca::Solver::automatic
               : o.solver == "dense" ? mspca::Solver::dense
                                     : mspca::Solver::krylov;
  const auto r = mspca::run_ms_pca(loaded.X_tilde, cfg);

  OutputTarget target{o.out, {}};
  target.open();
  auto& os = target.stream();
  if (o.format == Format::json) {
    json j;
    j["d"] = loaded.X_tilde.dim();
    j["n"] = loaded.X_tilde.samples();
    j["epsilon"] = r.epsilon;
    j["spike_threshold"] = r.spike_threshold;
    j["spike_count"] = r.spike_count;
    j["neutral"] = r.neutral;
    j["eigenvalues"] = r.eigenvalues;
    j["perturbed_eigenvalues"] = r.perturbed_eigenvalues;
    for (const char* key : {"stable", "removed", "fill"}) j[key] = json::array();
    for (const auto& e : r.stable) j["stable"].push_back(pair_json(e, o.vectors));
    for (const auto& e : r.removed) j["removed"].push_back(pair_json(e, false));
    for (const auto& e : r.fill) j["fill"].push_back(pair_json(e, o.vectors));
    j["match_report"] = json::array();
    for (const auto& rep : r.match_report) {
      json arr = json::array();
      for (const auto& m : rep) {
        arr.push_back({{"index", m.index}, {"lambda", m.lambda}, {"matched", m.matched},
                       {"distance", m.distance}, {"stable", m.stable}});
      }
      j["match_report"].push_back(arr);
    }
    j["knockoffs"] = json::array();
    for (const auto& k : r.knockoffs) {
      j["knockoffs"].push_back({{"theta_prime_sq", k.theta_prime_sq}, {"pi_prime", k.pi_prime},
                                {"no_initial_spike", k.no_initial_spike}});
    }
    os << j.dump(2) << '\n';
  } else {
    os << "kind,index,key,value\n";
    os << "summary,0,epsilon," << num(r.epsilon) << '\n';
    os << "summary,0,spike_threshold," << num(r.spike_threshold) << '\n';
    os << "summary,0,spike_count," << r.spike_count << '\n';
    os << "summary,0,neutral," << (r.neutral ? 1 : 0) << '\n';
    for (std::size_t i = 0; i < r.eigenvalues.size(); ++i) os << "eigenvalue," << i << ",lambda," << num(r.eigenvalues[i]) << '\n';
    for (std::size_t i = 0; i < r.perturbed_eigenvalues.size(); ++i) {
      os << "perturbed," << i << ",lambda," << num(r.perturbed_eigenvalues[i]) << '\n';
    }
    for (std::size_t rep = 0; rep < r.match_report.size(); ++rep) {
      for (const auto& m : r.match_report[rep]) {
        os << "match," << m.index << ",matched," << num(m.matched) << '\n';
        os << "match," << m.index << ",distance," << num(m.distance) << '\n';
      }
    }
    auto emit_pairs = [&](const char* kind, const std::vector<mspca::Eigenpair>& v, bool vectors) {
      for (const auto& e : v) {
        os << kind << ',' << e.index << ",lambda," << num(e.lambda) << '\n';
        if (!std::isnan(e.matched_distance)) os << kind << ',' << e.index << ",matched_distance," << num(e.matched_distance) << '\n';
        if (vectors) {
          for (Eigen::Index i = 0; i < e.u.size(); ++i) os << kind << "_vector," << e.index << ',' << i << ',' << num(e.u(i)) << '\n';
        }
      }
    };
    emit_pairs("stable", r.stable, o.vectors);
    emit_pairs("removed", r.removed, false);
    emit_pairs("fill", r.fill, o.vectors);
  }
  return 0;
}

// ---------------------------------------------------------------- bench

struct BenchOpts {
  std::string scenario;
  std::vector<long long> dims;
  std::vector<double> ratios;
  std::vector<double> pi1;
  std::vector<double> ells;
  std::vector<double> thetas_sq;
  std::vector<std::string> methods;
  int trials = 25;
  std::uint64_t seed = mspca::kDefaultSeed;
  std::optional<double> C;
  double pi_prime = 1.0;
  int num_knockoffs = 1;
  unsigned threads = 0;
  std::string out;
  std::string json_out;
  std::string svg_out;
  Format format = Format::csv;
};

int cmd_bench(const BenchOpts& o) {
  const auto scenario = mspca::parse_scenario(o.scenario);
  if (!scenario) throw mspca::ArgumentError("unknown scenario '" + o.scenario + "'");
  auto cfg = mspca::ExperimentConfig::defaults(*scenario);
  if (!o.dims.empty()) cfg.dims.assign(o.dims.begin(), o.dims.end());
  if (!o.ratios.empty()) cfg.ratios = o.ratios;
  if (!o.pi1.empty()) cfg.pi1s = o.pi1;
  if (!o.ells.empty()) cfg.ells = o.ells;
  if (!o.thetas_sq.empty()) cfg.thetas_sq = o.thetas_sq;
  if (!o.methods.empty()) {
    cfg.methods.clear();
    for (const auto& m : o.methods) {
      const auto parsed = mspca::parse_method(m);
      if (!parsed) throw mspca::ArgumentError("unknown method '" + m + "'");
      cfg.methods.push_back(*parsed);
    }
  }
  cfg.trials = o.trials;
  cfg.base_seed = o.seed;
  cfg.mspca.C = o.C;
  cfg.mspca.pi_prime = o.pi_prime;
  cfg.mspca.num_knockoffs = o.num_knockoffs;
  cfg.threads = o.threads;

  const auto records = mspca::run_experiment(cfg);
  const auto aggs = mspca::aggregate(records);

  OutputTarget target{o.out, {}};
  target.open();
  if (o.format == Format::json) {
    target.stream() << mspca::to_json(records).dump(1) << '\n';
  } else {
    mspca::write_csv(target.stream(), records);
  }
  if (!o.json_out.empty()) {
    std::ofstream js(o.json_out, std::ios::trunc);
    if (!js) throw mspca::DataError("cannot open " + o.json_out);
    js << json{{"records", mspca::to_json(records)}, {"aggregates", mspca::to_json(aggs)}}.dump(1) << '\n';
  }
  if (!o.svg_out.empty()) {
    std::ofstream svg(o.svg_out, std::ios::trunc);
    if (!svg) throw mspca::DataError("cannot open " + o.svg_out);
    mspca::write_svg(svg, aggs, mspca::primary_metric(*scenario));
  }

  std::ostream& summary = o.out.empty() ? std::cerr : std::cout;
  summary << std::left << std::setw(7) << "d" << std::setw(7) << "n" << std::setw(8) << "pi1" << std::setw(8)
          << "ell" << std::setw(11) << "method" << std::setw(24) << "metric" << std::right << std::setw(5) << "N"
          << std::setw(13) << "mean" << std::setw(13) << "std" << std::setw(13) << "median" << std::setw(13)
          << "iqr" << '\n';
  for (const auto& a : aggs) {
    const auto& k = a.key;
    summary << std::left << std::setw(7) << k.d << std::setw(7) << k.n << std::setw(8) << std::setprecision(4)
            << k.pi1 << std::setw(8) << k.ell << std::setw(11) << k.method << std::setw(24) << k.metric
            << std::right << std::setw(5) << a.summary.count << std::setprecision(6) << std::setw(13)
            << a.summary.mean << std::setw(13) << a.summary.std << std::setw(13) << a.summary.median
            << std::setw(13) << a.summary.iqr() << '\n';
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Mean-Shift PCA: spectra prediction, simulation, robust PCA and benchmarks"};
  app.require_subcommand(1, 1);

  PredictOpts po;
  auto* predict = app.add_subcommand("predict", "Asymptotic outlier locations");
  predict->add_option("--c", po.c, "Aspect ratio d/n")->required()->check(CLI::PositiveNumber);
  predict->add_option("--ell", po.ells, "Covariance spikes")->delimiter(',');
  predict->add_option("--theta-sq", po.thetas_sq, "Mean-shift strengths theta^2")->delimiter(',');
  add_format_option(predict, po.format);

  SimulateOpts so;
  auto* simulate = app.add_subcommand("simulate", "Write a synthetic dataset");
  simulate->add_option("--d", so.d, "Dimension")->check(CLI::Range(2LL, 1LL << 20));
  simulate->add_option("--n", so.n, "Sample size")->check(CLI::Range(2LL, 1LL << 24));
  simulate->add_option("--pi1", so.pi1, "Mixture weights of the mean-shift components")->delimiter(',');
  simulate->add_option("--ell", so.ells, "Covariance spikes (default 2 sqrt(c))")->delimiter(',');
  simulate->add_flag("--no-spike", so.no_spike, "No covariance spike");
  simulate->add_option("--theta-sq", so.thetas_sq, "Strengths pi_i ||m_i||^2 (default 4 sqrt(c))")->delimiter(',');
  simulate->add_option("--ell2", so.ell2, "Covariance-shift spikes of the outlier component")->delimiter(',');
  simulate->add_option("--direction", so.direction, "Mean direction law")
      ->check(CLI::IsMember({"haar", "gaussian", "rademacher"}));
  simulate->add_option("--entries", so.entries, "Noise entry law")->check(CLI::IsMember({"gaussian", "rademacher"}));
  simulate->add_option("--seed", so.seed, "Random seed");
  simulate->add_option("--out", so.out, "Output base path")->required();
  add_format_option(simulate, so.format);

  RunOpts ro;
  auto* run = app.add_subcommand("run", "Run MS-PCA on a dataset file");
  run->add_option("--input", ro.input, "Dataset base path")->required();
  run->add_option("--out", ro.out, "Result file (default stdout)");
  run->add_option("--top-k", ro.top_k, "Number of output components")->check(CLI::NonNegativeNumber);
  run->add_option("--C", ro.C, "Threshold constant")->check(CLI::PositiveNumber);
  run->add_option("--pi-prime", ro.pi_prime, "Knockoff weight")->check(CLI::Range(1e-12, 1.0));
  run->add_option("--theta-rule", ro.theta_rule, "Knockoff strength rule")
      ->check(CLI::IsMember({"auto", "fixed", "empirical"}));
  run->add_option("--theta-prime-sq", ro.theta_prime_sq, "Knockoff strength for --theta-rule fixed");
  run->add_option("--margin", ro.margin, "Bulk-exit margin")->check(CLI::NonNegativeNumber);
  run->add_option("--num-knockoffs", ro.num_knockoffs, "Independent knockoff repeats")->check(CLI::Range(1, 1000));
  run->add_option("--seed", ro.seed, "Knockoff seed");
  run->add_option("--solver", ro.solver, "Eigensolver")->check(CLI::IsMember({"auto", "dense", "krylov"}));
  run->add_flag("!--no-vectors", ro.vectors, "Omit eigenvectors from the output");
  add_format_option(run, ro.format);

  BenchOpts bo;
  auto* bench = app.add_subcommand("bench", "Run a Monte-Carlo scenario");
  bench->add_option("--scenario", bo.scenario,
                    "residual_decay | alignment_sweep | knockoff_spectrum | fluctuation | mean_cov_shift")
      ->required();
  bench->add_option("--d", bo.dims, "Dimensions")->delimiter(',');
  bench->add_option("--c", bo.ratios, "Aspect ratios")->delimiter(',');
  bench->add_option("--pi1", bo.pi1, "Contamination weights")->delimiter(',');
  bench->add_option("--ell", bo.ells, "Covariance spikes (ell_2 for mean_cov_shift)")->delimiter(',');
  bench->add_option("--theta-sq", bo.thetas_sq, "Mean-shift strengths")->delimiter(',');
  bench->add_option("--methods", bo.methods, "ms_pca,vanilla,center,winsorize,tyler")->delimiter(',');
  bench->add_option("--trials", bo.trials, "Trials per grid cell")->check(CLI::Range(1, 100000));
  bench->add_option("--seed", bo.seed, "Base seed");
  bench->add_option("--C", bo.C, "Threshold constant")->check(CLI::PositiveNumber);
  bench->add_option("--pi-prime", bo.pi_prime, "Knockoff weight")->check(CLI::Range(1e-12, 1.0));
  bench->add_option("--num-knockoffs", bo.num_knockoffs, "Knockoff repeats")->check(CLI::Range(1, 1000));
  bench->add_option("--threads", bo.threads, "Worker threads (default MSPCA_THREADS or 1)");
  bench->add_option("--out", bo.out, "Records file (default stdout)");
  bench->add_option("--json", bo.json_out, "JSON mirror with records and aggregates");
  bench->add_option("--svg", bo.svg_out, "SVG plot of the primary metric");
  add_format_option(bench, bo.format);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : kUsageError;
  }

  try {
    if (*predict) return cmd_predict(po);
    if (*simulate) return cmd_simulate(so);
    if (*run) return cmd_run(ro);
    if (*bench) return cmd_bench(bo);
  } catch (const mspca::DataError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kDataError;
  } catch (const std::invalid_argument& e) {
    std::cerr << "usage error: " << e.what() << '\n';
    return kUsageError;
  } catch (const std::domain_error& e) {
    std::cerr << "usage error: " << e.what() << '\n';
    return kUsageError;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kDataError;
  }
  return kUsageError;
}
