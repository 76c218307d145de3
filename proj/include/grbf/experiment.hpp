#pragma once

#include "grbf/assembly.hpp"
#include "grbf/core.hpp"
#include "grbf/local_ops.hpp"
#include "grbf/manifolds.hpp"

#include <complex>
#include <cstdint>
#include <functional>
#include <iosfwd>
#include <string>
#include <vector>

namespace grbf {

/// One discretization in a sweep: method plus (for GMLS) its weight scheme.
struct MethodSpec {
  Method method = Method::grbffd;
  WeightScheme weight = WeightScheme::one_over_k;

  /// "gmls:one_over_k", "grbffd", ...
  std::string name() const;
  /// Parses "grbffd", "rbffd", "gmls" (1/K) or "gmls:<scheme>".
  static MethodSpec parse(const std::string& text);
};

struct KPolicy {
  bool auto_tune = true;
  Index k = 30;  ///< K0 when auto-tuned, otherwise the fixed K
  Index k_step = 2;
  double gamma_th = 3.0;
  Index k_max = 0;

  /// "auto:K0=40" or "fixed:K=30" (the K_policy column).
  std::string describe() const;
};

struct ExperimentConfig {
  std::string manifold = "ellipse1d";
  SamplingMode mode = SamplingMode::random;
  std::vector<MethodSpec> methods;
  std::vector<Index> Ns;
  int trials = 1;
  std::uint64_t seed_base = 1;
  int l = 4;
  int kappa = 3;
  double delta = 1e-6;
  KPolicy k_policy;
  bool inf_norm = true;
  Index eig_count = 0;  ///< 0 disables eigenvalues.csv
  double eig_shift = 10.0;
  std::string output_dir = "grbf_out";
  SolverOptions solver;
  int threads = 0;

  MethodConfig method_config(const MethodSpec& spec) const;
  /// Seed of trial t: seed_base + t.
  std::uint64_t seed(int trial) const { return seed_base + static_cast<std::uint64_t>(trial); }
};

/// Parses and validates a JSON experiment config. Errors are ConfigError with
/// a "<source>:<line>:<column>: message" prefix.
ExperimentConfig parse_experiment_config(const std::string& text, const std::string& source = "<config>");
ExperimentConfig load_experiment_config(const std::string& path);

/// Fully resolved config as JSON text; it parses back to the same config.
std::string manifest_json(const ExperimentConfig& config);

/// A (method, N, trial) computation that failed numerically.
class NumericalFailure : public Error {
 public:
  NumericalFailure(const std::string& method, Index N, int trial, const std::string& what)
      : Error("numerical failure for method=" + method + " N=" + std::to_string(N) + " trial=" +
              std::to_string(trial) + ": " + what),
        method_(method), n_(N), trial_(trial) {}
  const std::string& method() const noexcept { return method_; }
  Index N() const noexcept { return n_; }
  int trial() const noexcept { return trial_; }

 private:
  std::string method_;
  Index n_;
  int trial_;
};

struct RunRecord {
  std::string manifold;
  MethodSpec method;
  int l = 0;
  int kappa = 0;
  std::string k_policy;
  Index N = 0;
  int trial = 0;
  std::uint64_t seed = 0;
  double fe = 0.0;
  double ie = 0.0;
  double inf_norm_inv = std::numeric_limits<double>::quiet_NaN();
  double mean_k = 0.0;
  double max_gamma_fail = 0.0;
  double wall_time_s = 0.0;
  Index unconverged = 0;
  std::vector<std::complex<double>> eigenvalues;
};

using ProgressCallback = std::function<void(const RunRecord&)>;

/// Runs every (N, trial, method): one cloud per (N, trial) shared by all
/// methods. Records come back sorted by (method order, N order, trial).
/// Throws NumericalFailure naming the failing combination.
std::vector<RunRecord> run_experiment(const ExperimentConfig& config, const ProgressCallback& progress = {});

void write_convergence_csv(std::ostream& out, const std::vector<RunRecord>& records);
void write_eigenvalues_csv(std::ostream& out, const std::vector<RunRecord>& records);

/// Per (method, N): mean, standard deviation and median of FE and IE over trials.
struct SummaryRow {
  std::string method;
  Index N = 0;
  int trials = 0;
  double fe_mean = 0.0, fe_std = 0.0, fe_median = 0.0;
  double ie_mean = 0.0, ie_std = 0.0, ie_median = 0.0;
  double inf_norm_mean = 0.0;
  double mean_k = 0.0;
};

std::vector<SummaryRow> summarize(const std::vector<RunRecord>& records);
void write_summary_csv(std::ostream& out, const std::vector<SummaryRow>& rows);

/// Writes convergence.csv, summary.csv, eigenvalues.csv (if requested) and
/// manifest.json into config.output_dir.
void write_run_outputs(const ExperimentConfig& config, const std::vector<RunRecord>& records);

/// Reads a convergence.csv back (used by the diagnose subcommand).
std::vector<RunRecord> read_convergence_csv(std::istream& in);

}  // namespace grbf
