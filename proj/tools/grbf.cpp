// Command-line front end: sampling, assembly, solves, sweeps and diagnostics.

#include "grbf/assembly.hpp"
#include "grbf/experiment.hpp"
#include "grbf/local_ops.hpp"
#include "grbf/manifolds.hpp"
#include "grbf/stencils.hpp"
#include "grbf/verification.hpp"

#include <CLI11.hpp>

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <string>
#include <vector>

namespace {

using namespace grbf;

constexpr int kExitInvalid = 2;
constexpr int kExitNumerical = 3;

struct CloudFlags {
  std::string manifold = "ellipse1d";
  Index n = 400;
  std::string mode = "random";
  std::uint64_t seed = 1;
  std::string cloud_path;

  void add(CLI::App* app, bool allow_file) {
    app->add_option("--manifold", manifold, "Built-in manifold")->capture_default_str();
    app->add_option("--n", n, "Number of points")->capture_default_str()->check(CLI::Range(Index{2}, Index{1} << 40));
    app->add_option("--mode", mode, "well_sampled or random")->capture_default_str();
    app->add_option("--seed", seed, "Sampling seed")->capture_default_str();
    if (allow_file) app->add_option("--cloud", cloud_path, "Read the point cloud from a file instead of sampling");
  }

  PointCloud make() const {
    if (!cloud_path.empty()) return load_cloud(cloud_path);
    return sample_points(builtin_spec(manifold), n, sampling_mode_from_string(mode), seed);
  }
};

struct MethodFlags {
  std::string method = "grbffd";
  std::string weight;
  int l = 4;
  int kappa = 3;
  Index k0 = 30;
  Index k_fixed = 0;
  Index k_step = 2;
  Index k_max = 0;
  double gamma_th = 3.0;
  double delta = 1e-6;

  void add(CLI::App* app, bool single_method) {
    if (single_method) {
      app->add_option("--method", method, "gmls, rbffd or grbffd")->capture_default_str();
    }
    app->add_option("--weight", weight, "GMLS weight: one_over_k, smooth or phi_inverse");
    app->add_option("--l", l, "Polynomial degree")->capture_default_str();
    app->add_option("--kappa", kappa, "PHS order (phi = r^(2 kappa + 1))")->capture_default_str();
    app->add_option("--k0", k0, "Initial stencil size for auto-tuning")->capture_default_str();
    app->add_option("--k-fixed", k_fixed, "Use this fixed stencil size (disables auto-tuning)");
    app->add_option("--k-step", k_step, "Auto-tune increment")->capture_default_str();
    app->add_option("--k-max", k_max, "Auto-tune cap (0 picks a default)")->capture_default_str();
    app->add_option("--gamma-th", gamma_th, "Spike-ratio threshold")->capture_default_str();
    app->add_option("--delta", delta, "Ridge regularization")->capture_default_str();
  }

  MethodSpec spec_for(const std::string& name) const {
    MethodSpec spec = MethodSpec::parse(name);
    if (!weight.empty() && name.find(':') == std::string::npos) {
      if (spec.method != Method::gmls) throw UnsupportedModeError("--weight only applies to gmls");
      spec.weight = weight_scheme_from_string(weight);
    }
    return spec;
  }

  KPolicy policy() const {
    KPolicy p;
    p.auto_tune = k_fixed == 0;
    p.k = k_fixed == 0 ? k0 : k_fixed;
    p.k_step = k_step;
    p.gamma_th = gamma_th;
    p.k_max = k_max;
    return p;
  }

  MethodConfig config() const {
    const MethodSpec spec = spec_for(method);
    MethodConfig c;
    c.method = spec.method;
    c.weight = spec.weight;
    c.l = l;
    c.kappa = kappa;
    c.delta = delta;
    const KPolicy p = policy();
    c.auto_tune = p.auto_tune;
    c.k0 = p.k;
    c.k_step = p.k_step;
    c.k_max = p.k_max;
    c.gamma_th = p.gamma_th;
    return c;
  }
};

void print_warnings(const MethodConfig& config) {
  for (const auto& w : config.warnings()) std::cerr << "warning: " << w << "\n";
}

MethodConfig checked_config(const MethodFlags& flags, int d) {
  MethodConfig c = flags.config();
  c.validate(d);
  print_warnings(c);
  return c;
}

void write_vector_csv(const std::string& path, const std::string& header, const Eigen::VectorXd& v) {
  std::ofstream out(path);
  if (!out) throw ConfigError("cannot write " + path);
  out << header << "\n";
  char buf[64];
  for (Index i = 0; i < v.size(); ++i) {
    std::snprintf(buf, sizeof buf, "%.17g", v[i]);
    out << i << ',' << buf << "\n";
  }
}

void print_fit(const std::string& label, const std::vector<double>& x, const std::vector<double>& y) {
  if (x.size() < 2) {
    std::printf("%-28s (need at least two N values)\n", label.c_str());
    return;
  }
  const LinearFit fit = fit_loglog(x, y);
  std::printf("%-28s slope %+.4f  stderr %.4f\n", label.c_str(), fit.slope, fit.stderr_slope);
}

int cmd_sample(const CloudFlags& cloud, const std::string& out) {
  const PointCloud pc = cloud.make();
  save_cloud(pc, out);
  std::printf("wrote %lld points of %s to %s\n", static_cast<long long>(pc.size()), pc.spec_name.c_str(), out.c_str());
  return 0;
}

int cmd_assemble(const CloudFlags& cloud, const MethodFlags& method, const std::string& out, int threads) {
  const PointCloud pc = cloud.make();
  const MethodConfig config = checked_config(method, pc.d);
  const SparseOperator op = assemble(pc, config, threads);
  write_matrix_market(op.matrix, out);
  std::printf("%s N=%lld nnz=%lld mean_K=%.3f unconverged=%lld max_gamma_fail=%.4g -> %s\n", config.label().c_str(),
              static_cast<long long>(op.size()), static_cast<long long>(op.matrix.nonZeros()), op.mean_k(),
              static_cast<long long>(op.unconverged_count()), op.max_gamma_fail(config.gamma_th), out.c_str());
  return 0;
}

int cmd_solve(const std::string& cloud_path, const std::string& matrix_path, const std::string& out, bool inf_norm) {
  const PointCloud pc = load_cloud(cloud_path);
  SparseMatrix L = read_matrix_market(matrix_path);
  if (L.rows() != pc.size() || L.cols() != pc.size()) {
    throw ArgumentError("operator is " + std::to_string(L.rows()) + "x" + std::to_string(L.cols()) +
                        " but the cloud has " + std::to_string(pc.size()) + " points");
  }
  const SparseOperator op = operator_from_matrix(std::move(L));
  SolverOptions options;
  const SolveReport report = solve_screened_poisson(op, pc.h_values, options);
  const double fe = forward_error(op, pc.f_values, pc.lap_values);
  const double ie = inverse_error(report.F, pc.f_values);
  std::printf("N=%lld FE=%.6e IE=%.6e residual=%.3e solver=%s iterations=%d", static_cast<long long>(op.size()), fe,
              ie, report.residual, to_string(report.solver).c_str(), report.iterations);
  if (inf_norm) std::printf(" inf_norm_inv=%.6e", inf_norm_inverse(op, options).value);
  std::printf("\n");
  if (!out.empty()) write_vector_csv(out, "index,F", report.F);
  return 0;
}

int cmd_run(const ExperimentConfig& config) {
  for (const auto& m : config.methods) print_warnings(config.method_config(m));
  const auto records = run_experiment(config, [](const RunRecord& r) {
    std::fprintf(stderr, "%-16s N=%-7lld trial=%d FE=%.4e IE=%.4e mean_K=%.2f %.2fs\n", r.method.name().c_str(),
                 static_cast<long long>(r.N), r.trial, r.fe, r.ie, r.mean_k, r.wall_time_s);
  });
  write_run_outputs(config, records);
  std::vector<SummaryRow> rows = summarize(records);
  write_summary_csv(std::cout, rows);
  std::map<std::string, std::pair<std::vector<double>, std::vector<std::pair<double, double>>>> fits;
  std::vector<std::string> order;
  for (const auto& r : rows) {
    if (!fits.count(r.method)) order.push_back(r.method);
    fits[r.method].first.push_back(static_cast<double>(r.N));
    fits[r.method].second.emplace_back(r.fe_mean, r.ie_mean);
  }
  for (const auto& name : order) {
    const auto& [ns, errs] = fits[name];
    std::vector<double> fe, ie;
    for (const auto& [f, i] : errs) {
      fe.push_back(f);
      ie.push_back(i);
    }
    print_fit(name + " FE", ns, fe);
    print_fit(name + " IE", ns, ie);
  }
  std::printf("outputs in %s\n", config.output_dir.c_str());
  return 0;
}

int diagnose_slopes(const std::string& input) {
  std::ifstream in(input);
  if (!in) throw ConfigError("cannot open " + input);
  const auto records = read_convergence_csv(in);
  const auto rows = summarize(records);
  std::vector<std::string> order;
  std::map<std::string, std::vector<const SummaryRow*>> by_method;
  for (const auto& r : rows) {
    if (!by_method.count(r.method)) order.push_back(r.method);
    by_method[r.method].push_back(&r);
  }
  std::printf("least-squares fit of log(error) against log(N), mean over trials\n");
  for (const auto& name : order) {
    std::vector<double> ns, fe, ie;
    for (const SummaryRow* r : by_method[name]) {
      ns.push_back(static_cast<double>(r->N));
      fe.push_back(r->fe_mean);
      ie.push_back(r->ie_mean);
    }
    print_fit(name + " FE", ns, fe);
    print_fit(name + " IE", ns, ie);
  }
  return 0;
}

int diagnose_oracle(const CloudFlags& cloud, const MethodFlags& method, int samples) {
  const PointCloud pc = cloud.make();
  const ManifoldSpec spec = builtin_spec(pc.spec_name);
  const MethodConfig config = checked_config(method, pc.d);
  const SparseOperator op = assemble(pc, config);
  const Eigen::VectorXd lf = op.apply(pc.f_values);
  double oracle_vs_exact = 0.0, op_vs_oracle = 0.0;
  const Index stride = std::max<Index>(1, pc.size() / samples);
  Index used = 0;
  for (Index i = 0; i < pc.size(); i += stride) {
    try {
      const double oracle = fd_laplacian_oracle(spec, pc.params.row(i).transpose());
      oracle_vs_exact = std::max(oracle_vs_exact, std::abs(oracle - pc.lap_values[i]));
      op_vs_oracle = std::max(op_vs_oracle, std::abs(lf[i] - oracle));
      ++used;
    } catch (const OracleUndefinedError&) {
    }
  }
  std::printf("points=%lld max|oracle-analytic|=%.3e max|Lf-oracle|=%.3e\n", static_cast<long long>(used),
              oracle_vs_exact, op_vs_oracle);
  return 0;
}

int diagnose_reproduction(const CloudFlags& cloud, const MethodFlags& method, int samples) {
  const PointCloud pc = cloud.make();
  const MethodConfig config = checked_config(method, pc.d);
  const ReproductionReport rep = reproduction_suite(pc, config, samples, cloud.seed);
  std::printf("stencils=%zu max in-space defect*D^2=%.3e max |sum w|*D^2=%.3e median sum|w|*D^2=%.3f max=%.3f\n",
              rep.samples.size(), rep.max_in_space_defect, rep.max_constant_defect, rep.median_weight_sum,
              rep.max_weight_sum);
  return 0;
}

int diagnose_regularization(const CloudFlags& cloud, const MethodFlags& method, const std::string& out) {
  const PointCloud pc = cloud.make();
  const MethodConfig config = checked_config(method, pc.d);
  std::vector<double> deltas;
  for (double e = -8.0; e <= -1.0 + 1e-9; e += 0.5) deltas.push_back(std::pow(10.0, e));
  const Index K = method.k_fixed > 0 ? method.k_fixed : method.k0;
  const auto rows = regularization_sweep(pc, 0, K, config, deltas, 200, cloud.seed);
  write_regularization_csv(std::cout, rows);
  std::vector<double> ds, c3, c4;
  for (const auto& r : rows) {
    ds.push_back(r.delta);
    c3.push_back(r.c3_resampled);
    c4.push_back(r.c4_resampled);
  }
  print_fit("C3 vs delta", ds, c3);
  print_fit("C4 vs delta", ds, c4);
  if (!out.empty()) {
    std::ofstream f(out);
    write_regularization_csv(f, rows);
  }
  return 0;
}

int diagnose_diameter(const CloudFlags& cloud, const std::vector<Index>& ns, Index K, int trials,
                      const std::string& out) {
  const ManifoldSpec spec = builtin_spec(cloud.manifold);
  const auto rows = diameter_statistics(spec, ns, K, trials, cloud.seed, sampling_mode_from_string(cloud.mode));
  write_diameter_csv(std::cout, rows);
  std::vector<double> x, y;
  for (const auto& r : rows) {
    const double n = static_cast<double>(r.N);
    x.push_back(std::log(n) / n);
    y.push_back(r.median);
  }
  print_fit("median D vs log(N)/N", x, y);
  std::printf("expected slope 1/d = %.4f\n", 1.0 / spec.d);
  if (!out.empty()) {
    std::ofstream f(out);
    write_diameter_csv(f, rows);
  }
  return 0;
}

int cmd_eigs(const CloudFlags& cloud, const MethodFlags& method, Index count, double shift, int threads) {
  const PointCloud pc = cloud.make();
  const MethodConfig config = checked_config(method, pc.d);
  const SparseOperator op = assemble(pc, config, threads);
  const auto values = leading_eigenvalues(op, count, shift);
  std::printf("%s N=%lld mean_K=%.2f, %lld eigenvalues nearest %g:\n", config.label().c_str(),
              static_cast<long long>(op.size()), op.mean_k(), static_cast<long long>(count), shift);
  for (const auto& v : values) std::printf("%+.6f %+.6fi\n", v.real(), v.imag());
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Laplace-Beltrami discretizations on point clouds: GMLS, RBF-FD and gRBF-FD"};
  app.require_subcommand(1);
  int threads = 0;
  app.add_option("--threads", threads, "Assembly threads (0 = hardware concurrency)");

  CloudFlags cloud;
  MethodFlags method;
  std::string out;

  CLI::App* sample = app.add_subcommand("sample", "Sample a point cloud and write it as JSON");
  cloud.add(sample, false);
  sample->add_option("--out", out, "Output file")->required();

  CLI::App* assemble_cmd = app.add_subcommand("assemble", "Assemble the operator and write Matrix Market");
  cloud.add(assemble_cmd, true);
  method.add(assemble_cmd, true);
  assemble_cmd->add_option("--out", out, "Output .mtx file")->required();

  std::string cloud_file, matrix_file;
  bool inf_norm = false;
  CLI::App* solve = app.add_subcommand("solve", "Solve (I - L) F = h for a stored cloud and operator");
  solve->add_option("--cloud", cloud_file, "Point cloud JSON")->required();
  solve->add_option("--matrix", matrix_file, "Operator in Matrix Market format")->required();
  solve->add_option("--out", out, "Write F as CSV");
  solve->add_flag("--inf-norm", inf_norm, "Also estimate ||(I - L)^{-1}||_inf");

  std::vector<std::string> methods;
  std::vector<Index> ns;
  int trials = 1;
  bool no_inf_norm = false;
  Index count = 0;
  double shift = 10.0;
  CLI::App* converge = app.add_subcommand("converge", "Convergence sweep over N, methods and trials");
  converge->add_option("--manifold", cloud.manifold, "Built-in manifold")->capture_default_str();
  converge->add_option("--mode", cloud.mode, "well_sampled or random")->capture_default_str();
  converge->add_option("--seed", cloud.seed, "Seed of trial 0")->capture_default_str();
  converge->add_option("--n", ns, "Point counts")->required();
  converge->add_option("--method", methods, "Methods, e.g. grbffd rbffd gmls gmls:smooth")->required();
  converge->add_option("--trials", trials, "Trials per N")->capture_default_str()->check(CLI::PositiveNumber);
  converge->add_option("--out", out, "Output directory")->required();
  converge->add_flag("--no-inf-norm", no_inf_norm, "Skip the inverse-norm estimate");
  converge->add_option("--count", count, "Also record this many leading eigenvalues");
  converge->add_option("--shift", shift, "Eigenvalue shift")->capture_default_str();
  method.add(converge, false);

  std::string config_file;
  CLI::App* run = app.add_subcommand("run", "Run an experiment described by a JSON config");
  run->add_option("config", config_file, "Config file")->required();
  std::string out_override;
  run->add_option("--out", out_override, "Override output_dir");

  std::string suite = "slopes", input;
  int samples = 50;
  CLI::App* diagnose = app.add_subcommand("diagnose", "Slope fits and verification suites");
  diagnose->add_option("suite", suite, "slopes | oracle | reproduction | regularization | diameter")
      ->check(CLI::IsMember({"slopes", "oracle", "reproduction", "regularization", "diameter"}))
      ->capture_default_str();
  diagnose->add_option("--input", input, "convergence.csv (slopes)");
  diagnose->add_option("--samples", samples, "Stencils or points examined")->capture_default_str();
  diagnose->add_option("--sizes", ns, "Point counts (diameter)");
  diagnose->add_option("--trials", trials, "Clouds per N (diameter)")->capture_default_str();
  diagnose->add_option("--out", out, "Also write the table as CSV");
  cloud.add(diagnose, true);
  method.add(diagnose, true);

  CLI::App* eigs = app.add_subcommand("eigs", "Eigenvalues of L nearest a shift");
  cloud.add(eigs, true);
  method.add(eigs, true);
  Index eig_count = 6;
  eigs->add_option("--count", eig_count, "Number of eigenvalues")->capture_default_str();
  eigs->add_option("--shift", shift, "Shift")->capture_default_str();

  try {
    app.parse(argc, argv);
  } catch (const CLI::Success& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kExitInvalid;
  }

  try {
    if (*sample) return cmd_sample(cloud, out);
    if (*assemble_cmd) return cmd_assemble(cloud, method, out, threads);
    if (*solve) return cmd_solve(cloud_file, matrix_file, out, inf_norm);
    if (*converge) {
      ExperimentConfig config;
      config.manifold = cloud.manifold;
      config.mode = sampling_mode_from_string(cloud.mode);
      for (const auto& m : methods) config.methods.push_back(method.spec_for(m));
      config.Ns = ns;
      config.trials = trials;
      config.seed_base = cloud.seed;
      config.l = method.l;
      config.kappa = method.kappa;
      config.delta = method.delta;
      config.k_policy = method.policy();
      config.inf_norm = !no_inf_norm;
      config.eig_count = count;
      config.eig_shift = shift;
      config.output_dir = out;
      config.threads = threads;
      // Round-trip through the manifest so flags get the same validation as files.
      return cmd_run(parse_experiment_config(manifest_json(config), "<flags>"));
    }
    if (*run) {
      ExperimentConfig config = load_experiment_config(config_file);
      if (!out_override.empty()) config.output_dir = out_override;
      if (threads != 0) config.threads = threads;
      return cmd_run(config);
    }
    if (*diagnose) {
      if (suite == "slopes") {
        if (input.empty()) throw ArgumentError("diagnose slopes needs --input convergence.csv");
        return diagnose_slopes(input);
      }
      if (suite == "oracle") return diagnose_oracle(cloud, method, samples);
      if (suite == "reproduction") return diagnose_reproduction(cloud, method, samples);
      if (suite == "regularization") return diagnose_regularization(cloud, method, out);
      if (ns.empty()) ns = {2048, 4096, 8192, 16384, 32768};
      return diagnose_diameter(cloud, ns, method.k_fixed > 0 ? method.k_fixed : method.k0, trials, out);
    }
    if (*eigs) return cmd_eigs(cloud, method, eig_count, shift, threads);
  } catch (const ConfigError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitInvalid;
  } catch (const ArgumentError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitInvalid;
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitNumerical;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitNumerical;
  }
  return 0;
}
