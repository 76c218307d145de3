#pragma once

#include "grbf/core.hpp"
#include "grbf/local_ops.hpp"
#include "grbf/manifolds.hpp"

#include <Eigen/Sparse>

#include <complex>
#include <limits>
#include <memory>
#include <string>
#include <vector>

namespace grbf {

using SparseMatrix = Eigen::SparseMatrix<double, Eigen::RowMajor>;

/// Global discrete Laplace-Beltrami operator with per-row stencil metadata.
struct SparseOperator {
  MethodConfig config;
  std::string manifold;
  SparseMatrix matrix;               ///< N x N, one stencil per row
  std::vector<Index> k_final;
  std::vector<double> gamma;
  std::vector<double> base_weight;   ///< w_1 of each row
  std::vector<double> d_k_max;
  std::vector<bool> unconverged;
  std::vector<int> tune_iters;

  Index size() const { return matrix.rows(); }
  Eigen::VectorXd apply(const Eigen::VectorXd& f) const { return matrix * f; }

  double mean_k() const;
  Index unconverged_count() const;
  /// Rows with w_1 < 0 and gamma >= gamma_th.
  Index accepted_count(double gamma_th) const;
  /// Largest shortfall gamma_th - gamma over rejected rows (gamma_th when w_1 >= 0), 0 if none.
  double max_gamma_fail(double gamma_th) const;
};

/**
 * Builds one row per point (auto-tuned, or fixed K = config.k0 when
 * config.auto_tune is false). `threads` <= 0 uses the hardware concurrency;
 * the result does not depend on it.
 */
SparseOperator assemble(const PointCloud& cloud, const MethodConfig& config, int threads = 0);

/// Operator with explicit rows, used for tests and Matrix Market round trips.
SparseOperator operator_from_matrix(SparseMatrix matrix);

enum class SolverKind { direct, iterative };
std::string to_string(SolverKind kind);

struct SolverOptions {
  double tol = 1e-10;
  Index direct_threshold = 6400;    ///< direct factorization for N <= this
  int max_iterations = 2000;
  double ilut_drop_tol = 1e-3;
  int ilut_fill_factor = 5;
};

/// Factorization or preconditioner of a shifted system (alpha I - L), reusable
/// across right-hand sides and transpose solves.
class ShiftedSolver {
 public:
  ShiftedSolver(const SparseMatrix& L, double alpha, const SolverOptions& options = {});
  ~ShiftedSolver();
  ShiftedSolver(ShiftedSolver&&) noexcept;
  ShiftedSolver& operator=(ShiftedSolver&&) noexcept;

  /// Solves (alpha I - L) x = b; throws SolverError if the tolerance is missed.
  Eigen::VectorXd solve(const Eigen::VectorXd& b);
  /// Solves (alpha I - L)^T x = b.
  Eigen::VectorXd solve_transpose(const Eigen::VectorXd& b);

  Index size() const;
  SolverKind kind() const;
  double last_residual() const;
  int last_iterations() const;
  int solve_count() const;

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

struct SolveReport {
  Eigen::VectorXd F;
  double fe = std::numeric_limits<double>::quiet_NaN();
  double ie = std::numeric_limits<double>::quiet_NaN();
  double residual = 0.0;
  double inf_norm_inv = std::numeric_limits<double>::quiet_NaN();
  double wall_time = 0.0;
  SolverKind solver = SolverKind::direct;
  int iterations = 0;
};

/// Solves (I - L) F = h to relative residual options.tol.
SolveReport solve_screened_poisson(const SparseOperator& op, const Eigen::VectorXd& h,
                                   const SolverOptions& options = {});

/// max_i |(L f)_i - lap_f_i|
double forward_error(const SparseOperator& op, const Eigen::VectorXd& f, const Eigen::VectorXd& lap_f);
/// max_i |F_i - f_i|
double inverse_error(const Eigen::VectorXd& F, const Eigen::VectorXd& f);

struct NormEstimate {
  double value = 0.0;
  int solves = 0;
  bool exact = false;
};

/// Hager-Higham estimate of ||(I - L)^{-1}||_inf, computed as the 1-norm of
/// (I - L)^{-T} with alternating solves. Each extra start is a random sign vector.
NormEstimate inf_norm_inverse(ShiftedSolver& solver, int max_iterations = 5, int extra_starts = 6);
NormEstimate inf_norm_inverse(const SparseOperator& op, const SolverOptions& options = {});
/// Column-by-column ||(I - L)^{-1}||_inf; N <= 2000 only.
NormEstimate inf_norm_inverse_exact(const SparseOperator& op, const SolverOptions& options = {});

struct EigenOptions {
  Index dense_threshold = 3000;
  double tol = 1e-9;          ///< relative Ritz residual
  Index max_krylov = 400;
  SolverOptions solver;
};

/// `count` eigenvalues of L nearest `shift`, sorted by distance to it.
std::vector<std::complex<double>> leading_eigenvalues(const SparseMatrix& L, Index count, double shift = 10.0,
                                                      const EigenOptions& options = {});
inline std::vector<std::complex<double>> leading_eigenvalues(const SparseOperator& op, Index count,
                                                             double shift = 10.0,
                                                             const EigenOptions& options = {}) {
  return leading_eigenvalues(op.matrix, count, shift, options);
}

void write_matrix_market(const SparseMatrix& matrix, const std::string& path);
SparseMatrix read_matrix_market(const std::string& path);

}  // namespace grbf
