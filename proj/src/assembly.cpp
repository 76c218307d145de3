#include "grbf/assembly.hpp"

#include "grbf/stencils.hpp"

#include <Eigen/Eigenvalues>
#include <Eigen/IterativeLinearSolvers>
#include <Eigen/SparseLU>

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <exception>
#include <fstream>
#include <iomanip>
#include <mutex>
#include <numeric>
#include <sstream>
#include <thread>

namespace grbf {

double SparseOperator::mean_k() const {
  if (k_final.empty()) return 0.0;
  return std::accumulate(k_final.begin(), k_final.end(), 0.0) / static_cast<double>(k_final.size());
}

Index SparseOperator::unconverged_count() const {
  return static_cast<Index>(std::count(unconverged.begin(), unconverged.end(), true));
}

Index SparseOperator::accepted_count(double gamma_th) const {
  Index count = 0;
  for (std::size_t i = 0; i < gamma.size(); ++i) count += (base_weight[i] < 0.0 && gamma[i] >= gamma_th);
  return count;
}

double SparseOperator::max_gamma_fail(double gamma_th) const {
  double worst = 0.0;
  for (std::size_t i = 0; i < gamma.size(); ++i) {
    if (base_weight[i] >= 0.0) {
      worst = std::max(worst, gamma_th);
    } else if (gamma[i] < gamma_th) {
      worst = std::max(worst, gamma_th - gamma[i]);
    }
  }
  return worst;
}

SparseOperator assemble(const PointCloud& cloud, const MethodConfig& config, int threads) {
  config.validate(cloud.d);
  const Index N = cloud.size();
  if (N < 2) throw ArgumentError("assemble needs at least two points");
  if (!config.auto_tune && config.k0 > N) {
    throw ArgumentError("fixed K=" + std::to_string(config.k0) + " exceeds N=" + std::to_string(N));
  }
  const NeighborIndex index = build_knn_index(cloud);

  std::vector<LaplacianRow> rows(static_cast<std::size_t>(N));
  const int workers = threads > 0 ? threads : static_cast<int>(std::max(1u, std::thread::hardware_concurrency()));
  std::atomic<Index> next{0};
  std::exception_ptr failure;
  Index failed_at = N;
  std::mutex failure_mutex;
  auto work = [&] {
    for (Index i = next++; i < N; i = next++) {
      try {
        rows[static_cast<std::size_t>(i)] = config.auto_tune ? auto_tune_row(cloud, index, i, config)
                                                             : fixed_k_row(cloud, index, i, config.k0, config);
      } catch (...) {
        // Keep the lowest failing index so the reported error is deterministic.
        std::lock_guard lock(failure_mutex);
        if (i < failed_at) {
          failed_at = i;
          failure = std::current_exception();
        }
      }
    }
  };
  if (workers == 1) {
    work();
  } else {
    std::vector<std::thread> pool;
    for (int t = 0; t < workers; ++t) pool.emplace_back(work);
    for (auto& t : pool) t.join();
  }
  if (failure) std::rethrow_exception(failure);

  SparseOperator op;
  op.config = config;
  op.manifold = cloud.spec_name;
  Index nnz = 0;
  for (const auto& row : rows) nnz += row.weights.size();
  std::vector<Eigen::Triplet<double>> triplets;
  triplets.reserve(static_cast<std::size_t>(nnz));
  for (const auto& row : rows) {
    for (Index k = 0; k < row.weights.size(); ++k) {
      triplets.emplace_back(row.base, row.neighbors[static_cast<std::size_t>(k)], row.weights(k));
    }
    op.k_final.push_back(row.k_final);
    op.gamma.push_back(row.gamma);
    op.base_weight.push_back(row.weights(0));
    op.d_k_max.push_back(row.d_k_max);
    op.unconverged.push_back(row.unconverged);
    op.tune_iters.push_back(row.tune_iters);
  }
  op.matrix.resize(N, N);
  op.matrix.setFromTriplets(triplets.begin(), triplets.end());
  return op;
}

SparseOperator operator_from_matrix(SparseMatrix matrix) {
  if (matrix.rows() != matrix.cols()) throw ArgumentError("operator matrix must be square");
  SparseOperator op;
  op.matrix = std::move(matrix);
  op.matrix.makeCompressed();
  for (Index i = 0; i < op.matrix.rows(); ++i) {
    Index k = 0;
    double diag = 0.0;
    double off = 0.0;
    for (SparseMatrix::InnerIterator it(op.matrix, i); it; ++it, ++k) {
      if (it.col() == i) {
        diag = it.value();
      } else {
        off = std::max(off, std::abs(it.value()));
      }
    }
    op.k_final.push_back(k);
    op.base_weight.push_back(diag);
    op.gamma.push_back(off > 0 ? std::abs(diag) / off : std::numeric_limits<double>::infinity());
    op.d_k_max.push_back(std::numeric_limits<double>::quiet_NaN());
    op.unconverged.push_back(false);
    op.tune_iters.push_back(0);
  }
  return op;
}

std::string to_string(SolverKind kind) { return kind == SolverKind::direct ? "direct" : "iterative"; }

// ---------------------------------------------------------------------------

struct ShiftedSolver::Impl {
  using ColMatrix = Eigen::SparseMatrix<double>;
  using Iterative = Eigen::BiCGSTAB<ColMatrix, Eigen::IncompleteLUT<double>>;

  ColMatrix A;
  ColMatrix At;
  SolverOptions options;
  SolverKind kind = SolverKind::direct;
  std::unique_ptr<Eigen::SparseLU<ColMatrix>> lu;
  std::unique_ptr<Iterative> iterative;
  std::unique_ptr<Iterative> iterative_t;
  double residual = 0.0;
  double norm_inf = 0.0;  ///< max(||A||_inf, ||A||_1)
  int iterations = 0;
  int solves = 0;
  static constexpr double kBackwardTolerance = 1e-13;

  void factorize_direct() {
    lu = std::make_unique<Eigen::SparseLU<ColMatrix>>();
    lu->analyzePattern(A);
    lu->factorize(A);
    if (lu->info() != Eigen::Success) {
      throw SolverError("sparse LU factorization failed: " + lu->lastErrorMessage(),
                        std::numeric_limits<double>::infinity());
    }
  }

  std::unique_ptr<Iterative> make_iterative(const ColMatrix& M) const {
    auto solver = std::make_unique<Iterative>();
    solver->preconditioner().setDroptol(options.ilut_drop_tol);
    solver->preconditioner().setFillfactor(options.ilut_fill_factor);
    solver->setTolerance(options.tol);
    solver->setMaxIterations(options.max_iterations);
    solver->compute(M);
    if (solver->info() != Eigen::Success) return nullptr;
    return solver;
  }

  double relative_residual(const ColMatrix& M, const Eigen::VectorXd& x, const Eigen::VectorXd& b) const {
    const double bn = b.norm();
    const double rn = (b - M * x).norm();
    return bn > 0 ? rn / bn : rn;
  }

  template <typename DirectSolve>
  Eigen::VectorXd direct(const ColMatrix& M, const Eigen::VectorXd& b, DirectSolve&& solve_fn) {
    Eigen::VectorXd x = solve_fn(b);
    residual = relative_residual(M, x, b);
    for (int step = 0; step < 3 && residual > options.tol; ++step) {
      x += solve_fn(b - M * x);
      residual = relative_residual(M, x, b);
    }
    iterations = 1;
    if (residual > options.tol) {
      // Badly scaled operators cannot reach the relative tolerance in double
      // precision; accept a solution that is backward stable instead.
      const double backward = (b - M * x).lpNorm<Eigen::Infinity>() /
                              (norm_inf * x.lpNorm<Eigen::Infinity>() + b.lpNorm<Eigen::Infinity>());
      if (!(backward <= kBackwardTolerance)) {
        throw SolverError("direct solve missed the residual tolerance", residual);
      }
    }
    return x;
  }

  Eigen::VectorXd run(bool transpose, const Eigen::VectorXd& b) {
    if (b.size() != A.rows()) throw ArgumentError("right-hand side length does not match the operator");
    ++solves;
    const ColMatrix& M = transpose ? At : A;
    if (kind == SolverKind::iterative) {
      auto& solver = transpose ? iterative_t : iterative;
      if (!solver) solver = make_iterative(M);
      if (solver) {
        Eigen::VectorXd x = solver->solve(b);
        iterations = static_cast<int>(solver->iterations());
        residual = relative_residual(M, x, b);
        if (solver->info() == Eigen::Success && residual <= options.tol) return x;
      }
      // Breakdown or stagnation: fall back to a direct factorization.
      if (!lu) factorize_direct();
    }
    if (transpose) {
      return direct(M, b, [&](const Eigen::VectorXd& r) { return Eigen::VectorXd(lu->transpose().solve(r)); });
    }
    return direct(M, b, [&](const Eigen::VectorXd& r) { return Eigen::VectorXd(lu->solve(r)); });
  }
};

ShiftedSolver::ShiftedSolver(const SparseMatrix& L, double alpha, const SolverOptions& options)
    : impl_(std::make_unique<Impl>()) {
  if (L.rows() != L.cols()) throw ArgumentError("operator must be square");
  const Index N = L.rows();
  impl_->options = options;
  Impl::ColMatrix I(N, N);
  I.setIdentity();
  impl_->A = alpha * I - Impl::ColMatrix(L);
  impl_->A.makeCompressed();
  impl_->At = impl_->A.transpose();
  impl_->At.makeCompressed();
  const Eigen::VectorXd row_sums = Eigen::SparseMatrix<double, Eigen::RowMajor>(impl_->A).cwiseAbs() *
                                   Eigen::VectorXd::Ones(N);
  const Eigen::VectorXd col_sums = Eigen::SparseMatrix<double, Eigen::RowMajor>(impl_->At).cwiseAbs() *
                                   Eigen::VectorXd::Ones(N);
  impl_->norm_inf = std::max(row_sums.maxCoeff(), col_sums.maxCoeff());
  if (N <= options.direct_threshold) {
    impl_->kind = SolverKind::direct;
    impl_->factorize_direct();
  } else {
    impl_->kind = SolverKind::iterative;
  }
}

ShiftedSolver::~ShiftedSolver() = default;
ShiftedSolver::ShiftedSolver(ShiftedSolver&&) noexcept = default;
ShiftedSolver& ShiftedSolver::operator=(ShiftedSolver&&) noexcept = default;

Eigen::VectorXd ShiftedSolver::solve(const Eigen::VectorXd& b) { return impl_->run(false, b); }
Eigen::VectorXd ShiftedSolver::solve_transpose(const Eigen::VectorXd& b) { return impl_->run(true, b); }
Index ShiftedSolver::size() const { return impl_->A.rows(); }
SolverKind ShiftedSolver::kind() const { return impl_->kind; }
double ShiftedSolver::last_residual() const { return impl_->residual; }
int ShiftedSolver::last_iterations() const { return impl_->iterations; }
int ShiftedSolver::solve_count() const { return impl_->solves; }

SolveReport solve_screened_poisson(const SparseOperator& op, const Eigen::VectorXd& h, const SolverOptions& options) {
  if (h.size() != op.size()) {
    throw ArgumentError("right-hand side has length " + std::to_string(h.size()) + " but the operator has " +
                        std::to_string(op.size()) + " rows");
  }
  const auto start = std::chrono::steady_clock::now();
  ShiftedSolver solver(op.matrix, 1.0, options);
  SolveReport report;
  report.F = solver.solve(h);
  report.residual = solver.last_residual();
  report.iterations = solver.last_iterations();
  report.solver = solver.kind();
  report.wall_time = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return report;
}

double forward_error(const SparseOperator& op, const Eigen::VectorXd& f, const Eigen::VectorXd& lap_f) {
  if (f.size() != op.size() || lap_f.size() != op.size()) throw ArgumentError("forward_error: size mismatch");
  return (op.matrix * f - lap_f).cwiseAbs().maxCoeff();
}

double inverse_error(const Eigen::VectorXd& F, const Eigen::VectorXd& f) {
  if (F.size() != f.size()) throw ArgumentError("inverse_error: size mismatch");
  return (F - f).cwiseAbs().maxCoeff();
}

namespace {

/// Hager's iteration for ||B||_1, B = A^{-T}, from start vector x (||x||_1 = 1).
double hager_run(ShiftedSolver& solver, Eigen::VectorXd x, int max_iterations) {
  double estimate = 0.0;
  Index last_j = -1;
  for (int iter = 0; iter < max_iterations; ++iter) {
    const Eigen::VectorXd y = solver.solve_transpose(x);
    const double norm_y = y.lpNorm<1>();
    if (iter > 0 && norm_y <= estimate) break;
    estimate = norm_y;
    const Eigen::VectorXd xi = y.unaryExpr([](double v) { return v >= 0.0 ? 1.0 : -1.0; });
    const Eigen::VectorXd z = solver.solve(xi);
    Index j = 0;
    const double zmax = z.cwiseAbs().maxCoeff(&j);
    if (zmax <= z.dot(x) || j == last_j) break;
    x.setZero();
    x(j) = 1.0;
    last_j = j;
  }
  return estimate;
}

}  // namespace

NormEstimate inf_norm_inverse(ShiftedSolver& solver, int max_iterations, int extra_starts) {
  // ||A^{-1}||_inf = ||B||_1 with B = A^{-T}: B x is a transpose solve, B^T x a plain solve.
  const Index N = solver.size();
  const int solves_before = solver.solve_count();
  double estimate = hager_run(solver, Eigen::VectorXd::Constant(N, 1.0 / static_cast<double>(N)), max_iterations);
  // Random sign starts escape the stationary point at the uniform vector.
  UniformStream stream(0x5eed1234u);
  for (int s = 0; s < extra_starts; ++s) {
    Eigen::VectorXd x(N);
    for (Index i = 0; i < N; ++i) x(i) = stream.next() < 0.5 ? -1.0 : 1.0;
    estimate = std::max(estimate, hager_run(solver, x / static_cast<double>(N), max_iterations));
  }
  // Higham's alternating-sign test vector guards against cancellation.
  Eigen::VectorXd b(N);
  for (Index i = 0; i < N; ++i) {
    const double sign = (i % 2 == 0) ? 1.0 : -1.0;
    b(i) = sign * (1.0 + (N > 1 ? static_cast<double>(i) / static_cast<double>(N - 1) : 0.0));
  }
  const double alt = 2.0 * solver.solve_transpose(b).lpNorm<1>() / (3.0 * static_cast<double>(N));
  return {std::max(estimate, alt), solver.solve_count() - solves_before, false};
}

NormEstimate inf_norm_inverse(const SparseOperator& op, const SolverOptions& options) {
  ShiftedSolver solver(op.matrix, 1.0, options);
  return inf_norm_inverse(solver);
}

NormEstimate inf_norm_inverse_exact(const SparseOperator& op, const SolverOptions& options) {
  const Index N = op.size();
  if (N > 2000) throw ArgumentError("exact inverse norm is limited to N <= 2000");
  ShiftedSolver solver(op.matrix, 1.0, options);
  Eigen::VectorXd row_sums = Eigen::VectorXd::Zero(N);
  Eigen::VectorXd e = Eigen::VectorXd::Zero(N);
  for (Index j = 0; j < N; ++j) {
    e(j) = 1.0;
    row_sums += solver.solve(e).cwiseAbs();
    e(j) = 0.0;
  }
  return {row_sums.maxCoeff(), static_cast<int>(N), true};
}

// ---------------------------------------------------------------------------

namespace {

using Complex = std::complex<double>;

std::vector<Complex> nearest(std::vector<Complex> values, Index count, double shift) {
  std::stable_sort(values.begin(), values.end(), [&](const Complex& a, const Complex& b) {
    const double da = std::abs(a - shift);
    const double db = std::abs(b - shift);
    if (da != db) return da < db;
    if (a.real() != b.real()) return a.real() > b.real();
    return a.imag() > b.imag();
  });
  values.resize(static_cast<std::size_t>(std::min<Index>(count, static_cast<Index>(values.size()))));
  return values;
}

/// Shift-invert Arnoldi on (L - shift I)^{-1} with full reorthogonalization;
/// the Krylov space grows until the wanted Ritz pairs converge.
std::vector<Complex> shift_invert_arnoldi(const SparseMatrix& L, Index count, double shift,
                                          const EigenOptions& options) {
  const Index N = L.rows();
  SolverOptions solver_options = options.solver;
  solver_options.tol = std::min(solver_options.tol, 1e-12);
  ShiftedSolver solver(L, shift, solver_options);  // (shift I - L) = -(L - shift I)

  const Index max_dim = std::min<Index>(options.max_krylov, N);
  Eigen::MatrixXd V(N, max_dim + 1);
  Eigen::MatrixXd H = Eigen::MatrixXd::Zero(max_dim + 1, max_dim);
  // Deterministic start vector with components in every direction.
  Eigen::VectorXd v(N);
  for (Index i = 0; i < N; ++i) v(i) = 1.0 + 0.5 * std::sin(0.7 * static_cast<double>(i) + 0.3);
  V.col(0) = v / v.norm();

  const Index first_check = std::min<Index>(max_dim, std::max<Index>(2 * count + 20, 40));
  Index next_check = first_check;
  std::vector<Complex> ritz;
  double worst_residual = std::numeric_limits<double>::infinity();
  for (Index j = 0; j < max_dim; ++j) {
    Eigen::VectorXd w = -solver.solve(V.col(j));
    for (int pass = 0; pass < 2; ++pass) {
      const Eigen::VectorXd coeffs = V.leftCols(j + 1).transpose() * w;
      w -= V.leftCols(j + 1) * coeffs;
      H.col(j).head(j + 1) += coeffs;
    }
    const double beta = w.norm();
    H(j + 1, j) = beta;
    const bool invariant = beta <= 1e-14 * H.col(j).head(j + 1).norm();
    if (!invariant) V.col(j + 1) = w / beta;

    const Index dim = j + 1;
    if (dim != next_check && dim != max_dim && !invariant) continue;
    next_check = std::min<Index>(max_dim, next_check + std::max<Index>(20, dim / 4));

    Eigen::EigenSolver<Eigen::MatrixXd> es(H.topLeftCorner(dim, dim));
    const Eigen::VectorXcd mu = es.eigenvalues();
    const Eigen::MatrixXcd Y = es.eigenvectors();
    std::vector<Index> order(static_cast<std::size_t>(dim));
    std::iota(order.begin(), order.end(), Index{0});
    std::stable_sort(order.begin(), order.end(), [&](Index a, Index b) { return std::abs(mu(a)) > std::abs(mu(b)); });
    const Index wanted = std::min(count, dim);
    worst_residual = 0.0;
    ritz.clear();
    for (Index t = 0; t < wanted; ++t) {
      const Index a = order[static_cast<std::size_t>(t)];
      const double res = invariant ? 0.0 : beta * std::abs(Y(dim - 1, a)) / std::max(std::abs(mu(a)), 1e-300);
      worst_residual = std::max(worst_residual, res);
      ritz.push_back(Complex(shift, 0.0) + 1.0 / mu(a));
    }
    if (worst_residual <= options.tol || invariant) return nearest(ritz, count, shift);
  }
  throw SolverError("shift-invert Arnoldi did not converge within " + std::to_string(max_dim) +
                        " Krylov vectors (worst relative Ritz residual " + std::to_string(worst_residual) + ")",
                    worst_residual);
}

}  // namespace

std::vector<std::complex<double>> leading_eigenvalues(const SparseMatrix& L, Index count, double shift,
                                                      const EigenOptions& options) {
  const Index N = L.rows();
  if (L.rows() != L.cols()) throw ArgumentError("eigenvalues need a square operator");
  if (count < 1 || count > N) throw ArgumentError("eigenvalue count must lie in [1, N]");
  if (N <= options.dense_threshold) {
    const Eigen::MatrixXd dense(L);
    Eigen::EigenSolver<Eigen::MatrixXd> es(dense, false);
    if (es.info() != Eigen::Success) throw SolverError("dense eigenvalue iteration did not converge", 0.0);
    const Eigen::VectorXcd values = es.eigenvalues();
    return nearest(std::vector<Complex>(values.data(), values.data() + values.size()), count, shift);
  }
  return shift_invert_arnoldi(L, count, shift, options);
}

// ---------------------------------------------------------------------------

void write_matrix_market(const SparseMatrix& matrix, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw ConfigError("cannot open '" + path + "' for writing");
  out << "%%MatrixMarket matrix coordinate real general\n";
  out << matrix.rows() << ' ' << matrix.cols() << ' ' << matrix.nonZeros() << '\n';
  out << std::setprecision(17);
  for (Index i = 0; i < matrix.outerSize(); ++i) {
    for (SparseMatrix::InnerIterator it(matrix, i); it; ++it) {
      out << it.row() + 1 << ' ' << it.col() + 1 << ' ' << it.value() << '\n';
    }
  }
  if (!out) throw ConfigError("failed writing '" + path + "'");
}

SparseMatrix read_matrix_market(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open '" + path + "'");
  std::string line;
  if (!std::getline(in, line) || line.rfind("%%MatrixMarket", 0) != 0) {
    throw ConfigError(path + ":1: missing %%MatrixMarket header");
  }
  std::istringstream header(line);
  std::string banner, object, format, field, symmetry;
  header >> banner >> object >> format >> field >> symmetry;
  if (object != "matrix" || format != "coordinate" || field != "real" || symmetry != "general") {
    throw ConfigError(path + ":1: only 'matrix coordinate real general' is supported");
  }
  int line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line[0] != '%') break;
  }
  Index rows = 0, cols = 0, nnz = 0;
  if (!(std::istringstream(line) >> rows >> cols >> nnz) || rows < 0 || cols < 0 || nnz < 0) {
    throw ConfigError(path + ":" + std::to_string(line_no) + ": malformed size line");
  }
  std::vector<Eigen::Triplet<double>> triplets;
  triplets.reserve(static_cast<std::size_t>(nnz));
  for (Index k = 0; k < nnz; ++k) {
    ++line_no;
    Index r = 0, c = 0;
    double value = 0.0;
    if (!std::getline(in, line) || !(std::istringstream(line) >> r >> c >> value)) {
      throw ConfigError(path + ":" + std::to_string(line_no) + ": malformed entry");
    }
    if (r < 1 || r > rows || c < 1 || c > cols) {
      throw ConfigError(path + ":" + std::to_string(line_no) + ": index out of range");
    }
    triplets.emplace_back(r - 1, c - 1, value);
  }
  SparseMatrix matrix(rows, cols);
  matrix.setFromTriplets(triplets.begin(), triplets.end());
  return matrix;
}

}  // namespace grbf
