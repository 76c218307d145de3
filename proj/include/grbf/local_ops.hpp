#pragma once

#include "grbf/core.hpp"
#include "grbf/manifolds.hpp"
#include "grbf/stencils.hpp"

#include <cmath>
#include <limits>
#include <string>
#include <utility>
#include <vector>

namespace grbf {

enum class Method { gmls, rbffd, grbffd };
enum class WeightScheme { one_over_k, smooth, phi_inverse };

std::string to_string(Method method);
std::string to_string(WeightScheme scheme);
Method method_from_string(const std::string& name);
WeightScheme weight_scheme_from_string(const std::string& name);

/// Parameters of one Laplacian discretization.
struct MethodConfig {
  Method method = Method::grbffd;
  /// Only meaningful for GMLS; gRBF-FD always uses 1/K and RBF-FD uses Phi^{-1}.
  WeightScheme weight = WeightScheme::one_over_k;
  int l = 4;
  int kappa = 3;
  double delta = 1e-6;
  Index k0 = 30;
  Index k_step = 2;
  double gamma_th = 3.0;
  Index k_max = 0;  ///< 0 selects min(N - 1, max(10 k0, 200))
  bool auto_tune = true;

  WeightScheme effective_weight() const;
  Index resolved_k_max(Index N) const;
  /// Throws ConfigError when the configuration is inconsistent for dimension d.
  void validate(int d) const;
  /// Advisory findings that do not prevent a run (currently kappa > l).
  std::vector<std::string> warnings() const;
  /// Short label such as "grbffd" or "gmls-smooth".
  std::string label() const;
};

Index binomial(int n, int k);

/// Multi-indices of all monomials of degree <= l in d variables, graded
/// lexicographic order (within a degree, larger leading exponents first).
struct MonomialBasis {
  int degree = 0;
  int dim = 0;
  Eigen::MatrixXi exponents;          ///< m x d
  std::vector<Index> laplacian_set;   ///< rows alpha with a single entry equal to 2

  Index size() const { return exponents.rows(); }
};

MonomialBasis monomial_indices(int l, int d);

/// Prefactor of the tangent-plane Laplacian of r^{2 kappa + 1} in d dimensions.
constexpr double phs_laplacian_factor(int kappa, int d) {
  return 4.0 * kappa * kappa + 2.0 * d * kappa + d - 1.0;
}

/// x^p for a non-negative integer p by repeated squaring.
template <typename Scalar>
Scalar int_pow(Scalar x, int p) {
  Scalar result(1);
  while (p > 0) {
    if (p & 1) result *= x;
    x *= x;
    p >>= 1;
  }
  return result;
}

/// K x m matrix with entries prod_i theta_i^{alpha_i(j)}.
template <typename Derived>
Matrix<typename Derived::Scalar> vandermonde(const Eigen::MatrixBase<Derived>& theta,
                                             const MonomialBasis& basis) {
  using Scalar = typename Derived::Scalar;
  const Index K = theta.rows();
  const Index d = theta.cols();
  const int l = basis.degree;
  // powers[i](k, p) = theta(k, i)^p
  std::vector<Matrix<Scalar>> powers(static_cast<std::size_t>(d), Matrix<Scalar>(K, l + 1));
  for (Index i = 0; i < d; ++i) {
    auto& table = powers[static_cast<std::size_t>(i)];
    table.col(0).setOnes();
    for (int p = 1; p <= l; ++p) table.col(p) = table.col(p - 1).cwiseProduct(theta.col(i));
  }
  Matrix<Scalar> P(K, basis.size());
  for (Index j = 0; j < basis.size(); ++j) {
    P.col(j).setOnes();
    for (Index i = 0; i < d; ++i) {
      const int a = basis.exponents(j, i);
      if (a > 0) P.col(j).array() *= powers[static_cast<std::size_t>(i)].col(a).array();
    }
  }
  return P;
}

/// Symmetric K x K matrix of phi(r) = r^{2 kappa + 1} over pairwise distances.
template <typename Derived>
Matrix<typename Derived::Scalar> phs_matrix(const Eigen::MatrixBase<Derived>& theta, int kappa) {
  using Scalar = typename Derived::Scalar;
  using std::sqrt;
  const Index K = theta.rows();
  Matrix<Scalar> Phi(K, K);
  for (Index k = 0; k < K; ++k) {
    Phi(k, k) = Scalar(0);
    for (Index s = k + 1; s < K; ++s) {
      const Scalar r = sqrt((theta.row(k) - theta.row(s)).squaredNorm());
      Phi(k, s) = Phi(s, k) = int_pow(r, 2 * kappa + 1);
    }
  }
  return Phi;
}

/// Row of Delta_theta phi(|theta - theta_k|) evaluated at `at`.
template <typename Derived, typename PointDerived>
RowVector<typename Derived::Scalar> phs_laplacian_row_at(const Eigen::MatrixBase<Derived>& theta,
                                                         const Eigen::MatrixBase<PointDerived>& at,
                                                         int kappa) {
  using Scalar = typename Derived::Scalar;
  using std::sqrt;
  const Index K = theta.rows();
  const int d = static_cast<int>(theta.cols());
  const Scalar factor = Scalar(phs_laplacian_factor(kappa, d));
  RowVector<Scalar> row(K);
  for (Index k = 0; k < K; ++k) {
    const Scalar r = sqrt((theta.row(k) - at.derived().reshaped().transpose()).squaredNorm());
    row(k) = factor * int_pow(r, 2 * kappa - 1);
  }
  return row;
}

/// Row of Delta_theta phi(|theta - theta_k|) at the base point theta = 0.
template <typename Derived>
RowVector<typename Derived::Scalar> phs_laplacian_row(const Eigen::MatrixBase<Derived>& theta, int kappa) {
  using Scalar = typename Derived::Scalar;
  return phs_laplacian_row_at(theta, RowVector<Scalar>::Zero(theta.cols()), kappa);
}

/// Delta_theta of each monomial at theta = 0: 2 on the pure squares, 0 elsewhere.
template <typename Scalar = double>
RowVector<Scalar> polynomial_laplacian_row(const MonomialBasis& basis) {
  RowVector<Scalar> row = RowVector<Scalar>::Zero(basis.size());
  for (Index j : basis.laplacian_set) row(j) = Scalar(2);
  return row;
}

/// (Phi^T Lambda Phi + delta^2 I)^{-1} Phi^T Lambda, the weighted ridge inverse.
template <typename Scalar>
Matrix<Scalar> ridge_inverse(const Matrix<Scalar>& Phi, const Matrix<Scalar>& Lambda, Scalar delta) {
  const Matrix<Scalar> rhs = Phi.transpose() * Lambda;
  Matrix<Scalar> A = rhs * Phi;
  A.diagonal().array() += delta * delta;
  return Eigen::FullPivLU<Matrix<Scalar>>(A).solve(rhs);
}

/// Condition threshold above which P^T Lambda P is treated as singular.
inline constexpr double kMaxNormalCondition = 1e14;

/**
 * Weighted polynomial least-squares projector (P^T Lambda P)^{-1} P^T Lambda,
 * given P and P^T Lambda. Throws RankDeficientError when the normal matrix is
 * numerically singular.
 */
template <typename Scalar>
Matrix<Scalar> least_squares_projector(const Matrix<Scalar>& P, const Matrix<Scalar>& Pt_lambda) {
  const Matrix<Scalar> G = Pt_lambda * P;
  Eigen::FullPivLU<Matrix<Scalar>> lu(G);
  const double rcond = static_cast<double>(lu.rcond());
  if (!(rcond * kMaxNormalCondition >= 1.0)) {
    throw RankDeficientError("weighted normal matrix P^T Lambda P is singular",
                             rcond > 0 ? 1.0 / rcond : std::numeric_limits<double>::infinity());
  }
  return lu.solve(Pt_lambda);
}

/**
 * Combines a PHS row r = (Delta phi) Phi^{-1} with the polynomial part:
 * r (I - P proj) + (Delta p) proj, where proj = (P^T Lambda P)^{-1} P^T Lambda.
 * Both terms are returned separately so callers can inspect the split.
 */
template <typename Scalar>
std::pair<RowVector<Scalar>, RowVector<Scalar>> two_step_parts(const RowVector<Scalar>& phs_row,
                                                               const RowVector<Scalar>& lap_p,
                                                               const Matrix<Scalar>& P,
                                                               const Matrix<Scalar>& projector) {
  RowVector<Scalar> poly_part = lap_p * projector;
  RowVector<Scalar> phs_part = phs_row - (phs_row * P) * projector;
  return {std::move(poly_part), std::move(phs_part)};
}

/// Dense-matrix form of the two-step weights for arbitrary symmetric Lambda and
/// an explicit inverse of Phi; unscaled (normalized coordinates).
template <typename Scalar>
RowVector<Scalar> two_step_weights(const Matrix<Scalar>& P, const Matrix<Scalar>& phi_inverse,
                                   const Matrix<Scalar>& Lambda, const RowVector<Scalar>& lap_p,
                                   const RowVector<Scalar>& lap_phi) {
  const Matrix<Scalar> projector = least_squares_projector<Scalar>(P, P.transpose() * Lambda);
  auto [poly, phs] = two_step_parts<Scalar>(lap_phi * phi_inverse, lap_p, P, projector);
  return poly + phs;
}

/// Coefficients (a, b) of the PHS+Poly interpolant from the saddle-point
/// system via the Schur complement of Phi.
template <typename Scalar>
std::pair<Vector<Scalar>, Vector<Scalar>> rbf_interpolant_coefficients(const Matrix<Scalar>& P,
                                                                       const Matrix<Scalar>& Phi,
                                                                       const Vector<Scalar>& f) {
  Eigen::PartialPivLU<Matrix<Scalar>> lu(Phi);
  const Matrix<Scalar> phi_inv_P = lu.solve(P);
  const Vector<Scalar> phi_inv_f = lu.solve(f);
  const Matrix<Scalar> schur = P.transpose() * phi_inv_P;
  Vector<Scalar> b = Eigen::FullPivLU<Matrix<Scalar>>(schur).solve(P.transpose() * phi_inv_f);
  Vector<Scalar> a = phi_inv_f - phi_inv_P * b;
  return {std::move(a), std::move(b)};
}

/// |w_1| / max_{k>=2} |w_k|; +inf when every off-base weight is zero.
template <typename Derived>
double spike_ratio(const Eigen::MatrixBase<Derived>& weights) {
  if (weights.size() < 2) throw ArgumentError("spike_ratio needs at least two weights");
  const double off = static_cast<double>(weights.tail(weights.size() - 1).cwiseAbs().maxCoeff());
  const double base = std::abs(static_cast<double>(weights(0)));
  return off > 0.0 ? base / off : std::numeric_limits<double>::infinity();
}

// ---------------------------------------------------------------------------
// Stencil-level operations (double precision)

/// Intermediate matrices of one stencil in normalized coordinates.
struct LocalSystem {
  MonomialBasis basis;
  Eigen::MatrixXd P;            ///< K x m
  Eigen::MatrixXd Phi;          ///< K x K
  Eigen::RowVectorXd lap_p;     ///< 1 x m
  Eigen::RowVectorXd lap_phi;   ///< 1 x K
  Eigen::MatrixXd Lambda;       ///< K x K
};

LocalSystem local_system(const Stencil& stencil, const MethodConfig& config);

/// Diagonal (1/K, smooth) or dense (Phi^{-1}) weight matrix.
Eigen::MatrixXd weight_matrix(WeightScheme scheme, const Stencil& stencil, const Eigen::MatrixXd& Phi,
                              double delta);

/// Phi^{-1} when Phi is numerically invertible, else (Phi^T Phi + delta^2 I)^{-1} Phi^T.
Eigen::MatrixXd phs_inverse(const Eigen::MatrixXd& Phi, double delta);

/// GMLS Laplacian weights, scaled by 1/D^2.
Eigen::RowVectorXd gmls_weights(const Stencil& stencil, const MethodConfig& config);
/// Two-step weights with the 1/K weight in both the regression and the ridge inverse.
Eigen::RowVectorXd grbffd_weights(const Stencil& stencil, const MethodConfig& config);
/// PHS residual correction of gRBF-FD: grbffd_weights - gmls_weights (1/K weight).
Eigen::RowVectorXd grbffd_correction(const Stencil& stencil, const MethodConfig& config);
/// Tangent-plane RBF-FD weights (Lambda = Phi^{-1}).
Eigen::RowVectorXd rbffd_weights(const Stencil& stencil, const MethodConfig& config);
/// Dispatches on config.method.
Eigen::RowVectorXd laplacian_weights(const Stencil& stencil, const MethodConfig& config);

/// One row of the discrete Laplace-Beltrami operator.
struct LaplacianRow {
  Index base = 0;
  std::vector<Index> neighbors;
  Eigen::RowVectorXd weights;
  double gamma = 0.0;
  double d_k_max = 0.0;
  Index k_final = 0;
  int tune_iters = 0;
  bool unconverged = false;

  /// w_1 < 0 and gamma >= threshold.
  bool accepted(double gamma_th) const { return weights.size() > 0 && weights(0) < 0.0 && gamma >= gamma_th; }
};

/// Row with a fixed stencil size K.
LaplacianRow fixed_k_row(const PointCloud& cloud, const NeighborIndex& index, Index base, Index K,
                         const MethodConfig& config);

/**
 * Grows K from config.k0 in steps of config.k_step until w_1 < 0 and
 * gamma >= config.gamma_th. Stencils with a singular normal matrix also grow.
 * When k_max is reached, the row with the most negative w_1 is returned and
 * flagged unconverged.
 */
LaplacianRow auto_tune_row(const PointCloud& cloud, const NeighborIndex& index, Index base,
                           const MethodConfig& config);

}  // namespace grbf
