#include "grbf/local_ops.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace grbf {

std::string to_string(Method method) {
  switch (method) {
    case Method::gmls: return "gmls";
    case Method::rbffd: return "rbffd";
    case Method::grbffd: return "grbffd";
  }
  return "?";
}

std::string to_string(WeightScheme scheme) {
  switch (scheme) {
    case WeightScheme::one_over_k: return "one_over_k";
    case WeightScheme::smooth: return "smooth";
    case WeightScheme::phi_inverse: return "phi_inverse";
  }
  return "?";
}

Method method_from_string(const std::string& name) {
  if (name == "gmls") return Method::gmls;
  if (name == "rbffd") return Method::rbffd;
  if (name == "grbffd") return Method::grbffd;
  throw ConfigError("unknown method '" + name + "' (expected gmls, rbffd or grbffd)");
}

WeightScheme weight_scheme_from_string(const std::string& name) {
  if (name == "one_over_k") return WeightScheme::one_over_k;
  if (name == "smooth") return WeightScheme::smooth;
  if (name == "phi_inverse") return WeightScheme::phi_inverse;
  throw ConfigError("unknown weight scheme '" + name + "' (expected one_over_k, smooth or phi_inverse)");
}

WeightScheme MethodConfig::effective_weight() const {
  switch (method) {
    case Method::gmls: return weight;
    case Method::rbffd: return WeightScheme::phi_inverse;
    case Method::grbffd: return WeightScheme::one_over_k;
  }
  return weight;
}

Index MethodConfig::resolved_k_max(Index N) const {
  const Index cap = k_max > 0 ? k_max : std::max<Index>(10 * k0, 200);
  return std::min(cap, N - 1);
}

void MethodConfig::validate(int d) const {
  if (d < 1) throw ConfigError("intrinsic dimension must be positive");
  if (l < 2) throw ConfigError("polynomial degree l must be at least 2, got " + std::to_string(l));
  if (kappa < 1) throw ConfigError("kappa must be at least 1, got " + std::to_string(kappa));
  if (!(delta > 0.0) || !std::isfinite(delta)) throw ConfigError("delta must be positive and finite");
  const Index m = binomial(l + d, d);
  if (k0 <= m) {
    throw ConfigError("k0=" + std::to_string(k0) + " must exceed the polynomial space size m=" +
                      std::to_string(m));
  }
  if (k_step < 1) throw ConfigError("k_step must be at least 1");
  if (!(gamma_th > 0.0)) throw ConfigError("gamma_th must be positive");
  if (k_max != 0 && k_max < k0) throw ConfigError("k_max must be at least k0");
  if (method == Method::grbffd && weight != WeightScheme::one_over_k) {
    throw UnsupportedModeError("grbffd uses the one_over_k weight only");
  }
  if (method == Method::rbffd && weight != WeightScheme::phi_inverse && weight != WeightScheme::one_over_k) {
    throw UnsupportedModeError("rbffd has no selectable weight scheme");
  }
}

std::vector<std::string> MethodConfig::warnings() const {
  std::vector<std::string> out;
  if (kappa > l) {
    out.push_back("kappa=" + std::to_string(kappa) + " exceeds the polynomial degree l=" + std::to_string(l) +
                  "; the PHS kernel is smoother than the polynomial space");
  }
  return out;
}

std::string MethodConfig::label() const {
  if (method != Method::gmls) return to_string(method);
  switch (weight) {
    case WeightScheme::one_over_k: return "gmls-1/K";
    case WeightScheme::smooth: return "gmls-sw";
    case WeightScheme::phi_inverse: return "gmls-phiinv";
  }
  return "gmls";
}

Index binomial(int n, int k) {
  if (k < 0 || k > n) return 0;
  k = std::min(k, n - k);
  Index result = 1;
  for (int i = 1; i <= k; ++i) result = result * (n - k + i) / i;
  return result;
}

MonomialBasis monomial_indices(int l, int d) {
  if (l < 0 || d < 1) throw ArgumentError("monomial_indices requires l >= 0 and d >= 1");
  MonomialBasis basis;
  basis.degree = l;
  basis.dim = d;
  basis.exponents.resize(binomial(l + d, d), d);
  Index row = 0;
  Eigen::VectorXi alpha(d);
  // Enumerate compositions of each total degree with the leading exponent descending.
  auto emit = [&](auto&& self, int position, int remaining) -> void {
    if (position == d - 1) {
      alpha(position) = remaining;
      basis.exponents.row(row++) = alpha.transpose();
      return;
    }
    for (int a = remaining; a >= 0; --a) {
      alpha(position) = a;
      self(self, position + 1, remaining - a);
    }
  };
  for (int degree = 0; degree <= l; ++degree) emit(emit, 0, degree);
  for (Index j = 0; j < basis.size(); ++j) {
    if (basis.exponents.row(j).sum() == 2 && basis.exponents.row(j).maxCoeff() == 2) {
      basis.laplacian_set.push_back(j);
    }
  }
  return basis;
}

namespace {

/// Diagonal of Lambda for the diagonal schemes.
Eigen::VectorXd diagonal_weight(WeightScheme scheme, const Stencil& stencil) {
  const Index K = stencil.size();
  Eigen::VectorXd lambda(K);
  if (scheme == WeightScheme::one_over_k) {
    lambda.setConstant(1.0 / static_cast<double>(K));
    lambda(0) = 1.0;
  } else {
    const double R = 1.5 * stencil.r_k_max;
    for (Index k = 0; k < K; ++k) {
      const double t = 1.0 - stencil.theta.row(k).norm() / R;
      lambda(k) = t * t;
    }
  }
  return lambda;
}

bool is_diagonal(WeightScheme scheme) { return scheme != WeightScheme::phi_inverse; }

struct Parts {
  Eigen::RowVectorXd poly;  // GMLS part
  Eigen::RowVectorXd phs;   // PHS residual correction
};

/**
 * Shared path of every method: the polynomial projector under the regression
 * weight and, if requested, the PHS residual row. Everything is in normalized
 * coordinates; the caller applies 1/D^2.
 */
Parts weight_parts(const Stencil& stencil, const MethodConfig& config, bool with_phs) {
  const Index K = stencil.size();
  const int d = static_cast<int>(stencil.theta.cols());
  const MonomialBasis basis = monomial_indices(config.l, d);
  const Eigen::MatrixXd P = vandermonde(stencil.theta_norm, basis);
  const Eigen::RowVectorXd lap_p = polynomial_laplacian_row(basis);
  const WeightScheme scheme = config.effective_weight();

  const bool need_phi = with_phs || scheme == WeightScheme::phi_inverse;
  Eigen::MatrixXd Phi;
  if (need_phi) Phi = phs_matrix(stencil.theta_norm, config.kappa);

  Parts parts;
  Eigen::MatrixXd projector;
  Eigen::VectorXd lambda;
  Eigen::MatrixXd lambda_full;
  if (is_diagonal(scheme)) {
    lambda = diagonal_weight(scheme, stencil);
    projector = least_squares_projector<double>(P, P.transpose() * lambda.asDiagonal());
  } else {
    lambda_full = phs_inverse(Phi, config.delta);
    projector = least_squares_projector<double>(P, P.transpose() * lambda_full);
  }
  parts.poly = lap_p * projector;
  if (!with_phs) {
    parts.phs = Eigen::RowVectorXd::Zero(K);
    return parts;
  }

  const Eigen::RowVectorXd lap_phi = phs_laplacian_row(stencil.theta_norm, config.kappa);
  Eigen::RowVectorXd r;
  if (is_diagonal(scheme)) {
    // r = lap_phi (Phi^T Lambda Phi + delta^2 I)^{-1} Phi^T Lambda via one LDLT solve.
    const Eigen::MatrixXd M = lambda.cwiseSqrt().asDiagonal() * Phi;
    Eigen::MatrixXd A = Eigen::MatrixXd::Zero(K, K);
    A.selfadjointView<Eigen::Lower>().rankUpdate(M.transpose());
    A.diagonal().array() += config.delta * config.delta;
    const Eigen::LDLT<Eigen::MatrixXd, Eigen::Lower> ldlt(A);
    const Eigen::VectorXd y = ldlt.solve(lap_phi.transpose());
    r = (lambda.asDiagonal() * (Phi * y)).transpose();
  } else {
    r = lap_phi * lambda_full;
  }
  parts.phs = r - (r * P) * projector;
  return parts;
}

double inverse_scale(const Stencil& stencil) { return 1.0 / (stencil.d_k_max * stencil.d_k_max); }

}  // namespace

Eigen::MatrixXd phs_inverse(const Eigen::MatrixXd& Phi, double delta) {
  const Index K = Phi.rows();
  const Eigen::PartialPivLU<Eigen::MatrixXd> lu(Phi);
  if (lu.rcond() >= static_cast<double>(K) * std::numeric_limits<double>::epsilon()) return lu.inverse();
  const Eigen::MatrixXd I = Eigen::MatrixXd::Identity(K, K);
  return ridge_inverse<double>(Phi, I, delta);
}

Eigen::MatrixXd weight_matrix(WeightScheme scheme, const Stencil& stencil, const Eigen::MatrixXd& Phi,
                              double delta) {
  if (is_diagonal(scheme)) return diagonal_weight(scheme, stencil).asDiagonal();
  return phs_inverse(Phi, delta);
}

LocalSystem local_system(const Stencil& stencil, const MethodConfig& config) {
  LocalSystem sys;
  const int d = static_cast<int>(stencil.theta.cols());
  sys.basis = monomial_indices(config.l, d);
  sys.P = vandermonde(stencil.theta_norm, sys.basis);
  sys.Phi = phs_matrix(stencil.theta_norm, config.kappa);
  sys.lap_p = polynomial_laplacian_row(sys.basis);
  sys.lap_phi = phs_laplacian_row(stencil.theta_norm, config.kappa);
  sys.Lambda = weight_matrix(config.effective_weight(), stencil, sys.Phi, config.delta);
  return sys;
}

Eigen::RowVectorXd gmls_weights(const Stencil& stencil, const MethodConfig& config) {
  MethodConfig c = config;
  c.method = Method::gmls;
  return weight_parts(stencil, c, false).poly * inverse_scale(stencil);
}

Eigen::RowVectorXd grbffd_weights(const Stencil& stencil, const MethodConfig& config) {
  MethodConfig c = config;
  c.method = Method::grbffd;
  c.weight = WeightScheme::one_over_k;
  const Parts parts = weight_parts(stencil, c, true);
  return (parts.poly + parts.phs) * inverse_scale(stencil);
}

Eigen::RowVectorXd grbffd_correction(const Stencil& stencil, const MethodConfig& config) {
  MethodConfig c = config;
  c.method = Method::grbffd;
  c.weight = WeightScheme::one_over_k;
  return weight_parts(stencil, c, true).phs * inverse_scale(stencil);
}

Eigen::RowVectorXd rbffd_weights(const Stencil& stencil, const MethodConfig& config) {
  MethodConfig c = config;
  c.method = Method::rbffd;
  c.weight = WeightScheme::phi_inverse;
  const Parts parts = weight_parts(stencil, c, true);
  return (parts.poly + parts.phs) * inverse_scale(stencil);
}

Eigen::RowVectorXd laplacian_weights(const Stencil& stencil, const MethodConfig& config) {
  switch (config.method) {
    case Method::gmls: return gmls_weights(stencil, config);
    case Method::rbffd: return rbffd_weights(stencil, config);
    case Method::grbffd: return grbffd_weights(stencil, config);
  }
  throw UnsupportedModeError("unknown method");
}

namespace {

LaplacianRow make_row(const Stencil& stencil, Eigen::RowVectorXd weights) {
  LaplacianRow row;
  row.base = stencil.base;
  row.neighbors = stencil.neighbors;
  row.weights = std::move(weights);
  row.gamma = spike_ratio(row.weights);
  row.d_k_max = stencil.d_k_max;
  row.k_final = stencil.size();
  return row;
}

}  // namespace

LaplacianRow fixed_k_row(const PointCloud& cloud, const NeighborIndex& index, Index base, Index K,
                         const MethodConfig& config) {
  const Stencil stencil = monge_project(cloud, index.knn(base, K));
  try {
    LaplacianRow row = make_row(stencil, laplacian_weights(stencil, config));
    row.tune_iters = 1;
    return row;
  } catch (const RankDeficientError& e) {
    throw DegenerateStencilError(base, e.what());
  }
}

LaplacianRow auto_tune_row(const PointCloud& cloud, const NeighborIndex& index, Index base,
                           const MethodConfig& config) {
  const Index N = cloud.size();
  const Index k_max = config.resolved_k_max(N);
  if (config.k0 > k_max) {
    throw ArgumentError("k0=" + std::to_string(config.k0) + " exceeds the stencil cap " + std::to_string(k_max));
  }
  // Neighbor lists are nested in K, so one query serves several iterations.
  std::vector<Index> pool;
  LaplacianRow best;
  bool have_best = false;
  int iters = 0;
  std::string last_failure;
  for (Index K = config.k0;; K = std::min(K + config.k_step, k_max)) {
    ++iters;
    if (static_cast<Index>(pool.size()) < K) {
      pool = index.knn(base, std::min(k_max, std::max<Index>(K, 2 * static_cast<Index>(pool.size()))));
    }
    const std::vector<Index> neighbors(pool.begin(), pool.begin() + K);
    try {
      const Stencil stencil = monge_project(cloud, neighbors);
      LaplacianRow row = make_row(stencil, laplacian_weights(stencil, config));
      row.tune_iters = iters;
      if (row.accepted(config.gamma_th)) return row;
      if (!have_best || row.weights(0) < best.weights(0)) {
        best = std::move(row);
        have_best = true;
      }
    } catch (const RankDeficientError& e) {
      last_failure = e.what();
    } catch (const DegenerateStencilError& e) {
      last_failure = e.what();
    }
    if (K == k_max) break;
  }
  if (!have_best) throw DegenerateStencilError(base, "no stencil up to K=" + std::to_string(k_max) + " is usable: " + last_failure);
  best.tune_iters = iters;
  best.unconverged = true;
  return best;
}

}  // namespace grbf
