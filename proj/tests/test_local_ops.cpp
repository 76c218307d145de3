#include <doctest.h>

#include "grbf/assembly.hpp"
#include "grbf/local_ops.hpp"
#include "grbf/manifolds.hpp"
#include "grbf/stencils.hpp"

#include <Eigen/SVD>

#include <cmath>

using namespace grbf;

namespace {

MethodConfig make_config(Method method, WeightScheme weight = WeightScheme::one_over_k, int l = 4, Index K = 30) {
  MethodConfig c;
  c.method = method;
  c.weight = weight;
  c.l = l;
  c.kappa = 3;
  c.k0 = K;
  c.auto_tune = false;
  return c;
}

Stencil random_stencil(const std::string& manifold, Index N, Index K, std::uint64_t seed, Index base) {
  const PointCloud c = sample_points(builtin_spec(manifold), N, SamplingMode::random, seed);
  const NeighborIndex index = build_knn_index(c);
  return monge_project(c, knn(index, base, K));
}

// Stencil on a straight segment with the given tangent coordinates.
Stencil flat_stencil(const std::vector<double>& theta) {
  Stencil s;
  const auto K = static_cast<Index>(theta.size());
  s.base = 0;
  s.theta.resize(K, 1);
  for (Index k = 0; k < K; ++k) {
    s.neighbors.push_back(k);
    s.theta(k, 0) = theta[static_cast<std::size_t>(k)];
  }
  s.d_k_max = max_pairwise_distance(s.theta);
  s.r_k_max = s.theta.cwiseAbs().maxCoeff();
  s.theta_norm = s.theta / s.d_k_max;
  return s;
}

// Tangent-plane Laplacian of theta^alpha at the origin.
double monomial_laplacian_at_origin(const Eigen::VectorXi& alpha) {
  int nonzero = 0;
  bool has_two = false;
  for (Index i = 0; i < alpha.size(); ++i) {
    if (alpha(i) != 0) ++nonzero;
    if (alpha(i) == 2) has_two = true;
  }
  return nonzero == 1 && has_two ? 2.0 : 0.0;
}

double monomial(const Eigen::RowVectorXd& x, const Eigen::VectorXi& alpha) {
  double v = 1.0;
  for (Index i = 0; i < alpha.size(); ++i) v *= std::pow(x(i), alpha(i));
  return v;
}

void check_reproduction(const Stencil& s, const Eigen::RowVectorXd& w, int l) {
  const MonomialBasis basis = monomial_indices(l, static_cast<int>(s.theta.cols()));
  for (Index j = 0; j < basis.size(); ++j) {
    const Eigen::VectorXi alpha = basis.exponents.row(j).transpose();
    double sum = 0.0, scale = 0.0;
    for (Index k = 0; k < s.size(); ++k) {
      const double v = w(k) * monomial(s.theta.row(k), alpha);
      sum += v;
      scale += std::abs(v);
    }
    const double expected = monomial_laplacian_at_origin(alpha);
    CHECK(std::abs(sum - expected) <= 1e-8 * std::max(scale, std::abs(expected)));
  }
}

}  // namespace

TEST_CASE("method and weight names round-trip") {
  for (Method m : {Method::gmls, Method::rbffd, Method::grbffd}) CHECK(method_from_string(to_string(m)) == m);
  for (WeightScheme w : {WeightScheme::one_over_k, WeightScheme::smooth, WeightScheme::phi_inverse}) {
    CHECK(weight_scheme_from_string(to_string(w)) == w);
  }
  CHECK_THROWS_AS(method_from_string("fem"), ConfigError);
  CHECK_THROWS_AS(weight_scheme_from_string("gaussian"), ConfigError);
}

TEST_CASE("monomial basis sizes") {
  CHECK(monomial_indices(4, 1).size() == 5);
  const MonomialBasis b22 = monomial_indices(2, 2);
  CHECK(b22.size() == 6);
  CHECK(b22.laplacian_set.size() == 2);
  for (Index j : b22.laplacian_set) CHECK(b22.exponents.row(j).sum() == 2);
  const MonomialBasis b03 = monomial_indices(0, 3);
  CHECK(b03.size() == 1);
  CHECK(b03.laplacian_set.empty());
  for (int l = 0; l <= 5; ++l) {
    for (int d = 1; d <= 4; ++d) CHECK(monomial_indices(l, d).size() == binomial(l + d, d));
  }
}

TEST_CASE("vandermonde rows") {
  const MonomialBasis basis = monomial_indices(2, 1);
  Eigen::MatrixXd theta(2, 1);
  theta << 0.0, 0.5;
  const Eigen::MatrixXd P = vandermonde(theta, basis);
  CHECK(P.row(0).isApprox(Eigen::RowVector3d(1, 0, 0)));
  CHECK(P(1, 0) == 1.0);
  CHECK(P(1, 1) == 0.5);
  CHECK(P(1, 2) == 0.25);
}

TEST_CASE("vandermonde has full column rank on random ellipse stencils") {
  const PointCloud c = sample_points(builtin_spec("ellipse1d"), 1600, SamplingMode::random, 3);
  const NeighborIndex index = build_knn_index(c);
  const MonomialBasis basis = monomial_indices(4, 1);
  for (Index i = 0; i < 1600; i += 16) {
    const Stencil s = monge_project(c, knn(index, i, 30));
    const Eigen::MatrixXd P = vandermonde(s.theta_norm, basis);
    Eigen::JacobiSVD<Eigen::MatrixXd> svd(P);
    svd.setThreshold(1e-12);
    CHECK(svd.rank() == basis.size());
  }
}

TEST_CASE("PHS matrix entries") {
  Eigen::MatrixXd theta(2, 1);
  theta << 0.0, 1.0;
  const Eigen::MatrixXd Phi = phs_matrix(theta, 3);
  CHECK(Phi(0, 0) == 0.0);
  CHECK(Phi(1, 1) == 0.0);
  CHECK(Phi(0, 1) == 1.0);

  const Stencil s = random_stencil("rbc2d", 800, 25, 5, 10);
  const Eigen::MatrixXd Phin = phs_matrix(s.theta_norm, 3);
  for (Index a = 0; a < s.size(); ++a) {
    for (Index b = 0; b < s.size(); ++b) {
      const double r = (s.theta.row(a) - s.theta.row(b)).norm() / s.d_k_max;
      CHECK(std::abs(Phin(a, b) - std::pow(r, 7)) <= 1e-14 * std::max(1.0, std::pow(r, 7)));
    }
  }
}

TEST_CASE("PHS Laplacian row") {
  CHECK(phs_laplacian_factor(3, 2) == 49.0);
  const Stencil s = random_stencil("rbc2d", 800, 25, 5, 10);
  const Eigen::RowVectorXd row = phs_laplacian_row(s.theta_norm, 3);
  CHECK(row(0) == 0.0);

  // Central differences of the 2D Laplacian of phi(|x - theta_k|) at x = 0.
  const double h = 1e-4;
  for (Index k = 1; k < s.size(); ++k) {
    auto phi = [&](double x, double y) {
      const double r = std::hypot(x - s.theta_norm(k, 0), y - s.theta_norm(k, 1));
      return std::pow(r, 7);
    };
    const double fd = (phi(h, 0) + phi(-h, 0) + phi(0, h) + phi(0, -h) - 4 * phi(0, 0)) / (h * h);
    CHECK(std::abs(fd - row(k)) <= 1e-6 * std::abs(row(k)));
  }
}

TEST_CASE("weight matrices") {
  const Stencil s = flat_stencil({0.0, 0.1, -0.2, 0.3});
  const Eigen::MatrixXd Phi = phs_matrix(s.theta_norm, 3);
  const Eigen::MatrixXd L1 = weight_matrix(WeightScheme::one_over_k, s, Phi, 1e-6);
  CHECK(L1.isApprox(Eigen::Vector4d(1, 0.25, 0.25, 0.25).asDiagonal().toDenseMatrix()));
  const Eigen::MatrixXd Ls = weight_matrix(WeightScheme::smooth, s, Phi, 1e-6);
  CHECK(Ls(0, 0) == 1.0);
  CHECK(Ls(3, 3) == doctest::Approx(1.0 / 9.0).epsilon(1e-14));
  CHECK(Ls(1, 1) == doctest::Approx(std::pow(1 - 0.1 / 0.45, 2)).epsilon(1e-14));
}

TEST_CASE("ridge inverse") {
  const Eigen::MatrixXd I = Eigen::MatrixXd::Identity(5, 5);
  CHECK(ridge_inverse<double>(I, I, 0.0).isApprox(I, 1e-15));

  // Condition number 1e3 by construction.
  const Index K = 12;
  UniformStream rng(23);
  Eigen::MatrixXd A(K, K);
  for (Index i = 0; i < K; ++i) {
    for (Index j = 0; j < K; ++j) A(i, j) = rng.next() - 0.5;
  }
  Eigen::JacobiSVD<Eigen::MatrixXd> svd(A, Eigen::ComputeFullU | Eigen::ComputeFullV);
  Eigen::VectorXd sv(K);
  for (Index i = 0; i < K; ++i) sv(i) = std::pow(1e-3, static_cast<double>(i) / (K - 1));
  const Eigen::MatrixXd Phi = svd.matrixU() * sv.asDiagonal() * svd.matrixV().transpose();
  const Eigen::MatrixXd Lambda = Eigen::VectorXd::Constant(K, 1.0 / K).asDiagonal();
  const double delta = 1e-6;
  const Eigen::MatrixXd R = ridge_inverse<double>(Phi, Lambda, delta);

  Eigen::VectorXd a0(K);
  for (Index i = 0; i < K; ++i) a0(i) = rng.next() - 0.5;
  const Eigen::VectorXd v = Phi * a0;
  CHECK((Phi * (R * v) - v).norm() <= 1e-4 * v.norm());

  // First-order condition of the ridge objective.
  const Eigen::VectorXd s = v + 0.01 * Eigen::VectorXd::Ones(K);
  const Eigen::VectorXd a = R * s;
  const Eigen::VectorXd grad = Phi.transpose() * Lambda * (Phi * a - s) + delta * delta * a;
  CHECK(grad.norm() <= 1e-10);
}

TEST_CASE("flat 1D stencil reproduces the second derivative of theta^2") {
  const double h = 0.01;
  const Stencil s = flat_stencil({0.0, h, -h, 2 * h, -2 * h});
  Eigen::VectorXd sq(5);
  for (Index k = 0; k < 5; ++k) sq(k) = s.theta(k, 0) * s.theta(k, 0);
  for (Method m : {Method::gmls, Method::grbffd}) {
    const Eigen::RowVectorXd w = laplacian_weights(s, make_config(m, WeightScheme::one_over_k, 2, 5));
    CHECK(std::abs(w.dot(sq) - 2.0) <= 1e-10 * 2.0);
    CHECK(std::abs(w.sum()) <= 1e-10 * w.cwiseAbs().maxCoeff());
  }
}

TEST_CASE("weights annihilate constants and reproduce monomials") {
  const Stencil s1 = random_stencil("ellipse1d", 400, 30, 2, 33);
  const Stencil s2 = random_stencil("rbc2d", 2000, 40, 2, 33);
  for (const Stencil* s : {&s1, &s2}) {
    const int d = static_cast<int>(s->theta.cols());
    const int l = d == 1 ? 4 : 3;
    for (auto [m, wt] : {std::pair{Method::gmls, WeightScheme::one_over_k}, std::pair{Method::gmls, WeightScheme::smooth},
                         std::pair{Method::gmls, WeightScheme::phi_inverse},
                         std::pair{Method::rbffd, WeightScheme::phi_inverse},
                         std::pair{Method::grbffd, WeightScheme::one_over_k}}) {
      CAPTURE(to_string(m));
      CAPTURE(to_string(wt));
      const Eigen::RowVectorXd w = laplacian_weights(*s, make_config(m, wt, l, s->size()));
      CHECK(std::abs(w.sum()) <= 1e-8 * w.cwiseAbs().maxCoeff());
      check_reproduction(*s, w, l);
    }
  }
}

TEST_CASE("gRBF-FD weights are GMLS weights plus the PHS correction") {
  const Stencil s = random_stencil("bumpy_sphere2d", 2000, 40, 8, 100);
  const MethodConfig config = make_config(Method::grbffd, WeightScheme::one_over_k, 4, 40);
  MethodConfig gm = config;
  gm.method = Method::gmls;
  const Eigen::RowVectorXd w = grbffd_weights(s, config);
  const Eigen::RowVectorXd sum = gmls_weights(s, gm) + grbffd_correction(s, config);
  CHECK((w - sum).cwiseAbs().maxCoeff() <= 1e-12 * w.cwiseAbs().maxCoeff());
}

TEST_CASE("two-step weights with Lambda = Phi^{-1} coincide with RBF-FD") {
  const Stencil s = random_stencil("ellipse1d", 1600, 30, 4, 77);
  const MethodConfig config = make_config(Method::rbffd, WeightScheme::phi_inverse, 4, 30);
  const LocalSystem sys = local_system(s, config);
  const Eigen::MatrixXd phi_inv = sys.Phi.inverse();
  const Eigen::RowVectorXd two_step = two_step_weights<double>(sys.P, phi_inv, phi_inv, sys.lap_p, sys.lap_phi);
  const Eigen::RowVectorXd rbf = rbffd_weights(s, config) * s.d_k_max * s.d_k_max;
  CHECK((two_step - rbf).norm() <= 1e-6 * rbf.norm());
}

TEST_CASE("RBF interpolant satisfies moment and interpolation conditions") {
  const Stencil s = random_stencil("rbc2d", 1000, 25, 12, 3);
  const MonomialBasis basis = monomial_indices(2, 2);
  const Eigen::MatrixXd P = vandermonde(s.theta_norm, basis);
  const Eigen::MatrixXd Phi = phs_matrix(s.theta_norm, 3);
  Eigen::VectorXd f(s.size());
  for (Index k = 0; k < s.size(); ++k) f(k) = std::sin(3 * s.theta_norm(k, 0)) * std::exp(s.theta_norm(k, 1));
  const auto [a, b] = rbf_interpolant_coefficients<double>(P, Phi, f);
  CHECK((P.transpose() * a).norm() <= 1e-8 * a.norm());
  CHECK((Phi * a + P * b - f).norm() <= 1e-8 * f.norm());
}

TEST_CASE("spike ratio") {
  CHECK(spike_ratio(Eigen::Vector3d(-10, 2, -1)) == 5.0);
  CHECK(spike_ratio(Eigen::Vector4d(-3, 1, 1, 1)) == 3.0);
  CHECK(spike_ratio(Eigen::Vector3d(4, -1, 0.5)) == 4.0);
  LaplacianRow row;
  row.weights = Eigen::RowVector3d(4, -1, 0.5);
  row.gamma = 4.0;
  CHECK_FALSE(row.accepted(3.0));
  row.weights = Eigen::RowVector4d(-3, 1, 1, 1);
  row.gamma = 3.0;
  CHECK(row.accepted(3.0));
}

TEST_CASE("gRBF-FD rows on a random ellipse are nearly diagonally dominant") {
  const PointCloud c = sample_points(builtin_spec("ellipse1d"), 1600, SamplingMode::random, 1);
  const SparseOperator op = assemble(c, make_config(Method::grbffd, WeightScheme::one_over_k, 4, 30));
  CHECK(static_cast<double>(op.accepted_count(3.0)) >= 0.99 * 1600);
}

TEST_CASE("auto-tuning") {
  const PointCloud c = sample_points(builtin_spec("ellipse1d"), 1600, SamplingMode::random, 1);
  const NeighborIndex index = build_knn_index(c);
  MethodConfig config = make_config(Method::grbffd, WeightScheme::one_over_k, 4, 10);
  config.auto_tune = true;

  Index grown = 0, immediate = 0;
  for (Index i = 0; i < c.size(); ++i) {
    const LaplacianRow fixed = fixed_k_row(c, index, i, 10, config);
    const LaplacianRow tuned = auto_tune_row(c, index, i, config);
    CHECK(tuned.k_final >= 10);
    if (!tuned.unconverged) {
      CHECK(tuned.weights(0) < 0.0);
      CHECK(tuned.gamma >= 3.0);
    }
    if (fixed.weights(0) > 0.0) {
      CHECK(tuned.k_final > 10);
      ++grown;
    }
    if (fixed.accepted(3.0)) {
      CHECK(tuned.k_final == 10);
      CHECK(tuned.tune_iters == 1);
      CHECK(tuned.weights == fixed.weights);
      ++immediate;
    }
  }
  CHECK(grown > 0);
  CHECK(immediate > 0);
}

TEST_CASE("configuration validation") {
  MethodConfig c;
  CHECK_NOTHROW(c.validate(2));
  c.l = 1;
  CHECK_THROWS_AS(c.validate(1), ConfigError);
  c = MethodConfig{};
  c.delta = 0.0;
  CHECK_THROWS_AS(c.validate(1), ConfigError);
  c = MethodConfig{};
  c.k0 = 10;  // m = 15 for l = 4, d = 2
  CHECK_THROWS_AS(c.validate(2), ConfigError);
  c = MethodConfig{};
  c.weight = WeightScheme::smooth;
  CHECK_THROWS_AS(c.validate(1), UnsupportedModeError);
  c = MethodConfig{};
  c.l = 2;
  CHECK(c.warnings().size() == 1);
  c.l = 4;
  CHECK(c.warnings().empty());
  CHECK(c.resolved_k_max(100) == 99);
  CHECK(c.resolved_k_max(100000) == 300);
}
