#include <doctest.h>

#include "grbf/manifolds.hpp"
#include "grbf/verification.hpp"

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <numbers>

using namespace grbf;
using std::numbers::pi;

namespace {

// Closed form for the ellipse (cos t, 2 sin t): f''/g - f' g' / (2 g^2), g = sin^2 + 4 cos^2.
double ellipse_closed_form(double t) {
  const double fp = std::cos(2 * t);
  const double fpp = -2 * std::sin(2 * t);
  const double g = std::sin(t) * std::sin(t) + 4 * std::cos(t) * std::cos(t);
  const double gp = -3 * std::sin(2 * t);
  return fpp / g - fp * gp / (2 * g * g);
}

Eigen::VectorXd vec(std::initializer_list<double> xs) {
  Eigen::VectorXd v(static_cast<Index>(xs.size()));
  Index i = 0;
  for (double x : xs) v(i++) = x;
  return v;
}

}  // namespace

TEST_CASE("builtin specs have the documented dimensions and data") {
  const ManifoldSpec ellipse = builtin_spec("ellipse1d");
  CHECK(ellipse.d == 1);
  CHECK(ellipse.n == 2);
  const Eigen::VectorXd t = vec({0.7});
  const Eigen::VectorXd x = ellipse.embed(t);
  CHECK(x(0) == doctest::Approx(std::cos(0.7)).epsilon(1e-15));
  CHECK(x(1) == doctest::Approx(2 * std::sin(0.7)).epsilon(1e-15));
  CHECK(ellipse.f_true(t) == doctest::Approx(std::sin(0.7) * std::cos(0.7)).epsilon(1e-15));

  for (int d : {3, 4}) {
    const ManifoldSpec torus = builtin_spec(d == 3 ? "flat_torus3d" : "flat_torus4d");
    CHECK(torus.d == d);
    CHECK(torus.n == 4 * d);
    const Eigen::VectorXd p = d == 3 ? vec({0.3, 1.1, 2.5}) : vec({0.3, 1.1, 2.5, 4.0});
    double f = 1.0;
    for (Index i = 0; i < d; ++i) f *= std::sin(p(i));
    CHECK(torus.f_true(p) == doctest::Approx(f).epsilon(1e-14));
    CHECK(torus.lap_f_true(p) == doctest::Approx(-d * f).epsilon(1e-14));
    // Identity metric: orthonormal Jacobian columns.
    const Eigen::MatrixXd J = torus.jacobian(p);
    CHECK((J.transpose() * J - Eigen::MatrixXd::Identity(d, d)).norm() < 1e-14);
  }

  const PointCloud cloud = sample_points(builtin_spec("flat_torus4d"), 50, SamplingMode::random, 3);
  CHECK((cloud.h_values - 5.0 * cloud.f_values).cwiseAbs().maxCoeff() < 1e-14);
  const PointCloud cloud3 = sample_points(builtin_spec("flat_torus3d"), 50, SamplingMode::random, 3);
  CHECK((cloud3.h_values - 4.0 * cloud3.f_values).cwiseAbs().maxCoeff() < 1e-14);
}

TEST_CASE("unknown manifold names are rejected") {
  CHECK_THROWS_AS(builtin_spec("klein_bottle"), ConfigError);
  CHECK_THROWS_AS(sampling_mode_from_string("stratified"), ConfigError);
}

TEST_CASE("ellipse Laplacian matches the closed form and the finite-difference oracle") {
  const ManifoldSpec spec = builtin_spec("ellipse1d");
  for (double t = 0.05; t < 2 * pi; t += 0.37) {
    const Eigen::VectorXd p = vec({t});
    const double lap = spec.lap_f_true(p);
    CHECK(lap == doctest::Approx(ellipse_closed_form(t)).epsilon(1e-12));
    CHECK(std::abs(fd_laplacian_oracle(spec, p) - ellipse_closed_form(t)) < 1e-8);
  }
}

TEST_CASE("2D manifolds agree with the finite-difference oracle") {
  for (const char* name : {"rbc2d", "bumpy_sphere2d"}) {
    const ManifoldSpec spec = builtin_spec(name);
    const PointCloud cloud = sample_points(spec, 40, SamplingMode::random, 11);
    for (Index i = 0; i < cloud.size(); ++i) {
      const Eigen::VectorXd p = cloud.params.row(i).transpose();
      try {
        const double oracle = fd_laplacian_oracle(spec, p);
        CHECK(std::abs(oracle - cloud.lap_values(i)) < 1e-6 * (1.0 + std::abs(oracle)));
      } catch (const OracleUndefinedError&) {
      }
    }
  }
}

TEST_CASE("well-sampled ellipse is equispaced in the parameter") {
  const PointCloud cloud = sample_points(builtin_spec("ellipse1d"), 400, SamplingMode::well_sampled, 99);
  REQUIRE(cloud.size() == 400);
  for (Index i = 0; i < 400; ++i) CHECK(cloud.params(i, 0) == doctest::Approx(2 * pi * i / 400).epsilon(1e-15));
}

TEST_CASE("ellipse inverse CDF inverts the density's CDF") {
  auto cdf = [](double t) { return t * t / (8 * pi * pi) + t / (4 * pi); };
  for (int k = 0; k < 1000; ++k) {
    const double u = k / 1000.0;
    const double t = ellipse_inverse_cdf(u);
    CHECK(t >= 0.0);
    CHECK(t < 2 * pi);
    CHECK(std::abs(cdf(t) - u) < 1e-12);
  }
}

TEST_CASE("bumpy sphere polar angle follows sin(theta)/2") {
  const Index N = 100000;
  const PointCloud cloud = sample_points(builtin_spec("bumpy_sphere2d"), N, SamplingMode::random, 5);
  constexpr int bins = 20;
  std::vector<double> counts(bins, 0.0), phi_counts(bins, 0.0);
  for (Index i = 0; i < N; ++i) {
    const double th = cloud.params(i, 0);
    const double ph = cloud.params(i, 1);
    counts[std::min(bins - 1, static_cast<int>(th / pi * bins))] += 1;
    phi_counts[std::min(bins - 1, static_cast<int>(ph / (2 * pi) * bins))] += 1;
  }
  double chi2 = 0.0, chi2_phi = 0.0;
  for (int b = 0; b < bins; ++b) {
    const double expected = N * 0.5 * (std::cos(pi * b / bins) - std::cos(pi * (b + 1) / bins));
    chi2 += (counts[b] - expected) * (counts[b] - expected) / expected;
    const double expected_phi = static_cast<double>(N) / bins;
    chi2_phi += (phi_counts[b] - expected_phi) * (phi_counts[b] - expected_phi) / expected_phi;
  }
  // 19 degrees of freedom; 43.8 is the 0.999 quantile.
  CHECK(chi2 < 43.8);
  CHECK(chi2_phi < 43.8);
}

TEST_CASE("sampling is deterministic in the seed") {
  const ManifoldSpec spec = builtin_spec("rbc2d");
  const PointCloud a = sample_points(spec, 200, SamplingMode::random, 7);
  const PointCloud b = sample_points(spec, 200, SamplingMode::random, 7);
  const PointCloud c = sample_points(spec, 200, SamplingMode::random, 8);
  CHECK(a.points == b.points);
  CHECK(a.f_values == b.f_values);
  CHECK(a.points != c.points);
}

TEST_CASE("frames are orthonormal and tangent") {
  for (const auto& name : builtin_manifold_names()) {
    const ManifoldSpec spec = builtin_spec(name);
    const PointCloud cloud = sample_points(spec, 30, SamplingMode::random, 2);
    for (Index i = 0; i < cloud.size(); ++i) {
      const Eigen::MatrixXd T = cloud.frame(i);
      CHECK((T.transpose() * T - Eigen::MatrixXd::Identity(spec.d, spec.d)).norm() < 1e-12);
      const Eigen::MatrixXd J = spec.jacobian(cloud.params.row(i).transpose());
      // The Jacobian lies in the span of the frame.
      CHECK((J - T * (T.transpose() * J)).norm() < 1e-12 * (1.0 + J.norm()));
    }
  }
}

TEST_CASE("point clouds round-trip through JSON") {
  const PointCloud cloud = sample_points(builtin_spec("bumpy_sphere2d"), 64, SamplingMode::random, 21);
  const auto path = (std::filesystem::temp_directory_path() / "grbf_cloud_roundtrip.json").string();
  save_cloud(cloud, path);
  const PointCloud back = load_cloud(path);
  std::filesystem::remove(path);
  CHECK(back.spec_name == cloud.spec_name);
  CHECK(back.seed == cloud.seed);
  CHECK(back.points == cloud.points);
  CHECK(back.frames == cloud.frames);
  CHECK(back.params == cloud.params);
  CHECK(back.f_values == cloud.f_values);
  CHECK(back.lap_values == cloud.lap_values);
  CHECK(back.h_values == cloud.h_values);
}

TEST_CASE("scaled clouds only change ambient coordinates") {
  const PointCloud cloud = sample_points(builtin_spec("ellipse1d"), 20, SamplingMode::random, 1);
  const PointCloud s = cloud.scaled(4.0);
  CHECK(s.points == 4.0 * cloud.points);
  CHECK(s.frames == cloud.frames);
  CHECK(s.f_values == cloud.f_values);
}
