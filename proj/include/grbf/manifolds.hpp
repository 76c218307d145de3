#pragma once

#include "grbf/core.hpp"

#include <cstdint>
#include <functional>
#include <random>
#include <string>
#include <vector>

namespace grbf {

/// Axis-aligned box of intrinsic parameters. Periodic coordinates are half-open.
struct ParamBox {
  Eigen::VectorXd lo;
  Eigen::VectorXd hi;
  std::vector<bool> periodic;

  double extent(Index i) const { return hi(i) - lo(i); }
};

enum class SamplingMode { well_sampled, random };

std::string to_string(SamplingMode mode);
SamplingMode sampling_mode_from_string(const std::string& name);

/// Sampling density over the parameter box, realized by an inverse-CDF map of
/// uniform variates in [0,1)^d.
struct Sampler {
  std::string name;
  std::function<double(const Eigen::VectorXd&)> density;
  std::function<Eigen::VectorXd(const Eigen::VectorXd&)> inverse_cdf;
  /// Draws for which the parametrization degenerates; they are redrawn.
  std::function<bool(const Eigen::VectorXd&)> reject;
  /// Deterministic grid of N parameters; empty when the manifold has none.
  std::function<RowMatrixXd(Index)> grid;
};

/**
 * Analytic description of a closed test manifold: embedding, tangent frames,
 * manufactured solution and its Laplace-Beltrami image.
 *
 * `jacobian` returns the n x d matrix of parametrization partials; `frame`
 * orthonormalizes its columns by Gram-Schmidt.
 */
struct ManifoldSpec {
  std::string name;
  int d = 0;
  int n = 0;
  ParamBox domain;
  std::function<Eigen::VectorXd(const Eigen::VectorXd&)> embed;
  std::function<Eigen::MatrixXd(const Eigen::VectorXd&)> jacobian;
  std::function<double(const Eigen::VectorXd&)> f_true;
  std::function<double(const Eigen::VectorXd&)> lap_f_true;
  Sampler sampler;

  /// n x d matrix with orthonormal columns spanning the tangent space.
  Eigen::MatrixXd frame(const Eigen::VectorXd& params) const;
};

/// Names accepted by builtin_spec().
const std::vector<std::string>& builtin_manifold_names();

/// ellipse1d, rbc2d, bumpy_sphere2d, flat_torus3d, flat_torus4d.
ManifoldSpec builtin_spec(const std::string& name);

/// Points sampled from a manifold with per-point frames and manufactured data.
struct PointCloud {
  std::string spec_name;
  std::uint64_t seed = 0;
  int d = 0;
  int n = 0;
  RowMatrixXd points;  ///< N x n
  RowMatrixXd frames;  ///< N x (n*d), column-major n x d block per row
  RowMatrixXd params;  ///< N x d
  Eigen::VectorXd f_values;
  Eigen::VectorXd lap_values;
  Eigen::VectorXd h_values;  ///< f - lap (screened Poisson right-hand side, a = 1)

  Index size() const { return points.rows(); }

  /// Tangent frame of point i as an n x d view (column j is t_j).
  Eigen::Map<const Eigen::MatrixXd> frame(Index i) const {
    return {frames.row(i).data(), n, d};
  }
  Eigen::Map<const Eigen::VectorXd> point(Index i) const { return {points.row(i).data(), n}; }

  /// Returns a copy with every ambient coordinate multiplied by `c`.
  PointCloud scaled(double c) const;
};

/// Deterministic uniform stream in [0,1) built on mt19937_64.
class UniformStream {
 public:
  explicit UniformStream(std::uint64_t seed) : engine_(seed) {}
  double next() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }
  Eigen::VectorXd next(int dim);

 private:
  std::mt19937_64 engine_;
};

PointCloud sample_points(const ManifoldSpec& spec, Index N, SamplingMode mode, std::uint64_t seed);

/// Builds a cloud from explicit parameters (used by the samplers and tests).
PointCloud cloud_from_params(const ManifoldSpec& spec, const RowMatrixXd& params,
                             std::uint64_t seed = 0);

/// Closed-form inverse of the CDF of p(theta) = theta/(4 pi^2) + 1/(4 pi) on [0, 2 pi).
double ellipse_inverse_cdf(double u);

/**
 * Laplace-Beltrami operator from second-order derivative data,
 * Delta f = g^{ij} (d_ij f - Gamma^k_ij d_k f) with g = J^T J.
 *
 * `second` holds the n-vector d_i d_j x in column i*d + j.
 */
double laplace_beltrami_from_derivatives(const Eigen::MatrixXd& jacobian,
                                         const Eigen::MatrixXd& second,
                                         const Eigen::VectorXd& grad_f,
                                         const Eigen::MatrixXd& hess_f);

void save_cloud(const PointCloud& cloud, const std::string& path);
PointCloud load_cloud(const std::string& path);

}  // namespace grbf
