#pragma once

#include "grbf/core.hpp"
#include "grbf/local_ops.hpp"
#include "grbf/manifolds.hpp"

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <vector>

namespace grbf {

using ScalarField = std::function<double(const Eigen::VectorXd&)>;

/**
 * Laplace-Beltrami operator of `f` at `params` from the divergence form
 * (1/sqrt|g|) d_i (sqrt|g| g^{ij} d_j f), using only `spec.embed`.
 *
 * Every derivative is a 4th-order central difference with step
 * rel_step * extent(i); the result is Richardson-extrapolated from steps h
 * and h/2. Throws OracleUndefinedError where det g < 1e-12 or the stencil leaves a non-periodic chart.
 */
double fd_laplacian_oracle(const ManifoldSpec& spec, const Eigen::VectorXd& params, const ScalarField& f,
                           double rel_step = 1e-3);
double fd_laplacian_oracle(const ManifoldSpec& spec, const Eigen::VectorXd& params, double rel_step = 1e-3);

/// Least-squares line y = slope * x + intercept with the slope's standard error.
struct LinearFit {
  double slope = 0.0;
  double intercept = 0.0;
  double stderr_slope = 0.0;
};

LinearFit fit_line(const std::vector<double>& x, const std::vector<double>& y);
/// Fit of log(y) against log(x).
LinearFit fit_loglog(const std::vector<double>& x, const std::vector<double>& y);

struct ReproductionSample {
  Index base = 0;
  double d_k_max = 0.0;
  double in_space_defect = 0.0;   ///< max over monomials of degree <= l, times D^2
  double constant_defect = 0.0;   ///< |sum w_k| times D^2
  double weight_sum = 0.0;        ///< sum |w_k| times D^2
  double out_of_space_defect = 0.0;  ///< |sum w_k theta_1^{l+1}|, unscaled
};

struct ReproductionReport {
  std::vector<ReproductionSample> samples;
  double max_in_space_defect = 0.0;
  double max_constant_defect = 0.0;
  double max_weight_sum = 0.0;
  double median_weight_sum = 0.0;
};

/// Polynomial reproduction checks on `trials` random stencils of size config.k0.
ReproductionReport reproduction_suite(const PointCloud& cloud, const MethodConfig& config, int trials,
                                      std::uint64_t seed = 1);

struct RegularizationPoint {
  double delta = 0.0;
  double c3_nodes = 0.0;      ///< max over the stencil nodes
  double c4_nodes = 0.0;
  double c3_resampled = 0.0;  ///< max over nodes and resampled points
  double c4_resampled = 0.0;
};

/**
 * Norms ||lap_phi(x) A^{-1}||_1 (C3) and ||lap_phi(x) A^{-1} Phi^T Lambda||_1 (C4)
 * with A = Phi^T Lambda Phi + delta^2 I and the 1/K weight, maximized over the
 * stencil of `base` and over `resamples` points drawn uniformly from the
 * stencil's parameter bounding box.
 */
std::vector<RegularizationPoint> regularization_sweep(const PointCloud& cloud, Index base, Index K,
                                                      const MethodConfig& config,
                                                      const std::vector<double>& deltas, int resamples = 200,
                                                      std::uint64_t seed = 1);

struct DiameterStats {
  Index N = 0;
  double median = 0.0;
  double mean = 0.0;
  double stddev = 0.0;
  double max = 0.0;
};

/// D_{K,max} statistics over `base_points` random base points per cloud and
/// `trials` clouds per N (seeds seed + trial).
std::vector<DiameterStats> diameter_statistics(const ManifoldSpec& spec, const std::vector<Index>& Ns, Index K,
                                               int trials, std::uint64_t seed, SamplingMode mode = SamplingMode::random,
                                               int base_points = 100);

void write_regularization_csv(std::ostream& out, const std::vector<RegularizationPoint>& rows);
void write_diameter_csv(std::ostream& out, const std::vector<DiameterStats>& rows);

}  // namespace grbf
