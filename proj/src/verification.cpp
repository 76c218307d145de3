#include "grbf/verification.hpp"

#include "grbf/stencils.hpp"

#include <Eigen/SVD>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <ostream>

namespace grbf {

namespace {

constexpr double kMinMetricDet = 1e-12;

template <typename Fn>
auto central4(const Fn& fn, const Eigen::VectorXd& p, Index i, double h) {
  Eigen::VectorXd q = p;
  q(i) = p(i) + 2 * h;
  auto f2 = fn(q);
  q(i) = p(i) + h;
  auto f1 = fn(q);
  q(i) = p(i) - h;
  auto m1 = fn(q);
  q(i) = p(i) - 2 * h;
  auto m2 = fn(q);
  return decltype(f1)((m2 - f2 + 8.0 * (f1 - m1)) / (12.0 * h));
}

struct Metric {
  double sqrt_det;
  Eigen::MatrixXd inverse;
};

Metric metric_at(const ManifoldSpec& spec, const Eigen::VectorXd& p, const Eigen::VectorXd& h) {
  const int d = spec.d;
  Eigen::MatrixXd J(spec.n, d);
  for (int i = 0; i < d; ++i) {
    J.col(i) = central4([&](const Eigen::VectorXd& q) { return Eigen::VectorXd(spec.embed(q)); }, p, i, h(i));
  }
  const Eigen::MatrixXd g = J.transpose() * J;
  const double det = g.determinant();
  if (!(det >= kMinMetricDet)) {
    throw OracleUndefinedError("metric determinant " + std::to_string(det) + " is below 1e-12");
  }
  return {std::sqrt(det), g.inverse()};
}

double oracle_at_step(const ManifoldSpec& spec, const Eigen::VectorXd& p, const ScalarField& f,
                      const Eigen::VectorXd& h) {
  const int d = spec.d;
  auto flux = [&](const Eigen::VectorXd& q) {
    const Metric m = metric_at(spec, q, h);
    Eigen::VectorXd grad(d);
    for (int j = 0; j < d; ++j) grad(j) = central4([&](const Eigen::VectorXd& r) { return f(r); }, q, j, h(j));
    return Eigen::VectorXd(m.sqrt_det * (m.inverse * grad));
  };
  double divergence = 0.0;
  for (int i = 0; i < d; ++i) {
    divergence += central4([&](const Eigen::VectorXd& q) { return flux(q)(i); }, p, i, h(i));
  }
  return divergence / metric_at(spec, p, h).sqrt_det;
}

double median_of(std::vector<double> v) {
  if (v.empty()) return 0.0;
  const std::size_t mid = v.size() / 2;
  std::nth_element(v.begin(), v.begin() + static_cast<std::ptrdiff_t>(mid), v.end());
  double upper = v[mid];
  if (v.size() % 2 == 1) return upper;
  const double lower = *std::max_element(v.begin(), v.begin() + static_cast<std::ptrdiff_t>(mid));
  return 0.5 * (lower + upper);
}

}  // namespace

double fd_laplacian_oracle(const ManifoldSpec& spec, const Eigen::VectorXd& params, const ScalarField& f,
                           double rel_step) {
  if (params.size() != spec.d) throw ArgumentError("oracle parameters must have length d");
  if (!(rel_step > 0.0)) throw ArgumentError("oracle step must be positive");
  Eigen::VectorXd h(spec.d);
  for (int i = 0; i < spec.d; ++i) {
    h(i) = rel_step * spec.domain.extent(i);
    // Nested first differences reach 4h from the center.
    const bool periodic = static_cast<std::size_t>(i) < spec.domain.periodic.size() && spec.domain.periodic[i];
    if (!periodic && (params(i) - 4 * h(i) < spec.domain.lo(i) || params(i) + 4 * h(i) > spec.domain.hi(i))) {
      throw OracleUndefinedError("finite-difference stencil leaves the parameter chart");
    }
  }
  const double coarse = oracle_at_step(spec, params, f, h);
  const double fine = oracle_at_step(spec, params, f, 0.5 * h);
  return (16.0 * fine - coarse) / 15.0;
}

double fd_laplacian_oracle(const ManifoldSpec& spec, const Eigen::VectorXd& params, double rel_step) {
  return fd_laplacian_oracle(spec, params, spec.f_true, rel_step);
}

LinearFit fit_line(const std::vector<double>& x, const std::vector<double>& y) {
  if (x.size() != y.size() || x.size() < 2) throw ArgumentError("fit_line needs two or more paired values");
  const double n = static_cast<double>(x.size());
  const double mx = std::accumulate(x.begin(), x.end(), 0.0) / n;
  const double my = std::accumulate(y.begin(), y.end(), 0.0) / n;
  double sxx = 0.0, sxy = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    sxx += (x[i] - mx) * (x[i] - mx);
    sxy += (x[i] - mx) * (y[i] - my);
  }
  if (!(sxx > 0.0)) throw ArgumentError("fit_line needs distinct abscissae");
  LinearFit fit;
  fit.slope = sxy / sxx;
  fit.intercept = my - fit.slope * mx;
  if (x.size() > 2) {
    double rss = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
      const double r = y[i] - fit.intercept - fit.slope * x[i];
      rss += r * r;
    }
    fit.stderr_slope = std::sqrt(rss / (n - 2.0) / sxx);
  }
  return fit;
}

LinearFit fit_loglog(const std::vector<double>& x, const std::vector<double>& y) {
  auto positive = [](double v) { return v > 0.0 && std::isfinite(v); };
  if (!std::all_of(x.begin(), x.end(), positive) || !std::all_of(y.begin(), y.end(), positive)) {
    throw ArgumentError("fit_loglog needs positive finite values");
  }
  std::vector<double> lx(x.size()), ly(y.size());
  std::transform(x.begin(), x.end(), lx.begin(), [](double v) { return std::log(v); });
  std::transform(y.begin(), y.end(), ly.begin(), [](double v) { return std::log(v); });
  return fit_line(lx, ly);
}

ReproductionReport reproduction_suite(const PointCloud& cloud, const MethodConfig& config, int trials,
                                      std::uint64_t seed) {
  const NeighborIndex index = build_knn_index(cloud);
  const MonomialBasis basis = monomial_indices(config.l, cloud.d);
  UniformStream stream(seed);
  ReproductionReport report;
  std::vector<double> sums;
  for (int t = 0; t < trials; ++t) {
    const Index base = std::min<Index>(cloud.size() - 1, static_cast<Index>(stream.next() * cloud.size()));
    const Stencil stencil = monge_project(cloud, index.knn(base, config.k0));
    const Eigen::RowVectorXd w = laplacian_weights(stencil, config);
    const double D2 = stencil.d_k_max * stencil.d_k_max;

    ReproductionSample s;
    s.base = base;
    s.d_k_max = stencil.d_k_max;
    const Eigen::MatrixXd P = vandermonde(stencil.theta, basis);
    const Eigen::RowVectorXd exact = polynomial_laplacian_row(basis);
    s.in_space_defect = ((w * P - exact).cwiseAbs() * D2).maxCoeff();
    s.constant_defect = std::abs(w.sum()) * D2;
    s.weight_sum = w.cwiseAbs().sum() * D2;
    s.out_of_space_defect = std::abs(w.dot(stencil.theta.col(0).array().pow(config.l + 1).matrix()));

    report.max_in_space_defect = std::max(report.max_in_space_defect, s.in_space_defect);
    report.max_constant_defect = std::max(report.max_constant_defect, s.constant_defect);
    report.max_weight_sum = std::max(report.max_weight_sum, s.weight_sum);
    sums.push_back(s.weight_sum);
    report.samples.push_back(s);
  }
  report.median_weight_sum = median_of(sums);
  return report;
}

std::vector<RegularizationPoint> regularization_sweep(const PointCloud& cloud, Index base, Index K,
                                                      const MethodConfig& config,
                                                      const std::vector<double>& deltas, int resamples,
                                                      std::uint64_t seed) {
  const ManifoldSpec spec = builtin_spec(cloud.spec_name);
  const NeighborIndex index = build_knn_index(cloud);
  const Stencil stencil = monge_project(cloud, index.knn(base, K));
  const Eigen::MatrixXd Phi = phs_matrix(stencil.theta_norm, config.kappa);
  Eigen::VectorXd lambda = Eigen::VectorXd::Constant(K, 1.0 / static_cast<double>(K));
  lambda(0) = 1.0;

  // Evaluation points in normalized coordinates: the nodes, then resamples.
  std::vector<Eigen::RowVectorXd> points;
  for (Index k = 0; k < K; ++k) points.push_back(stencil.theta_norm.row(k));
  const int d = cloud.d;
  const Eigen::VectorXd p0 = cloud.params.row(base).transpose();
  Eigen::VectorXd lo = p0, hi = p0;
  for (Index k = 0; k < K; ++k) {
    Eigen::VectorXd p = cloud.params.row(stencil.neighbors[static_cast<std::size_t>(k)]).transpose();
    for (int i = 0; i < d; ++i) {
      if (spec.domain.periodic[static_cast<std::size_t>(i)]) {
        const double period = spec.domain.extent(i);
        p(i) = p0(i) + std::remainder(p(i) - p0(i), period);
      }
    }
    lo = lo.cwiseMin(p);
    hi = hi.cwiseMax(p);
  }
  const auto frame = cloud.frame(base);
  const auto x0 = cloud.point(base);
  UniformStream stream(seed);
  for (int r = 0; r < resamples; ++r) {
    const Eigen::VectorXd u = stream.next(d);
    const Eigen::VectorXd p = lo + u.cwiseProduct(hi - lo);
    const Eigen::VectorXd theta = frame.transpose() * (spec.embed(p) - x0);
    points.push_back(theta.transpose() / stencil.d_k_max);
  }

  // A = M^T M + delta^2 I with M = Lambda^{1/2} Phi; one SVD serves every delta.
  const Eigen::MatrixXd M = lambda.cwiseSqrt().asDiagonal() * Phi;
  const Eigen::BDCSVD<Eigen::MatrixXd> svd(M, Eigen::ComputeThinV);
  const Eigen::MatrixXd& V = svd.matrixV();
  const Eigen::VectorXd s2 = svd.singularValues().array().square();
  std::vector<Eigen::RowVectorXd> rows;
  for (const auto& x : points) rows.push_back(phs_laplacian_row_at(stencil.theta_norm, x, config.kappa));

  std::vector<RegularizationPoint> result;
  for (double delta : deltas) {
    if (!(delta > 0.0)) throw ArgumentError("regularization_sweep: delta must be positive");
    const Eigen::VectorXd inv = (s2.array() + delta * delta).inverse();
    RegularizationPoint pt;
    pt.delta = delta;
    for (std::size_t j = 0; j < rows.size(); ++j) {
      const Eigen::VectorXd y = V * inv.asDiagonal() * (V.transpose() * rows[j].transpose());
      const double c3 = y.lpNorm<1>();
      const double c4 = (lambda.asDiagonal() * (Phi * y)).lpNorm<1>();
      if (j < static_cast<std::size_t>(K)) {
        pt.c3_nodes = std::max(pt.c3_nodes, c3);
        pt.c4_nodes = std::max(pt.c4_nodes, c4);
      }
      pt.c3_resampled = std::max(pt.c3_resampled, c3);
      pt.c4_resampled = std::max(pt.c4_resampled, c4);
    }
    result.push_back(pt);
  }
  return result;
}

std::vector<DiameterStats> diameter_statistics(const ManifoldSpec& spec, const std::vector<Index>& Ns, Index K,
                                               int trials, std::uint64_t seed, SamplingMode mode,
                                               int base_points) {
  std::vector<DiameterStats> result;
  for (Index N : Ns) {
    if (K > N) throw ArgumentError("diameter_statistics: K exceeds N");
    std::vector<double> values;
    for (int t = 0; t < trials; ++t) {
      const PointCloud cloud = sample_points(spec, N, mode, seed + static_cast<std::uint64_t>(t));
      const NeighborIndex index = build_knn_index(cloud);
      UniformStream picker(seed ^ 0x9e3779b97f4a7c15ull);
      for (int b = 0; b < base_points; ++b) {
        const Index base = std::min<Index>(N - 1, static_cast<Index>(picker.next() * N));
        values.push_back(monge_project(cloud, index.knn(base, K)).d_k_max);
      }
    }
    DiameterStats s;
    s.N = N;
    const double n = static_cast<double>(values.size());
    s.mean = std::accumulate(values.begin(), values.end(), 0.0) / n;
    double var = 0.0;
    for (double v : values) var += (v - s.mean) * (v - s.mean);
    s.stddev = values.size() > 1 ? std::sqrt(var / (n - 1.0)) : 0.0;
    s.max = *std::max_element(values.begin(), values.end());
    s.median = median_of(values);
    result.push_back(s);
  }
  return result;
}

void write_regularization_csv(std::ostream& out, const std::vector<RegularizationPoint>& rows) {
  out << "delta,C3_nodes,C4_nodes,C3_resampled,C4_resampled\n";
  out.precision(10);
  for (const auto& r : rows) {
    out << r.delta << ',' << r.c3_nodes << ',' << r.c4_nodes << ',' << r.c3_resampled << ',' << r.c4_resampled
        << '\n';
  }
}

void write_diameter_csv(std::ostream& out, const std::vector<DiameterStats>& rows) {
  out << "N,median_D,mean_D,sigma_D,max_D\n";
  out.precision(10);
  for (const auto& r : rows) {
    out << r.N << ',' << r.median << ',' << r.mean << ',' << r.stddev << ',' << r.max << '\n';
  }
}

}  // namespace grbf
