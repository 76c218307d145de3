#include "grbf/manifolds.hpp"

#include <json.hpp>

#include <cmath>
#include <fstream>
#include <numbers>

namespace grbf {

namespace {

constexpr double kPi = std::numbers::pi;

/// Second-order forward-mode jet in D variables: value, gradient, Hessian.
template <int D>
struct Jet {
  using Grad = Eigen::Matrix<double, D, 1>;
  using Hess = Eigen::Matrix<double, D, D>;
  double v = 0.0;
  Grad g = Grad::Zero();
  Hess h = Hess::Zero();

  static Jet constant(double c) {
    Jet j;
    j.v = c;
    return j;
  }
  static Jet variable(int i, double value) {
    Jet j;
    j.v = value;
    j.g(i) = 1.0;
    return j;
  }
};

template <int D>
Jet<D> operator+(const Jet<D>& a, const Jet<D>& b) {
  return {a.v + b.v, a.g + b.g, a.h + b.h};
}
template <int D>
Jet<D> operator*(double s, const Jet<D>& a) {
  return {s * a.v, s * a.g, s * a.h};
}
template <int D>
Jet<D> operator+(double s, const Jet<D>& a) {
  return {s + a.v, a.g, a.h};
}
template <int D>
Jet<D> operator*(const Jet<D>& a, const Jet<D>& b) {
  return {a.v * b.v, a.v * b.g + b.v * a.g,
          a.v * b.h + b.v * a.h + a.g * b.g.transpose() + b.g * a.g.transpose()};
}

// Chain rule for a scalar function with value f0 and derivatives f1, f2.
template <int D>
Jet<D> compose(const Jet<D>& a, double f0, double f1, double f2) {
  return {f0, f1 * a.g, f1 * a.h + f2 * a.g * a.g.transpose()};
}
template <int D>
Jet<D> sin(const Jet<D>& a) {
  return compose(a, std::sin(a.v), std::cos(a.v), -std::sin(a.v));
}
template <int D>
Jet<D> cos(const Jet<D>& a) {
  return compose(a, std::cos(a.v), -std::sin(a.v), -std::cos(a.v));
}
template <int D>
Jet<D> powi(const Jet<D>& a, int p) {
  const double f1 = p * std::pow(a.v, p - 1);
  const double f2 = p >= 2 ? p * (p - 1) * std::pow(a.v, p - 2) : 0.0;
  return compose(a, std::pow(a.v, p), f1, f2);
}

/// Embedding data of a 2D surface evaluated through jets.
struct SurfaceJets {
  std::array<Jet<2>, 3> x;
  Jet<2> f;
};

Eigen::VectorXd jet_values(const std::array<Jet<2>, 3>& x) {
  return Eigen::Vector3d(x[0].v, x[1].v, x[2].v);
}

Eigen::MatrixXd jet_jacobian(const std::array<Jet<2>, 3>& x) {
  Eigen::MatrixXd J(3, 2);
  for (int a = 0; a < 3; ++a) J.row(a) = x[a].g.transpose();
  return J;
}

double jet_laplacian(const SurfaceJets& s) {
  Eigen::MatrixXd second(3, 4);
  for (int a = 0; a < 3; ++a)
    for (int i = 0; i < 2; ++i)
      for (int j = 0; j < 2; ++j) second(a, i * 2 + j) = s.x[a].h(i, j);
  return laplace_beltrami_from_derivatives(jet_jacobian(s.x), second, s.f.g, s.f.h);
}

// Red blood cell surface; theta in [-pi/2, pi/2], phi in [-pi, pi).
SurfaceJets rbc_jets(const Eigen::VectorXd& p) {
  constexpr double r = 3.91 / 3.39;
  constexpr double c0 = 0.81 / 3.39;
  constexpr double c2 = 7.83 / 3.39;
  constexpr double c4 = -4.39 / 3.39;
  const auto th = Jet<2>::variable(0, p(0));
  const auto ph = Jet<2>::variable(1, p(1));
  const auto ct = cos(th);
  const auto profile = c0 + (c2 * powi(ct, 2) + c4 * powi(ct, 4));
  SurfaceJets s;
  s.x[0] = r * (ct * cos(ph));
  s.x[1] = r * (ct * sin(ph));
  s.x[2] = 0.5 * (sin(th) * profile);
  s.f = powi(ct, 2);
  return s;
}

// Bumpy sphere r = 1 + 0.1 sin^7(4 theta) sin(4 phi); f is the third coordinate.
SurfaceJets bumpy_jets(const Eigen::VectorXd& p) {
  const auto th = Jet<2>::variable(0, p(0));
  const auto ph = Jet<2>::variable(1, p(1));
  const auto radius = 1.0 + 0.1 * (powi(sin(4.0 * th), 7) * sin(4.0 * ph));
  SurfaceJets s;
  s.x[0] = radius * (sin(th) * cos(ph));
  s.x[1] = radius * (sin(th) * sin(ph));
  s.x[2] = radius * cos(th);
  s.f = s.x[2];
  return s;
}

Sampler uniform_sampler(const ParamBox& box) {
  Sampler s;
  s.name = "uniform";
  double volume = 1.0;
  for (Index i = 0; i < box.lo.size(); ++i) volume *= box.extent(i);
  s.density = [volume](const Eigen::VectorXd&) { return 1.0 / volume; };
  s.inverse_cdf = [box](const Eigen::VectorXd& u) -> Eigen::VectorXd {
    return box.lo.array() + u.array() * (box.hi - box.lo).array();
  };
  s.reject = [](const Eigen::VectorXd&) { return false; };
  return s;
}

ManifoldSpec make_ellipse() {
  ManifoldSpec spec;
  spec.name = "ellipse1d";
  spec.d = 1;
  spec.n = 2;
  spec.domain = {Eigen::VectorXd::Constant(1, 0.0), Eigen::VectorXd::Constant(1, 2 * kPi), {true}};
  spec.embed = [](const Eigen::VectorXd& p) -> Eigen::VectorXd {
    return Eigen::Vector2d(std::cos(p(0)), 2.0 * std::sin(p(0)));
  };
  spec.jacobian = [](const Eigen::VectorXd& p) -> Eigen::MatrixXd {
    return Eigen::Vector2d(-std::sin(p(0)), 2.0 * std::cos(p(0)));
  };
  spec.f_true = [](const Eigen::VectorXd& p) { return std::sin(p(0)) * std::cos(p(0)); };
  // f''/g - f' g' / (2 g^2), g = sin^2 + 4 cos^2 = 1 + 3 cos^2.
  spec.lap_f_true = [](const Eigen::VectorXd& p) {
    const double t = p(0);
    const double g = 1.0 + 3.0 * std::cos(t) * std::cos(t);
    const double dg = -3.0 * std::sin(2.0 * t);
    const double df = std::cos(2.0 * t);
    const double ddf = -2.0 * std::sin(2.0 * t);
    return ddf / g - df * dg / (2.0 * g * g);
  };
  Sampler s;
  s.name = "linear_density";
  s.density = [](const Eigen::VectorXd& p) { return p(0) / (4 * kPi * kPi) + 1.0 / (4 * kPi); };
  s.inverse_cdf = [](const Eigen::VectorXd& u) -> Eigen::VectorXd {
    return Eigen::VectorXd::Constant(1, ellipse_inverse_cdf(u(0)));
  };
  s.reject = [](const Eigen::VectorXd&) { return false; };
  s.grid = [](Index N) {
    RowMatrixXd params(N, 1);
    for (Index i = 0; i < N; ++i) params(i, 0) = 2 * kPi * static_cast<double>(i) / static_cast<double>(N);
    return params;
  };
  spec.sampler = std::move(s);
  return spec;
}

ManifoldSpec make_rbc() {
  ManifoldSpec spec;
  spec.name = "rbc2d";
  spec.d = 2;
  spec.n = 3;
  spec.domain = {Eigen::Vector2d(-kPi / 2, -kPi), Eigen::Vector2d(kPi / 2, kPi), {false, true}};
  spec.embed = [](const Eigen::VectorXd& p) { return jet_values(rbc_jets(p).x); };
  spec.jacobian = [](const Eigen::VectorXd& p) { return jet_jacobian(rbc_jets(p).x); };
  spec.f_true = [](const Eigen::VectorXd& p) { return std::cos(p(0)) * std::cos(p(0)); };
  spec.lap_f_true = [](const Eigen::VectorXd& p) { return jet_laplacian(rbc_jets(p)); };
  spec.sampler = uniform_sampler(spec.domain);
  spec.sampler.reject = [](const Eigen::VectorXd& p) { return std::abs(std::cos(p(0))) < 1e-12; };
  return spec;
}

ManifoldSpec make_bumpy_sphere() {
  ManifoldSpec spec;
  spec.name = "bumpy_sphere2d";
  spec.d = 2;
  spec.n = 3;
  spec.domain = {Eigen::Vector2d(0.0, 0.0), Eigen::Vector2d(kPi, 2 * kPi), {false, true}};
  spec.embed = [](const Eigen::VectorXd& p) { return jet_values(bumpy_jets(p).x); };
  spec.jacobian = [](const Eigen::VectorXd& p) { return jet_jacobian(bumpy_jets(p).x); };
  spec.f_true = [](const Eigen::VectorXd& p) { return bumpy_jets(p).x[2].v; };
  spec.lap_f_true = [](const Eigen::VectorXd& p) { return jet_laplacian(bumpy_jets(p)); };
  Sampler s;
  s.name = "sin_theta";
  s.density = [](const Eigen::VectorXd& p) { return std::sin(p(0)) / (4 * kPi); };
  s.inverse_cdf = [](const Eigen::VectorXd& u) -> Eigen::VectorXd {
    return Eigen::Vector2d(std::acos(1.0 - 2.0 * u(0)), 2 * kPi * u(1));
  };
  s.reject = [](const Eigen::VectorXd& p) { return std::sin(p(0)) < 1e-12; };
  spec.sampler = std::move(s);
  return spec;
}

// Flat torus of dimension d in R^{4d}: blocks (cos, sin, cos 2, sin 2)/sqrt(5).
ManifoldSpec make_flat_torus(int d) {
  ManifoldSpec spec;
  spec.name = "flat_torus" + std::to_string(d) + "d";
  spec.d = d;
  spec.n = 4 * d;
  spec.domain = {Eigen::VectorXd::Zero(d), Eigen::VectorXd::Constant(d, 2 * kPi),
                 std::vector<bool>(d, true)};
  const double scale = 1.0 / std::sqrt(5.0);
  spec.embed = [d, scale](const Eigen::VectorXd& p) {
    Eigen::VectorXd x(4 * d);
    for (int i = 0; i < d; ++i) {
      x.segment<4>(4 * i) << std::cos(p(i)), std::sin(p(i)), std::cos(2 * p(i)), std::sin(2 * p(i));
    }
    return Eigen::VectorXd(scale * x);
  };
  spec.jacobian = [d, scale](const Eigen::VectorXd& p) {
    Eigen::MatrixXd J = Eigen::MatrixXd::Zero(4 * d, d);
    for (int i = 0; i < d; ++i) {
      J.block<4, 1>(4 * i, i) << -std::sin(p(i)), std::cos(p(i)), -2 * std::sin(2 * p(i)),
          2 * std::cos(2 * p(i));
    }
    return Eigen::MatrixXd(scale * J);
  };
  spec.f_true = [](const Eigen::VectorXd& p) { return p.array().sin().prod(); };
  spec.lap_f_true = [d](const Eigen::VectorXd& p) { return -d * p.array().sin().prod(); };
  spec.sampler = uniform_sampler(spec.domain);
  return spec;
}

}  // namespace

std::string to_string(SamplingMode mode) {
  return mode == SamplingMode::well_sampled ? "well_sampled" : "random";
}

SamplingMode sampling_mode_from_string(const std::string& name) {
  if (name == "well_sampled") return SamplingMode::well_sampled;
  if (name == "random") return SamplingMode::random;
  throw ConfigError("unknown sampling mode '" + name + "' (expected well_sampled or random)");
}

Eigen::MatrixXd ManifoldSpec::frame(const Eigen::VectorXd& params) const {
  Eigen::MatrixXd t = jacobian(params);
  for (Index j = 0; j < t.cols(); ++j) {
    for (int pass = 0; pass < 2; ++pass) {
      for (Index k = 0; k < j; ++k) t.col(j) -= t.col(k).dot(t.col(j)) * t.col(k);
    }
    const double norm = t.col(j).norm();
    if (!(norm > 0.0)) throw DegenerateStencilError(-1, "parametrization is singular at requested parameters");
    t.col(j) /= norm;
  }
  return t;
}

const std::vector<std::string>& builtin_manifold_names() {
  static const std::vector<std::string> names{"ellipse1d", "rbc2d", "bumpy_sphere2d", "flat_torus3d",
                                              "flat_torus4d"};
  return names;
}

ManifoldSpec builtin_spec(const std::string& name) {
  if (name == "ellipse1d") return make_ellipse();
  if (name == "rbc2d") return make_rbc();
  if (name == "bumpy_sphere2d") return make_bumpy_sphere();
  if (name == "flat_torus3d") return make_flat_torus(3);
  if (name == "flat_torus4d") return make_flat_torus(4);
  throw ConfigError("unknown manifold '" + name + "'");
}

double ellipse_inverse_cdf(double u) {
  // Root of theta^2/(8 pi^2) + theta/(4 pi) = u, written without cancellation.
  return kPi * 8.0 * u / (1.0 + std::sqrt(1.0 + 8.0 * u));
}

double laplace_beltrami_from_derivatives(const Eigen::MatrixXd& jacobian, const Eigen::MatrixXd& second,
                                         const Eigen::VectorXd& grad_f, const Eigen::MatrixXd& hess_f) {
  const Index d = jacobian.cols();
  const Eigen::MatrixXd g = jacobian.transpose() * jacobian;
  const Eigen::MatrixXd ginv = g.inverse();
  double lap = 0.0;
  for (Index i = 0; i < d; ++i) {
    for (Index j = 0; j < d; ++j) {
      // Gamma^k_ij = g^{kl} (d_ij x . d_l x)
      const Eigen::VectorXd proj = jacobian.transpose() * second.col(i * d + j);
      const Eigen::VectorXd gamma = ginv * proj;
      lap += ginv(i, j) * (hess_f(i, j) - gamma.dot(grad_f));
    }
  }
  return lap;
}

Eigen::VectorXd UniformStream::next(int dim) {
  Eigen::VectorXd u(dim);
  for (int i = 0; i < dim; ++i) u(i) = next();
  return u;
}

PointCloud cloud_from_params(const ManifoldSpec& spec, const RowMatrixXd& params, std::uint64_t seed) {
  const Index N = params.rows();
  PointCloud cloud;
  cloud.spec_name = spec.name;
  cloud.seed = seed;
  cloud.d = spec.d;
  cloud.n = spec.n;
  cloud.params = params;
  cloud.points.resize(N, spec.n);
  cloud.frames.resize(N, spec.n * spec.d);
  cloud.f_values.resize(N);
  cloud.lap_values.resize(N);
  for (Index i = 0; i < N; ++i) {
    const Eigen::VectorXd p = params.row(i).transpose();
    cloud.points.row(i) = spec.embed(p).transpose();
    const Eigen::MatrixXd t = spec.frame(p);
    Eigen::Map<Eigen::MatrixXd>(cloud.frames.row(i).data(), spec.n, spec.d) = t;
    cloud.f_values(i) = spec.f_true(p);
    cloud.lap_values(i) = spec.lap_f_true(p);
  }
  cloud.h_values = cloud.f_values - cloud.lap_values;
  return cloud;
}

PointCloud sample_points(const ManifoldSpec& spec, Index N, SamplingMode mode, std::uint64_t seed) {
  if (N < 2) throw ArgumentError("sample_points requires N >= 2");
  if (mode == SamplingMode::well_sampled) {
    if (!spec.sampler.grid) {
      throw UnsupportedModeError("well_sampled mode is not defined for manifold '" + spec.name + "'");
    }
    return cloud_from_params(spec, spec.sampler.grid(N), seed);
  }
  UniformStream stream(seed);
  RowMatrixXd params(N, spec.d);
  for (Index i = 0; i < N; ++i) {
    Eigen::VectorXd p;
    do {
      p = spec.sampler.inverse_cdf(stream.next(spec.d));
    } while (spec.sampler.reject && spec.sampler.reject(p));
    params.row(i) = p.transpose();
  }
  return cloud_from_params(spec, params, seed);
}

PointCloud PointCloud::scaled(double c) const {
  PointCloud out = *this;
  out.points *= c;
  return out;
}

namespace {

nlohmann::json matrix_to_json(const RowMatrixXd& m) {
  return {{"rows", m.rows()}, {"cols", m.cols()},
          {"data", std::vector<double>(m.data(), m.data() + m.size())}};
}

RowMatrixXd matrix_from_json(const nlohmann::json& j) {
  const Index rows = j.at("rows").get<Index>();
  const Index cols = j.at("cols").get<Index>();
  const auto data = j.at("data").get<std::vector<double>>();
  if (static_cast<Index>(data.size()) != rows * cols) throw ConfigError("matrix payload has wrong size");
  return Eigen::Map<const RowMatrixXd>(data.data(), rows, cols);
}

nlohmann::json vector_to_json(const Eigen::VectorXd& v) {
  return std::vector<double>(v.data(), v.data() + v.size());
}

Eigen::VectorXd vector_from_json(const nlohmann::json& j) {
  const auto data = j.get<std::vector<double>>();
  return Eigen::Map<const Eigen::VectorXd>(data.data(), static_cast<Index>(data.size()));
}

}  // namespace

void save_cloud(const PointCloud& cloud, const std::string& path) {
  nlohmann::json j;
  j["format"] = "grbf.point_cloud";
  j["version"] = 1;
  j["spec_name"] = cloud.spec_name;
  j["seed"] = cloud.seed;
  j["d"] = cloud.d;
  j["n"] = cloud.n;
  j["points"] = matrix_to_json(cloud.points);
  j["frames"] = matrix_to_json(cloud.frames);
  j["params"] = matrix_to_json(cloud.params);
  j["f_values"] = vector_to_json(cloud.f_values);
  j["lap_values"] = vector_to_json(cloud.lap_values);
  j["h_values"] = vector_to_json(cloud.h_values);
  std::ofstream out(path);
  if (!out) throw ConfigError("cannot write point cloud file '" + path + "'");
  out << j.dump() << '\n';
}

PointCloud load_cloud(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open point cloud file '" + path + "'");
  nlohmann::json j;
  try {
    in >> j;
    if (j.value("format", "") != "grbf.point_cloud") throw ConfigError("'" + path + "' is not a point cloud file");
    PointCloud cloud;
    cloud.spec_name = j.at("spec_name").get<std::string>();
    cloud.seed = j.at("seed").get<std::uint64_t>();
    cloud.d = j.at("d").get<int>();
    cloud.n = j.at("n").get<int>();
    cloud.points = matrix_from_json(j.at("points"));
    cloud.frames = matrix_from_json(j.at("frames"));
    cloud.params = matrix_from_json(j.at("params"));
    cloud.f_values = vector_from_json(j.at("f_values"));
    cloud.lap_values = vector_from_json(j.at("lap_values"));
    cloud.h_values = vector_from_json(j.at("h_values"));
    const Index N = cloud.points.rows();
    if (cloud.points.cols() != cloud.n || cloud.frames.rows() != N || cloud.frames.cols() != cloud.n * cloud.d ||
        cloud.params.rows() != N || cloud.f_values.size() != N || cloud.lap_values.size() != N ||
        cloud.h_values.size() != N) {
      throw ConfigError("point cloud file '" + path + "' has inconsistent array sizes");
    }
    return cloud;
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError("malformed point cloud file '" + path + "': " + e.what());
  }
}

}  // namespace grbf
