#pragma once

#include <Eigen/Dense>

#include <stdexcept>
#include <string>

namespace grbf {

using Index = Eigen::Index;

template <typename Scalar>
using Matrix = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;
template <typename Scalar>
using Vector = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;
template <typename Scalar>
using RowVector = Eigen::Matrix<Scalar, 1, Eigen::Dynamic>;

/// Row-major storage for point sets: one point per row, contiguous.
using RowMatrixXd = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Bad user input: unknown names, invalid parameters, malformed files.
class ConfigError : public Error {
 public:
  using Error::Error;
};

class UnsupportedModeError : public ConfigError {
 public:
  using ConfigError::ConfigError;
};

class ArgumentError : public Error {
 public:
  using Error::Error;
};

/// A stencil whose geometry cannot support the requested approximation.
class DegenerateStencilError : public Error {
 public:
  DegenerateStencilError(Index point, const std::string& what)
      : Error("degenerate stencil at point " + std::to_string(point) + ": " + what), point_(point) {}
  Index point() const noexcept { return point_; }

 private:
  Index point_;
};

/// The weighted normal matrix P^T Lambda P is numerically singular.
class RankDeficientError : public Error {
 public:
  RankDeficientError(const std::string& what, double condition)
      : Error(what), condition_(condition) {}
  double condition() const noexcept { return condition_; }

 private:
  double condition_;
};

class SolverError : public Error {
 public:
  SolverError(const std::string& what, double best_residual)
      : Error(what), best_residual_(best_residual) {}
  double best_residual() const noexcept { return best_residual_; }

 private:
  double best_residual_;
};

class OracleUndefinedError : public Error {
 public:
  using Error::Error;
};

}  // namespace grbf
