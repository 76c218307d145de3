#pragma once

#include "grbf/core.hpp"
#include "grbf/manifolds.hpp"

#include <vector>

namespace grbf {

/**
 * Exact Euclidean K-nearest-neighbor index over the ambient coordinates of a
 * cloud (k-d tree, median splits on the widest coordinate).
 *
 * Results are ordered by ascending distance with ties broken by ascending
 * point index. Immutable after construction, so concurrent queries are safe.
 */
class NeighborIndex {
 public:
  explicit NeighborIndex(const RowMatrixXd& points, Index leaf_size = 16);

  Index size() const { return points_.rows(); }
  Index dim() const { return points_.cols(); }

  /// K nearest points to point `i`, with `i` itself first.
  std::vector<Index> knn(Index i, Index K) const;

  /// K nearest points to an arbitrary query location.
  std::vector<Index> query(const Eigen::Ref<const Eigen::VectorXd>& q, Index K) const;

 private:
  struct Node {
    Index begin = 0;
    Index end = 0;
    Index split_dim = -1;  // -1 marks a leaf
    double split_value = 0.0;
    Index left = -1;
    Index right = -1;
  };

  Index build(Index begin, Index end);

  RowMatrixXd points_;
  std::vector<Index> order_;
  std::vector<Node> nodes_;
  Index leaf_size_;
};

NeighborIndex build_knn_index(const PointCloud& cloud);
std::vector<Index> knn(const NeighborIndex& index, Index i, Index K);

/// One base point's neighborhood in projected tangent-plane (Monge) coordinates.
struct Stencil {
  Index base = 0;
  std::vector<Index> neighbors;  ///< neighbors[0] == base
  Eigen::MatrixXd theta;         ///< K x d, theta.row(0) == 0
  Eigen::MatrixXd theta_norm;    ///< theta / d_k_max
  double d_k_max = 0.0;          ///< max pairwise distance of projected coordinates
  double r_k_max = 0.0;          ///< max distance from the base

  Index size() const { return static_cast<Index>(neighbors.size()); }
};

/// Projects neighbors onto the base point's tangent frame and normalizes by the
/// stencil diameter. Throws DegenerateStencilError when the diameter is zero.
Stencil monge_project(const PointCloud& cloud, const std::vector<Index>& neighbors);

/// Maximum pairwise Euclidean distance between the rows of `coords`.
double max_pairwise_distance(const Eigen::Ref<const Eigen::MatrixXd>& coords);

}  // namespace grbf
