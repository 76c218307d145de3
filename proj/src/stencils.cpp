#include "grbf/stencils.hpp"

#include <algorithm>
#include <numeric>
#include <queue>
#include <utility>

namespace grbf {

namespace {

/// Candidate ordering: smaller distance first, then smaller index.
struct Candidate {
  double dist2;
  Index index;
  bool operator<(const Candidate& other) const {
    return dist2 < other.dist2 || (dist2 == other.dist2 && index < other.index);
  }
};

}  // namespace

NeighborIndex::NeighborIndex(const RowMatrixXd& points, Index leaf_size)
    : points_(points), order_(static_cast<std::size_t>(points.rows())), leaf_size_(std::max<Index>(1, leaf_size)) {
  std::iota(order_.begin(), order_.end(), Index{0});
  if (points_.rows() > 0) {
    nodes_.reserve(static_cast<std::size_t>(2 * points_.rows() / leaf_size_ + 1));
    build(0, points_.rows());
  }
}

Index NeighborIndex::build(Index begin, Index end) {
  const Index id = static_cast<Index>(nodes_.size());
  nodes_.push_back(Node{begin, end});
  if (end - begin <= leaf_size_) return id;

  Eigen::RowVectorXd lo = points_.row(order_[begin]);
  Eigen::RowVectorXd hi = lo;
  for (Index k = begin + 1; k < end; ++k) {
    lo = lo.cwiseMin(points_.row(order_[k]));
    hi = hi.cwiseMax(points_.row(order_[k]));
  }
  Index dim = 0;
  const double spread = (hi - lo).maxCoeff(&dim);
  if (spread <= 0.0) return id;

  const Index mid = begin + (end - begin) / 2;
  std::nth_element(order_.begin() + begin, order_.begin() + mid, order_.begin() + end,
                   [&](Index a, Index b) { return points_(a, dim) < points_(b, dim); });
  const double split = points_(order_[mid], dim);
  const Index left = build(begin, mid);
  const Index right = build(mid, end);
  Node& node = nodes_[static_cast<std::size_t>(id)];
  node.split_dim = dim;
  node.split_value = split;
  node.left = left;
  node.right = right;
  return id;
}

std::vector<Index> NeighborIndex::query(const Eigen::Ref<const Eigen::VectorXd>& q, Index K) const {
  if (K < 1 || K > size()) {
    throw ArgumentError("knn: K=" + std::to_string(K) + " must lie in [1, " + std::to_string(size()) + "]");
  }
  std::priority_queue<Candidate> best;  // max-heap: worst candidate on top
  // Incremental squared distance from q to the current cell (Arya-Mount).
  Eigen::VectorXd offsets = Eigen::VectorXd::Zero(dim());
  auto visit = [&](auto&& self, Index node_id, double cell_dist2) -> void {
    const Node& node = nodes_[static_cast<std::size_t>(node_id)];
    if (node.split_dim < 0) {
      for (Index k = node.begin; k < node.end; ++k) {
        const Index idx = order_[static_cast<std::size_t>(k)];
        const Candidate c{(points_.row(idx).transpose() - q).squaredNorm(), idx};
        if (static_cast<Index>(best.size()) < K) {
          best.push(c);
        } else if (c < best.top()) {
          best.pop();
          best.push(c);
        }
      }
      return;
    }
    const double diff = q(node.split_dim) - node.split_value;
    const Index near = diff < 0.0 ? node.left : node.right;
    const Index far = diff < 0.0 ? node.right : node.left;
    self(self, near, cell_dist2);
    const double old = offsets(node.split_dim);
    const double far_dist2 = cell_dist2 - old * old + diff * diff;
    // Ties at the splitting plane must still be visited for index tie-breaking.
    if (static_cast<Index>(best.size()) < K || far_dist2 <= best.top().dist2) {
      offsets(node.split_dim) = diff;
      self(self, far, far_dist2);
      offsets(node.split_dim) = old;
    }
  };
  visit(visit, 0, 0.0);

  std::vector<Index> result(best.size());
  for (auto it = result.rbegin(); it != result.rend(); ++it) {
    *it = best.top().index;
    best.pop();
  }
  return result;
}

std::vector<Index> NeighborIndex::knn(Index i, Index K) const {
  if (i < 0 || i >= size()) throw ArgumentError("knn: point index out of range");
  std::vector<Index> result = query(points_.row(i).transpose(), K);
  auto self = std::find(result.begin(), result.end(), i);
  if (self == result.end()) {
    result.pop_back();
    result.insert(result.begin(), i);
  } else if (self != result.begin()) {
    std::rotate(result.begin(), self, self + 1);
  }
  return result;
}

NeighborIndex build_knn_index(const PointCloud& cloud) {
  if (cloud.size() < 2) throw ArgumentError("build_knn_index requires at least two points");
  return NeighborIndex(cloud.points);
}

std::vector<Index> knn(const NeighborIndex& index, Index i, Index K) { return index.knn(i, K); }

double max_pairwise_distance(const Eigen::Ref<const Eigen::MatrixXd>& coords) {
  double best = 0.0;
  for (Index a = 0; a < coords.rows(); ++a) {
    for (Index b = a + 1; b < coords.rows(); ++b) {
      best = std::max(best, (coords.row(a) - coords.row(b)).squaredNorm());
    }
  }
  return std::sqrt(best);
}

Stencil monge_project(const PointCloud& cloud, const std::vector<Index>& neighbors) {
  if (neighbors.empty()) throw ArgumentError("monge_project: empty neighbor list");
  Stencil s;
  s.base = neighbors.front();
  s.neighbors = neighbors;
  const Index K = static_cast<Index>(neighbors.size());
  const auto frame = cloud.frame(s.base);
  const auto x0 = cloud.point(s.base);

  Eigen::MatrixXd offsets(cloud.n, K);
  for (Index k = 0; k < K; ++k) offsets.col(k) = cloud.point(neighbors[static_cast<std::size_t>(k)]) - x0;
  s.theta = (frame.transpose() * offsets).transpose();
  s.theta.row(0).setZero();

  s.d_k_max = max_pairwise_distance(s.theta);
  s.r_k_max = s.theta.rowwise().norm().maxCoeff();
  if (!(s.d_k_max > 0.0)) throw DegenerateStencilError(s.base, "all neighbors project onto the base point");
  s.theta_norm = s.theta / s.d_k_max;
  return s;
}

}  // namespace grbf
