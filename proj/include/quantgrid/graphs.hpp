#pragma once

#include "quantgrid/tensor.hpp"

#include <Eigen/Dense>

#include <cmath>
#include <string>
#include <vector>

namespace quantgrid {

enum class GraphLevel { Micro, Macro };

/// Nodes of one level of the hierarchy with planar coordinates.
struct NodeSet {
  std::vector<std::string> ids;
  Eigen::MatrixX2d coords;
  GraphLevel level = GraphLevel::Micro;
  /// Micro level only: region (macro node) index of every user.
  std::vector<Index> region_of;

  Index size() const { return static_cast<Index>(ids.size()); }
  /// Throws std::invalid_argument on duplicate ids, non-finite coordinates or
  /// a user without a valid region.
  void validate(Index region_count = -1) const;
};

template <typename Scalar>
struct BasicAdjacency {
  using Matrix = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;
  Matrix weights;
  Scalar sigma2{1};
  Scalar threshold{0};

  Index size() const { return weights.rows(); }
  Index edge_count() const { return (weights.array() > Scalar(0)).count(); }
};

using AdjacencyMatrix = BasicAdjacency<double>;

/// Thresholded Gaussian kernel: w_ij = exp(-d_ij^2 / sigma2) when i != j and
/// that value is at least `threshold`, otherwise 0.
template <typename Derived>
BasicAdjacency<typename Derived::Scalar> gaussian_adjacency(const Eigen::MatrixBase<Derived>& coords,
                                                            typename Derived::Scalar sigma2,
                                                            typename Derived::Scalar threshold) {
  using Scalar = typename Derived::Scalar;
  if (!(sigma2 > Scalar(0))) throw std::invalid_argument("sigma2 must be positive");
  if (!(threshold >= Scalar(0) && threshold <= Scalar(1))) throw std::invalid_argument("threshold must lie in [0, 1]");
  const Index n = coords.rows();
  if (n < 1) throw std::invalid_argument("adjacency needs at least one node");

  BasicAdjacency<Scalar> adj;
  adj.sigma2 = sigma2;
  adj.threshold = threshold;
  adj.weights = BasicAdjacency<Scalar>::Matrix::Zero(n, n);
  for (Index i = 0; i < n; ++i) {
    for (Index j = i + 1; j < n; ++j) {
      const Scalar d2 = (coords.row(i) - coords.row(j)).squaredNorm();
      const Scalar w = std::exp(-d2 / sigma2);
      if (w >= threshold) {
        adj.weights(i, j) = w;
        adj.weights(j, i) = w;
      }
    }
  }
  return adj;
}

AdjacencyMatrix build_adjacency(const NodeSet& nodes, double sigma2, double threshold);

/// Random-walk normalization with self loops: D^-1 (A + I).
template <typename Derived>
Eigen::Matrix<typename Derived::Scalar, Eigen::Dynamic, Eigen::Dynamic> normalize_random_walk(
    const Eigen::MatrixBase<Derived>& a) {
  using Scalar = typename Derived::Scalar;
  Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic> m = a;
  m.diagonal().array() += Scalar(1);
  const auto row_sums = m.rowwise().sum().eval();
  return row_sums.cwiseInverse().asDiagonal() * m;
}

inline Eigen::MatrixXd normalize(const AdjacencyMatrix& adj) { return normalize_random_walk(adj.weights); }

/// Powers [I, A, A^2, ..., A^K] of a normalized transition matrix.
struct DiffusionOperator {
  std::vector<Eigen::MatrixXd> powers;

  int order() const { return static_cast<int>(powers.size()) - 1; }
  Index nodes() const { return powers.front().rows(); }
};

DiffusionOperator diffusion_powers(const Eigen::MatrixXd& transition, int order);

/// Per-timestep mean of member users' signals for every region: (T x N_u) -> (T x N_r).
Eigen::MatrixXd region_mean(const Eigen::MatrixXd& user_signal, const std::vector<Index>& region_of, Index regions);

/// Region-level signal mapped back onto users: (T x N_r) -> (T x N_u).
Eigen::MatrixXd broadcast_to_users(const Eigen::MatrixXd& region_signal, const std::vector<Index>& region_of);

}  // namespace quantgrid
