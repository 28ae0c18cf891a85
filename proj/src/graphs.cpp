#include "quantgrid/graphs.hpp"

#include <stdexcept>
#include <unordered_set>

namespace quantgrid {

void NodeSet::validate(Index region_count) const {
  if (coords.rows() != size()) throw std::invalid_argument("node set has mismatched id and coordinate counts");
  std::unordered_set<std::string> seen;
  for (const auto& id : ids) {
    if (!seen.insert(id).second) throw std::invalid_argument("duplicate node id '" + id + "'");
  }
  if (!coords.allFinite()) throw std::invalid_argument("non-finite node coordinates");
  if (level == GraphLevel::Micro && region_count >= 0) {
    if (static_cast<Index>(region_of.size()) != size()) throw std::invalid_argument("every user needs a region");
    for (Index r : region_of) {
      if (r < 0 || r >= region_count) throw std::invalid_argument("user mapped to unknown region");
    }
  }
}

AdjacencyMatrix build_adjacency(const NodeSet& nodes, double sigma2, double threshold) {
  return gaussian_adjacency(nodes.coords, sigma2, threshold);
}

DiffusionOperator diffusion_powers(const Eigen::MatrixXd& transition, int order) {
  if (order < 0) throw std::invalid_argument("diffusion order must be non-negative");
  if (transition.rows() != transition.cols()) throw std::invalid_argument("transition matrix must be square");
  DiffusionOperator op;
  op.powers.reserve(static_cast<std::size_t>(order) + 1);
  op.powers.push_back(Eigen::MatrixXd::Identity(transition.rows(), transition.cols()));
  for (int k = 1; k <= order; ++k) op.powers.push_back(op.powers.back() * transition);
  return op;
}

Eigen::MatrixXd region_mean(const Eigen::MatrixXd& user_signal, const std::vector<Index>& region_of, Index regions) {
  if (static_cast<Index>(region_of.size()) != user_signal.cols()) {
    throw std::invalid_argument("region map does not cover every user");
  }
  Eigen::MatrixXd sums = Eigen::MatrixXd::Zero(user_signal.rows(), regions);
  Eigen::VectorXd counts = Eigen::VectorXd::Zero(regions);
  for (Index u = 0; u < user_signal.cols(); ++u) {
    sums.col(region_of[static_cast<std::size_t>(u)]) += user_signal.col(u);
    counts(region_of[static_cast<std::size_t>(u)]) += 1.0;
  }
  for (Index r = 0; r < regions; ++r) {
    if (counts(r) > 0) sums.col(r) /= counts(r);
  }
  return sums;
}

Eigen::MatrixXd broadcast_to_users(const Eigen::MatrixXd& region_signal, const std::vector<Index>& region_of) {
  Eigen::MatrixXd out(region_signal.rows(), static_cast<Index>(region_of.size()));
  for (std::size_t u = 0; u < region_of.size(); ++u) out.col(static_cast<Index>(u)) = region_signal.col(region_of[u]);
  return out;
}

}  // namespace quantgrid
