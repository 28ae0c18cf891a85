#pragma once

// Embedding tables and shared parameter pools.
//
// Task-specific parameters are produced as embedding x pool products. A pool
// may be partitioned column-wise into blocks, each summarized by a centroid
// (the mean of the block's columns, a vector in the query space), so a query
// can be routed to its most similar block instead of the full pool.

#include "quantgrid/autodiff.hpp"
#include "quantgrid/calendar.hpp"

#include <Eigen/Dense>

#include <random>
#include <span>
#include <vector>

namespace quantgrid {

enum class Similarity { Cosine, Dot };

/// Uniform values in [-0.5/sqrt(dim), 0.5/sqrt(dim)].
Tensor uniform_init(Shape shape, Index dim, std::mt19937_64& rng);

class ParameterPool {
 public:
  ParameterPool() = default;
  /// `values` is dim x M; block widths must be positive and sum to M.
  ParameterPool(std::string name, Tensor values, std::vector<Index> block_widths);

  /// dim x width pool split into `blocks` equal blocks.
  static ParameterPool uniform(std::string name, Index dim, Index width, Index blocks, std::mt19937_64& rng);

  Index dim() const { return values_.value.dim(0); }
  Index width() const { return values_.value.dim(1); }
  Index blocks() const { return static_cast<Index>(widths_.size()); }
  Index block_offset(Index i) const { return offsets_.at(static_cast<std::size_t>(i)); }
  Index block_width(Index i) const { return widths_.at(static_cast<std::size_t>(i)); }
  const std::vector<Index>& block_widths() const { return widths_; }

  Parameter& values() { return values_; }
  const Parameter& values() const { return values_; }
  Eigen::Map<const RowMatrix<double>> matrix() const { return values_.value.matrix(); }

  /// blocks x dim; row i is the column mean of block i.
  const Eigen::MatrixXd& centroids() const { return centroids_; }
  /// Recomputes centroids from the current values. Call after every update.
  void refresh_centroids();

 private:
  Parameter values_;
  std::vector<Index> widths_;
  std::vector<Index> offsets_;
  Eigen::MatrixXd centroids_;
};

template <typename Derived>
Eigen::MatrixXd generate_params(const Eigen::MatrixBase<Derived>& embedding, const ParameterPool& pool) {
  if (embedding.cols() != pool.dim()) {
    throw ShapeError("embedding width " + std::to_string(embedding.cols()) + " does not match pool dim " +
                     std::to_string(pool.dim()));
  }
  return embedding * pool.matrix();
}

double similarity(const Eigen::Ref<const Eigen::RowVectorXd>& a, const Eigen::Ref<const Eigen::RowVectorXd>& b,
                  Similarity sim);

/// Index of the most similar centroid; ties go to the lowest index. Throws
/// std::invalid_argument for a zero query under cosine similarity.
Index select_block(const Eigen::Ref<const Eigen::RowVectorXd>& query, const ParameterPool& pool, Similarity sim);

/// Per query row: the selected block index and row * P_block.
struct BlockwiseParams {
  std::vector<Index> blocks;
  std::vector<Eigen::RowVectorXd> rows;
};

BlockwiseParams generate_params_blockwise(const Eigen::Ref<const Eigen::MatrixXd>& embedding,
                                          const ParameterPool& pool, Similarity sim);

/// rows x M indicator of each row's selected block columns. Multiplying the
/// full product by this mask places row * P_block in its own column slot.
Eigen::MatrixXd block_mask(const Eigen::Ref<const Eigen::MatrixXd>& embedding, const ParameterPool& pool,
                           Similarity sim);

/// Kernel extents of one graph convolution: (powers) x (channels) x (hidden).
struct KernelShape {
  Index powers = 1;
  Index channels = 1;
  Index hidden = 1;

  Index size() const { return powers * channels * hidden; }
};

struct MetaParams {
  Tensor temporal;  // [B, powers, channels, hidden]
  Tensor spatial;   // [N, powers, channels, hidden]
};

/// Generates per-sample and per-node kernels from flattened d x (powers*channels*hidden) pools.
MetaParams generate_meta_params(const Eigen::Ref<const Eigen::MatrixXd>& temporal_embedding,
                                const Eigen::Ref<const Eigen::MatrixXd>& spatial_embedding,
                                const Parameter& temporal_pool, const Parameter& spatial_pool, KernelShape kernel);

struct TemporalEmbeddingTables {
  Parameter time_of_day;   // steps_per_day x d_tod
  Parameter day_of_week;   // 7 x d_dow
  Parameter month_of_year; // 12 x d_moy
  int steps_per_day = 48;

  static TemporalEmbeddingTables make(int steps_per_day, Index d_tod, Index d_dow, Index d_moy,
                                      std::mt19937_64& rng);

  Index width() const { return time_of_day.value.dim(1) + day_of_week.value.dim(1) + month_of_year.value.dim(1); }
  Index parameter_count() const {
    return time_of_day.value.size() + day_of_week.value.size() + month_of_year.value.size();
  }
};

struct TemporalQuery {
  std::vector<TemporalIndex> indices;
  Tensor embedding;  // [B, d_t]
};

/// One row per sample, selected by the calendar position of the sample's
/// last input timestep.
TemporalQuery temporal_query(const TemporalEmbeddingTables& tables, std::span<const Timestamp> last_steps);

/// Differentiable lookup-and-concatenate of the three tables.
Var temporal_embedding(Graph& g, TemporalEmbeddingTables& tables, std::span<const TemporalIndex> indices);

}  // namespace quantgrid
