#include "quantgrid/memory.hpp"

#include <cmath>
#include <numeric>

namespace quantgrid {

Tensor uniform_init(Shape shape, Index dim, std::mt19937_64& rng) {
  const double bound = 0.5 / std::sqrt(static_cast<double>(dim));
  std::uniform_real_distribution<double> dist(-bound, bound);
  Tensor t(std::move(shape));
  for (Index i = 0; i < t.size(); ++i) t[i] = dist(rng);
  return t;
}

ParameterPool::ParameterPool(std::string name, Tensor values, std::vector<Index> block_widths)
    : values_(std::move(name), std::move(values)), widths_(std::move(block_widths)) {
  if (values_.value.rank() != 2) throw ShapeError("parameter pool must be rank 2");
  if (widths_.empty()) throw std::invalid_argument("parameter pool needs at least one block");
  Index total = 0;
  for (Index w : widths_) {
    if (w <= 0) throw std::invalid_argument("block widths must be positive");
    offsets_.push_back(total);
    total += w;
  }
  if (total != width()) {
    throw std::invalid_argument("block widths sum to " + std::to_string(total) + " but pool width is " +
                                std::to_string(width()));
  }
  refresh_centroids();
}

ParameterPool ParameterPool::uniform(std::string name, Index dim, Index width, Index blocks, std::mt19937_64& rng) {
  if (blocks <= 0 || width % blocks != 0) {
    throw std::invalid_argument("pool width " + std::to_string(width) + " is not divisible into " +
                                std::to_string(blocks) + " blocks");
  }
  return ParameterPool(std::move(name), uniform_init({dim, width}, dim, rng),
                       std::vector<Index>(static_cast<std::size_t>(blocks), width / blocks));
}

void ParameterPool::refresh_centroids() {
  const auto p = matrix();
  centroids_.resize(blocks(), dim());
  for (Index i = 0; i < blocks(); ++i) {
    centroids_.row(i) = p.middleCols(block_offset(i), block_width(i)).rowwise().mean().transpose();
  }
}

double similarity(const Eigen::Ref<const Eigen::RowVectorXd>& a, const Eigen::Ref<const Eigen::RowVectorXd>& b,
                  Similarity sim) {
  const double dot = a.dot(b);
  if (sim == Similarity::Dot) return dot;
  const double norms = a.norm() * b.norm();
  return norms > 0.0 ? dot / norms : 0.0;
}

Index select_block(const Eigen::Ref<const Eigen::RowVectorXd>& query, const ParameterPool& pool, Similarity sim) {
  if (query.size() != pool.dim()) {
    throw ShapeError("query width " + std::to_string(query.size()) + " does not match centroid dim " +
                     std::to_string(pool.dim()));
  }
  if (sim == Similarity::Cosine && query.squaredNorm() == 0.0) {
    throw std::invalid_argument("cosine similarity is undefined for a zero-norm query");
  }
  Index best = 0;
  double best_score = similarity(query, pool.centroids().row(0), sim);
  for (Index i = 1; i < pool.blocks(); ++i) {
    const double s = similarity(query, pool.centroids().row(i), sim);
    if (s > best_score) {
      best = i;
      best_score = s;
    }
  }
  return best;
}

BlockwiseParams generate_params_blockwise(const Eigen::Ref<const Eigen::MatrixXd>& embedding,
                                          const ParameterPool& pool, Similarity sim) {
  BlockwiseParams out;
  const auto p = pool.matrix();
  for (Index r = 0; r < embedding.rows(); ++r) {
    const Index b = select_block(embedding.row(r), pool, sim);
    out.blocks.push_back(b);
    out.rows.emplace_back(embedding.row(r) * p.middleCols(pool.block_offset(b), pool.block_width(b)));
  }
  return out;
}

Eigen::MatrixXd block_mask(const Eigen::Ref<const Eigen::MatrixXd>& embedding, const ParameterPool& pool,
                           Similarity sim) {
  Eigen::MatrixXd mask = Eigen::MatrixXd::Zero(embedding.rows(), pool.width());
  for (Index r = 0; r < embedding.rows(); ++r) {
    const Index b = select_block(embedding.row(r), pool, sim);
    mask.row(r).segment(pool.block_offset(b), pool.block_width(b)).setOnes();
  }
  return mask;
}

MetaParams generate_meta_params(const Eigen::Ref<const Eigen::MatrixXd>& temporal_embedding,
                                const Eigen::Ref<const Eigen::MatrixXd>& spatial_embedding,
                                const Parameter& temporal_pool, const Parameter& spatial_pool, KernelShape kernel) {
  auto generate = [&](const Eigen::Ref<const Eigen::MatrixXd>& e, const Parameter& pool) {
    const Tensor& p = pool.value;
    if (p.rank() != 2 || p.dim(1) != kernel.size()) {
      throw ShapeError("meta pool " + to_string(p.shape()) + " does not flatten a kernel of " +
                       std::to_string(kernel.size()) + " values");
    }
    if (e.cols() != p.dim(0)) {
      throw ShapeError("embedding width " + std::to_string(e.cols()) + " does not match meta pool " +
                       to_string(p.shape()));
    }
    Tensor w({e.rows(), kernel.powers, kernel.channels, kernel.hidden});
    w.flat_matrix(kernel.size()) = e * p.matrix();
    return w;
  };
  return {generate(temporal_embedding, temporal_pool), generate(spatial_embedding, spatial_pool)};
}

TemporalEmbeddingTables TemporalEmbeddingTables::make(int steps_per_day, Index d_tod, Index d_dow, Index d_moy,
                                                      std::mt19937_64& rng) {
  if (steps_per_day <= 0 || 1440 % steps_per_day != 0) {
    throw std::invalid_argument("steps_per_day must evenly divide 1440 minutes");
  }
  TemporalEmbeddingTables t;
  t.steps_per_day = steps_per_day;
  t.time_of_day = Parameter("temporal.time_of_day", uniform_init({steps_per_day, d_tod}, d_tod, rng));
  t.day_of_week = Parameter("temporal.day_of_week", uniform_init({kDaysPerWeek, d_dow}, d_dow, rng));
  t.month_of_year = Parameter("temporal.month_of_year", uniform_init({kMonthsPerYear, d_moy}, d_moy, rng));
  return t;
}

TemporalQuery temporal_query(const TemporalEmbeddingTables& tables, std::span<const Timestamp> last_steps) {
  TemporalQuery q;
  if (last_steps.empty()) throw std::invalid_argument("temporal query needs at least one sample");
  const Index dt = tables.time_of_day.value.dim(1);
  const Index dd = tables.day_of_week.value.dim(1);
  const Index dm = tables.month_of_year.value.dim(1);
  q.embedding = Tensor({static_cast<Index>(last_steps.size()), tables.width()});
  auto e = q.embedding.matrix();
  for (std::size_t b = 0; b < last_steps.size(); ++b) {
    const TemporalIndex idx = temporal_index(last_steps[b], tables.steps_per_day);
    q.indices.push_back(idx);
    const auto row = static_cast<Index>(b);
    e.row(row).segment(0, dt) = tables.time_of_day.value.matrix().row(idx.time_of_day);
    e.row(row).segment(dt, dd) = tables.day_of_week.value.matrix().row(idx.day_of_week);
    e.row(row).segment(dt + dd, dm) = tables.month_of_year.value.matrix().row(idx.month_of_year);
  }
  return q;
}

Var temporal_embedding(Graph& g, TemporalEmbeddingTables& tables, std::span<const TemporalIndex> indices) {
  std::vector<Index> tod;
  std::vector<Index> dow;
  std::vector<Index> moy;
  for (const auto& idx : indices) {
    tod.push_back(idx.time_of_day);
    dow.push_back(idx.day_of_week);
    moy.push_back(idx.month_of_year);
  }
  return concat_last({gather_rows(g.parameter(tables.time_of_day), tod),
                      gather_rows(g.parameter(tables.day_of_week), dow),
                      gather_rows(g.parameter(tables.month_of_year), moy)});
}

}  // namespace quantgrid
