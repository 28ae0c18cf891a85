#include "support.hpp"

#include "quantgrid/memory.hpp"
#include "quantgrid/model.hpp"

#include <doctest.h>

using namespace quantgrid;
using qg_test::random_matrix;

namespace {

ParameterPool pool_from(const Eigen::MatrixXd& values, std::vector<Index> widths) {
  return ParameterPool("pool", Tensor::from_matrix(values), std::move(widths));
}

// score every block, take the best, multiply
Eigen::RowVectorXd exhaustive(const Eigen::RowVectorXd& q, const ParameterPool& pool, Similarity sim, Index& chosen) {
  double best = -std::numeric_limits<double>::infinity();
  for (Index i = 0; i < pool.blocks(); ++i) {
    const Eigen::RowVectorXd mu = pool.matrix().middleCols(pool.block_offset(i), pool.block_width(i)).rowwise().mean().transpose();
    const double s = sim == Similarity::Dot ? q.dot(mu) : q.dot(mu) / (q.norm() * mu.norm());
    if (s > best) {
      best = s;
      chosen = i;
    }
  }
  return q * pool.matrix().middleCols(pool.block_offset(chosen), pool.block_width(chosen));
}

}  // namespace

TEST_SUITE("memory") {
  TEST_CASE("generate_params examples") {
    std::mt19937_64 rng(1);
    const Eigen::MatrixXd p = random_matrix(3, 4, rng);
    const auto pool = pool_from(p, {4});
    CHECK(generate_params(Eigen::MatrixXd::Identity(3, 3), pool).isApprox(p, 0.0));
    CHECK(generate_params(Eigen::MatrixXd::Zero(2, 3), pool).isZero(0.0));
    const Eigen::MatrixXd e = random_matrix(5, 3, rng);
    Eigen::MatrixXd oracle = Eigen::MatrixXd::Zero(5, 4);
    for (Index i = 0; i < 5; ++i)
      for (Index j = 0; j < 4; ++j)
        for (Index k = 0; k < 3; ++k) oracle(i, j) += e(i, k) * p(k, j);
    CHECK((generate_params(e, pool) - oracle).cwiseAbs().maxCoeff() < 1e-14);
    CHECK_THROWS_AS(generate_params(Eigen::MatrixXd::Zero(2, 2), pool), ShapeError);
  }

  TEST_CASE("generation is linear in the embedding") {
    std::mt19937_64 rng(2);
    const auto pool = pool_from(random_matrix(4, 6, rng), {2, 4});
    const Eigen::MatrixXd e1 = random_matrix(3, 4, rng), e2 = random_matrix(3, 4, rng);
    const Eigen::MatrixXd lhs = generate_params(1.5 * e1 - 0.25 * e2, pool);
    const Eigen::MatrixXd rhs = 1.5 * generate_params(e1, pool) - 0.25 * generate_params(e2, pool);
    CHECK((lhs - rhs).cwiseAbs().maxCoeff() <= 1e-12);
  }

  TEST_CASE("pool partition and centroids") {
    Eigen::MatrixXd p(2, 4);
    p << 1, 3, 5, 6, 0, 2, 4, 8;
    const auto pool = pool_from(p, {2, 2});
    CHECK(pool.blocks() == 2);
    CHECK(pool.block_offset(1) == 2);
    CHECK(pool.centroids()(0, 0) == 2.0);
    CHECK(pool.centroids()(1, 1) == 6.0);
    CHECK_THROWS_AS(pool_from(p, {1, 2}), std::invalid_argument);
    CHECK_THROWS_AS(pool_from(p, {0, 4}), std::invalid_argument);
  }

  TEST_CASE("select_block examples") {
    Eigen::MatrixXd p(2, 3);
    p << 1, 0, -1, 0, 1, 0;
    const auto pool = pool_from(p, {1, 1, 1});
    CHECK(select_block(pool.centroids().row(2), pool, Similarity::Cosine) == 2);
    CHECK(select_block(pool.centroids().row(1), pool, Similarity::Dot) == 1);
    const auto single = pool_from(p, {3});
    CHECK(select_block(Eigen::RowVector2d(0.3, -2.0), single, Similarity::Cosine) == 0);
    Eigen::MatrixXd tie(2, 2);
    tie << 1, 0, 0, 1;
    const auto tied = pool_from(tie, {1, 1});
    CHECK(select_block(Eigen::RowVector2d(1.0, 1.0), tied, Similarity::Cosine) == 0);
    CHECK_THROWS_AS(select_block(Eigen::RowVector2d::Zero(), tied, Similarity::Cosine), std::invalid_argument);
    CHECK_THROWS_AS(select_block(Eigen::RowVector3d::Ones(), tied, Similarity::Cosine), ShapeError);
  }

  TEST_CASE("cosine selection ignores positive query scale") {
    std::mt19937_64 rng(3);
    const auto pool = pool_from(random_matrix(5, 12, rng), {4, 4, 4});
    for (int rep = 0; rep < 50; ++rep) {
      const Eigen::RowVectorXd q = random_matrix(1, 5, rng);
      const Index i = select_block(q, pool, Similarity::Cosine);
      CHECK(select_block(q * 7.5, pool, Similarity::Cosine) == i);
      CHECK(select_block(q * 1e-3, pool, Similarity::Cosine) == i);
    }
  }

  TEST_CASE("blockwise generation") {
    std::mt19937_64 rng(4);
    const Eigen::MatrixXd p = random_matrix(3, 6, rng);
    const Eigen::MatrixXd e = random_matrix(4, 3, rng);
    // one block: the same as the full product
    const auto whole = generate_params_blockwise(e, pool_from(p, {6}), Similarity::Cosine);
    const Eigen::MatrixXd full = generate_params(e, pool_from(p, {6}));
    for (Index r = 0; r < 4; ++r) CHECK(whole.rows[static_cast<std::size_t>(r)] == full.row(r));

    for (auto sim : {Similarity::Cosine, Similarity::Dot}) {
      const auto pool = pool_from(random_matrix(3, 9, rng), {3, 3, 3});
      const Eigen::MatrixXd q = random_matrix(40, 3, rng);
      const auto got = generate_params_blockwise(q, pool, sim);
      const Eigen::MatrixXd mask = block_mask(q, pool, sim);
      const Eigen::MatrixXd masked = generate_params(q, pool).cwiseProduct(mask);
      for (Index r = 0; r < 40; ++r) {
        Index chosen = -1;
        const Eigen::RowVectorXd want = exhaustive(q.row(r), pool, sim, chosen);
        CHECK(got.blocks[static_cast<std::size_t>(r)] == chosen);
        CHECK((got.rows[static_cast<std::size_t>(r)] - want).cwiseAbs().maxCoeff() < 1e-14);
        CHECK(masked.row(r).segment(pool.block_offset(chosen), 3) == got.rows[static_cast<std::size_t>(r)]);
        CHECK(mask.row(r).sum() == 3.0);
      }
    }
  }

  TEST_CASE("one-hot query aligned with a block centroid picks that block") {
    Eigen::MatrixXd p(3, 6);
    p << 1, 1, 0, 0, 0, 0,
         0, 0, 1, 1, 0, 0,
         0, 0, 0, 0, 1, 1;
    const auto pool = pool_from(p, {2, 2, 2});
    const auto out = generate_params_blockwise(Eigen::RowVector3d(0, 1, 0), pool, Similarity::Cosine);
    CHECK(out.blocks[0] == 1);
    CHECK(out.rows[0] == Eigen::RowVector2d(1, 1));
  }

  TEST_CASE("meta parameters") {
    std::mt19937_64 rng(5);
    const KernelShape k{3, 2, 4};
    Parameter tp("tp", qg_test::random_tensor({5, k.size()}, rng));
    Parameter sp("sp", qg_test::random_tensor({3, k.size()}, rng));
    const auto onehot = generate_meta_params(Eigen::MatrixXd::Identity(5, 5), Eigen::MatrixXd::Identity(3, 3), tp, sp, k);
    CHECK(onehot.temporal.shape() == Shape{5, 3, 2, 4});
    CHECK(onehot.spatial.shape() == Shape{3, 3, 2, 4});
    CHECK(onehot.temporal.array().isApprox(tp.value.array(), 0.0));
    const auto zero = generate_meta_params(Eigen::MatrixXd::Zero(2, 5), Eigen::MatrixXd::Zero(3, 3), tp, sp, k);
    CHECK((zero.temporal.array() == 0.0).all());
    const Eigen::MatrixXd e = random_matrix(2, 5, rng);
    const auto got = generate_meta_params(e, Eigen::MatrixXd::Identity(3, 3), tp, sp, k);
    const Eigen::MatrixXd prod = e * tp.value.matrix();
    for (Index b = 0; b < 2; ++b)
      for (Index kk = 0; kk < 3; ++kk)
        for (Index c = 0; c < 2; ++c)
          for (Index h = 0; h < 4; ++h) {
            CHECK(got.temporal(b, kk, c, h) == doctest::Approx(prod(b, (kk * 2 + c) * 4 + h)).epsilon(1e-14));
          }
    CHECK_THROWS_AS(generate_meta_params(e, Eigen::MatrixXd::Identity(3, 3), tp, sp, KernelShape{2, 2, 4}),
                    ShapeError);
  }

  TEST_CASE("temporal query") {
    std::mt19937_64 rng(6);
    auto tables = TemporalEmbeddingTables::make(48, 3, 2, 2, rng);
    // distinct rows: row i of each table is filled with its index
    for (Parameter* p : {&tables.time_of_day, &tables.day_of_week, &tables.month_of_year}) {
      for (Index r = 0; r < p->value.dim(0); ++r) p->value.matrix().row(r).setConstant(static_cast<double>(r));
    }
    const std::vector<Timestamp> ts{parse_timestamp("2018-07-15T12:00"), parse_timestamp("2018-07-15T12:00"),
                                    parse_timestamp("2018-01-01T00:30")};
    const auto q = temporal_query(tables, ts);
    CHECK(q.embedding.shape() == Shape{3, 7});
    CHECK(q.embedding.matrix().row(0) == q.embedding.matrix().row(1));
    Eigen::RowVectorXd want(7);
    want << 24, 24, 24, 6, 6, 6, 6;
    CHECK(q.embedding.matrix().row(0) == want);
    CHECK(q.indices[2] == TemporalIndex{1, 0, 0});

    Graph g;
    const auto diff = temporal_embedding(g, tables, q.indices);
    CHECK(diff.value() == q.embedding);
    CHECK_THROWS(temporal_query(tables, std::span<const Timestamp>{}));
  }

  TEST_CASE("parameter count follows the formula and ignores series length") {
    std::mt19937_64 rng(7);
    ModelConfig cfg;
    cfg.nodes = 10;
    const auto diff = qg_test::random_diffusion(10, cfg.diffusion_order, rng);
    const Model m(cfg, diff, 1);
    const KernelShape k = cfg.kernel();
    const Index dt = cfg.temporal_dim();
    const Index expected = cfg.nodes * cfg.spatial_dim +
                           (cfg.steps_per_day * cfg.tod_dim + 7 * cfg.dow_dim + 12 * cfg.moy_dim) +
                           3 * (cfg.spatial_dim + dt) * k.size() + (cfg.spatial_dim + dt) * cfg.pool_width +
                           3 * cfg.hidden + (cfg.hidden + cfg.pool_width + 1) * 3 * cfg.horizon;
    CHECK(m.parameter_count() == expected);
  }
}
