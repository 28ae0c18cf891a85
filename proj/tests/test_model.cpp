#include "support.hpp"

#include "quantgrid/gradcheck.hpp"
#include "quantgrid/losses.hpp"
#include "quantgrid/model.hpp"

#include <doctest.h>

#include <algorithm>
#include <numeric>

using namespace quantgrid;
using qg_test::random_diffusion;
using qg_test::random_tensor;

namespace {

// sum_k A^k U W_k by explicit loops; W is [K+1, C, h] or [N, K+1, C, h]
Tensor conv_oracle(const Tensor& u, const DiffusionOperator& d, const Tensor& w) {
  const Index b = u.dim(0), n = u.dim(1), c = u.dim(2), h = w.dim(-1);
  const bool per_node = w.rank() == 4;
  Tensor z({b, n, h});
  for (Index s = 0; s < b; ++s)
    for (Index k = 0; k <= d.order(); ++k)
      for (Index i = 0; i < n; ++i)
        for (Index m = 0; m < n; ++m)
          for (Index ch = 0; ch < c; ++ch)
            for (Index j = 0; j < h; ++j) {
              const double wk = per_node ? w(i, k, ch, j) : w(k, ch, j);
              z(s, i, j) += d.powers[static_cast<std::size_t>(k)](i, m) * u(s, m, ch) * wk;
            }
  return z;
}

struct CellTensors {
  std::array<Tensor, 3> shared, per_node, per_sample, bias;
};

CellTensors random_cell(Index b, Index n, Index depth, Index h, std::mt19937_64& rng) {
  CellTensors t;
  for (std::size_t g = 0; g < 3; ++g) {
    t.shared[g] = random_tensor({depth, h}, rng, -0.5, 0.5);
    t.per_node[g] = random_tensor({n, depth, h}, rng, -0.5, 0.5);
    t.per_sample[g] = random_tensor({b, depth, h}, rng, -0.5, 0.5);
    t.bias[g] = random_tensor({h}, rng, -0.5, 0.5);
  }
  return t;
}

CellParams constants(Graph& g, const CellTensors& t) {
  CellParams p;
  for (std::size_t i = 0; i < 3; ++i) {
    p.kernels[i] = {g.constant(t.per_sample[i]), g.constant(t.per_node[i]), g.constant(t.shared[i])};
    p.biases[i] = g.constant(t.bias[i]);
  }
  return p;
}

// gathers node axis `axis` of t through perm: out[..., i, ...] = t[..., perm[i], ...]
Tensor permute_nodes(const Tensor& t, const std::vector<Index>& perm, Index axis) {
  Tensor out(t.shape());
  Index outer = 1, inner = 1;
  for (Index a = 0; a < axis; ++a) outer *= t.dim(a);
  for (Index a = axis + 1; a < t.rank(); ++a) inner *= t.dim(a);
  const Index n = t.dim(axis);
  for (Index o = 0; o < outer; ++o)
    for (Index i = 0; i < n; ++i)
      for (Index r = 0; r < inner; ++r) out[(o * n + i) * inner + r] = t[(o * n + perm[static_cast<std::size_t>(i)]) * inner + r];
  return out;
}

ModelConfig small_config(Index nodes) {
  ModelConfig cfg;
  cfg.nodes = nodes;
  cfg.spatial_dim = 3;
  cfg.tod_dim = 2;
  cfg.dow_dim = 2;
  cfg.moy_dim = 2;
  cfg.steps_per_day = 24;
  cfg.hidden = 4;
  cfg.diffusion_order = 2;
  cfg.pool_width = 8;
  cfg.pool_blocks = 2;
  cfg.horizon = 3;
  return cfg;
}

Batch random_batch(Index b, Index t, Index n, std::mt19937_64& rng) {
  Batch batch{random_tensor({b, t, n}, rng), random_tensor({b, t, n}, rng), {}};
  for (Index i = 0; i < b; ++i) batch.time.push_back({static_cast<int>(3 * i + 1), static_cast<int>(i % 7), 4});
  return batch;
}

}  // namespace

TEST_SUITE("model") {
  TEST_CASE("graph_conv examples") {
    std::mt19937_64 rng(1);
    Graph g;
    const auto d0 = random_diffusion(3, 0, rng);
    const Tensor u = random_tensor({2, 3, 4}, rng);
    const Tensor w0 = random_tensor({1, 4, 5}, rng);
    const Tensor linear = matmul(g.constant(u), g.constant(w0.reshaped({4, 5}))).value();
    CHECK(graph_conv(g.constant(u), d0, g.constant(w0)).value() == linear);
    const auto d2 = random_diffusion(3, 2, rng);
    const Tensor w2 = random_tensor({3, 4, 5}, rng);
    CHECK((graph_conv(g.constant(Tensor::zeros({2, 3, 4})), d2, g.constant(w2)).value().array() == 0.0).all());
    CHECK_THROWS_AS(graph_conv(g.constant(u), d2, g.constant(w0)), ShapeError);
  }

  TEST_CASE("graph_conv matches the loop oracle") {
    std::mt19937_64 rng(2);
    const auto d = random_diffusion(3, 2, rng);
    for (int rep = 0; rep < 5; ++rep) {
      Graph g;
      const Tensor u = random_tensor({2, 3, 4}, rng);
      const Tensor shared = random_tensor({3, 4, 5}, rng);
      const Tensor per_node = random_tensor({3, 3, 4, 5}, rng);
      const Tensor a = graph_conv(g.constant(u), d, g.constant(shared)).value();
      const Tensor b = graph_conv(g.constant(u), d, g.constant(per_node)).value();
      CHECK((a.array() - conv_oracle(u, d, shared).array()).abs().maxCoeff() < 1e-13);
      CHECK((b.array() - conv_oracle(u, d, per_node).array()).abs().maxCoeff() < 1e-13);
    }
  }

  TEST_CASE("cell_step closed forms") {
    std::mt19937_64 rng(3);
    const auto d = random_diffusion(4, 2, rng);
    const Index depth = 3 * (2 + 3);
    Graph g;
    CellParams zero;
    for (std::size_t i = 0; i < 3; ++i) {
      zero.kernels[i].shared = g.constant(Tensor::zeros({depth, 3}));
      zero.biases[i] = g.constant(Tensor::zeros({3}));
    }
    const Tensor h = random_tensor({2, 4, 3}, rng);
    const Tensor x = random_tensor({2, 4, 2}, rng);
    const Tensor half = cell_step(g.constant(x), g.constant(h), zero, d).value();
    CHECK((half.array() - 0.5 * h.array()).abs().maxCoeff() == 0.0);
    const Tensor none = cell_step(g.constant(x), g.constant(Tensor::zeros({2, 4, 3})), zero, d).value();
    CHECK((none.array() == 0.0).all());
  }

  TEST_CASE("cell_step is a convex combination of the previous state and (-1, 1)") {
    std::mt19937_64 rng(4);
    const auto d = random_diffusion(5, 2, rng);
    for (int rep = 0; rep < 20; ++rep) {
      Graph g;
      CellTensors t = random_cell(2, 5, 3 * (2 + 4), 4, rng);
      for (auto& k : t.shared) k.array() *= 10.0;  // saturate the gates
      const Tensor h = random_tensor({2, 5, 4}, rng, -3, 3);
      const Tensor out = cell_step(g.constant(random_tensor({2, 5, 2}, rng, -3, 3)), g.constant(h), constants(g, t), d).value();
      for (Index i = 0; i < out.size(); ++i) {
        CHECK(out[i] >= std::min(h[i], -1.0));
        CHECK(out[i] <= std::max(h[i], 1.0));
      }
    }
  }

  TEST_CASE("encode equals the unrolled cell and stays inside (-1, 1)") {
    std::mt19937_64 rng(5);
    const auto d = random_diffusion(4, 2, rng);
    Graph g;
    const CellTensors t = random_cell(2, 4, 3 * (2 + 3), 3, rng);
    const CellParams p = constants(g, t);
    const Tensor load = random_tensor({2, 5, 4}, rng, -2, 2);
    const Tensor macro = random_tensor({2, 5, 4}, rng, -2, 2);
    const Tensor got = encode(g.constant(load), g.constant(macro), p, d).value();

    Var h = g.constant(Tensor::zeros({2, 4, 3}));
    for (Index step = 0; step < 5; ++step) {
      Tensor x({2, 4, 2});
      for (Index b = 0; b < 2; ++b)
        for (Index n = 0; n < 4; ++n) {
          x(b, n, 0) = load(b, step, n);
          x(b, n, 1) = macro(b, step, n);
        }
      h = cell_step(g.constant(x), h, p, d);
    }
    CHECK(got == h.value());
    CHECK((got.array().abs() < 1.0).all());
  }

  TEST_CASE("a single input step is one cell step from zero") {
    std::mt19937_64 rng(6);
    const auto d = random_diffusion(3, 1, rng);
    Graph g;
    const CellParams p = constants(g, random_cell(1, 3, 2 * (2 + 2), 2, rng));
    const Tensor load = random_tensor({1, 1, 3}, rng);
    const Tensor macro = random_tensor({1, 1, 3}, rng);
    Tensor x({1, 3, 2});
    for (Index n = 0; n < 3; ++n) {
      x(0, n, 0) = load[n];
      x(0, n, 1) = macro[n];
    }
    const Tensor a = encode(g.constant(load), g.constant(macro), p, d).value();
    const Tensor b = cell_step(g.constant(x), g.constant(Tensor::zeros({1, 3, 2})), p, d).value();
    CHECK(a == b);
  }

  TEST_CASE("encode is equivariant to node permutations") {
    std::mt19937_64 rng(7);
    const Index n = 6;
    const auto d = random_diffusion(n, 2, rng);
    std::vector<Index> perm(n);
    std::iota(perm.begin(), perm.end(), 0);
    std::shuffle(perm.begin(), perm.end(), rng);
    Eigen::MatrixXd pm = Eigen::MatrixXd::Zero(n, n);
    for (Index i = 0; i < n; ++i) pm(i, perm[static_cast<std::size_t>(i)]) = 1.0;
    DiffusionOperator dp;
    for (const auto& a : d.powers) dp.powers.push_back(pm * a * pm.transpose());

    CellTensors t = random_cell(2, n, 3 * (2 + 4), 4, rng);
    CellTensors tp = t;
    for (std::size_t i = 0; i < 3; ++i) tp.per_node[i] = permute_nodes(t.per_node[i], perm, 0);
    const Tensor load = random_tensor({2, 7, n}, rng), macro = random_tensor({2, 7, n}, rng);

    Graph g;
    const Tensor base = encode(g.constant(load), g.constant(macro), constants(g, t), d).value();
    const Tensor moved = encode(g.constant(permute_nodes(load, perm, 2)), g.constant(permute_nodes(macro, perm, 2)),
                                constants(g, tp), dp).value();
    CHECK((moved.array() - permute_nodes(base, perm, 1).array()).abs().maxCoeff() < 1e-9);
  }

  TEST_CASE("predict examples") {
    std::mt19937_64 rng(8);
    Graph g;
    Tensor bias({6}, {1, 1, 2, 2, 3, 3});
    const HeadParams zero{g.constant(Tensor::zeros({4, 6})), g.constant(bias)};
    const auto out = predict(g.constant(random_tensor({2, 3, 4}, rng)), zero, 2);
    CHECK(out.low.shape() == Shape{2, 2, 3});
    CHECK((out.low.value().array() == 1.0).all());
    CHECK((out.median.value().array() == 2.0).all());
    CHECK((out.high.value().array() == 3.0).all());

    const Tensor w = random_tensor({4, 6}, rng);
    const HeadParams head{g.constant(w), g.constant(bias)};
    const auto at_zero = predict(g.constant(Tensor::zeros({2, 3, 4})), head, 2);
    CHECK((at_zero.high.value().array() == 3.0).all());

    const Tensor f = random_tensor({2, 3, 4}, rng);
    const auto res = predict(g.constant(f), head, 2);
    for (Index b = 0; b < 2; ++b)
      for (Index n = 0; n < 3; ++n)
        for (Index t = 0; t < 2; ++t) {
          double m = bias[2 + t];
          for (Index c = 0; c < 4; ++c) m += f(b, n, c) * w(c, 2 + t);
          CHECK(res.median.value()(b, t, n) == doctest::Approx(m).epsilon(1e-14));
        }
    CHECK_THROWS_AS(predict(g.constant(f), head, 3), ShapeError);
  }

  TEST_CASE("forward shapes, determinism and ablations") {
    std::mt19937_64 rng(9);
    const auto d = random_diffusion(5, 2, rng);
    const Batch batch = random_batch(3, 6, 5, rng);
    for (bool pools : {true, false}) {
      for (bool blockwise : {false, true}) {
        ModelConfig cfg = small_config(5);
        cfg.use_pools = pools;
        cfg.blockwise = blockwise;
        Model a(cfg, d, 42), b(cfg, d, 42), c(cfg, d, 43);
        const auto fa = a.forecast(batch);
        CHECK(fa.low.shape() == Shape{3, 3, 5});
        CHECK(fa.median == b.forecast(batch).median);
        CHECK(fa.high == b.forecast(batch).high);
        CHECK_FALSE(fa.median == c.forecast(batch).median);
      }
    }
    ModelConfig cfg = small_config(5);
    CHECK_THROWS_AS(Model(cfg, random_diffusion(4, 2, rng), 1), std::invalid_argument);
    Model m(cfg, d, 1);
    CHECK_THROWS_AS(m.forecast(random_batch(2, 4, 6, rng)), ShapeError);
  }

  TEST_CASE("model gradients match central differences") {
    std::mt19937_64 rng(10);
    const auto d = random_diffusion(4, 2, rng);
    ModelConfig cfg = small_config(4);
    Model model(cfg, d, 3);
    for (Parameter* p : model.parameters()) {
      if (p->name.rfind("bias", 0) == 0 || p->name == "head.bias") p->value = random_tensor(p->value.shape(), rng, -0.3, 0.3);
    }
    const Batch batch = random_batch(2, 4, 4, rng);
    const Tensor y = random_tensor({2, 3, 4}, rng, -2, 2);
    const auto params = model.parameters();
    const auto report = finite_diff_check(
        [&](Graph& g) { return hybrid_loss(g.constant(y), model.forward(g, batch), {}); }, params, 1e-5);
    CHECK(report.max_relative_error < 1e-4);
  }
}
