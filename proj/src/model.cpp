#include "quantgrid/model.hpp"

#include <cmath>
#include <stdexcept>

namespace quantgrid {

namespace {

const char* gate_name(std::size_t gate) {
  static constexpr const char* names[] = {"reset", "update", "candidate"};
  return names[gate];
}

Var time_slice(Var series, Index t) {
  // [B, T, N] -> [B, N, 1]
  const Shape& s = series.shape();
  return reshape(slice(series, 1, t, t + 1), {s[0], s[2], 1});
}

}  // namespace

void ModelConfig::validate() const {
  auto positive = [](Index v, const char* what) {
    if (v <= 0) throw std::invalid_argument(std::string("model.") + what + " must be positive");
  };
  positive(nodes, "nodes");
  positive(input_channels, "input_channels");
  positive(spatial_dim, "spatial_dim");
  positive(tod_dim, "tod_dim");
  positive(dow_dim, "dow_dim");
  positive(moy_dim, "moy_dim");
  positive(hidden, "hidden");
  positive(pool_width, "pool_width");
  positive(pool_blocks, "pool_blocks");
  positive(horizon, "horizon");
  if (diffusion_order < 0) throw std::invalid_argument("model.diffusion_order must be non-negative");
  if (pool_width % pool_blocks != 0) throw std::invalid_argument("model.pool_width must be divisible by pool_blocks");
  if (steps_per_day <= 0 || 1440 % steps_per_day != 0) {
    throw std::invalid_argument("model.steps_per_day must evenly divide 1440");
  }
}

std::vector<Var> diffusion_constants(Graph& g, const DiffusionOperator& diffusion) {
  std::vector<Var> out;
  for (const auto& p : diffusion.powers) out.push_back(g.constant(Tensor::from_matrix(p)));
  return out;
}

Var diffuse(Var u, std::span<const Var> powers) {
  if (u.shape().size() != 3) throw ShapeError("diffuse expects [B, N, C], got " + to_string(u.shape()));
  std::vector<Var> blocks;
  blocks.reserve(powers.size());
  blocks.push_back(u);
  for (std::size_t k = 1; k < powers.size(); ++k) blocks.push_back(matmul(powers[k], u));
  return concat_last(blocks);
}

Var apply_kernel(Var diffused, const GateKernel& kernel) {
  Var z;
  auto accumulate = [&z](Var term) { z = z.valid() ? add(z, term) : term; };
  if (kernel.shared.valid()) accumulate(matmul(diffused, kernel.shared));
  if (kernel.per_sample.valid()) accumulate(matmul(diffused, kernel.per_sample));
  if (kernel.per_node.valid()) accumulate(contract_per_node(diffused, kernel.per_node));
  if (!z.valid()) throw std::invalid_argument("gate kernel has no parts");
  return z;
}

Var graph_conv(Var u, std::span<const Var> powers, const GateKernel& kernel) {
  return apply_kernel(diffuse(u, powers), kernel);
}

Var graph_conv(Var u, const DiffusionOperator& diffusion, Var kernel) {
  const Shape& w = kernel.shape();
  const auto powers_count = static_cast<Index>(diffusion.powers.size());
  GateKernel gk;
  if (w.size() == 3 && w[0] == powers_count) {
    gk.shared = reshape(kernel, {w[0] * w[1], w[2]});
  } else if (w.size() == 4 && w[1] == powers_count) {
    gk.per_node = reshape(kernel, {w[0], w[1] * w[2], w[3]});
  } else {
    throw ShapeError("graph_conv kernel " + to_string(w) + " does not match " + std::to_string(powers_count) +
                     " diffusion powers");
  }
  auto powers = diffusion_constants(u.graph(), diffusion);
  return graph_conv(u, powers, gk);
}

Var cell_step(Var x_t, Var h_prev, const CellParams& params, std::span<const Var> powers) {
  const Var gate_input = diffuse(concat_last({x_t, h_prev}), powers);
  const Var reset = sigmoid(apply_kernel(gate_input, params.kernels[kReset]) + params.biases[kReset]);
  const Var update = sigmoid(apply_kernel(gate_input, params.kernels[kUpdate]) + params.biases[kUpdate]);
  const Var candidate_input = diffuse(concat_last({x_t, reset * h_prev}), powers);
  const Var candidate = tanh(apply_kernel(candidate_input, params.kernels[kCandidate]) + params.biases[kCandidate]);
  return update * h_prev + (1.0 - update) * candidate;
}

Var cell_step(Var x_t, Var h_prev, const CellParams& params, const DiffusionOperator& diffusion) {
  auto powers = diffusion_constants(x_t.graph(), diffusion);
  return cell_step(x_t, h_prev, params, powers);
}

Var encode(Var load, Var macro, const CellParams& params, std::span<const Var> powers) {
  const Shape& s = load.shape();
  if (s.size() != 3 || macro.shape() != s) {
    throw ShapeError("encode expects matching [B, T, N] inputs, got " + to_string(s) + " and " +
                     to_string(macro.shape()));
  }
  const Index hidden = params.biases[kReset].shape().back();
  Var h = load.graph().constant(Tensor::zeros({s[0], s[2], hidden}));
  for (Index t = 0; t < s[1]; ++t) {
    const Var x_t = concat_last({time_slice(load, t), time_slice(macro, t)});
    h = cell_step(x_t, h, params, powers);
  }
  return h;
}

Var encode(Var load, Var macro, const CellParams& params, const DiffusionOperator& diffusion) {
  auto powers = diffusion_constants(load.graph(), diffusion);
  return encode(load, macro, params, powers);
}

QuantileOutput predict(Var features, const HeadParams& head, Index horizon) {
  const Shape& w = head.weight.shape();
  if (w.size() != 2 || w[1] != 3 * horizon || features.shape().back() != w[0]) {
    throw ShapeError("prediction head " + to_string(w) + " does not map " + to_string(features.shape()) + " to 3 x " +
                     std::to_string(horizon) + " outputs");
  }
  const Var out = matmul(features, head.weight) + head.bias;  // [B, N, 3 * horizon]
  auto part = [&](Index i) { return permute(slice(out, -1, i * horizon, (i + 1) * horizon), {0, 2, 1}); };
  return {part(0), part(1), part(2)};
}

Model::Model(ModelConfig config, DiffusionOperator diffusion, std::uint64_t seed)
    : config_(config), diffusion_(std::move(diffusion)) {
  config_.validate();
  if (diffusion_.powers.empty() || diffusion_.nodes() != config_.nodes ||
      diffusion_.order() != config_.diffusion_order) {
    throw std::invalid_argument("diffusion operator does not match the model configuration");
  }
  std::mt19937_64 rng(seed);
  const KernelShape kernel = config_.kernel();
  const Index depth = kernel.powers * kernel.channels;
  const Index dt = config_.temporal_dim();

  if (config_.use_pools) {
    spatial_embedding_ = Parameter("spatial_embedding",
                                   uniform_init({config_.nodes, config_.spatial_dim}, config_.spatial_dim, rng));
    temporal_ = TemporalEmbeddingTables::make(config_.steps_per_day, config_.tod_dim, config_.dow_dim,
                                              config_.moy_dim, rng);
    for (std::size_t gte = 0; gte < 3; ++gte) {
      const std::string g = gate_name(gte);
      spatial_kernel_pools_[gte] = Parameter("kernel_pool.spatial." + g,
                                             uniform_init({config_.spatial_dim, kernel.size()}, config_.spatial_dim, rng));
      temporal_kernel_pools_[gte] = Parameter("kernel_pool.temporal." + g, uniform_init({dt, kernel.size()}, dt, rng));
    }
    spatial_memory_ = ParameterPool::uniform("memory.spatial", config_.spatial_dim, config_.pool_width,
                                             config_.pool_blocks, rng);
    temporal_memory_ = ParameterPool::uniform("memory.temporal", dt, config_.pool_width, config_.pool_blocks, rng);
  } else {
    for (std::size_t gte = 0; gte < 3; ++gte) {
      static_kernels_[gte] = Parameter(std::string("kernel.static.") + gate_name(gte),
                                       uniform_init({depth, config_.hidden}, depth, rng));
    }
  }
  for (std::size_t gte = 0; gte < 3; ++gte) {
    biases_[gte] = Parameter(std::string("bias.") + gate_name(gte), Tensor::zeros({config_.hidden}));
  }
  const Index features = config_.hidden + (config_.use_pools ? config_.pool_width : 0);
  head_weight_ = Parameter("head.weight", uniform_init({features, 3 * config_.horizon}, features, rng));
  head_bias_ = Parameter("head.bias", Tensor::zeros({3 * config_.horizon}));
}

std::vector<Parameter*> Model::parameters() {
  std::vector<Parameter*> out;
  if (config_.use_pools) {
    out.push_back(&spatial_embedding_);
    out.push_back(&temporal_.time_of_day);
    out.push_back(&temporal_.day_of_week);
    out.push_back(&temporal_.month_of_year);
    for (auto& p : spatial_kernel_pools_) out.push_back(&p);
    for (auto& p : temporal_kernel_pools_) out.push_back(&p);
    out.push_back(&spatial_memory_.values());
    out.push_back(&temporal_memory_.values());
  } else {
    for (auto& p : static_kernels_) out.push_back(&p);
  }
  for (auto& p : biases_) out.push_back(&p);
  out.push_back(&head_weight_);
  out.push_back(&head_bias_);
  return out;
}

std::vector<const Parameter*> Model::parameters() const {
  auto mut = const_cast<Model*>(this)->parameters();
  return {mut.begin(), mut.end()};
}

Index Model::parameter_count() const {
  Index n = 0;
  for (const Parameter* p : parameters()) n += p->value.size();
  return n;
}

void Model::refresh_centroids() {
  if (!config_.use_pools) return;
  spatial_memory_.refresh_centroids();
  temporal_memory_.refresh_centroids();
}

QuantileOutput Model::forward(Graph& g, const Batch& batch) {
  const Index b = batch.size();
  const Index n = config_.nodes;
  if (batch.load.rank() != 3 || batch.load.dim(2) != n || batch.macro.shape() != batch.load.shape() ||
      static_cast<Index>(batch.time.size()) != b) {
    throw ShapeError("batch " + to_string(batch.load.shape()) + " does not match a model over " + std::to_string(n) +
                     " nodes");
  }
  const KernelShape kernel = config_.kernel();
  const Index depth = kernel.powers * kernel.channels;
  const auto powers = diffusion_constants(g, diffusion_);

  CellParams cell;
  Var memory_feature;
  if (config_.use_pools) {
    const Var e_s = g.parameter(spatial_embedding_);
    const Var e_t = temporal_embedding(g, temporal_, batch.time);
    for (std::size_t gte = 0; gte < 3; ++gte) {
      cell.kernels[gte].per_node =
          reshape(matmul(e_s, g.parameter(spatial_kernel_pools_[gte])), {n, depth, kernel.hidden});
      cell.kernels[gte].per_sample =
          reshape(matmul(e_t, g.parameter(temporal_kernel_pools_[gte])), {b, depth, kernel.hidden});
    }
    Var theta_s = matmul(e_s, g.parameter(spatial_memory_.values()));
    Var theta_t = matmul(e_t, g.parameter(temporal_memory_.values()));
    if (config_.blockwise) {
      const Tensor mask_s = Tensor::from_matrix(block_mask(e_s.value().matrix(), spatial_memory_, config_.similarity));
      const Tensor mask_t = Tensor::from_matrix(block_mask(e_t.value().matrix(), temporal_memory_, config_.similarity));
      theta_s = theta_s * g.constant(mask_s);
      theta_t = theta_t * g.constant(mask_t);
    }
    memory_feature = reshape(theta_s, {1, n, config_.pool_width}) + reshape(theta_t, {b, 1, config_.pool_width});
  } else {
    for (std::size_t gte = 0; gte < 3; ++gte) cell.kernels[gte].shared = g.parameter(static_kernels_[gte]);
  }
  for (std::size_t gte = 0; gte < 3; ++gte) cell.biases[gte] = g.parameter(biases_[gte]);

  const Var hidden = encode(g.constant(batch.load), g.constant(batch.macro), cell, powers);
  const Var features = memory_feature.valid() ? concat_last({hidden, memory_feature}) : hidden;
  return predict(features, {g.parameter(head_weight_), g.parameter(head_bias_)}, config_.horizon);
}

QuantileForecast Model::forecast(const Batch& batch) {
  Graph g;
  const auto out = forward(g, batch);
  return {out.low.value(), out.median.value(), out.high.value()};
}

}  // namespace quantgrid
