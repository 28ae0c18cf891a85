#pragma once

// Memory-augmented spatiotemporal graph network.
//
// A gated recurrent cell whose three gates are diffusion graph convolutions.
// Gate kernels are generated per sample from the temporal embedding and per
// node from the spatial embedding, then fused additively:
//   Theta[b, n] = W_t[b] + W_s[n].
// After encoding, the last hidden state is joined with a memory feature
// theta_s[n] + theta_t[b] read from the shared parameter pools, and an affine
// head emits the low / median / high quantile trajectories.

#include "quantgrid/autodiff.hpp"
#include "quantgrid/graphs.hpp"
#include "quantgrid/memory.hpp"

#include <array>
#include <cstdint>
#include <span>
#include <vector>

namespace quantgrid {

struct ModelConfig {
  Index nodes = 20;
  Index input_channels = 2;  // own load + regional context
  Index spatial_dim = 8;
  Index tod_dim = 8;
  Index dow_dim = 4;
  Index moy_dim = 4;
  int steps_per_day = 48;
  Index hidden = 8;
  int diffusion_order = 2;
  Index pool_width = 16;
  Index pool_blocks = 4;
  Index horizon = 12;
  bool use_pools = true;
  bool blockwise = false;
  Similarity similarity = Similarity::Cosine;

  Index temporal_dim() const { return tod_dim + dow_dim + moy_dim; }
  KernelShape kernel() const { return {diffusion_order + 1, input_channels + hidden, hidden}; }
  void validate() const;
};

/// Kernel of one gate. Any subset of the three parts may be set; they are summed.
struct GateKernel {
  Var per_sample;  // [B, powers*channels, hidden]
  Var per_node;    // [N, powers*channels, hidden]
  Var shared;      // [powers*channels, hidden]
};

enum Gate : std::size_t { kReset = 0, kUpdate = 1, kCandidate = 2 };

struct CellParams {
  std::array<GateKernel, 3> kernels;
  std::array<Var, 3> biases;  // each [hidden]
};

struct HeadParams {
  Var weight;  // [features, 3 * horizon]
  Var bias;    // [3 * horizon]
};

struct QuantileOutput {
  Var low;     // [B, horizon, N]
  Var median;
  Var high;
};

/// Diffusion powers A^0..A^K as graph constants.
std::vector<Var> diffusion_constants(Graph& g, const DiffusionOperator& diffusion);

/// [B, N, C] -> [B, N, (K+1) C], block k holding A^k U.
Var diffuse(Var u, std::span<const Var> powers);

Var apply_kernel(Var diffused, const GateKernel& kernel);

/// sum_k A^k U W_k with W of shape [K+1, C, h] (shared) or [N, K+1, C, h] (per node).
Var graph_conv(Var u, const DiffusionOperator& diffusion, Var kernel);
Var graph_conv(Var u, std::span<const Var> powers, const GateKernel& kernel);

/// One recurrent step. x_t: [B, N, c_in], h_prev: [B, N, h].
Var cell_step(Var x_t, Var h_prev, const CellParams& params, std::span<const Var> powers);
Var cell_step(Var x_t, Var h_prev, const CellParams& params, const DiffusionOperator& diffusion);

/// Runs the cell over time from a zero state. load, macro: [B, T, N].
Var encode(Var load, Var macro, const CellParams& params, std::span<const Var> powers);
Var encode(Var load, Var macro, const CellParams& params, const DiffusionOperator& diffusion);

/// Affine head on [B, N, F] features split into three [B, horizon, N] outputs.
QuantileOutput predict(Var features, const HeadParams& head, Index horizon);

/// Model inputs for B samples.
struct Batch {
  Tensor load;   // [B, T_in, N]
  Tensor macro;  // [B, T_in, N]
  std::vector<TemporalIndex> time;  // calendar index of each sample's last input step

  Index size() const { return load.dim(0); }
};

struct QuantileForecast {
  Tensor low;     // [B, horizon, N]
  Tensor median;
  Tensor high;
};

class Model {
 public:
  Model(ModelConfig config, DiffusionOperator diffusion, std::uint64_t seed);

  const ModelConfig& config() const { return config_; }
  const DiffusionOperator& diffusion() const { return diffusion_; }

  QuantileOutput forward(Graph& g, const Batch& batch);
  QuantileForecast forecast(const Batch& batch);

  /// Trainable parameters in a fixed order.
  std::vector<Parameter*> parameters();
  std::vector<const Parameter*> parameters() const;
  Index parameter_count() const;

  /// Recomputes pool centroids; required after the pools change.
  void refresh_centroids();

  ParameterPool& spatial_memory() { return spatial_memory_; }
  ParameterPool& temporal_memory() { return temporal_memory_; }

 private:
  ModelConfig config_;
  DiffusionOperator diffusion_;

  Parameter spatial_embedding_;
  TemporalEmbeddingTables temporal_;
  std::array<Parameter, 3> spatial_kernel_pools_;
  std::array<Parameter, 3> temporal_kernel_pools_;
  std::array<Parameter, 3> static_kernels_;
  std::array<Parameter, 3> biases_;
  ParameterPool spatial_memory_;
  ParameterPool temporal_memory_;
  Parameter head_weight_;
  Parameter head_bias_;
};

}  // namespace quantgrid
