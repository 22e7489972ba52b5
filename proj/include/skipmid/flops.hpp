#pragma once

#include <cstdint>
#include <vector>

#include "skipmid/config.hpp"
#include "skipmid/gates.hpp"

namespace skipmid {

// Idealized forward cost and parameter accounting for one sequence. Skipped
// tokens incur zero block cost and skipped keys zero attention cost; the gate
// probes themselves are not charged, so z = 0 reproduces the dense count
// exactly.
struct FlopsReport {
  std::int64_t block_params = 0;  // parameters in one Transformer block
  std::int64_t total_params = 0;
  std::int64_t gating_params = 0;  // (d+1) * L/2 when gated, else 0
  double dense_flops = 0.0;
  double gated_flops = 0.0;
  double active_param_reduction = 0.0;
  std::vector<double> layer_sparsity;  // L entries; empty for a dense model
  double overall_sparsity = 0.0;
};

// 2 d^2 + 2 d d_kv + 3 d hidden + 4 d (attention, FFN, sandwich norms).
std::int64_t block_params(const TransformerConfig& cfg);
std::int64_t gating_param_count(const TransformerConfig& cfg);
std::int64_t total_param_count(const TransformerConfig& cfg, bool gated);

// 2 * N_B * sum of per-gate-layer sparsities (L/2 entries).
double active_param_reduction(std::int64_t n_b, const std::vector<double>& z_gate_layers);

// Closed-form forward FLOPs mirroring the instrumented kernel charges:
// 2 per multiply-accumulate, 7 per normalized element, 4 per softmax entry,
// 5 per silu element, 6 per rotated pair, 1 per add/mul element; embedding
// gather free; the output head is always charged. `z` is empty (dense) or L
// mirrored per-layer sparsities; `visible_pairs` optionally gives the actual
// per-layer count of surviving (query, key) pairs per sequence, otherwise
// (1-z)^2 * N(N+1)/2 is assumed.
double forward_flops(const TransformerConfig& cfg, std::int64_t n_tokens,
                     const std::vector<double>& z = {},
                     const std::vector<double>& visible_pairs = {});

// Mean per-sequence count of causal pairs (i, j), j <= i, whose query i and
// key j both survive (gate != 0), per layer, from evaluated gate traces.
template <typename T>
std::vector<double> mean_visible_pairs(const std::vector<GateTrace<T>>& traces);

FlopsReport make_flops_report(const TransformerConfig& cfg, bool gated, std::int64_t n_tokens,
                              const std::vector<double>& z = {},
                              const std::vector<double>& visible_pairs = {});

}  // namespace skipmid
