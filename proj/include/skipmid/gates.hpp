#pragma once

#include <vector>

#include "skipmid/tensor.hpp"

namespace skipmid {

// Per-sequence record of the skipping mechanism. Layers 0..L/2-1 carry the
// soft masks and their running sums; the gate matrix covers all L layers with
// the mirrored second half, g[i][l] == g[i][L-l-1].
template <typename T>
struct GateTrace {
  Tensor<T> soft_mask;    // [N, L/2], s >= 0
  Tensor<T> accumulated;  // [N, L/2], running sum of s, non-decreasing
  Tensor<T> gates;        // [N, L], 1 - clamp01(accumulated) mirrored
  std::vector<double> layer_sparsity;  // L entries: fraction of gates exactly 0
};

// Pure gate arithmetic: soft_mask [N, L/2] -> full trace. The gate is
// g = 1 - clamp01(S) with S the prefix sum of s over gate layers; a token
// skips layer l once S reaches 1.
template <typename T>
GateTrace<T> gate_algebra(const Tensor<T>& soft_mask, std::int64_t n_layers);

// Fraction of exactly-zero gates per layer plus the overall mean, pooled over
// several traces (an evaluation set).
struct SparsityReport {
  std::vector<double> layer_sparsity;
  double overall = 0.0;
};

template <typename T>
SparsityReport pool_sparsity(const std::vector<GateTrace<T>>& traces);

}  // namespace skipmid
