#pragma once

#include <cstdint>
#include <vector>

#include "skipmid/tensor.hpp"

namespace skipmid {

// Global operation counter. Kernels charge their forward cost while a scope is
// active; the per-operation constants are documented next to each kernel and
// shared with the closed-form estimator in flops.hpp (2 per multiply-accumulate,
// exp=1, division=1, rsqrt=2, data movement free, trig not counted).
class FlopCounter {
 public:
  static void add(std::uint64_t n) {
    if (enabled_) total_ += n;
  }
  static void reset() { total_ = 0; }
  static void enable(bool on) { enabled_ = on; }
  static std::uint64_t total() { return total_; }

  // RAII counting scope.
  struct Scope {
    Scope() {
      FlopCounter::reset();
      FlopCounter::enable(true);
    }
    ~Scope() { FlopCounter::enable(false); }
  };

 private:
  inline static bool enabled_ = false;
  inline static std::uint64_t total_ = 0;
};

enum class Unary { Relu, Clamp01, ClampMin, Exp, Ln, Silu, Square, Scale, Shift };

const char* unary_name(Unary op);

// ---- matrix products (2 flops per MAC) ----
template <typename T>
Tensor<T> matmul(const Tensor<T>& a, const Tensor<T>& b);  // [m,k]x[k,n]
template <typename T>
Tensor<T> matmul_nt(const Tensor<T>& a, const Tensor<T>& b);  // [m,k]x[n,k]^T
template <typename T>
Tensor<T> matmul_tn(const Tensor<T>& a, const Tensor<T>& b);  // [k,m]^T x [k,n]

// ---- elementwise (1 flop per element; silu 5) ----
template <typename T>
Tensor<T> add(const Tensor<T>& a, const Tensor<T>& b);
template <typename T>
Tensor<T> mul(const Tensor<T>& a, const Tensor<T>& b);
template <typename T>
Tensor<T> map_unary(const Tensor<T>& x, Unary op, T c = T(0));
// Elementwise d(out)/d(in); exp reuses the stored output, the rest use x.
template <typename T>
Tensor<T> unary_derivative(const Tensor<T>& x, const Tensor<T>& out, Unary op, T c);

// ---- rows and columns ----
// out[i][j] = x[i][j] + v[j] (numel adds)
template <typename T>
Tensor<T> add_row_broadcast(const Tensor<T>& x, const Tensor<T>& v);
// out[i][j] = x[i][j] * c[i] (numel muls); c is [R] or [R,1]
template <typename T>
Tensor<T> mul_col_broadcast(const Tensor<T>& x, const Tensor<T>& c);
template <typename T>
Tensor<T> slice_cols(const Tensor<T>& x, std::int64_t offset, std::int64_t width);
template <typename T>
Tensor<T> concat_cols(const std::vector<const Tensor<T>*>& parts);
template <typename T>
Tensor<T> reshape(const Tensor<T>& x, std::vector<std::int64_t> shape);

// Row-wise softmax with optional additive mask (same shape, entries finite or
// -inf; -inf excludes the entry). Entries of x itself may also be -inf.
// A fully excluded row is a contract error. Cost: 4 flops per finite entry.
template <typename T>
Tensor<T> softmax_rows(const Tensor<T>& x, const Tensor<T>* additive_mask = nullptr);

// out[i] = table[ids[i]] (free)
template <typename T>
Tensor<T> gather_rows(const Tensor<T>& table, const std::vector<std::int64_t>& ids);
// out = base; out[ids[q]] += rows[q] (numel(rows) adds)
template <typename T>
Tensor<T> scatter_add_rows(const Tensor<T>& base, const std::vector<std::int64_t>& ids,
                           const Tensor<T>& rows);

// x / sqrt(mean(x^2)+eps) * weight per row. Cost: 7 per element (documented
// constant shared with the closed-form estimator).
template <typename T>
Tensor<T> rmsnorm(const Tensor<T>& x, const Tensor<T>& weight, T eps);

// Rotates consecutive pairs within each head slot of width d_head by
// pos * theta^(-2t/d_head). x is [N, n_heads*d_head]; one angle table per row
// is shared across heads. Cost: 6 per pair (trig not counted).
template <typename T>
Tensor<T> rope(const Tensor<T>& x, const std::vector<std::int64_t>& positions, double theta,
               std::int64_t d_head);

// Causal attention scores: out[qi][j] = scale * dot(q[qi], k[j]) for
// j <= q_pos[qi], -inf elsewhere (not computed). Cost: (2*dh+1) per computed
// score. q rows carry their original sequence positions so that a subset of
// queries (skip mode) can attend against the full key set.
template <typename T>
Tensor<T> causal_scores(const Tensor<T>& q, const Tensor<T>& k,
                        const std::vector<std::int64_t>& q_pos, T scale);

// out[qi] = sum_{j <= q_pos[qi]} p[qi][j] * v[j]. Cost: 2*dh per (row, visible key).
template <typename T>
Tensor<T> causal_weighted_sum(const Tensor<T>& p, const Tensor<T>& v,
                              const std::vector<std::int64_t>& q_pos);

// ---- reductions ----
template <typename T>
Tensor<T> sum_all(const Tensor<T>& x);  // -> [1], numel adds

// Mean over rows of -log softmax(logits)[target], stable via log-sum-exp.
// probs_out, when given, receives softmax(logits) for reuse in backward.
// Cost: 3V+4 per row.
template <typename T>
Tensor<T> cross_entropy(const Tensor<T>& logits, const std::vector<std::int64_t>& targets,
                        Tensor<T>* probs_out = nullptr);

}  // namespace skipmid
