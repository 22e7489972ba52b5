#pragma once

#include <cstdint>
#include <functional>
#include <vector>

#include "skipmid/kernels.hpp"
#include "skipmid/tensor.hpp"

namespace skipmid {

// Handle to a node on a Tape. Only valid for the tape that produced it.
template <typename T>
struct Var {
  std::int64_t id = -1;
  bool valid() const { return id >= 0; }
};

// Reverse-mode autodiff tape. Operations record their output value plus a
// backward closure; backward() replays closures in reverse creation order
// with fixed-order accumulation loops, so gradients are bitwise reproducible.
// A tape lives for one forward/backward and is then discarded.
template <typename T>
class Tape {
 public:
  Var<T> leaf(Tensor<T> value, bool needs_grad);
  Var<T> constant(Tensor<T> value) { return leaf(std::move(value), false); }

  const Tensor<T>& value(Var<T> v) const;
  // Gradient of v; allocates zeros on first access.
  Tensor<T>& grad(Var<T> v);
  bool touched(Var<T> v) const;
  std::int64_t size() const { return static_cast<std::int64_t>(nodes_.size()); }

  Var<T> matmul(Var<T> a, Var<T> b);
  Var<T> matmul_nt(Var<T> a, Var<T> b);
  Var<T> add(Var<T> a, Var<T> b);
  Var<T> mul(Var<T> a, Var<T> b);
  Var<T> unary(Var<T> x, Unary op, T c = T(0));
  Var<T> add_row_broadcast(Var<T> x, Var<T> v);
  Var<T> mul_col_broadcast(Var<T> x, Var<T> c);
  Var<T> slice_cols(Var<T> x, std::int64_t offset, std::int64_t width);
  Var<T> concat_cols(const std::vector<Var<T>>& parts);
  Var<T> reshape(Var<T> x, std::vector<std::int64_t> shape);
  Var<T> softmax_rows(Var<T> x);
  Var<T> gather_rows(Var<T> x, std::vector<std::int64_t> ids);
  Var<T> scatter_add_rows(Var<T> base, std::vector<std::int64_t> ids, Var<T> rows);
  Var<T> rmsnorm(Var<T> x, Var<T> weight, T eps);
  Var<T> rope(Var<T> x, std::vector<std::int64_t> positions, double theta, std::int64_t d_head);
  Var<T> causal_scores(Var<T> q, Var<T> k, std::vector<std::int64_t> q_pos, T scale);
  Var<T> causal_weighted_sum(Var<T> p, Var<T> v, std::vector<std::int64_t> q_pos);
  Var<T> sum_all(Var<T> x);
  Var<T> cross_entropy(Var<T> logits, std::vector<std::int64_t> targets);

  // Seeds d(loss)/d(loss) = 1 at a scalar node and runs the reverse sweep.
  void backward(Var<T> loss);
  // Seeds an arbitrary cotangent at any node instead.
  void backward_seeded(Var<T> out, const Tensor<T>& cotangent);
  // Adds a cotangent without sweeping; stack several seeds, then call
  // run_backward() once. A tape can only be swept once.
  void seed(Var<T> out, const Tensor<T>& cotangent);
  void run_backward();

 private:
  struct Node {
    Tensor<T> value;
    Tensor<T> grad;
    std::function<void(Tape<T>&)> backward;
    bool needs_grad = false;
    bool touched = false;
  };

  Node& node(Var<T> v);
  const Node& node(Var<T> v) const;
  Var<T> record(Tensor<T> value, bool needs_grad, std::function<void(Tape<T>&)> backward);
  void sweep();

  std::vector<Node> nodes_;
  bool swept_ = false;
};

}  // namespace skipmid
