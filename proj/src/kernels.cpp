#include "skipmid/kernels.hpp"

#include <cmath>
#include <limits>

namespace skipmid {

namespace {

template <typename T>
void require_rank2(const Tensor<T>& t, const char* op) {
  if (t.rank() != 2) {
    throw ContractError(std::string(op) + ": expected rank-2 tensor, got " + t.shape_str());
  }
}

template <typename T>
void require_same_shape(const Tensor<T>& a, const Tensor<T>& b, const char* op) {
  if (!a.same_shape(b)) {
    throw ContractError(std::string(op) + ": shape mismatch " + a.shape_str() + " vs " +
                        b.shape_str());
  }
}

template <typename T>
T neg_inf() {
  return -std::numeric_limits<T>::infinity();
}

}  // namespace

const char* unary_name(Unary op) {
  switch (op) {
    case Unary::Relu: return "relu";
    case Unary::Clamp01: return "clamp01";
    case Unary::ClampMin: return "clamp_min";
    case Unary::Exp: return "exp";
    case Unary::Ln: return "ln";
    case Unary::Silu: return "silu";
    case Unary::Square: return "square";
    case Unary::Scale: return "scale";
    case Unary::Shift: return "shift";
  }
  return "?";
}

template <typename T>
Tensor<T> matmul(const Tensor<T>& a, const Tensor<T>& b) {
  require_rank2(a, "matmul");
  require_rank2(b, "matmul");
  if (a.dim(1) != b.dim(0)) {
    throw ContractError("matmul: inner dimensions disagree: " + a.shape_str() + " x " +
                        b.shape_str());
  }
  const std::int64_t m = a.dim(0), k = a.dim(1), n = b.dim(1);
  Tensor<T> out({m, n});
  const T* pa = a.data();
  const T* pb = b.data();
  T* pc = out.data();
  for (std::int64_t i = 0; i < m; ++i) {
    T* c = pc + i * n;
    for (std::int64_t kk = 0; kk < k; ++kk) {
      const T av = pa[i * k + kk];
      const T* brow = pb + kk * n;
      for (std::int64_t j = 0; j < n; ++j) c[j] += av * brow[j];
    }
  }
  FlopCounter::add(static_cast<std::uint64_t>(2 * m * n * k));
  return out;
}

template <typename T>
Tensor<T> matmul_nt(const Tensor<T>& a, const Tensor<T>& b) {
  require_rank2(a, "matmul_nt");
  require_rank2(b, "matmul_nt");
  if (a.dim(1) != b.dim(1)) {
    throw ContractError("matmul_nt: inner dimensions disagree: " + a.shape_str() + " x " +
                        b.shape_str() + "^T");
  }
  const std::int64_t m = a.dim(0), k = a.dim(1), n = b.dim(0);
  Tensor<T> out({m, n});
  // Four fixed accumulator lanes break the serial reduction dependency while
  // keeping the summation order identical on every run.
  const std::int64_t k4 = k - k % 4;
  for (std::int64_t i = 0; i < m; ++i) {
    const T* arow = a.data() + i * k;
    T* c = out.data() + i * n;
    for (std::int64_t j = 0; j < n; ++j) {
      const T* brow = b.data() + j * k;
      T a0 = T(0), a1 = T(0), a2 = T(0), a3 = T(0);
      for (std::int64_t kk = 0; kk < k4; kk += 4) {
        a0 += arow[kk] * brow[kk];
        a1 += arow[kk + 1] * brow[kk + 1];
        a2 += arow[kk + 2] * brow[kk + 2];
        a3 += arow[kk + 3] * brow[kk + 3];
      }
      T acc = (a0 + a1) + (a2 + a3);
      for (std::int64_t kk = k4; kk < k; ++kk) acc += arow[kk] * brow[kk];
      c[j] = acc;
    }
  }
  FlopCounter::add(static_cast<std::uint64_t>(2 * m * n * k));
  return out;
}

template <typename T>
Tensor<T> matmul_tn(const Tensor<T>& a, const Tensor<T>& b) {
  require_rank2(a, "matmul_tn");
  require_rank2(b, "matmul_tn");
  if (a.dim(0) != b.dim(0)) {
    throw ContractError("matmul_tn: inner dimensions disagree: " + a.shape_str() + "^T x " +
                        b.shape_str());
  }
  const std::int64_t k = a.dim(0), m = a.dim(1), n = b.dim(1);
  Tensor<T> out({m, n});
  for (std::int64_t kk = 0; kk < k; ++kk) {
    const T* arow = a.data() + kk * m;
    const T* brow = b.data() + kk * n;
    for (std::int64_t i = 0; i < m; ++i) {
      const T av = arow[i];
      T* c = out.data() + i * n;
      for (std::int64_t j = 0; j < n; ++j) c[j] += av * brow[j];
    }
  }
  FlopCounter::add(static_cast<std::uint64_t>(2 * m * n * k));
  return out;
}

template <typename T>
Tensor<T> add(const Tensor<T>& a, const Tensor<T>& b) {
  require_same_shape(a, b, "add");
  Tensor<T> out(a.shape());
  const std::int64_t n = a.numel();
  for (std::int64_t i = 0; i < n; ++i) out.at(i) = a.at(i) + b.at(i);
  FlopCounter::add(static_cast<std::uint64_t>(n));
  return out;
}

template <typename T>
Tensor<T> mul(const Tensor<T>& a, const Tensor<T>& b) {
  require_same_shape(a, b, "mul");
  Tensor<T> out(a.shape());
  const std::int64_t n = a.numel();
  for (std::int64_t i = 0; i < n; ++i) out.at(i) = a.at(i) * b.at(i);
  FlopCounter::add(static_cast<std::uint64_t>(n));
  return out;
}

template <typename T>
Tensor<T> map_unary(const Tensor<T>& x, Unary op, T c) {
  Tensor<T> out(x.shape());
  const std::int64_t n = x.numel();
  std::uint64_t per_element = 1;
  switch (op) {
    case Unary::Relu:
      for (std::int64_t i = 0; i < n; ++i) out.at(i) = x.at(i) > T(0) ? x.at(i) : T(0);
      break;
    case Unary::Clamp01:
      for (std::int64_t i = 0; i < n; ++i) {
        const T v = x.at(i);
        out.at(i) = v < T(0) ? T(0) : (v > T(1) ? T(1) : v);
      }
      break;
    case Unary::ClampMin:
      for (std::int64_t i = 0; i < n; ++i) out.at(i) = x.at(i) > c ? x.at(i) : c;
      break;
    case Unary::Exp:
      for (std::int64_t i = 0; i < n; ++i) out.at(i) = std::exp(x.at(i));
      break;
    case Unary::Ln:
      for (std::int64_t i = 0; i < n; ++i) {
        if (!(x.at(i) > T(0))) {
          throw ContractError("ln: non-positive element " + std::to_string(x.at(i)));
        }
        out.at(i) = std::log(x.at(i));
      }
      break;
    case Unary::Silu:
      // x * sigmoid(x): exp + add + 2 div-muls, documented as 5.
      per_element = 5;
      for (std::int64_t i = 0; i < n; ++i) {
        const T v = x.at(i);
        out.at(i) = v / (T(1) + std::exp(-v));
      }
      break;
    case Unary::Square:
      for (std::int64_t i = 0; i < n; ++i) out.at(i) = x.at(i) * x.at(i);
      break;
    case Unary::Scale:
      for (std::int64_t i = 0; i < n; ++i) out.at(i) = x.at(i) * c;
      break;
    case Unary::Shift:
      for (std::int64_t i = 0; i < n; ++i) out.at(i) = x.at(i) + c;
      break;
  }
  FlopCounter::add(static_cast<std::uint64_t>(n) * per_element);
  return out;
}

template <typename T>
Tensor<T> unary_derivative(const Tensor<T>& x, const Tensor<T>& out, Unary op, T c) {
  Tensor<T> d(x.shape());
  const std::int64_t n = x.numel();
  switch (op) {
    case Unary::Relu:
      // relu'(0) = 0 by convention.
      for (std::int64_t i = 0; i < n; ++i) d.at(i) = x.at(i) > T(0) ? T(1) : T(0);
      break;
    case Unary::Clamp01:
      // 1 on the open interval (0,1), 0 at and outside the boundaries.
      for (std::int64_t i = 0; i < n; ++i)
        d.at(i) = (x.at(i) > T(0) && x.at(i) < T(1)) ? T(1) : T(0);
      break;
    case Unary::ClampMin:
      for (std::int64_t i = 0; i < n; ++i) d.at(i) = x.at(i) > c ? T(1) : T(0);
      break;
    case Unary::Exp:
      for (std::int64_t i = 0; i < n; ++i) d.at(i) = out.at(i);
      break;
    case Unary::Ln:
      for (std::int64_t i = 0; i < n; ++i) d.at(i) = T(1) / x.at(i);
      break;
    case Unary::Silu:
      for (std::int64_t i = 0; i < n; ++i) {
        const T s = T(1) / (T(1) + std::exp(-x.at(i)));
        d.at(i) = s * (T(1) + x.at(i) * (T(1) - s));
      }
      break;
    case Unary::Square:
      for (std::int64_t i = 0; i < n; ++i) d.at(i) = T(2) * x.at(i);
      break;
    case Unary::Scale:
      for (std::int64_t i = 0; i < n; ++i) d.at(i) = c;
      break;
    case Unary::Shift:
      for (std::int64_t i = 0; i < n; ++i) d.at(i) = T(1);
      break;
  }
  return d;
}

template <typename T>
Tensor<T> add_row_broadcast(const Tensor<T>& x, const Tensor<T>& v) {
  require_rank2(x, "add_row_broadcast");
  if (v.numel() != x.dim(1)) {
    throw ContractError("add_row_broadcast: vector length " + v.shape_str() +
                        " does not match columns of " + x.shape_str());
  }
  Tensor<T> out(x.shape());
  const std::int64_t r = x.dim(0), cdim = x.dim(1);
  for (std::int64_t i = 0; i < r; ++i)
    for (std::int64_t j = 0; j < cdim; ++j) out.at2(i, j) = x.at2(i, j) + v.at(j);
  FlopCounter::add(static_cast<std::uint64_t>(r * cdim));
  return out;
}

template <typename T>
Tensor<T> mul_col_broadcast(const Tensor<T>& x, const Tensor<T>& c) {
  require_rank2(x, "mul_col_broadcast");
  if (c.numel() != x.dim(0)) {
    throw ContractError("mul_col_broadcast: vector length " + c.shape_str() +
                        " does not match rows of " + x.shape_str());
  }
  Tensor<T> out(x.shape());
  const std::int64_t r = x.dim(0), cdim = x.dim(1);
  for (std::int64_t i = 0; i < r; ++i) {
    const T g = c.at(i);
    for (std::int64_t j = 0; j < cdim; ++j) out.at2(i, j) = x.at2(i, j) * g;
  }
  FlopCounter::add(static_cast<std::uint64_t>(r * cdim));
  return out;
}

template <typename T>
Tensor<T> slice_cols(const Tensor<T>& x, std::int64_t offset, std::int64_t width) {
  require_rank2(x, "slice_cols");
  if (offset < 0 || width <= 0 || offset + width > x.dim(1)) {
    throw ContractError("slice_cols: invalid slice [" + std::to_string(offset) + "," +
                        std::to_string(offset + width) + ") of " + x.shape_str());
  }
  const std::int64_t r = x.dim(0);
  Tensor<T> out({r, width});
  for (std::int64_t i = 0; i < r; ++i)
    for (std::int64_t j = 0; j < width; ++j) out.at2(i, j) = x.at2(i, offset + j);
  return out;
}

template <typename T>
Tensor<T> concat_cols(const std::vector<const Tensor<T>*>& parts) {
  if (parts.empty()) throw ContractError("concat_cols: no parts");
  const std::int64_t r = parts[0]->dim(0);
  std::int64_t total = 0;
  for (const Tensor<T>* p : parts) {
    require_rank2(*p, "concat_cols");
    if (p->dim(0) != r) {
      throw ContractError("concat_cols: row mismatch " + p->shape_str());
    }
    total += p->dim(1);
  }
  Tensor<T> out({r, total});
  std::int64_t off = 0;
  for (const Tensor<T>* p : parts) {
    const std::int64_t w = p->dim(1);
    for (std::int64_t i = 0; i < r; ++i)
      for (std::int64_t j = 0; j < w; ++j) out.at2(i, off + j) = p->at2(i, j);
    off += w;
  }
  return out;
}

template <typename T>
Tensor<T> reshape(const Tensor<T>& x, std::vector<std::int64_t> shape) {
  Tensor<T> out(std::move(shape));
  if (out.numel() != x.numel()) {
    throw ContractError("reshape: element count mismatch " + x.shape_str() + " -> " +
                        out.shape_str());
  }
  for (std::int64_t i = 0; i < x.numel(); ++i) out.at(i) = x.at(i);
  return out;
}

template <typename T>
Tensor<T> softmax_rows(const Tensor<T>& x, const Tensor<T>* additive_mask) {
  require_rank2(x, "softmax_rows");
  if (additive_mask) require_same_shape(x, *additive_mask, "softmax_rows");
  const std::int64_t r = x.dim(0), n = x.dim(1);
  Tensor<T> out(x.shape());
  std::uint64_t finite_total = 0;
  for (std::int64_t i = 0; i < r; ++i) {
    T m = neg_inf<T>();
    for (std::int64_t j = 0; j < n; ++j) {
      const T v = x.at2(i, j) + (additive_mask ? additive_mask->at2(i, j) : T(0));
      if (v > m) m = v;
    }
    if (m == neg_inf<T>()) {
      throw ContractError("softmax_rows: all entries of row " + std::to_string(i) +
                          " are excluded");
    }
    T acc = T(0);
    for (std::int64_t j = 0; j < n; ++j) {
      const T v = x.at2(i, j) + (additive_mask ? additive_mask->at2(i, j) : T(0));
      if (v == neg_inf<T>()) {
        out.at2(i, j) = T(0);
      } else {
        const T e = std::exp(v - m);
        out.at2(i, j) = e;
        acc += e;
        ++finite_total;
      }
    }
    for (std::int64_t j = 0; j < n; ++j) out.at2(i, j) /= acc;
  }
  FlopCounter::add(4 * finite_total);
  return out;
}

template <typename T>
Tensor<T> gather_rows(const Tensor<T>& table, const std::vector<std::int64_t>& ids) {
  require_rank2(table, "gather_rows");
  const std::int64_t v = table.dim(0), d = table.dim(1);
  Tensor<T> out({static_cast<std::int64_t>(ids.size()), d});
  for (std::size_t i = 0; i < ids.size(); ++i) {
    if (ids[i] < 0 || ids[i] >= v) {
      throw ContractError("gather_rows: id " + std::to_string(ids[i]) + " out of range [0," +
                          std::to_string(v) + ")");
    }
    for (std::int64_t j = 0; j < d; ++j)
      out.at2(static_cast<std::int64_t>(i), j) = table.at2(ids[i], j);
  }
  return out;
}

template <typename T>
Tensor<T> scatter_add_rows(const Tensor<T>& base, const std::vector<std::int64_t>& ids,
                           const Tensor<T>& rows) {
  require_rank2(base, "scatter_add_rows");
  require_rank2(rows, "scatter_add_rows");
  if (rows.dim(0) != static_cast<std::int64_t>(ids.size()) || rows.dim(1) != base.dim(1)) {
    throw ContractError("scatter_add_rows: rows " + rows.shape_str() + " do not match ids/" +
                        base.shape_str());
  }
  Tensor<T> out = base;
  for (std::size_t q = 0; q < ids.size(); ++q) {
    if (ids[q] < 0 || ids[q] >= base.dim(0)) {
      throw ContractError("scatter_add_rows: id " + std::to_string(ids[q]) + " out of range");
    }
    for (std::int64_t j = 0; j < base.dim(1); ++j)
      out.at2(ids[q], j) += rows.at2(static_cast<std::int64_t>(q), j);
  }
  FlopCounter::add(static_cast<std::uint64_t>(rows.numel()));
  return out;
}

template <typename T>
Tensor<T> rmsnorm(const Tensor<T>& x, const Tensor<T>& weight, T eps) {
  require_rank2(x, "rmsnorm");
  const std::int64_t r = x.dim(0), d = x.dim(1);
  if (weight.numel() != d) {
    throw ContractError("rmsnorm: weight " + weight.shape_str() + " does not match width of " +
                        x.shape_str());
  }
  if (!(eps > T(0))) throw ContractError("rmsnorm: eps must be positive");
  Tensor<T> out(x.shape());
  for (std::int64_t i = 0; i < r; ++i) {
    T acc = T(0);
    for (std::int64_t j = 0; j < d; ++j) acc += x.at2(i, j) * x.at2(i, j);
    const T inv = T(1) / std::sqrt(acc / static_cast<T>(d) + eps);
    for (std::int64_t j = 0; j < d; ++j) out.at2(i, j) = x.at2(i, j) * inv * weight.at(j);
  }
  FlopCounter::add(static_cast<std::uint64_t>(7 * r * d));
  return out;
}

template <typename T>
Tensor<T> rope(const Tensor<T>& x, const std::vector<std::int64_t>& positions, double theta,
               std::int64_t d_head) {
  require_rank2(x, "rope");
  if (d_head <= 0 || d_head % 2 != 0) {
    throw ConfigError("rope: d_head must be even, got " + std::to_string(d_head));
  }
  if (x.dim(1) % d_head != 0) {
    throw ContractError("rope: width of " + x.shape_str() + " is not a multiple of d_head");
  }
  if (static_cast<std::int64_t>(positions.size()) != x.dim(0)) {
    throw ContractError("rope: positions length does not match rows of " + x.shape_str());
  }
  const std::int64_t rows = x.dim(0), heads = x.dim(1) / d_head, half = d_head / 2;
  std::vector<double> freq(static_cast<std::size_t>(half));
  for (std::int64_t t = 0; t < half; ++t) {
    freq[static_cast<std::size_t>(t)] =
        std::pow(theta, -2.0 * static_cast<double>(t) / static_cast<double>(d_head));
  }
  Tensor<T> out(x.shape());
  for (std::int64_t i = 0; i < rows; ++i) {
    const double p = static_cast<double>(positions[static_cast<std::size_t>(i)]);
    for (std::int64_t t = 0; t < half; ++t) {
      const double angle = p * freq[static_cast<std::size_t>(t)];
      const T c = static_cast<T>(std::cos(angle));
      const T s = static_cast<T>(std::sin(angle));
      for (std::int64_t h = 0; h < heads; ++h) {
        const std::int64_t j = h * d_head + 2 * t;
        const T x0 = x.at2(i, j), x1 = x.at2(i, j + 1);
        out.at2(i, j) = x0 * c - x1 * s;
        out.at2(i, j + 1) = x0 * s + x1 * c;
      }
    }
  }
  FlopCounter::add(static_cast<std::uint64_t>(rows * heads * half * 6));
  return out;
}

template <typename T>
Tensor<T> causal_scores(const Tensor<T>& q, const Tensor<T>& k,
                        const std::vector<std::int64_t>& q_pos, T scale) {
  require_rank2(q, "causal_scores");
  require_rank2(k, "causal_scores");
  if (q.dim(1) != k.dim(1)) {
    throw ContractError("causal_scores: head dims disagree " + q.shape_str() + " vs " +
                        k.shape_str());
  }
  if (static_cast<std::int64_t>(q_pos.size()) != q.dim(0)) {
    throw ContractError("causal_scores: q_pos length does not match " + q.shape_str());
  }
  const std::int64_t nq = q.dim(0), nk = k.dim(0), dh = q.dim(1);
  Tensor<T> out = Tensor<T>::full({nq, nk}, neg_inf<T>());
  std::uint64_t computed = 0;
  for (std::int64_t i = 0; i < nq; ++i) {
    const std::int64_t last = std::min(q_pos[static_cast<std::size_t>(i)], nk - 1);
    const T* qrow = q.data() + i * dh;
    for (std::int64_t j = 0; j <= last; ++j) {
      const T* krow = k.data() + j * dh;
      T acc = T(0);
      for (std::int64_t t = 0; t < dh; ++t) acc += qrow[t] * krow[t];
      out.at2(i, j) = acc * scale;
    }
    computed += static_cast<std::uint64_t>(last + 1);
  }
  FlopCounter::add(computed * static_cast<std::uint64_t>(2 * dh + 1));
  return out;
}

template <typename T>
Tensor<T> causal_weighted_sum(const Tensor<T>& p, const Tensor<T>& v,
                              const std::vector<std::int64_t>& q_pos) {
  require_rank2(p, "causal_weighted_sum");
  require_rank2(v, "causal_weighted_sum");
  if (p.dim(1) != v.dim(0)) {
    throw ContractError("causal_weighted_sum: keys disagree " + p.shape_str() + " vs " +
                        v.shape_str());
  }
  const std::int64_t nq = p.dim(0), dh = v.dim(1);
  Tensor<T> out({nq, dh});
  std::uint64_t visited = 0;
  for (std::int64_t i = 0; i < nq; ++i) {
    const std::int64_t last = std::min(q_pos[static_cast<std::size_t>(i)], v.dim(0) - 1);
    T* orow = out.data() + i * dh;
    for (std::int64_t j = 0; j <= last; ++j) {
      const T w = p.at2(i, j);
      const T* vrow = v.data() + j * dh;
      for (std::int64_t t = 0; t < dh; ++t) orow[t] += w * vrow[t];
    }
    visited += static_cast<std::uint64_t>(last + 1);
  }
  FlopCounter::add(visited * static_cast<std::uint64_t>(2 * dh));
  return out;
}

template <typename T>
Tensor<T> sum_all(const Tensor<T>& x) {
  T acc = T(0);
  for (std::int64_t i = 0; i < x.numel(); ++i) acc += x.at(i);
  FlopCounter::add(static_cast<std::uint64_t>(x.numel()));
  return Tensor<T>::scalar(acc);
}

template <typename T>
Tensor<T> cross_entropy(const Tensor<T>& logits, const std::vector<std::int64_t>& targets,
                        Tensor<T>* probs_out) {
  require_rank2(logits, "cross_entropy");
  const std::int64_t n = logits.dim(0), v = logits.dim(1);
  if (static_cast<std::int64_t>(targets.size()) != n) {
    throw ContractError("cross_entropy: targets length does not match " + logits.shape_str());
  }
  Tensor<T> probs(logits.shape());
  T total = T(0);
  for (std::int64_t i = 0; i < n; ++i) {
    const std::int64_t t = targets[static_cast<std::size_t>(i)];
    if (t < 0 || t >= v) {
      throw ContractError("cross_entropy: target " + std::to_string(t) + " out of range [0," +
                          std::to_string(v) + ")");
    }
    T m = logits.at2(i, 0);
    for (std::int64_t j = 1; j < v; ++j) m = std::max(m, logits.at2(i, j));
    T acc = T(0);
    for (std::int64_t j = 0; j < v; ++j) {
      const T e = std::exp(logits.at2(i, j) - m);
      probs.at2(i, j) = e;
      acc += e;
    }
    for (std::int64_t j = 0; j < v; ++j) probs.at2(i, j) /= acc;
    total += std::log(acc) + m - logits.at2(i, t);
  }
  FlopCounter::add(static_cast<std::uint64_t>(n * (3 * v + 4)));
  if (probs_out) *probs_out = std::move(probs);
  return Tensor<T>::scalar(total / static_cast<T>(n));
}

#define SKIPMID_INSTANTIATE(T)                                                                  \
  template Tensor<T> matmul<T>(const Tensor<T>&, const Tensor<T>&);                             \
  template Tensor<T> matmul_nt<T>(const Tensor<T>&, const Tensor<T>&);                          \
  template Tensor<T> matmul_tn<T>(const Tensor<T>&, const Tensor<T>&);                          \
  template Tensor<T> add<T>(const Tensor<T>&, const Tensor<T>&);                                \
  template Tensor<T> mul<T>(const Tensor<T>&, const Tensor<T>&);                                \
  template Tensor<T> map_unary<T>(const Tensor<T>&, Unary, T);                                  \
  template Tensor<T> unary_derivative<T>(const Tensor<T>&, const Tensor<T>&, Unary, T);         \
  template Tensor<T> add_row_broadcast<T>(const Tensor<T>&, const Tensor<T>&);                  \
  template Tensor<T> mul_col_broadcast<T>(const Tensor<T>&, const Tensor<T>&);                  \
  template Tensor<T> slice_cols<T>(const Tensor<T>&, std::int64_t, std::int64_t);               \
  template Tensor<T> concat_cols<T>(const std::vector<const Tensor<T>*>&);                      \
  template Tensor<T> reshape<T>(const Tensor<T>&, std::vector<std::int64_t>);                   \
  template Tensor<T> softmax_rows<T>(const Tensor<T>&, const Tensor<T>*);                       \
  template Tensor<T> gather_rows<T>(const Tensor<T>&, const std::vector<std::int64_t>&);        \
  template Tensor<T> scatter_add_rows<T>(const Tensor<T>&, const std::vector<std::int64_t>&,    \
                                         const Tensor<T>&);                                     \
  template Tensor<T> rmsnorm<T>(const Tensor<T>&, const Tensor<T>&, T);                         \
  template Tensor<T> rope<T>(const Tensor<T>&, const std::vector<std::int64_t>&, double,        \
                             std::int64_t);                                                     \
  template Tensor<T> causal_scores<T>(const Tensor<T>&, const Tensor<T>&,                       \
                                      const std::vector<std::int64_t>&, T);                     \
  template Tensor<T> causal_weighted_sum<T>(const Tensor<T>&, const Tensor<T>&,                 \
                                            const std::vector<std::int64_t>&);                  \
  template Tensor<T> sum_all<T>(const Tensor<T>&);                                              \
  template Tensor<T> cross_entropy<T>(const Tensor<T>&, const std::vector<std::int64_t>&,       \
                                      Tensor<T>*);

SKIPMID_INSTANTIATE(float)
SKIPMID_INSTANTIATE(double)

#undef SKIPMID_INSTANTIATE

}  // namespace skipmid
