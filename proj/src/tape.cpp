#include "skipmid/tape.hpp"

#include <cmath>
#include <memory>
#include <utility>

#include "skipmid/errors.hpp"

namespace skipmid {

template <typename T>
typename Tape<T>::Node& Tape<T>::node(Var<T> v) {
  if (v.id < 0 || v.id >= size()) {
    throw ContractError("tape: invalid var id " + std::to_string(v.id));
  }
  return nodes_[static_cast<std::size_t>(v.id)];
}

template <typename T>
const typename Tape<T>::Node& Tape<T>::node(Var<T> v) const {
  if (v.id < 0 || v.id >= size()) {
    throw ContractError("tape: invalid var id " + std::to_string(v.id));
  }
  return nodes_[static_cast<std::size_t>(v.id)];
}

template <typename T>
Var<T> Tape<T>::record(Tensor<T> value, bool needs_grad,
                       std::function<void(Tape<T>&)> backward) {
  Node n;
  n.value = std::move(value);
  n.needs_grad = needs_grad;
  if (needs_grad) n.backward = std::move(backward);
  nodes_.push_back(std::move(n));
  return Var<T>{size() - 1};
}

template <typename T>
Var<T> Tape<T>::leaf(Tensor<T> value, bool needs_grad) {
  return record(std::move(value), needs_grad, nullptr);
}

template <typename T>
const Tensor<T>& Tape<T>::value(Var<T> v) const {
  return node(v).value;
}

template <typename T>
Tensor<T>& Tape<T>::grad(Var<T> v) {
  Node& n = node(v);
  if (!n.touched) {
    n.grad = Tensor<T>(n.value.shape());
    n.touched = true;
  }
  return n.grad;
}

template <typename T>
bool Tape<T>::touched(Var<T> v) const {
  return node(v).touched;
}

namespace {

template <typename T>
void accumulate(Tensor<T>& g, const Tensor<T>& delta) {
  for (std::int64_t i = 0; i < g.numel(); ++i) g.at(i) += delta.at(i);
}

}  // namespace

template <typename T>
Var<T> Tape<T>::matmul(Var<T> a, Var<T> b) {
  Tensor<T> out = skipmid::matmul(value(a), value(b));
  const bool ng = node(a).needs_grad || node(b).needs_grad;
  Var<T> o{size()};
  return record(std::move(out), ng, [a, b, o](Tape<T>& t) {
    const Tensor<T>& go = t.grad(o);
    if (t.node(a).needs_grad) accumulate(t.grad(a), skipmid::matmul_nt(go, t.value(b)));
    if (t.node(b).needs_grad) accumulate(t.grad(b), skipmid::matmul_tn(t.value(a), go));
  });
}

template <typename T>
Var<T> Tape<T>::matmul_nt(Var<T> a, Var<T> b) {
  Tensor<T> out = skipmid::matmul_nt(value(a), value(b));
  const bool ng = node(a).needs_grad || node(b).needs_grad;
  Var<T> o{size()};
  return record(std::move(out), ng, [a, b, o](Tape<T>& t) {
    const Tensor<T>& go = t.grad(o);
    if (t.node(a).needs_grad) accumulate(t.grad(a), skipmid::matmul(go, t.value(b)));
    if (t.node(b).needs_grad) accumulate(t.grad(b), skipmid::matmul_tn(go, t.value(a)));
  });
}

template <typename T>
Var<T> Tape<T>::add(Var<T> a, Var<T> b) {
  Tensor<T> out = skipmid::add(value(a), value(b));
  const bool ng = node(a).needs_grad || node(b).needs_grad;
  Var<T> o{size()};
  return record(std::move(out), ng, [a, b, o](Tape<T>& t) {
    const Tensor<T>& go = t.grad(o);
    if (t.node(a).needs_grad) accumulate(t.grad(a), go);
    if (t.node(b).needs_grad) accumulate(t.grad(b), go);
  });
}

template <typename T>
Var<T> Tape<T>::mul(Var<T> a, Var<T> b) {
  Tensor<T> out = skipmid::mul(value(a), value(b));
  const bool ng = node(a).needs_grad || node(b).needs_grad;
  Var<T> o{size()};
  return record(std::move(out), ng, [a, b, o](Tape<T>& t) {
    const Tensor<T>& go = t.grad(o);
    if (t.node(a).needs_grad) accumulate(t.grad(a), skipmid::mul(go, t.value(b)));
    if (t.node(b).needs_grad) accumulate(t.grad(b), skipmid::mul(go, t.value(a)));
  });
}

template <typename T>
Var<T> Tape<T>::unary(Var<T> x, Unary op, T c) {
  Tensor<T> out = map_unary(value(x), op, c);
  const bool ng = node(x).needs_grad;
  Var<T> o{size()};
  return record(std::move(out), ng, [x, o, op, c](Tape<T>& t) {
    const Tensor<T> d = unary_derivative(t.value(x), t.value(o), op, c);
    accumulate(t.grad(x), skipmid::mul(t.grad(o), d));
  });
}

template <typename T>
Var<T> Tape<T>::add_row_broadcast(Var<T> x, Var<T> v) {
  Tensor<T> out = skipmid::add_row_broadcast(value(x), value(v));
  const bool ng = node(x).needs_grad || node(v).needs_grad;
  Var<T> o{size()};
  return record(std::move(out), ng, [x, v, o](Tape<T>& t) {
    const Tensor<T>& go = t.grad(o);
    if (t.node(x).needs_grad) accumulate(t.grad(x), go);
    if (t.node(v).needs_grad) {
      Tensor<T>& gv = t.grad(v);
      const std::int64_t r = go.dim(0), cdim = go.dim(1);
      for (std::int64_t i = 0; i < r; ++i)
        for (std::int64_t j = 0; j < cdim; ++j) gv.at(j) += go.at2(i, j);
    }
  });
}

template <typename T>
Var<T> Tape<T>::mul_col_broadcast(Var<T> x, Var<T> c) {
  Tensor<T> out = skipmid::mul_col_broadcast(value(x), value(c));
  const bool ng = node(x).needs_grad || node(c).needs_grad;
  Var<T> o{size()};
  return record(std::move(out), ng, [x, c, o](Tape<T>& t) {
    const Tensor<T>& go = t.grad(o);
    const std::int64_t r = go.dim(0), cdim = go.dim(1);
    if (t.node(x).needs_grad) {
      Tensor<T>& gx = t.grad(x);
      const Tensor<T>& cv = t.value(c);
      for (std::int64_t i = 0; i < r; ++i)
        for (std::int64_t j = 0; j < cdim; ++j) gx.at2(i, j) += go.at2(i, j) * cv.at(i);
    }
    if (t.node(c).needs_grad) {
      Tensor<T>& gc = t.grad(c);
      const Tensor<T>& xv = t.value(x);
      for (std::int64_t i = 0; i < r; ++i) {
        T acc = T(0);
        for (std::int64_t j = 0; j < cdim; ++j) acc += go.at2(i, j) * xv.at2(i, j);
        gc.at(i) += acc;
      }
    }
  });
}

template <typename T>
Var<T> Tape<T>::slice_cols(Var<T> x, std::int64_t offset, std::int64_t width) {
  Tensor<T> out = skipmid::slice_cols(value(x), offset, width);
  const bool ng = node(x).needs_grad;
  Var<T> o{size()};
  return record(std::move(out), ng, [x, o, offset, width](Tape<T>& t) {
    const Tensor<T>& go = t.grad(o);
    Tensor<T>& gx = t.grad(x);
    for (std::int64_t i = 0; i < go.dim(0); ++i)
      for (std::int64_t j = 0; j < width; ++j) gx.at2(i, offset + j) += go.at2(i, j);
  });
}

template <typename T>
Var<T> Tape<T>::concat_cols(const std::vector<Var<T>>& parts) {
  std::vector<const Tensor<T>*> ptrs;
  ptrs.reserve(parts.size());
  bool ng = false;
  for (Var<T> p : parts) {
    ptrs.push_back(&value(p));
    ng = ng || node(p).needs_grad;
  }
  Tensor<T> out = skipmid::concat_cols(ptrs);
  Var<T> o{size()};
  std::vector<Var<T>> ps = parts;
  return record(std::move(out), ng, [ps, o](Tape<T>& t) {
    const Tensor<T>& go = t.grad(o);
    std::int64_t off = 0;
    for (Var<T> p : ps) {
      const std::int64_t w = t.value(p).dim(1);
      if (t.node(p).needs_grad) {
        Tensor<T>& gp = t.grad(p);
        for (std::int64_t i = 0; i < go.dim(0); ++i)
          for (std::int64_t j = 0; j < w; ++j) gp.at2(i, j) += go.at2(i, off + j);
      }
      off += w;
    }
  });
}

template <typename T>
Var<T> Tape<T>::reshape(Var<T> x, std::vector<std::int64_t> shape) {
  Tensor<T> out = skipmid::reshape(value(x), std::move(shape));
  const bool ng = node(x).needs_grad;
  Var<T> o{size()};
  return record(std::move(out), ng, [x, o](Tape<T>& t) {
    const Tensor<T>& go = t.grad(o);
    Tensor<T>& gx = t.grad(x);
    for (std::int64_t i = 0; i < go.numel(); ++i) gx.at(i) += go.at(i);
  });
}

template <typename T>
Var<T> Tape<T>::softmax_rows(Var<T> x) {
  Tensor<T> out = skipmid::softmax_rows(value(x));
  const bool ng = node(x).needs_grad;
  Var<T> o{size()};
  return record(std::move(out), ng, [x, o](Tape<T>& t) {
    const Tensor<T>& p = t.value(o);
    const Tensor<T>& go = t.grad(o);
    Tensor<T>& gx = t.grad(x);
    const std::int64_t r = p.dim(0), n = p.dim(1);
    for (std::int64_t i = 0; i < r; ++i) {
      T dot = T(0);
      for (std::int64_t j = 0; j < n; ++j) dot += go.at2(i, j) * p.at2(i, j);
      for (std::int64_t j = 0; j < n; ++j)
        gx.at2(i, j) += p.at2(i, j) * (go.at2(i, j) - dot);
    }
  });
}

template <typename T>
Var<T> Tape<T>::gather_rows(Var<T> x, std::vector<std::int64_t> ids) {
  Tensor<T> out = skipmid::gather_rows(value(x), ids);
  const bool ng = node(x).needs_grad;
  Var<T> o{size()};
  auto keep = std::make_shared<const std::vector<std::int64_t>>(std::move(ids));
  return record(std::move(out), ng, [x, o, keep](Tape<T>& t) {
    const Tensor<T>& go = t.grad(o);
    Tensor<T>& gx = t.grad(x);
    const std::int64_t d = go.dim(1);
    for (std::size_t q = 0; q < keep->size(); ++q)
      for (std::int64_t j = 0; j < d; ++j)
        gx.at2((*keep)[q], j) += go.at2(static_cast<std::int64_t>(q), j);
  });
}

template <typename T>
Var<T> Tape<T>::scatter_add_rows(Var<T> base, std::vector<std::int64_t> ids, Var<T> rows) {
  Tensor<T> out = skipmid::scatter_add_rows(value(base), ids, value(rows));
  const bool ng = node(base).needs_grad || node(rows).needs_grad;
  Var<T> o{size()};
  auto keep = std::make_shared<const std::vector<std::int64_t>>(std::move(ids));
  return record(std::move(out), ng, [base, rows, o, keep](Tape<T>& t) {
    const Tensor<T>& go = t.grad(o);
    if (t.node(base).needs_grad) accumulate(t.grad(base), go);
    if (t.node(rows).needs_grad) {
      Tensor<T>& gr = t.grad(rows);
      const std::int64_t d = go.dim(1);
      for (std::size_t q = 0; q < keep->size(); ++q)
        for (std::int64_t j = 0; j < d; ++j)
          gr.at2(static_cast<std::int64_t>(q), j) += go.at2((*keep)[q], j);
    }
  });
}

template <typename T>
Var<T> Tape<T>::rmsnorm(Var<T> x, Var<T> weight, T eps) {
  Tensor<T> out = skipmid::rmsnorm(value(x), value(weight), eps);
  const bool ng = node(x).needs_grad || node(weight).needs_grad;
  Var<T> o{size()};
  return record(std::move(out), ng, [x, weight, o, eps](Tape<T>& t) {
    const Tensor<T>& xv = t.value(x);
    const Tensor<T>& wv = t.value(weight);
    const Tensor<T>& go = t.grad(o);
    const std::int64_t r = xv.dim(0), d = xv.dim(1);
    const bool gx_needed = t.node(x).needs_grad;
    const bool gw_needed = t.node(weight).needs_grad;
    Tensor<T>* gx = gx_needed ? &t.grad(x) : nullptr;
    Tensor<T>* gw = gw_needed ? &t.grad(weight) : nullptr;
    for (std::int64_t i = 0; i < r; ++i) {
      T ms = T(0);
      for (std::int64_t j = 0; j < d; ++j) ms += xv.at2(i, j) * xv.at2(i, j);
      ms = ms / static_cast<T>(d) + eps;
      const T inv = T(1) / std::sqrt(ms);
      if (gw_needed) {
        for (std::int64_t j = 0; j < d; ++j) gw->at(j) += go.at2(i, j) * xv.at2(i, j) * inv;
      }
      if (gx_needed) {
        T dot = T(0);
        for (std::int64_t j = 0; j < d; ++j) dot += go.at2(i, j) * wv.at(j) * xv.at2(i, j);
        const T k = inv * inv * inv * dot / static_cast<T>(d);
        for (std::int64_t j = 0; j < d; ++j)
          gx->at2(i, j) += go.at2(i, j) * wv.at(j) * inv - xv.at2(i, j) * k;
      }
    }
  });
}

template <typename T>
Var<T> Tape<T>::rope(Var<T> x, std::vector<std::int64_t> positions, double theta,
                     std::int64_t d_head) {
  Tensor<T> out = skipmid::rope(value(x), positions, theta, d_head);
  const bool ng = node(x).needs_grad;
  Var<T> o{size()};
  auto pos = std::make_shared<const std::vector<std::int64_t>>(std::move(positions));
  return record(std::move(out), ng, [x, o, pos, theta, d_head](Tape<T>& t) {
    const Tensor<T>& go = t.grad(o);
    Tensor<T>& gx = t.grad(x);
    const std::int64_t rows = go.dim(0), heads = go.dim(1) / d_head, half = d_head / 2;
    for (std::int64_t i = 0; i < rows; ++i) {
      const double p = static_cast<double>((*pos)[static_cast<std::size_t>(i)]);
      for (std::int64_t tt = 0; tt < half; ++tt) {
        const double angle =
            p * std::pow(theta, -2.0 * static_cast<double>(tt) / static_cast<double>(d_head));
        const T c = static_cast<T>(std::cos(angle));
        const T s = static_cast<T>(std::sin(angle));
        for (std::int64_t h = 0; h < heads; ++h) {
          const std::int64_t j = h * d_head + 2 * tt;
          const T g0 = go.at2(i, j), g1 = go.at2(i, j + 1);
          gx.at2(i, j) += g0 * c + g1 * s;
          gx.at2(i, j + 1) += g1 * c - g0 * s;
        }
      }
    }
  });
}

template <typename T>
Var<T> Tape<T>::causal_scores(Var<T> q, Var<T> k, std::vector<std::int64_t> q_pos, T scale) {
  Tensor<T> out = skipmid::causal_scores(value(q), value(k), q_pos, scale);
  const bool ng = node(q).needs_grad || node(k).needs_grad;
  Var<T> o{size()};
  auto pos = std::make_shared<const std::vector<std::int64_t>>(std::move(q_pos));
  return record(std::move(out), ng, [q, k, o, pos, scale](Tape<T>& t) {
    const Tensor<T>& qv = t.value(q);
    const Tensor<T>& kv = t.value(k);
    const Tensor<T>& go = t.grad(o);
    const std::int64_t nq = qv.dim(0), nk = kv.dim(0), dh = qv.dim(1);
    const bool gq_needed = t.node(q).needs_grad;
    const bool gk_needed = t.node(k).needs_grad;
    Tensor<T>* gq = gq_needed ? &t.grad(q) : nullptr;
    Tensor<T>* gk = gk_needed ? &t.grad(k) : nullptr;
    for (std::int64_t i = 0; i < nq; ++i) {
      const std::int64_t last = std::min((*pos)[static_cast<std::size_t>(i)], nk - 1);
      for (std::int64_t j = 0; j <= last; ++j) {
        const T g = go.at2(i, j) * scale;
        if (g == T(0)) continue;
        if (gq_needed)
          for (std::int64_t d = 0; d < dh; ++d) gq->at2(i, d) += g * kv.at2(j, d);
        if (gk_needed)
          for (std::int64_t d = 0; d < dh; ++d) gk->at2(j, d) += g * qv.at2(i, d);
      }
    }
  });
}

template <typename T>
Var<T> Tape<T>::causal_weighted_sum(Var<T> p, Var<T> v, std::vector<std::int64_t> q_pos) {
  Tensor<T> out = skipmid::causal_weighted_sum(value(p), value(v), q_pos);
  const bool ng = node(p).needs_grad || node(v).needs_grad;
  Var<T> o{size()};
  auto pos = std::make_shared<const std::vector<std::int64_t>>(std::move(q_pos));
  return record(std::move(out), ng, [p, v, o, pos](Tape<T>& t) {
    const Tensor<T>& pv = t.value(p);
    const Tensor<T>& vv = t.value(v);
    const Tensor<T>& go = t.grad(o);
    const std::int64_t nq = pv.dim(0), nk = vv.dim(0), dh = vv.dim(1);
    const bool gp_needed = t.node(p).needs_grad;
    const bool gv_needed = t.node(v).needs_grad;
    Tensor<T>* gp = gp_needed ? &t.grad(p) : nullptr;
    Tensor<T>* gv = gv_needed ? &t.grad(v) : nullptr;
    for (std::int64_t i = 0; i < nq; ++i) {
      const std::int64_t last = std::min((*pos)[static_cast<std::size_t>(i)], nk - 1);
      for (std::int64_t j = 0; j <= last; ++j) {
        if (gp_needed) {
          T acc = T(0);
          for (std::int64_t d = 0; d < dh; ++d) acc += go.at2(i, d) * vv.at2(j, d);
          gp->at2(i, j) += acc;
        }
        if (gv_needed) {
          const T w = pv.at2(i, j);
          for (std::int64_t d = 0; d < dh; ++d) gv->at2(j, d) += w * go.at2(i, d);
        }
      }
    }
  });
}

template <typename T>
Var<T> Tape<T>::sum_all(Var<T> x) {
  Tensor<T> out = skipmid::sum_all(value(x));
  const bool ng = node(x).needs_grad;
  Var<T> o{size()};
  return record(std::move(out), ng, [x, o](Tape<T>& t) {
    const T g = t.grad(o).at(0);
    Tensor<T>& gx = t.grad(x);
    for (std::int64_t i = 0; i < gx.numel(); ++i) gx.at(i) += g;
  });
}

template <typename T>
Var<T> Tape<T>::cross_entropy(Var<T> logits, std::vector<std::int64_t> targets) {
  auto probs = std::make_shared<Tensor<T>>();
  Tensor<T> out = skipmid::cross_entropy(value(logits), targets, probs.get());
  const bool ng = node(logits).needs_grad;
  Var<T> o{size()};
  auto tgt = std::make_shared<const std::vector<std::int64_t>>(std::move(targets));
  return record(std::move(out), ng, [logits, o, probs, tgt](Tape<T>& t) {
    const T g = t.grad(o).at(0);
    Tensor<T>& gl = t.grad(logits);
    const std::int64_t n = gl.dim(0), v = gl.dim(1);
    const T scale = g / static_cast<T>(n);
    for (std::int64_t i = 0; i < n; ++i) {
      const std::int64_t target = (*tgt)[static_cast<std::size_t>(i)];
      for (std::int64_t j = 0; j < v; ++j) {
        const T delta = j == target ? T(1) : T(0);
        gl.at2(i, j) += scale * (probs->at2(i, j) - delta);
      }
    }
  });
}

template <typename T>
void Tape<T>::backward(Var<T> loss) {
  if (value(loss).numel() != 1) {
    throw ContractError("backward: loss must be scalar, got " + value(loss).shape_str());
  }
  seed(loss, Tensor<T>::scalar(T(1)));
  run_backward();
}

template <typename T>
void Tape<T>::backward_seeded(Var<T> out, const Tensor<T>& cotangent) {
  seed(out, cotangent);
  run_backward();
}

template <typename T>
void Tape<T>::seed(Var<T> out, const Tensor<T>& cotangent) {
  if (!cotangent.same_shape(value(out))) {
    throw ContractError("seed: cotangent shape " + cotangent.shape_str() +
                        " does not match node " + value(out).shape_str());
  }
  accumulate(grad(out), cotangent);
}

template <typename T>
void Tape<T>::run_backward() {
  if (swept_) throw ContractError("run_backward: tape already swept");
  swept_ = true;
  sweep();
}

template <typename T>
void Tape<T>::sweep() {
  for (std::int64_t i = size() - 1; i >= 0; --i) {
    Node& n = nodes_[static_cast<std::size_t>(i)];
    if (n.touched && n.backward) n.backward(*this);
  }
}

template class Tape<float>;
template class Tape<double>;

}  // namespace skipmid
