#include "skipmid/model.hpp"

#include <cmath>

#include "skipmid/errors.hpp"

namespace skipmid {

ForwardMode parse_forward_mode(const std::string& name) {
  if (name == "dense") return ForwardMode::Dense;
  if (name == "multiply" || name == "gated-multiply") return ForwardMode::GatedMultiply;
  if (name == "skip" || name == "gated-skip") return ForwardMode::GatedSkip;
  throw ConfigError("unknown forward mode '" + name + "' (dense|multiply|skip)");
}

const char* forward_mode_name(ForwardMode mode) {
  switch (mode) {
    case ForwardMode::Dense: return "dense";
    case ForwardMode::GatedMultiply: return "multiply";
    case ForwardMode::GatedSkip: return "skip";
  }
  return "?";
}

template <typename T>
BoundModel<T> bind_model(Tape<T>& tape, const Parameters<T>& params, bool needs_grad) {
  BoundModel<T> model;
  model.cfg = params.config();
  model.gated = params.gated();
  const auto entries = params.entries();
  model.leaves.reserve(entries.size());
  for (const auto& [name, tensor] : entries) {
    model.leaves.push_back(tape.leaf(*tensor, needs_grad));
  }
  std::size_t next = 0;
  auto take = [&]() { return model.leaves[next++]; };
  model.token_embedding = take();
  const std::int64_t L = model.cfg.n_layers;
  model.layers.resize(static_cast<std::size_t>(L));
  for (std::int64_t l = 0; l < L; ++l) {
    BoundLayer<T>& layer = model.layers[static_cast<std::size_t>(l)];
    layer.wq = take();
    layer.wk = take();
    layer.wv = take();
    layer.wo = take();
    layer.attn_norm_pre = take();
    layer.attn_norm_post = take();
    layer.w_gate = take();
    layer.w_up = take();
    layer.w_down = take();
    layer.ffn_norm_pre = take();
    layer.ffn_norm_post = take();
  }
  model.final_norm = take();
  model.output_head = take();
  if (model.gated) {
    for (std::int64_t l = 0; l < L / 2; ++l) {
      model.gate_w.push_back(take());
      model.gate_b.push_back(take());
    }
  }
  return model;
}

template <typename T>
Var<T> swiglu_ffn(Tape<T>& tape, const BoundLayer<T>& layer, Var<T> x) {
  Var<T> gate_path = tape.matmul(x, layer.w_gate);
  Var<T> up_path = tape.matmul(x, layer.w_up);
  Var<T> activated = tape.unary(gate_path, Unary::Silu);
  Var<T> fused = tape.mul(activated, up_path);
  return tape.matmul(fused, layer.w_down);
}

namespace {

bool is_full_range(const std::vector<std::int64_t>& rows, std::int64_t n) {
  if (static_cast<std::int64_t>(rows.size()) != n) return false;
  for (std::int64_t i = 0; i < n; ++i) {
    if (rows[static_cast<std::size_t>(i)] != i) return false;
  }
  return true;
}

}  // namespace

template <typename T>
Var<T> gated_attention(Tape<T>& tape, const BoundModel<T>& model, std::int64_t layer_index,
                       Var<T> x_normed, Var<T> gate,
                       const std::vector<std::int64_t>& q_rows,
                       const std::vector<std::int64_t>& positions) {
  const TransformerConfig& cfg = model.cfg;
  const BoundLayer<T>& layer = model.layers.at(static_cast<std::size_t>(layer_index));
  const std::int64_t dh = cfg.head_dim();
  const std::int64_t group = cfg.n_heads / cfg.n_kv_heads;
  const std::int64_t n_all = tape.value(x_normed).dim(0);

  std::vector<std::int64_t> q_pos;
  q_pos.reserve(q_rows.size());
  for (std::int64_t row : q_rows) q_pos.push_back(positions.at(static_cast<std::size_t>(row)));

  Var<T> xq = is_full_range(q_rows, n_all) ? x_normed : tape.gather_rows(x_normed, q_rows);
  Var<T> q = tape.matmul(xq, layer.wq);
  Var<T> k = tape.matmul(x_normed, layer.wk);
  Var<T> v = tape.matmul(x_normed, layer.wv);
  q = tape.rope(q, q_pos, cfg.rope_theta, dh);
  k = tape.rope(k, positions, cfg.rope_theta, dh);

  Var<T> log_gate;
  if (gate.valid()) {
    Var<T> floored = tape.unary(gate, Unary::ClampMin, static_cast<T>(kGateEpsilon));
    log_gate = tape.unary(floored, Unary::Ln);
  }

  std::vector<Var<T>> k_heads, v_heads;
  for (std::int64_t kvh = 0; kvh < cfg.n_kv_heads; ++kvh) {
    k_heads.push_back(tape.slice_cols(k, kvh * dh, dh));
    v_heads.push_back(tape.slice_cols(v, kvh * dh, dh));
  }

  const T scale = static_cast<T>(1.0 / std::sqrt(static_cast<double>(dh)));
  std::vector<Var<T>> head_outputs;
  for (std::int64_t h = 0; h < cfg.n_heads; ++h) {
    Var<T> qh = tape.slice_cols(q, h * dh, dh);
    const std::size_t kvh = static_cast<std::size_t>(h / group);
    Var<T> scores = tape.causal_scores(qh, k_heads[kvh], q_pos, scale);
    if (log_gate.valid()) scores = tape.add_row_broadcast(scores, log_gate);
    Var<T> probs = tape.softmax_rows(scores);
    head_outputs.push_back(tape.causal_weighted_sum(probs, v_heads[kvh], q_pos));
  }
  Var<T> merged = tape.concat_cols(head_outputs);
  return tape.matmul(merged, layer.wo);
}

template <typename T>
Var<T> block_forward(Tape<T>& tape, const BoundModel<T>& model, std::int64_t layer_index,
                     Var<T> h, Var<T> gate, ForwardMode mode,
                     const std::vector<std::int64_t>& positions) {
  const BoundLayer<T>& layer = model.layers.at(static_cast<std::size_t>(layer_index));
  const T eps = static_cast<T>(model.cfg.norm_eps);
  const std::int64_t n = tape.value(h).dim(0);
  if ((mode == ForwardMode::Dense) == gate.valid()) {
    throw ContractError("block_forward: dense mode takes no gate, gated modes require one");
  }

  std::vector<std::int64_t> full_rows;
  full_rows.reserve(static_cast<std::size_t>(n));
  for (std::int64_t i = 0; i < n; ++i) full_rows.push_back(i);

  if (mode == ForwardMode::GatedSkip) {
    const Tensor<T>& gv = tape.value(gate);
    std::vector<std::int64_t> survivors;
    for (std::int64_t i = 0; i < n; ++i) {
      if (gv.at(i) != T(0)) survivors.push_back(i);
    }
    if (survivors.empty()) return h;

    Var<T> x_full = tape.rmsnorm(h, layer.attn_norm_pre, eps);
    Var<T> attn = gated_attention(tape, model, layer_index, x_full, gate, survivors, positions);
    Var<T> attn_normed = tape.rmsnorm(attn, layer.attn_norm_post, eps);
    Var<T> gate_rows = tape.gather_rows(gate, survivors);
    Var<T> attn_contrib = tape.mul_col_broadcast(attn_normed, gate_rows);
    Var<T> a = tape.scatter_add_rows(h, survivors, attn_contrib);

    Var<T> a_rows = tape.gather_rows(a, survivors);
    Var<T> y = tape.rmsnorm(a_rows, layer.ffn_norm_pre, eps);
    Var<T> ffn = swiglu_ffn(tape, layer, y);
    Var<T> ffn_normed = tape.rmsnorm(ffn, layer.ffn_norm_post, eps);
    Var<T> ffn_contrib = tape.mul_col_broadcast(ffn_normed, gate_rows);
    return tape.scatter_add_rows(a, survivors, ffn_contrib);
  }

  Var<T> x = tape.rmsnorm(h, layer.attn_norm_pre, eps);
  Var<T> attn = gated_attention(tape, model, layer_index, x, gate, full_rows, positions);
  Var<T> attn_normed = tape.rmsnorm(attn, layer.attn_norm_post, eps);
  Var<T> attn_contrib =
      gate.valid() ? tape.mul_col_broadcast(attn_normed, gate) : attn_normed;
  Var<T> a = tape.add(h, attn_contrib);

  Var<T> y = tape.rmsnorm(a, layer.ffn_norm_pre, eps);
  Var<T> ffn = swiglu_ffn(tape, layer, y);
  Var<T> ffn_normed = tape.rmsnorm(ffn, layer.ffn_norm_post, eps);
  Var<T> ffn_contrib = gate.valid() ? tape.mul_col_broadcast(ffn_normed, gate) : ffn_normed;
  return tape.add(a, ffn_contrib);
}

template <typename T>
ForwardOutput<T> model_forward(Tape<T>& tape, const BoundModel<T>& model,
                               const std::vector<std::int64_t>& tokens, ForwardMode mode) {
  const TransformerConfig& cfg = model.cfg;
  const std::int64_t n = static_cast<std::int64_t>(tokens.size());
  if (n == 0) throw ContractError("model_forward: empty token sequence");
  if (n > cfg.max_seq_len) {
    throw ContractError("model_forward: sequence length " + std::to_string(n) +
                        " exceeds max_seq_len " + std::to_string(cfg.max_seq_len));
  }
  for (std::int64_t id : tokens) {
    if (id < 0 || id >= cfg.vocab_size) {
      throw ContractError("model_forward: token id " + std::to_string(id) + " out of range [0," +
                          std::to_string(cfg.vocab_size) + ")");
    }
  }
  if (mode != ForwardMode::Dense && !model.gated) {
    throw ContractError("model_forward: gated mode requested but model has no gate parameters");
  }

  std::vector<std::int64_t> positions;
  positions.reserve(static_cast<std::size_t>(n));
  for (std::int64_t i = 0; i < n; ++i) positions.push_back(i);

  const std::int64_t L = cfg.n_layers, half = L / 2;
  ForwardOutput<T> out;
  Var<T> h = tape.gather_rows(model.token_embedding, tokens);

  std::vector<Var<T>> soft_masks, accumulators;
  Var<T> running;
  for (std::int64_t l = 0; l < L; ++l) {
    Var<T> gate;
    if (mode != ForwardMode::Dense) {
      if (l < half) {
        Var<T> pre = tape.matmul(h, model.gate_w[static_cast<std::size_t>(l)]);
        pre = tape.add_row_broadcast(pre, model.gate_b[static_cast<std::size_t>(l)]);
        Var<T> s = tape.unary(pre, Unary::Relu);
        running = l == 0 ? s : tape.add(running, s);
        Var<T> clamped = tape.unary(running, Unary::Clamp01);
        Var<T> negated = tape.unary(clamped, Unary::Scale, T(-1));
        gate = tape.unary(negated, Unary::Shift, T(1));
        soft_masks.push_back(s);
        accumulators.push_back(running);
        out.gate_cols.push_back(gate);
      } else {
        gate = out.gate_cols[static_cast<std::size_t>(L - l - 1)];
      }
    }
    h = block_forward(tape, model, l, h, gate, mode, positions);
  }

  h = tape.rmsnorm(h, model.final_norm, static_cast<T>(cfg.norm_eps));
  out.logits = tape.matmul(h, model.output_head);

  if (mode != ForwardMode::Dense) {
    GateTrace<T>& trace = out.trace;
    trace.soft_mask = Tensor<T>({n, half});
    trace.accumulated = Tensor<T>({n, half});
    trace.gates = Tensor<T>({n, L});
    for (std::int64_t l = 0; l < half; ++l) {
      const Tensor<T>& s = tape.value(soft_masks[static_cast<std::size_t>(l)]);
      const Tensor<T>& acc = tape.value(accumulators[static_cast<std::size_t>(l)]);
      const Tensor<T>& g = tape.value(out.gate_cols[static_cast<std::size_t>(l)]);
      for (std::int64_t i = 0; i < n; ++i) {
        trace.soft_mask.at2(i, l) = s.at(i);
        trace.accumulated.at2(i, l) = acc.at(i);
        trace.gates.at2(i, l) = g.at(i);
        trace.gates.at2(i, L - l - 1) = g.at(i);
      }
    }
    trace.layer_sparsity.assign(static_cast<std::size_t>(L), 0.0);
    for (std::int64_t l = 0; l < L; ++l) {
      std::int64_t zeros = 0;
      for (std::int64_t i = 0; i < n; ++i) {
        if (trace.gates.at2(i, l) == T(0)) ++zeros;
      }
      trace.layer_sparsity[static_cast<std::size_t>(l)] =
          static_cast<double>(zeros) / static_cast<double>(n);
    }
  }
  return out;
}

#define SKIPMID_INSTANTIATE_MODEL(T)                                                         \
  template BoundModel<T> bind_model<T>(Tape<T>&, const Parameters<T>&, bool);                \
  template Var<T> swiglu_ffn<T>(Tape<T>&, const BoundLayer<T>&, Var<T>);                     \
  template Var<T> gated_attention<T>(Tape<T>&, const BoundModel<T>&, std::int64_t, Var<T>,   \
                                     Var<T>, const std::vector<std::int64_t>&,               \
                                     const std::vector<std::int64_t>&);                      \
  template Var<T> block_forward<T>(Tape<T>&, const BoundModel<T>&, std::int64_t, Var<T>,     \
                                   Var<T>, ForwardMode, const std::vector<std::int64_t>&);   \
  template ForwardOutput<T> model_forward<T>(Tape<T>&, const BoundModel<T>&,                 \
                                             const std::vector<std::int64_t>&, ForwardMode);

SKIPMID_INSTANTIATE_MODEL(float)
SKIPMID_INSTANTIATE_MODEL(double)

#undef SKIPMID_INSTANTIATE_MODEL

}  // namespace skipmid
