#pragma once

#include <string>
#include <vector>

#include "skipmid/config.hpp"
#include "skipmid/gates.hpp"
#include "skipmid/params.hpp"
#include "skipmid/tape.hpp"

namespace skipmid {

// dense: plain sandwich blocks, no gate arithmetic at all.
// gated-multiply: gates multiply module outputs; the training path.
// gated-skip: inference path that gathers surviving rows and computes modules
// only for them; must agree with gated-multiply.
enum class ForwardMode { Dense, GatedMultiply, GatedSkip };

ForwardMode parse_forward_mode(const std::string& name);
const char* forward_mode_name(ForwardMode mode);

template <typename T>
struct BoundLayer {
  Var<T> wq, wk, wv, wo;
  Var<T> attn_norm_pre, attn_norm_post;
  Var<T> w_gate, w_up, w_down;
  Var<T> ffn_norm_pre, ffn_norm_post;
};

// Tape leaves for every parameter tensor, in Parameters::entries order.
template <typename T>
struct BoundModel {
  TransformerConfig cfg;
  bool gated = false;
  Var<T> token_embedding;
  std::vector<BoundLayer<T>> layers;
  Var<T> final_norm;
  Var<T> output_head;
  std::vector<Var<T>> gate_w, gate_b;
  std::vector<Var<T>> leaves;  // entries order, for gradient read-out
};

template <typename T>
BoundModel<T> bind_model(Tape<T>& tape, const Parameters<T>& params, bool needs_grad);

template <typename T>
struct ForwardOutput {
  Var<T> logits;                   // [N, V]
  std::vector<Var<T>> gate_cols;   // L/2 vars of shape [N, 1]; empty in dense mode
  GateTrace<T> trace;              // empty tensors in dense mode
};

// Full decoder pass: embed, L gated sandwich blocks, final norm, head.
template <typename T>
ForwardOutput<T> model_forward(Tape<T>& tape, const BoundModel<T>& model,
                               const std::vector<std::int64_t>& tokens, ForwardMode mode);

// One sandwich block. `gate` is a [N,1] var for the gated modes and an invalid
// Var for dense. Exposed for the skip/multiply and attention equivalence tests.
template <typename T>
Var<T> block_forward(Tape<T>& tape, const BoundModel<T>& model, std::int64_t layer_index,
                     Var<T> h, Var<T> gate, ForwardMode mode,
                     const std::vector<std::int64_t>& positions);

// Causal GQA attention with rotary embeddings over pre-normalized input rows.
// When `gate` is valid, key j receives the additive logit ln(max(g_j, 1e-6)).
// Query rows are x_normed[q_rows]; keys and values come from all rows.
template <typename T>
Var<T> gated_attention(Tape<T>& tape, const BoundModel<T>& model, std::int64_t layer_index,
                       Var<T> x_normed, Var<T> gate,
                       const std::vector<std::int64_t>& q_rows,
                       const std::vector<std::int64_t>& positions);

template <typename T>
Var<T> swiglu_ffn(Tape<T>& tape, const BoundLayer<T>& layer, Var<T> x);

// Additive-logit floor for zero gates inside attention.
inline constexpr double kGateEpsilon = 1e-6;

}  // namespace skipmid
