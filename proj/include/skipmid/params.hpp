#pragma once

#include <string>
#include <utility>
#include <vector>

#include "skipmid/config.hpp"
#include "skipmid/rng.hpp"
#include "skipmid/tensor.hpp"

namespace skipmid {

// All learnable tensors of one model, in the fixed serialization order:
// token_embedding; per layer wq, wk, wv, wo, attn_norm_pre, attn_norm_post,
// w_gate, w_up, w_down, ffn_norm_pre, ffn_norm_post; final_norm; output_head;
// then gate.<l>.w and gate.<l>.b for l < L/2 when gated.
template <typename T>
class Parameters {
 public:
  struct Layer {
    Tensor<T> wq, wk, wv, wo;
    Tensor<T> attn_norm_pre, attn_norm_post;
    Tensor<T> w_gate, w_up, w_down;
    Tensor<T> ffn_norm_pre, ffn_norm_post;
  };

  Parameters(const TransformerConfig& cfg, bool gated);

  const TransformerConfig& config() const { return cfg_; }
  bool gated() const { return gated_; }

  Tensor<T>& token_embedding() { return token_embedding_; }
  const Tensor<T>& token_embedding() const { return token_embedding_; }
  Layer& layer(std::int64_t l) { return layers_.at(static_cast<std::size_t>(l)); }
  const Layer& layer(std::int64_t l) const { return layers_.at(static_cast<std::size_t>(l)); }
  Tensor<T>& final_norm() { return final_norm_; }
  const Tensor<T>& final_norm() const { return final_norm_; }
  Tensor<T>& output_head() { return output_head_; }
  const Tensor<T>& output_head() const { return output_head_; }
  Tensor<T>& gate_w(std::int64_t l) { return gate_w_.at(static_cast<std::size_t>(l)); }
  const Tensor<T>& gate_w(std::int64_t l) const { return gate_w_.at(static_cast<std::size_t>(l)); }
  Tensor<T>& gate_b(std::int64_t l) { return gate_b_.at(static_cast<std::size_t>(l)); }
  const Tensor<T>& gate_b(std::int64_t l) const { return gate_b_.at(static_cast<std::size_t>(l)); }

  // Ordered (name, tensor) view used by init, serialization, and the optimizer.
  std::vector<std::pair<std::string, Tensor<T>*>> entries();
  std::vector<std::pair<std::string, const Tensor<T>*>> entries() const;
  std::int64_t scalar_count() const;

  // Normal(0, initializer_range) for projections, embeddings, head, and gate
  // weights; 1 for norm weights; 0 for gate biases. Each tensor draws from its
  // own named stream, so adding or removing the gate tensors never shifts the
  // draws of the shared dense weights.
  void init(Rng& rng);

  void zero_gate_parameters();

 private:
  TransformerConfig cfg_;
  bool gated_;
  Tensor<T> token_embedding_;
  std::vector<Layer> layers_;
  Tensor<T> final_norm_;
  Tensor<T> output_head_;
  std::vector<Tensor<T>> gate_w_;
  std::vector<Tensor<T>> gate_b_;
};

// Parameter checkpoint: magic "SKIPMID1", u32 length + canonical key-sorted
// config text, u32 tensor count, then per tensor u32 name length, name bytes,
// u32 rank, u32 dims, little-endian float32 payload. Bit-exact round trip for
// 32-bit element types.
template <typename T>
void save_params(const Parameters<T>& params, const std::string& path);
template <typename T>
Parameters<T> load_params(const std::string& path);

// Reads only the header of a checkpoint (either flavor).
TransformerConfig peek_checkpoint_config(const std::string& path, bool* gating_enabled);

}  // namespace skipmid
