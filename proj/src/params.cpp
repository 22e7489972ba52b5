#include "skipmid/params.hpp"

#include <cstring>

#include "skipmid/binio.hpp"
#include "skipmid/errors.hpp"

namespace skipmid {

namespace {

constexpr char kMagic[8] = {'S', 'K', 'I', 'P', 'M', 'I', 'D', '1'};

bool is_norm_name(const std::string& name) {
  return name.find("norm") != std::string::npos;
}

bool is_gate_bias_name(const std::string& name) {
  return name.rfind("gate.", 0) == 0 && name.size() >= 2 &&
         name.compare(name.size() - 2, 2, ".b") == 0;
}

}  // namespace

template <typename T>
Parameters<T>::Parameters(const TransformerConfig& cfg, bool gated) : cfg_(cfg), gated_(gated) {
  cfg_.validate();
  const std::int64_t d = cfg_.dim, v = cfg_.vocab_size, h = cfg_.ffn_hidden();
  const std::int64_t dkv = cfg_.kv_dim();
  token_embedding_ = Tensor<T>({v, d});
  layers_.reserve(static_cast<std::size_t>(cfg_.n_layers));
  for (std::int64_t l = 0; l < cfg_.n_layers; ++l) {
    Layer layer;
    layer.wq = Tensor<T>({d, d});
    layer.wk = Tensor<T>({d, dkv});
    layer.wv = Tensor<T>({d, dkv});
    layer.wo = Tensor<T>({d, d});
    layer.attn_norm_pre = Tensor<T>({d});
    layer.attn_norm_post = Tensor<T>({d});
    layer.w_gate = Tensor<T>({d, h});
    layer.w_up = Tensor<T>({d, h});
    layer.w_down = Tensor<T>({h, d});
    layer.ffn_norm_pre = Tensor<T>({d});
    layer.ffn_norm_post = Tensor<T>({d});
    layers_.push_back(std::move(layer));
  }
  final_norm_ = Tensor<T>({d});
  output_head_ = Tensor<T>({d, v});
  if (gated_) {
    for (std::int64_t l = 0; l < cfg_.n_layers / 2; ++l) {
      gate_w_.push_back(Tensor<T>({d, 1}));
      gate_b_.push_back(Tensor<T>({1}));
    }
  }
}

template <typename T>
std::vector<std::pair<std::string, Tensor<T>*>> Parameters<T>::entries() {
  std::vector<std::pair<std::string, Tensor<T>*>> out;
  out.emplace_back("token_embedding", &token_embedding_);
  for (std::size_t l = 0; l < layers_.size(); ++l) {
    const std::string p = "layers." + std::to_string(l) + ".";
    Layer& layer = layers_[l];
    out.emplace_back(p + "wq", &layer.wq);
    out.emplace_back(p + "wk", &layer.wk);
    out.emplace_back(p + "wv", &layer.wv);
    out.emplace_back(p + "wo", &layer.wo);
    out.emplace_back(p + "attn_norm_pre", &layer.attn_norm_pre);
    out.emplace_back(p + "attn_norm_post", &layer.attn_norm_post);
    out.emplace_back(p + "w_gate", &layer.w_gate);
    out.emplace_back(p + "w_up", &layer.w_up);
    out.emplace_back(p + "w_down", &layer.w_down);
    out.emplace_back(p + "ffn_norm_pre", &layer.ffn_norm_pre);
    out.emplace_back(p + "ffn_norm_post", &layer.ffn_norm_post);
  }
  out.emplace_back("final_norm", &final_norm_);
  out.emplace_back("output_head", &output_head_);
  for (std::size_t l = 0; l < gate_w_.size(); ++l) {
    const std::string p = "gate." + std::to_string(l) + ".";
    out.emplace_back(p + "w", &gate_w_[l]);
    out.emplace_back(p + "b", &gate_b_[l]);
  }
  return out;
}

template <typename T>
std::vector<std::pair<std::string, const Tensor<T>*>> Parameters<T>::entries() const {
  auto mutable_view = const_cast<Parameters<T>*>(this)->entries();
  std::vector<std::pair<std::string, const Tensor<T>*>> out;
  out.reserve(mutable_view.size());
  for (auto& [name, ptr] : mutable_view) out.emplace_back(name, ptr);
  return out;
}

template <typename T>
std::int64_t Parameters<T>::scalar_count() const {
  std::int64_t n = 0;
  for (const auto& [name, t] : entries()) n += t->numel();
  return n;
}

template <typename T>
void Parameters<T>::init(Rng& rng) {
  const T sigma = static_cast<T>(cfg_.initializer_range);
  for (auto& [name, t] : entries()) {
    if (is_norm_name(name)) {
      for (std::int64_t i = 0; i < t->numel(); ++i) t->at(i) = T(1);
    } else if (is_gate_bias_name(name)) {
      for (std::int64_t i = 0; i < t->numel(); ++i) t->at(i) = T(0);
    } else {
      const std::string stream = "init/" + name;
      for (std::int64_t i = 0; i < t->numel(); ++i) {
        t->at(i) = sigma * static_cast<T>(rng.normal(stream));
      }
    }
  }
}

template <typename T>
void Parameters<T>::zero_gate_parameters() {
  for (auto& w : gate_w_)
    for (std::int64_t i = 0; i < w.numel(); ++i) w.at(i) = T(0);
  for (auto& b : gate_b_)
    for (std::int64_t i = 0; i < b.numel(); ++i) b.at(i) = T(0);
}

template <typename T>
void save_params(const Parameters<T>& params, const std::string& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open '" + path + "' for writing");
  write_bytes(out, kMagic, sizeof(kMagic));
  write_string(out, canonical_model_text(params.config(), params.gated()));
  const auto entries = params.entries();
  write_u32(out, static_cast<std::uint32_t>(entries.size()));
  for (const auto& [name, t] : entries) {
    write_string(out, name);
    write_u32(out, static_cast<std::uint32_t>(t->rank()));
    for (int r = 0; r < t->rank(); ++r) {
      write_u32(out, static_cast<std::uint32_t>(t->dim(r)));
    }
    for (std::int64_t i = 0; i < t->numel(); ++i) {
      write_f32(out, static_cast<float>(t->at(i)));
    }
  }
  if (!out) throw IoError("write failed for '" + path + "'");
}

namespace {

void check_magic(std::ifstream& in, const std::string& path) {
  char magic[8] = {};
  read_bytes(in, magic, sizeof(magic), "magic");
  if (std::memcmp(magic, kMagic, sizeof(kMagic)) != 0) {
    throw IoError("'" + path + "' is not a checkpoint (bad magic)");
  }
}

}  // namespace

template <typename T>
Parameters<T> load_params(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open checkpoint '" + path + "'");
  check_magic(in, path);
  bool gated = false;
  const TransformerConfig cfg =
      parse_canonical_model_text(read_string(in, "config block", 1u << 20), &gated);
  Parameters<T> params(cfg, gated);
  auto entries = params.entries();
  const std::uint32_t count = read_u32(in, "tensor count");
  if (count != entries.size()) {
    throw IoError("checkpoint holds " + std::to_string(count) + " tensors, expected " +
                  std::to_string(entries.size()));
  }
  for (auto& [name, t] : entries) {
    const std::string got = read_string(in, "tensor name", 1u << 16);
    if (got != name) {
      throw IoError("checkpoint tensor order mismatch: got '" + got + "', expected '" + name +
                    "'");
    }
    const std::uint32_t rank = read_u32(in, "rank");
    if (rank != static_cast<std::uint32_t>(t->rank())) {
      throw IoError("checkpoint tensor '" + name + "': rank mismatch");
    }
    for (int r = 0; r < t->rank(); ++r) {
      const std::uint32_t dim = read_u32(in, "dim");
      if (dim != static_cast<std::uint32_t>(t->dim(r))) {
        throw IoError("checkpoint tensor '" + name + "': shape mismatch");
      }
    }
    for (std::int64_t i = 0; i < t->numel(); ++i) {
      t->at(i) = static_cast<T>(read_f32(in, "tensor payload"));
    }
  }
  return params;
}

TransformerConfig peek_checkpoint_config(const std::string& path, bool* gating_enabled) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open checkpoint '" + path + "'");
  check_magic(in, path);
  return parse_canonical_model_text(read_string(in, "config block", 1u << 20), gating_enabled);
}

template class Parameters<float>;
template class Parameters<double>;
template void save_params<float>(const Parameters<float>&, const std::string&);
template void save_params<double>(const Parameters<double>&, const std::string&);
template Parameters<float> load_params<float>(const std::string&);
template Parameters<double> load_params<double>(const std::string&);

}  // namespace skipmid
