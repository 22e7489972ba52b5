#include "skipmid/flops.hpp"

#include "skipmid/errors.hpp"

namespace skipmid {

std::int64_t block_params(const TransformerConfig& cfg) {
  const std::int64_t d = cfg.dim, dkv = cfg.kv_dim(), hidden = cfg.ffn_hidden();
  return 2 * d * d + 2 * d * dkv + 3 * d * hidden + 4 * d;
}

std::int64_t gating_param_count(const TransformerConfig& cfg) {
  return (cfg.dim + 1) * (cfg.n_layers / 2);
}

std::int64_t total_param_count(const TransformerConfig& cfg, bool gated) {
  std::int64_t total = cfg.vocab_size * cfg.dim          // token embedding
                       + cfg.n_layers * block_params(cfg)    // blocks
                       + cfg.dim                         // final norm
                       + cfg.dim * cfg.vocab_size;       // output head
  if (gated) total += gating_param_count(cfg);
  return total;
}

double active_param_reduction(std::int64_t n_b, const std::vector<double>& z_gate_layers) {
  double sum = 0.0;
  for (double z : z_gate_layers) {
    if (z < 0.0 || z > 1.0) throw ContractError("active_param_reduction: z outside [0,1]");
    sum += z;
  }
  return 2.0 * static_cast<double>(n_b) * sum;
}

double forward_flops(const TransformerConfig& cfg, std::int64_t n_tokens,
                     const std::vector<double>& z, const std::vector<double>& visible_pairs) {
  if (n_tokens <= 0) throw ContractError("forward_flops: need at least one token");
  const std::int64_t L = cfg.n_layers;
  if (!z.empty() && static_cast<std::int64_t>(z.size()) != L) {
    throw ContractError("forward_flops: z must have one entry per layer");
  }
  if (!visible_pairs.empty() && static_cast<std::int64_t>(visible_pairs.size()) != L) {
    throw ContractError("forward_flops: visible_pairs must have one entry per layer");
  }
  const double n = static_cast<double>(n_tokens);
  const double d = static_cast<double>(cfg.dim);
  const double dkv = static_cast<double>(cfg.kv_dim());
  const double dh = static_cast<double>(cfg.head_dim());
  const double heads = static_cast<double>(cfg.n_heads);
  const double hidden = static_cast<double>(cfg.ffn_hidden());
  const double dense_pairs = n * (n + 1.0) / 2.0;

  double total = 0.0;
  for (std::int64_t l = 0; l < L; ++l) {
    double zl = 0.0;
    if (!z.empty()) {
      zl = z[static_cast<std::size_t>(l)];
      if (zl < 0.0 || zl > 1.0) throw ContractError("forward_flops: z outside [0,1]");
    }
    const double f = 1.0 - zl;
    const double pairs = visible_pairs.empty() ? f * f * dense_pairs
                                               : visible_pairs[static_cast<std::size_t>(l)];
    double per_token = 0.0;
    per_token += 4.0 * 7.0 * d;                    // sandwich norms
    per_token += 2.0 * d * d * 2.0;                // Wq, Wo
    per_token += 2.0 * d * dkv * 2.0;              // Wk, Wv
    per_token += 3.0 * d + 3.0 * dkv;              // rotary on q and k
    per_token += 2.0 * d;                          // two residual adds
    per_token += 3.0 * 2.0 * d * hidden;           // FFN matmuls
    per_token += 6.0 * hidden;                     // silu (5) and glu product (1)
    const double per_pair = heads * (2.0 * dh + 1.0 + 4.0 + 2.0 * dh);  // scores, softmax, values
    total += f * n * per_token + pairs * per_pair;
  }
  total += 7.0 * n * d;                            // final norm
  total += 2.0 * n * d * static_cast<double>(cfg.vocab_size);  // output head
  return total;
}

template <typename T>
std::vector<double> mean_visible_pairs(const std::vector<GateTrace<T>>& traces) {
  if (traces.empty()) throw ContractError("mean_visible_pairs: empty batch");
  const std::int64_t L = traces.front().gates.dim(1);
  std::vector<double> pairs(static_cast<std::size_t>(L), 0.0);
  for (const GateTrace<T>& trace : traces) {
    if (trace.gates.dim(1) != L) {
      throw ContractError("mean_visible_pairs: traces disagree on layer count");
    }
    const std::int64_t n = trace.gates.dim(0);
    for (std::int64_t l = 0; l < L; ++l) {
      std::int64_t visible = 0, alive_so_far = 0;
      for (std::int64_t i = 0; i < n; ++i) {
        if (trace.gates.at2(i, l) != T(0)) {
          ++alive_so_far;
          visible += alive_so_far;
        }
      }
      pairs[static_cast<std::size_t>(l)] += static_cast<double>(visible);
    }
  }
  for (double& p : pairs) p /= static_cast<double>(traces.size());
  return pairs;
}

FlopsReport make_flops_report(const TransformerConfig& cfg, bool gated, std::int64_t n_tokens,
                              const std::vector<double>& z,
                              const std::vector<double>& visible_pairs) {
  FlopsReport report;
  report.block_params = block_params(cfg);
  report.total_params = total_param_count(cfg, gated);
  report.gating_params = gated ? gating_param_count(cfg) : 0;
  report.dense_flops = forward_flops(cfg, n_tokens);
  report.gated_flops = forward_flops(cfg, n_tokens, z, visible_pairs);
  report.layer_sparsity = z;
  if (!z.empty()) {
    const std::vector<double> first_half(z.begin(), z.begin() + cfg.n_layers / 2);
    report.active_param_reduction = active_param_reduction(report.block_params, first_half);
    double sum = 0.0;
    for (double zl : z) sum += zl;
    report.overall_sparsity = sum / static_cast<double>(z.size());
  }
  return report;
}

template std::vector<double> mean_visible_pairs<float>(const std::vector<GateTrace<float>>&);
template std::vector<double> mean_visible_pairs<double>(const std::vector<GateTrace<double>>&);

}  // namespace skipmid
