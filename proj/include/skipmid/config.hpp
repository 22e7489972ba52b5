#pragma once

#include <cstdint>
#include <string>

namespace skipmid {

// Decoder architecture settings. Defaults follow the reference configuration;
// toy runs override dimensions freely.
struct TransformerConfig {
  std::int64_t dim = 768;
  std::int64_t n_layers = 12;
  std::int64_t n_heads = 12;
  std::int64_t n_kv_heads = 12;
  std::int64_t vocab_size = 50257;
  double ffn_dim_multiplier = 4.0;
  std::int64_t multiple_of = 256;
  double norm_eps = 1e-5;
  double rope_theta = 10000.0;
  bool use_scaled_rope = false;
  std::int64_t max_seq_len = 1024;
  double initializer_range = 0.02;

  std::int64_t head_dim() const { return dim / n_heads; }
  std::int64_t kv_dim() const { return head_dim() * n_kv_heads; }
  // Llama-3 rule: start at 4d, take floor(2/3 of it), scale by
  // ffn_dim_multiplier, round up to a multiple of multiple_of.
  std::int64_t ffn_hidden() const;
  void validate() const;
};

// Gate-sparsity controller settings ("gating." section).
struct GatingConfig {
  bool enabled = false;
  double mu_initial = 1.0;
  double mu_final = 1.0;
  std::string variant = "proportional";
  double gamma = 1e-3;
  double delta = 1e-2;
  std::string update_condition = "absolute";
  // Starting coefficient values; the fixed-coefficient variants (sparsity,
  // sparsity_variance) keep these for the whole run.
  double alpha_init = 0.0;
  double beta_init = 0.0;

  void validate() const;
};

struct DataConfig {
  std::int64_t batch_size = 512;
  std::int64_t device_batch_size = 32;
  // 0 means "use model.max_seq_len".
  std::int64_t seq_len = 0;
  double val_fraction = 0.1;
};

struct OptimizerConfig {
  double lr = 0.001;
  double beta1 = 0.8;
  double beta2 = 0.95;
  double eps = 1e-10;
  double weight_decay = 0.0;
};

struct SchedulerConfig {
  // Fraction of total steps spent in linear warmup.
  double warmup_steps = 0.1;
  double start_factor = 0.1;
};

struct RunSection {
  std::uint64_t seed = 0;
  std::int64_t total_steps = 0;
  std::string corpus_path;
  std::string out_dir = "out";
  std::int64_t eval_interval = 0;
  std::int64_t checkpoint_interval = 0;
  // Validation windows per evaluation; 0 means all available.
  std::int64_t eval_windows = 64;
};

struct RunConfig {
  TransformerConfig model;
  DataConfig data;
  OptimizerConfig optimizer;
  SchedulerConfig scheduler;
  GatingConfig gating;
  RunSection run;

  std::int64_t seq_len() const { return data.seq_len > 0 ? data.seq_len : model.max_seq_len; }
  void validate() const;
};

// key=value with dotted section names; '#' starts a comment; unknown keys are
// rejected. Omitted keys keep their defaults.
void apply_config_line(RunConfig& cfg, const std::string& key, const std::string& value);
RunConfig parse_run_config(const std::string& text);
RunConfig load_run_config(const std::string& path);

// Canonical architecture block stored inside checkpoints: sorted key=value
// lines covering the model section plus gating.enabled.
std::string canonical_model_text(const TransformerConfig& cfg, bool gating_enabled);
TransformerConfig parse_canonical_model_text(const std::string& text, bool* gating_enabled);

std::string format_double(double v);

}  // namespace skipmid
