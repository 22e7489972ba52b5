#include "skipmid/config.hpp"

#include <cstdio>
#include <fstream>
#include <map>
#include <sstream>

#include "skipmid/errors.hpp"

namespace skipmid {

namespace {

std::string trim(const std::string& s) {
  const std::string ws = " \t\r\n";
  const std::size_t a = s.find_first_not_of(ws);
  if (a == std::string::npos) return "";
  const std::size_t b = s.find_last_not_of(ws);
  return s.substr(a, b - a + 1);
}

std::int64_t parse_int(const std::string& key, const std::string& value) {
  try {
    std::size_t used = 0;
    const long long v = std::stoll(value, &used);
    if (used != value.size()) throw std::invalid_argument(value);
    return v;
  } catch (const std::exception&) {
    throw ConfigError(key + ": expected integer, got '" + value + "'");
  }
}

std::uint64_t parse_uint(const std::string& key, const std::string& value) {
  try {
    std::size_t used = 0;
    const unsigned long long v = std::stoull(value, &used);
    if (used != value.size() || value.find('-') != std::string::npos) {
      throw std::invalid_argument(value);
    }
    return v;
  } catch (const std::exception&) {
    throw ConfigError(key + ": expected unsigned integer, got '" + value + "'");
  }
}

double parse_float(const std::string& key, const std::string& value) {
  try {
    std::size_t used = 0;
    const double v = std::stod(value, &used);
    if (used != value.size()) throw std::invalid_argument(value);
    return v;
  } catch (const std::exception&) {
    throw ConfigError(key + ": expected number, got '" + value + "'");
  }
}

bool parse_bool(const std::string& key, const std::string& value) {
  if (value == "true" || value == "1") return true;
  if (value == "false" || value == "0") return false;
  throw ConfigError(key + ": expected boolean, got '" + value + "'");
}

}  // namespace

std::string format_double(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

std::int64_t TransformerConfig::ffn_hidden() const {
  std::int64_t hidden = 4 * dim;
  hidden = 2 * hidden / 3;
  hidden = static_cast<std::int64_t>(static_cast<double>(hidden) * ffn_dim_multiplier);
  hidden = ((hidden + multiple_of - 1) / multiple_of) * multiple_of;
  return hidden;
}

void TransformerConfig::validate() const {
  if (dim <= 0 || n_layers <= 0 || n_heads <= 0 || n_kv_heads <= 0 || vocab_size <= 0 ||
      multiple_of <= 0 || max_seq_len <= 0) {
    throw ConfigError("model: all dimensions must be positive");
  }
  if (n_layers % 2 != 0) {
    throw ConfigError("model.n_layers: must be even to pair layer l with L-l-1, got " +
                      std::to_string(n_layers));
  }
  if (dim % n_heads != 0) {
    throw ConfigError("model.dim must be divisible by model.n_heads");
  }
  if (n_heads % n_kv_heads != 0) {
    throw ConfigError("model.n_heads must be divisible by model.n_kv_heads");
  }
  if (head_dim() % 2 != 0) {
    throw ConfigError("model: head dim must be even for rotary embeddings");
  }
  if (use_scaled_rope) {
    throw ConfigError("model.use_scaled_rope: scaled rope is not supported; must be false");
  }
  if (!(norm_eps > 0) || !(rope_theta > 0) || !(initializer_range > 0) ||
      !(ffn_dim_multiplier > 0)) {
    throw ConfigError("model: norm_eps, rope_theta, ffn_dim_multiplier, initializer_range "
                      "must be positive");
  }
  if (vocab_size > 65535) {
    throw ConfigError("model.vocab_size: token files store 16-bit ids, max 65535");
  }
}

void GatingConfig::validate() const {
  if (variant != "sparsity" && variant != "sparsity_variance" && variant != "adaptive" &&
      variant != "proportional" && variant != "sparsity_variance_l2") {
    throw ConfigError("gating.variant: unknown variant '" + variant + "'");
  }
  if (update_condition != "absolute" && update_condition != "one_sided") {
    throw ConfigError("gating.update_condition: expected absolute or one_sided, got '" +
                      update_condition + "'");
  }
  if (!(gamma > 0)) throw ConfigError("gating.gamma: must be positive");
  if (delta < 0) throw ConfigError("gating.delta: must be non-negative");
  if (mu_initial < 0 || mu_initial > 1 || mu_final < 0 || mu_final > 1) {
    throw ConfigError("gating targets must lie in [0,1]");
  }
}

void RunConfig::validate() const {
  model.validate();
  gating.validate();
  if (data.batch_size <= 0 || data.device_batch_size <= 0) {
    throw ConfigError("data: batch sizes must be positive");
  }
  if (data.batch_size % data.device_batch_size != 0) {
    throw ConfigError("data.batch_size must be a multiple of data.device_batch_size");
  }
  if (data.seq_len < 0 || seq_len() > model.max_seq_len) {
    throw ConfigError("data.seq_len must lie in [1, model.max_seq_len]");
  }
  if (data.val_fraction < 0 || data.val_fraction >= 1) {
    throw ConfigError("data.val_fraction must lie in [0,1)");
  }
  if (!(optimizer.lr > 0) || !(optimizer.eps > 0)) {
    throw ConfigError("optimizer.lr and optimizer.eps must be positive");
  }
  if (optimizer.beta1 < 0 || optimizer.beta1 >= 1 || optimizer.beta2 < 0 ||
      optimizer.beta2 >= 1) {
    throw ConfigError("optimizer betas must lie in [0,1)");
  }
  if (optimizer.weight_decay < 0) throw ConfigError("optimizer.weight_decay must be >= 0");
  if (!(scheduler.warmup_steps > 0) || scheduler.warmup_steps >= 1) {
    throw ConfigError("scheduler.warmup_steps is a fraction in (0,1)");
  }
  if (!(scheduler.start_factor > 0) || scheduler.start_factor > 1) {
    throw ConfigError("scheduler.start_factor must lie in (0,1]");
  }
  if (run.total_steps < 0 || run.eval_interval < 0 || run.checkpoint_interval < 0 ||
      run.eval_windows < 0) {
    throw ConfigError("run: step counts and intervals must be non-negative");
  }
}

void apply_config_line(RunConfig& cfg, const std::string& key, const std::string& value) {
  if (key == "model.dim") cfg.model.dim = parse_int(key, value);
  else if (key == "model.n_layers") cfg.model.n_layers = parse_int(key, value);
  else if (key == "model.n_heads") cfg.model.n_heads = parse_int(key, value);
  else if (key == "model.n_kv_heads") cfg.model.n_kv_heads = parse_int(key, value);
  else if (key == "model.vocab_size") cfg.model.vocab_size = parse_int(key, value);
  else if (key == "model.ffn_dim_multiplier") cfg.model.ffn_dim_multiplier = parse_float(key, value);
  else if (key == "model.multiple_of") cfg.model.multiple_of = parse_int(key, value);
  else if (key == "model.norm_eps") cfg.model.norm_eps = parse_float(key, value);
  else if (key == "model.rope_theta") cfg.model.rope_theta = parse_float(key, value);
  else if (key == "model.use_scaled_rope") cfg.model.use_scaled_rope = parse_bool(key, value);
  else if (key == "model.max_seq_len") cfg.model.max_seq_len = parse_int(key, value);
  else if (key == "model.initializer_range") cfg.model.initializer_range = parse_float(key, value);
  else if (key == "data.batch_size") cfg.data.batch_size = parse_int(key, value);
  else if (key == "data.device_batch_size") cfg.data.device_batch_size = parse_int(key, value);
  else if (key == "data.seq_len") cfg.data.seq_len = parse_int(key, value);
  else if (key == "data.val_fraction") cfg.data.val_fraction = parse_float(key, value);
  else if (key == "optimizer.lr") cfg.optimizer.lr = parse_float(key, value);
  else if (key == "optimizer.beta1") cfg.optimizer.beta1 = parse_float(key, value);
  else if (key == "optimizer.beta2") cfg.optimizer.beta2 = parse_float(key, value);
  else if (key == "optimizer.eps") cfg.optimizer.eps = parse_float(key, value);
  else if (key == "optimizer.weight_decay") cfg.optimizer.weight_decay = parse_float(key, value);
  else if (key == "scheduler.warmup_steps") cfg.scheduler.warmup_steps = parse_float(key, value);
  else if (key == "scheduler.start_factor") cfg.scheduler.start_factor = parse_float(key, value);
  else if (key == "gating.enabled") cfg.gating.enabled = parse_bool(key, value);
  else if (key == "gating.mu_initial") cfg.gating.mu_initial = parse_float(key, value);
  else if (key == "gating.mu_final") cfg.gating.mu_final = parse_float(key, value);
  else if (key == "gating.variant") cfg.gating.variant = value;
  else if (key == "gating.gamma") cfg.gating.gamma = parse_float(key, value);
  else if (key == "gating.delta") cfg.gating.delta = parse_float(key, value);
  else if (key == "gating.update_condition") cfg.gating.update_condition = value;
  else if (key == "gating.alpha_init") cfg.gating.alpha_init = parse_float(key, value);
  else if (key == "gating.beta_init") cfg.gating.beta_init = parse_float(key, value);
  else if (key == "run.seed") cfg.run.seed = parse_uint(key, value);
  else if (key == "run.total_steps") cfg.run.total_steps = parse_int(key, value);
  else if (key == "run.corpus_path") cfg.run.corpus_path = value;
  else if (key == "run.out_dir") cfg.run.out_dir = value;
  else if (key == "run.eval_interval") cfg.run.eval_interval = parse_int(key, value);
  else if (key == "run.checkpoint_interval") cfg.run.checkpoint_interval = parse_int(key, value);
  else if (key == "run.eval_windows") cfg.run.eval_windows = parse_int(key, value);
  else throw ConfigError("unknown config key '" + key + "'");
}

RunConfig parse_run_config(const std::string& text) {
  RunConfig cfg;
  std::istringstream in(text);
  std::string line;
  std::int64_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const std::size_t hash = line.find('#');
    if (hash != std::string::npos) line = line.substr(0, hash);
    line = trim(line);
    if (line.empty()) continue;
    const std::size_t eq = line.find('=');
    if (eq == std::string::npos) {
      throw ConfigError("config line " + std::to_string(lineno) + ": expected key=value");
    }
    apply_config_line(cfg, trim(line.substr(0, eq)), trim(line.substr(eq + 1)));
  }
  return cfg;
}

RunConfig load_run_config(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot open config file '" + path + "'");
  std::ostringstream buf;
  buf << in.rdbuf();
  return parse_run_config(buf.str());
}

std::string canonical_model_text(const TransformerConfig& cfg, bool gating_enabled) {
  std::map<std::string, std::string> kv;
  kv["gating.enabled"] = gating_enabled ? "true" : "false";
  kv["model.dim"] = std::to_string(cfg.dim);
  kv["model.ffn_dim_multiplier"] = format_double(cfg.ffn_dim_multiplier);
  kv["model.initializer_range"] = format_double(cfg.initializer_range);
  kv["model.max_seq_len"] = std::to_string(cfg.max_seq_len);
  kv["model.multiple_of"] = std::to_string(cfg.multiple_of);
  kv["model.n_heads"] = std::to_string(cfg.n_heads);
  kv["model.n_kv_heads"] = std::to_string(cfg.n_kv_heads);
  kv["model.n_layers"] = std::to_string(cfg.n_layers);
  kv["model.norm_eps"] = format_double(cfg.norm_eps);
  kv["model.rope_theta"] = format_double(cfg.rope_theta);
  kv["model.use_scaled_rope"] = cfg.use_scaled_rope ? "true" : "false";
  kv["model.vocab_size"] = std::to_string(cfg.vocab_size);
  std::string out;
  for (const auto& [k, v] : kv) {
    out += k;
    out += '=';
    out += v;
    out += '\n';
  }
  return out;
}

TransformerConfig parse_canonical_model_text(const std::string& text, bool* gating_enabled) {
  RunConfig cfg;
  std::istringstream in(text);
  std::string line;
  while (std::getline(in, line)) {
    line = trim(line);
    if (line.empty()) continue;
    const std::size_t eq = line.find('=');
    if (eq == std::string::npos) throw IoError("checkpoint config block: malformed line");
    apply_config_line(cfg, trim(line.substr(0, eq)), trim(line.substr(eq + 1)));
  }
  cfg.model.validate();
  if (gating_enabled) *gating_enabled = cfg.gating.enabled;
  return cfg.model;
}

}  // namespace skipmid
