#include "skipmid/train.hpp"

#include <cmath>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>

#include "json.hpp"

#include "skipmid/binio.hpp"
#include "skipmid/errors.hpp"
#include "skipmid/rng.hpp"

namespace skipmid {

namespace {

constexpr char kTrailerMagic[8] = {'S', 'K', 'I', 'P', 'T', 'R', 'N', '1'};

std::uint64_t param_block_bytes(const Parameters<float>& params) {
  const std::string text = canonical_model_text(params.config(), params.gated());
  std::uint64_t bytes = 8 + 4 + text.size() + 4;
  for (const auto& [name, t] : params.entries()) {
    bytes += 4 + name.size() + 4 + 4 * static_cast<std::uint64_t>(t->rank()) +
             4 * static_cast<std::uint64_t>(t->numel());
  }
  return bytes;
}

void write_f64_vector(std::ofstream& out, const std::vector<double>& v) {
  for (double x : v) write_f64(out, x);
}

std::vector<double> read_f64_vector(std::ifstream& in, std::size_t n, const char* what) {
  std::vector<double> v(n);
  for (double& x : v) x = read_f64(in, what);
  return v;
}

}  // namespace

void save_training_checkpoint(const TrainingCheckpoint& ckpt, const std::string& path) {
  const std::string tmp = path + ".tmp";
  save_params(ckpt.params, tmp);
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::app);
    if (!out) throw IoError("cannot append training state to '" + tmp + "'");
    write_bytes(out, kTrailerMagic, sizeof(kTrailerMagic));
    write_u64(out, static_cast<std::uint64_t>(ckpt.step));
    write_u64(out, static_cast<std::uint64_t>(ckpt.adam_t));
    write_u32(out, static_cast<std::uint32_t>(ckpt.rng_counters.size()));
    for (const auto& [name, value] : ckpt.rng_counters) {
      write_string(out, name);
      write_u64(out, value);
    }
    const ControllerState& c = ckpt.controller;
    write_u32(out, static_cast<std::uint32_t>(c.alpha.size()));
    write_f64_vector(out, c.alpha);
    write_f64_vector(out, c.beta);
    write_f64_vector(out, c.mu_target);
    write_f64_vector(out, c.var_target);
    if (ckpt.adam_m.size() != ckpt.adam_v.size()) {
      throw ContractError("training checkpoint: moment tensor count mismatch");
    }
    write_u32(out, static_cast<std::uint32_t>(ckpt.adam_m.size()));
    for (const auto& bank : {ckpt.adam_m, ckpt.adam_v}) {
      for (const Tensor<float>& t : bank) {
        write_u64(out, static_cast<std::uint64_t>(t.numel()));
        for (std::int64_t i = 0; i < t.numel(); ++i) write_f32(out, t.at(i));
      }
    }
    if (!out) throw IoError("write failed for '" + tmp + "'");
  }
  std::filesystem::rename(tmp, path);
}

TrainingCheckpoint load_training_checkpoint(const std::string& path) {
  TrainingCheckpoint ckpt(load_params<float>(path));
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open checkpoint '" + path + "'");
  in.seekg(static_cast<std::streamoff>(param_block_bytes(ckpt.params)));
  char magic[sizeof(kTrailerMagic)] = {};
  read_bytes(in, magic, sizeof(magic), "training trailer magic");
  if (std::memcmp(magic, kTrailerMagic, sizeof(kTrailerMagic)) != 0) {
    throw IoError("'" + path + "' holds parameters only, not a resumable training checkpoint");
  }
  ckpt.step = static_cast<std::int64_t>(read_u64(in, "step"));
  ckpt.adam_t = static_cast<std::int64_t>(read_u64(in, "optimizer step count"));
  const std::uint32_t n_counters = read_u32(in, "rng counter count");
  for (std::uint32_t i = 0; i < n_counters; ++i) {
    const std::string name = read_string(in, "rng stream name", 1u << 16);
    ckpt.rng_counters[name] = read_u64(in, "rng counter");
  }
  const std::uint32_t half = read_u32(in, "controller layer count");
  ckpt.controller.alpha = read_f64_vector(in, half, "alpha");
  ckpt.controller.beta = read_f64_vector(in, half, "beta");
  ckpt.controller.mu_target = read_f64_vector(in, half, "mu_target");
  ckpt.controller.var_target = read_f64_vector(in, half, "var_target");
  const std::uint32_t count = read_u32(in, "moment tensor count");
  const auto entries = ckpt.params.entries();
  if (count != entries.size()) {
    throw IoError("training checkpoint moment count does not match parameter count");
  }
  for (auto* bank : {&ckpt.adam_m, &ckpt.adam_v}) {
    for (const auto& [name, tensor] : entries) {
      const std::uint64_t numel = read_u64(in, "moment length");
      if (numel != static_cast<std::uint64_t>(tensor->numel())) {
        throw IoError("training checkpoint: moment length mismatch for " + name);
      }
      Tensor<float> t(tensor->shape());
      for (std::int64_t i = 0; i < t.numel(); ++i) t.at(i) = read_f32(in, "moment payload");
      bank->push_back(std::move(t));
    }
  }
  return ckpt;
}

EvalResult evaluate(const Parameters<float>& params, const TokenFile& file, TokenRange range,
                    ForwardMode mode, std::int64_t seq_len, std::int64_t max_windows) {
  if (seq_len <= 0) throw ContractError("evaluate: seq_len must be positive");
  const std::int64_t window = seq_len + 1;
  const std::int64_t available = range.size() / window;
  if (available <= 0) {
    throw ContractError("evaluate: validation range holds no full window of " +
                        std::to_string(window) + " tokens");
  }
  const std::int64_t windows = max_windows > 0 ? std::min(available, max_windows) : available;
  const bool gated_mode = mode != ForwardMode::Dense;
  double ce_sum = 0.0;
  std::vector<GateTrace<float>> traces;
  for (std::int64_t w = 0; w < windows; ++w) {
    const std::int64_t offset = range.begin + w * window;
    std::vector<std::int64_t> inputs, targets;
    inputs.reserve(static_cast<std::size_t>(seq_len));
    targets.reserve(static_cast<std::size_t>(seq_len));
    for (std::int64_t i = 0; i < seq_len; ++i) {
      inputs.push_back(static_cast<std::int64_t>(file.tokens[static_cast<std::size_t>(offset + i)]));
      targets.push_back(
          static_cast<std::int64_t>(file.tokens[static_cast<std::size_t>(offset + i + 1)]));
    }
    Tape<float> tape;
    BoundModel<float> bound = bind_model(tape, params, false);
    ForwardOutput<float> out = model_forward(tape, bound, inputs, mode);
    Var<float> ce = tape.cross_entropy(out.logits, targets);
    ce_sum += static_cast<double>(tape.value(ce).at(0));
    if (gated_mode) traces.push_back(std::move(out.trace));
  }
  EvalResult result;
  result.ce = ce_sum / static_cast<double>(windows);
  result.windows = windows;
  if (gated_mode) {
    result.sparsity = pool_sparsity(traces);
    result.visible_pairs = mean_visible_pairs(traces);
  }
  return result;
}

namespace {

struct StepOutcome {
  double loss_ce = 0.0, loss_reg = 0.0, loss_total = 0.0;
  GateStats stats;
  std::vector<double> z;
  std::vector<Tensor<float>> grads;
};

void add_into(Tensor<float>& dst, const Tensor<float>& src) {
  for (std::int64_t i = 0; i < dst.numel(); ++i) dst.at(i) += src.at(i);
}

// Whole global batch on one tape; the regularizer is built on-tape from the
// pooled gate mean and second moment.
StepOutcome run_step_single(const Parameters<float>& params, const RunConfig& cfg,
                            const Batch& batch, const ControllerState& state,
                            ControllerVariant variant) {
  const bool gated = cfg.gating.enabled;
  const std::int64_t B = static_cast<std::int64_t>(batch.inputs.size());
  const std::int64_t half = cfg.model.n_layers / 2;
  Tape<float> tape;
  BoundModel<float> bound = bind_model(tape, params, true);
  Var<float> ce_sum;
  std::vector<Var<float>> g_sum, g_sq_sum;
  if (gated) {
    g_sum.resize(static_cast<std::size_t>(half));
    g_sq_sum.resize(static_cast<std::size_t>(half));
  }
  std::vector<GateTrace<float>> traces;
  std::int64_t tokens = 0;
  for (std::int64_t b = 0; b < B; ++b) {
    const auto& inputs = batch.inputs[static_cast<std::size_t>(b)];
    ForwardOutput<float> out = model_forward(
        tape, bound, inputs, gated ? ForwardMode::GatedMultiply : ForwardMode::Dense);
    Var<float> ce = tape.cross_entropy(out.logits, batch.targets[static_cast<std::size_t>(b)]);
    ce_sum = b == 0 ? ce : tape.add(ce_sum, ce);
    tokens += static_cast<std::int64_t>(inputs.size());
    if (gated) {
      for (std::int64_t l = 0; l < half; ++l) {
        Var<float> col = out.gate_cols[static_cast<std::size_t>(l)];
        Var<float> s = tape.sum_all(col);
        Var<float> s2 = tape.sum_all(tape.unary(col, Unary::Square));
        auto& dst = g_sum[static_cast<std::size_t>(l)];
        auto& dst2 = g_sq_sum[static_cast<std::size_t>(l)];
        dst = b == 0 ? s : tape.add(dst, s);
        dst2 = b == 0 ? s2 : tape.add(dst2, s2);
      }
      traces.push_back(std::move(out.trace));
    }
  }
  Var<float> loss = tape.unary(ce_sum, Unary::Scale, static_cast<float>(1.0 / B));
  StepOutcome outcome;
  outcome.loss_ce = static_cast<double>(tape.value(loss).at(0));
  if (gated) {
    const float inv_tokens = static_cast<float>(1.0 / static_cast<double>(tokens));
    std::vector<Var<float>> means, second_moments;
    for (std::int64_t l = 0; l < half; ++l) {
      means.push_back(tape.unary(g_sum[static_cast<std::size_t>(l)], Unary::Scale, inv_tokens));
      second_moments.push_back(
          tape.unary(g_sq_sum[static_cast<std::size_t>(l)], Unary::Scale, inv_tokens));
    }
    Var<float> reg =
        regularization_loss_var(tape, means, second_moments, state, variant, cfg.model.n_layers);
    outcome.loss_reg = static_cast<double>(tape.value(reg).at(0));
    loss = tape.add(loss, reg);
    outcome.stats = batch_gate_stats(traces);
    outcome.z = pool_sparsity(traces).layer_sparsity;
  }
  outcome.loss_total = static_cast<double>(tape.value(loss).at(0));
  if (!std::isfinite(outcome.loss_total)) return outcome;
  tape.backward(loss);
  outcome.grads.reserve(bound.leaves.size());
  for (Var<float> leaf : bound.leaves) outcome.grads.push_back(tape.grad(leaf));
  return outcome;
}

// Micro-batched version: a value-only pass pools the gate statistics, then
// each micro-batch is re-run with gradients and seeded with both the CE
// cotangent and the closed-form cotangent of the regularizer, which is affine
// in each gate value given the pooled mean and second moment. The summed
// gradient equals the single-tape gradient up to float addition order.
StepOutcome run_step_accumulated(const Parameters<float>& params, const RunConfig& cfg,
                                 const Batch& batch, const ControllerState& state,
                                 ControllerVariant variant) {
  const bool gated = cfg.gating.enabled;
  const std::int64_t B = static_cast<std::int64_t>(batch.inputs.size());
  const std::int64_t micro = cfg.data.device_batch_size;
  const std::int64_t L = cfg.model.n_layers, half = L / 2;
  const double over_L = 2.0 / static_cast<double>(L);

  StepOutcome outcome;
  std::int64_t tokens = 0;
  for (const auto& inputs : batch.inputs) tokens += static_cast<std::int64_t>(inputs.size());

  std::vector<double> d_mean(static_cast<std::size_t>(half), 0.0);
  std::vector<double> d_m2(static_cast<std::size_t>(half), 0.0);
  std::vector<double> pooled_mean(static_cast<std::size_t>(half), 0.0);
  if (gated) {
    std::vector<GateTrace<float>> traces;
    for (std::int64_t b = 0; b < B; ++b) {
      Tape<float> tape;
      BoundModel<float> bound = bind_model(tape, params, false);
      ForwardOutput<float> out = model_forward(tape, bound,
                                               batch.inputs[static_cast<std::size_t>(b)],
                                               ForwardMode::GatedMultiply);
      traces.push_back(std::move(out.trace));
    }
    std::vector<double> m2(static_cast<std::size_t>(half), 0.0);
    for (std::int64_t l = 0; l < half; ++l) {
      double sum = 0.0, sum_sq = 0.0;
      for (const auto& trace : traces) {
        for (std::int64_t i = 0; i < trace.gates.dim(0); ++i) {
          const double g = static_cast<double>(trace.gates.at2(i, l));
          sum += g;
          sum_sq += g * g;
        }
      }
      pooled_mean[static_cast<std::size_t>(l)] = sum / static_cast<double>(tokens);
      m2[static_cast<std::size_t>(l)] = sum_sq / static_cast<double>(tokens);
    }
    outcome.stats = batch_gate_stats(traces);
    outcome.z = pool_sparsity(traces).layer_sparsity;
    outcome.loss_reg = regularization_loss(outcome.stats, state, variant);
    for (std::int64_t l = 0; l < half; ++l) {
      const std::size_t li = static_cast<std::size_t>(l);
      const double mean = pooled_mean[li];
      const double var = m2[li] - mean * mean;
      const double alpha = state.alpha[li], beta = state.beta[li];
      switch (variant) {
        case ControllerVariant::Sparsity:
          d_mean[li] = over_L * alpha;
          d_m2[li] = 0.0;
          break;
        case ControllerVariant::SparsityVariance:
        case ControllerVariant::Adaptive:
        case ControllerVariant::Proportional:
          d_mean[li] = over_L * (alpha - 2.0 * beta * mean);
          d_m2[li] = over_L * beta;
          break;
        case ControllerVariant::SparsityVarianceL2: {
          const double dv = var - state.var_target[li];
          d_mean[li] = over_L * (2.0 * alpha * (mean - state.mu_target[li]) -
                                 4.0 * beta * dv * mean);
          d_m2[li] = over_L * 2.0 * beta * dv;
          break;
        }
      }
    }
  }

  bool grads_started = false;
  double ce_total = 0.0;
  const float ce_seed = static_cast<float>(1.0 / static_cast<double>(B));
  for (std::int64_t begin = 0; begin < B; begin += micro) {
    const std::int64_t end = std::min(begin + micro, B);
    Tape<float> tape;
    BoundModel<float> bound = bind_model(tape, params, true);
    for (std::int64_t b = begin; b < end; ++b) {
      ForwardOutput<float> out = model_forward(
          tape, bound, batch.inputs[static_cast<std::size_t>(b)],
          gated ? ForwardMode::GatedMultiply : ForwardMode::Dense);
      Var<float> ce = tape.cross_entropy(out.logits, batch.targets[static_cast<std::size_t>(b)]);
      ce_total += static_cast<double>(tape.value(ce).at(0));
      tape.seed(ce, Tensor<float>::scalar(ce_seed));
      if (gated) {
        for (std::int64_t l = 0; l < half; ++l) {
          Var<float> col = out.gate_cols[static_cast<std::size_t>(l)];
          const Tensor<float>& g = tape.value(col);
          Tensor<float> cot(g.shape());
          const std::size_t li = static_cast<std::size_t>(l);
          for (std::int64_t i = 0; i < g.numel(); ++i) {
            const double gi = static_cast<double>(g.at(i));
            cot.at(i) = static_cast<float>(
                (d_mean[li] + 2.0 * d_m2[li] * gi) / static_cast<double>(tokens));
          }
          tape.seed(col, cot);
        }
      }
    }
    tape.run_backward();
    if (!grads_started) {
      outcome.grads.reserve(bound.leaves.size());
      for (Var<float> leaf : bound.leaves) outcome.grads.push_back(tape.grad(leaf));
      grads_started = true;
    } else {
      for (std::size_t i = 0; i < bound.leaves.size(); ++i) {
        add_into(outcome.grads[i], tape.grad(bound.leaves[i]));
      }
    }
  }
  outcome.loss_ce = ce_total / static_cast<double>(B);
  outcome.loss_total = outcome.loss_ce + outcome.loss_reg;
  return outcome;
}

nlohmann::ordered_json metrics_line(std::int64_t step, double lr, const StepOutcome& out,
                                    const ControllerState& state, bool gated) {
  nlohmann::ordered_json line;
  line["step"] = step;
  line["lr"] = lr;
  line["loss_ce"] = out.loss_ce;
  line["loss_reg"] = out.loss_reg;
  line["g_mean"] = gated ? out.stats.g_mean : std::vector<double>{};
  line["g_var"] = gated ? out.stats.g_var : std::vector<double>{};
  line["z"] = out.z;
  line["alpha"] = gated ? state.alpha : std::vector<double>{};
  line["beta"] = gated ? state.beta : std::vector<double>{};
  return line;
}

}  // namespace

TrainResult train_loop(const RunConfig& cfg, const std::string& resume_path) {
  cfg.validate();
  if (cfg.run.total_steps <= 0) throw ConfigError("run.total_steps must be positive");
  if (cfg.run.corpus_path.empty()) throw ConfigError("run.corpus_path is required");
  const TokenFile corpus = load_tokens(cfg.run.corpus_path);
  if (corpus.vocab_size > cfg.model.vocab_size) {
    throw ConfigError("corpus vocabulary " + std::to_string(corpus.vocab_size) +
                      " exceeds model.vocab_size " + std::to_string(cfg.model.vocab_size));
  }
  const std::int64_t seq_len = cfg.seq_len();
  const std::int64_t token_count = static_cast<std::int64_t>(corpus.tokens.size());
  const TokenRange train = train_range(token_count, cfg.data.val_fraction);
  const TokenRange val = val_range(token_count, cfg.data.val_fraction);
  const bool gated = cfg.gating.enabled;
  const ControllerVariant variant = parse_controller_variant(cfg.gating.variant);

  std::filesystem::create_directories(cfg.run.out_dir);

  Rng rng(cfg.run.seed);
  Parameters<float> params(cfg.model, gated);
  ControllerState state = make_controller_state(cfg.model, cfg.gating);
  AdamW<float> opt(params, cfg.optimizer);
  std::int64_t start_step = 0;
  bool resumed = false;
  if (!resume_path.empty()) {
    TrainingCheckpoint ckpt = load_training_checkpoint(resume_path);
    if (canonical_model_text(ckpt.params.config(), ckpt.params.gated()) !=
        canonical_model_text(cfg.model, gated)) {
      throw ConfigError("checkpoint architecture does not match the run config");
    }
    params = std::move(ckpt.params);
    state = ckpt.controller;
    start_step = ckpt.step;
    for (const auto& [name, value] : ckpt.rng_counters) rng.set_counter(name, value);
    opt.restore(ckpt.adam_t, std::move(ckpt.adam_m), std::move(ckpt.adam_v));
    resumed = true;
  } else {
    params.init(rng);
  }

  const std::string metrics_path = cfg.run.out_dir + "/metrics.ndjson";
  if (resumed && std::filesystem::exists(metrics_path)) {
    // Keep one line per completed step before the checkpoint; anything past
    // that is lost post-checkpoint work from the interrupted run.
    std::string kept;
    {
      std::ifstream in(metrics_path);
      std::string line;
      std::int64_t lines = 0;
      while (lines < start_step && std::getline(in, line)) {
        kept += line;
        kept += '\n';
        ++lines;
      }
      if (lines < start_step) {
        throw ContractError("metrics.ndjson has " + std::to_string(lines) +
                            " lines but the checkpoint resumes at step " +
                            std::to_string(start_step));
      }
    }
    std::ofstream rewrite(metrics_path, std::ios::trunc);
    rewrite << kept;
    if (!rewrite) throw IoError("write failed for '" + metrics_path + "'");
  }
  std::ofstream metrics(metrics_path, resumed ? std::ios::app : std::ios::trunc);
  if (!metrics) throw IoError("cannot open '" + metrics_path + "' for writing");

  const std::uint64_t sample_key = rng.stream_key("data/train");
  const bool accumulate = cfg.data.device_batch_size < cfg.data.batch_size;

  auto save_snapshot = [&](std::int64_t step, const std::string& path) {
    TrainingCheckpoint ckpt(params);
    ckpt.step = step;
    ckpt.rng_counters = rng.counters();
    ckpt.controller = state;
    ckpt.adam_t = opt.step_count();
    ckpt.adam_m = opt.first_moments();
    ckpt.adam_v = opt.second_moments();
    save_training_checkpoint(ckpt, path);
  };

  for (std::int64_t step = start_step; step < cfg.run.total_steps; ++step) {
    Batch batch = sample_batch(corpus, train, cfg.data.batch_size, seq_len, sample_key,
                               static_cast<std::uint64_t>(step));
    StepOutcome out = accumulate ? run_step_accumulated(params, cfg, batch, state, variant)
                                 : run_step_single(params, cfg, batch, state, variant);
    if (!std::isfinite(out.loss_total)) {
      save_snapshot(step, cfg.run.out_dir + "/checkpoint_crash.skm");
      throw ContractError("training diverged at step " + std::to_string(step) +
                          ": non-finite loss " + std::to_string(out.loss_total));
    }
    const double lr = lr_at_step(step, cfg.run.total_steps, cfg.optimizer, cfg.scheduler);
    try {
      opt.step(params, out.grads, lr);
    } catch (const ContractError&) {
      save_snapshot(step, cfg.run.out_dir + "/checkpoint_crash.skm");
      throw;
    }
    if (gated) update_coefficients(state, out.stats, cfg.gating);
    metrics << metrics_line(step, lr, out, state, gated).dump() << "\n";
    metrics.flush();
    const std::int64_t done = step + 1;
    if (cfg.run.checkpoint_interval > 0 && done % cfg.run.checkpoint_interval == 0 &&
        done < cfg.run.total_steps) {
      save_snapshot(done, cfg.run.out_dir + "/checkpoint_step" + std::to_string(done) + ".skm");
    }
    if (cfg.run.eval_interval > 0 && done % cfg.run.eval_interval == 0 &&
        done < cfg.run.total_steps) {
      EvalResult ev = evaluate(params, corpus, val,
                               gated ? ForwardMode::GatedMultiply : ForwardMode::Dense, seq_len,
                               cfg.run.eval_windows);
      std::cout << "step " << done << " val_ce " << format_double(ev.ce) << "\n";
    }
  }
  metrics.flush();
  if (!metrics) throw IoError("write failed for '" + metrics_path + "'");

  const std::string final_path = cfg.run.out_dir + "/checkpoint_final.skm";
  save_snapshot(cfg.run.total_steps, final_path);

  EvalResult ev = evaluate(params, corpus, val,
                           gated ? ForwardMode::GatedMultiply : ForwardMode::Dense, seq_len,
                           cfg.run.eval_windows);
  FlopsReport flops =
      make_flops_report(cfg.model, gated, seq_len, ev.sparsity.layer_sparsity, ev.visible_pairs);

  const std::string csv_path = cfg.run.out_dir + "/summary.csv";
  std::ofstream csv(csv_path, std::ios::trunc);
  if (!csv) throw IoError("cannot open '" + csv_path + "' for writing");
  csv << "model.n_layers,zeros,infer_flops,loss\n";
  csv << cfg.model.n_layers << "," << format_double(ev.sparsity.overall) << ","
      << format_double(flops.gated_flops) << "," << format_double(ev.ce) << "\n";
  if (!csv) throw IoError("write failed for '" + csv_path + "'");

  TrainResult result;
  result.final_step = cfg.run.total_steps;
  result.val_ce = ev.ce;
  result.sparsity = ev.sparsity;
  result.flops = flops;
  result.checkpoint_path = final_path;
  return result;
}

}  // namespace skipmid
