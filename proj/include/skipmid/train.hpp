#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "skipmid/config.hpp"
#include "skipmid/controller.hpp"
#include "skipmid/data.hpp"
#include "skipmid/flops.hpp"
#include "skipmid/model.hpp"
#include "skipmid/optim.hpp"
#include "skipmid/params.hpp"

namespace skipmid {

// Parameter block plus a "SKIPTRN1" trailer carrying step count, rng
// counters, controller state, and Adam moments, so a resumed run replays the
// original bitwise.
struct TrainingCheckpoint {
  explicit TrainingCheckpoint(Parameters<float> p) : params(std::move(p)) {}

  Parameters<float> params;
  std::int64_t step = 0;
  std::map<std::string, std::uint64_t> rng_counters;
  ControllerState controller;
  std::int64_t adam_t = 0;
  std::vector<Tensor<float>> adam_m, adam_v;
};

void save_training_checkpoint(const TrainingCheckpoint& ckpt, const std::string& path);
TrainingCheckpoint load_training_checkpoint(const std::string& path);

struct EvalResult {
  double ce = 0.0;
  std::int64_t windows = 0;
  SparsityReport sparsity;            // empty for dense evaluation
  std::vector<double> visible_pairs;  // per-layer surviving causal pairs; empty for dense
};

// Mean cross-entropy over non-overlapping windows of `range` (each seq_len+1
// tokens), plus pooled gate statistics for gated modes. max_windows <= 0
// means "all that fit".
EvalResult evaluate(const Parameters<float>& params, const TokenFile& file, TokenRange range,
                    ForwardMode mode, std::int64_t seq_len, std::int64_t max_windows);

struct TrainResult {
  std::int64_t final_step = 0;
  double val_ce = 0.0;
  SparsityReport sparsity;
  FlopsReport flops;
  std::string checkpoint_path;
};

// Full training run driven by a RunConfig: deterministic batch sampling,
// gated-multiply (or dense) forward, CE + controller regularization loss,
// AdamW with the warmup+cosine schedule, post-step coefficient updates,
// NDJSON metrics, periodic and final checkpoints, and a closing evaluation
// written to summary.csv. `resume_path` continues a checkpointed run.
TrainResult train_loop(const RunConfig& cfg, const std::string& resume_path = "");

}  // namespace skipmid
