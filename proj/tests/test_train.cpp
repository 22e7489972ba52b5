#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "doctest.h"
#include "json.hpp"
#include "skipmid/train.hpp"

using namespace skipmid;

namespace {

namespace fs = std::filesystem;

fs::path fresh_dir(const std::string& name) {
  fs::path dir = fs::temp_directory_path() / name;
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

std::string make_corpus(const fs::path& dir, std::int64_t count) {
  TokenFile file;
  file.vocab_size = 256;
  for (std::int64_t i = 0; i < count; ++i) {
    file.tokens.push_back(static_cast<std::uint16_t>((i * 37 + i / 5) % 256));
  }
  const std::string path = (dir / "corpus.tok").string();
  save_tokens(file, path);
  return path;
}

RunConfig tiny_run(const fs::path& dir, bool gated) {
  RunConfig cfg;
  cfg.model.dim = 16;
  cfg.model.n_layers = 2;
  cfg.model.n_heads = 2;
  cfg.model.n_kv_heads = 2;
  cfg.model.vocab_size = 256;
  cfg.model.ffn_dim_multiplier = 1.0;
  cfg.model.multiple_of = 4;
  cfg.model.max_seq_len = 16;
  cfg.data.batch_size = 2;
  cfg.data.device_batch_size = 2;
  cfg.data.seq_len = 12;
  cfg.data.val_fraction = 0.2;
  cfg.gating.enabled = gated;
  cfg.gating.mu_initial = 1.0;
  cfg.gating.mu_final = 0.5;
  cfg.gating.variant = "proportional";
  cfg.run.seed = 17;
  cfg.run.total_steps = 8;
  cfg.run.corpus_path = make_corpus(dir, 2000);
  cfg.run.out_dir = (dir / "out").string();
  cfg.run.eval_windows = 4;
  return cfg;
}

std::vector<std::string> read_lines(const std::string& path) {
  std::ifstream in(path);
  std::vector<std::string> lines;
  std::string line;
  while (std::getline(in, line)) lines.push_back(line);
  return lines;
}

std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  std::ostringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

}  // namespace

TEST_CASE("training checkpoint round trips bitwise") {
  const fs::path dir = fresh_dir("skipmid_ckpt_test");
  TransformerConfig model;
  model.dim = 8;
  model.n_layers = 4;
  model.n_heads = 2;
  model.n_kv_heads = 1;
  model.vocab_size = 16;
  model.ffn_dim_multiplier = 1.0;
  model.multiple_of = 4;
  model.max_seq_len = 16;

  Rng rng(21);
  Parameters<float> params(model, true);
  params.init(rng);
  TrainingCheckpoint ckpt(params);
  ckpt.step = 123;
  ckpt.rng_counters = {{"init/token_embedding", 256}, {"data/train", 99}};
  ckpt.controller.alpha = {0.1, -0.2};
  ckpt.controller.beta = {0.0, 0.5};
  ckpt.controller.mu_target = {1.0, 0.75};
  ckpt.controller.var_target = {0.0, 0.1875};
  ckpt.adam_t = 123;
  for (const auto& [name, tensor] : params.entries()) {
    Tensor<float> m(tensor->shape()), v(tensor->shape());
    for (std::int64_t i = 0; i < m.numel(); ++i) {
      m.at(i) = 0.001f * static_cast<float>(i % 13);
      v.at(i) = 0.002f * static_cast<float>(i % 7);
    }
    ckpt.adam_m.push_back(std::move(m));
    ckpt.adam_v.push_back(std::move(v));
  }

  const std::string path = (dir / "train.skm").string();
  save_training_checkpoint(ckpt, path);

  TrainingCheckpoint back = load_training_checkpoint(path);
  CHECK(back.step == 123);
  CHECK(back.adam_t == 123);
  CHECK(back.rng_counters == ckpt.rng_counters);
  CHECK(back.controller.alpha == ckpt.controller.alpha);
  CHECK(back.controller.beta == ckpt.controller.beta);
  CHECK(back.controller.mu_target == ckpt.controller.mu_target);
  CHECK(back.controller.var_target == ckpt.controller.var_target);
  auto a = ckpt.params.entries();
  auto b = back.params.entries();
  REQUIRE(a.size() == b.size());
  for (std::size_t i = 0; i < a.size(); ++i) {
    for (std::int64_t e = 0; e < a[i].second->numel(); ++e) {
      CHECK(a[i].second->at(e) == b[i].second->at(e));
    }
    for (std::int64_t e = 0; e < ckpt.adam_m[i].numel(); ++e) {
      CHECK(back.adam_m[i].at(e) == ckpt.adam_m[i].at(e));
      CHECK(back.adam_v[i].at(e) == ckpt.adam_v[i].at(e));
    }
  }

  // A parameters-only file is loadable as weights but not resumable.
  const std::string weights = (dir / "weights.skm").string();
  save_params(params, weights);
  CHECK_NOTHROW(load_params<float>(weights));
  CHECK_THROWS_AS(load_training_checkpoint(weights), IoError);
  // The reverse direction works: a training checkpoint still loads as weights.
  CHECK_NOTHROW(load_params<float>(path));
  fs::remove_all(dir);
}

TEST_CASE("evaluate contracts and mode agreement") {
  const fs::path dir = fresh_dir("skipmid_eval_test");
  const std::string corpus_path = make_corpus(dir, 600);
  TokenFile corpus = load_tokens(corpus_path);

  TransformerConfig model;
  model.dim = 16;
  model.n_layers = 2;
  model.n_heads = 2;
  model.n_kv_heads = 2;
  model.vocab_size = 256;
  model.ffn_dim_multiplier = 1.0;
  model.multiple_of = 4;
  model.max_seq_len = 16;
  Rng rng(4);
  Parameters<float> params(model, true);
  params.init(rng);

  const TokenRange range{0, 600};
  EvalResult multiply = evaluate(params, corpus, range, ForwardMode::GatedMultiply, 12, 8);
  EvalResult skip = evaluate(params, corpus, range, ForwardMode::GatedSkip, 12, 8);
  CHECK(multiply.windows == 8);
  CHECK(multiply.ce > 0);
  CHECK(multiply.ce == doctest::Approx(skip.ce).epsilon(1e-4));
  REQUIRE(multiply.sparsity.layer_sparsity.size() == 2);
  REQUIRE(multiply.visible_pairs.size() == 2);

  EvalResult again = evaluate(params, corpus, range, ForwardMode::GatedMultiply, 12, 8);
  CHECK(again.ce == multiply.ce);  // bitwise deterministic

  EvalResult all = evaluate(params, corpus, range, ForwardMode::GatedMultiply, 12, 0);
  CHECK(all.windows == 600 / 13);

  Parameters<float> dense(model, false);
  Rng rng2(4);
  dense.init(rng2);
  EvalResult d = evaluate(dense, corpus, range, ForwardMode::Dense, 12, 4);
  CHECK(d.sparsity.layer_sparsity.empty());
  CHECK(d.visible_pairs.empty());

  // Dense evaluation of a gated model simply ignores the probes.
  EvalResult as_dense = evaluate(params, corpus, range, ForwardMode::Dense, 12, 4);
  CHECK(as_dense.sparsity.layer_sparsity.empty());

  CHECK_THROWS_AS(evaluate(params, corpus, {0, 10}, ForwardMode::GatedMultiply, 12, 4),
                  ContractError);
  CHECK_THROWS_AS(evaluate(dense, corpus, range, ForwardMode::GatedMultiply, 12, 4),
                  ContractError);
  fs::remove_all(dir);
}

TEST_CASE("train loop writes metrics, checkpoints, and a summary") {
  const fs::path dir = fresh_dir("skipmid_loop_test");
  RunConfig cfg = tiny_run(dir, true);
  TrainResult result = train_loop(cfg);
  CHECK(result.final_step == 8);
  CHECK(result.val_ce > 0);
  CHECK(result.checkpoint_path == cfg.run.out_dir + "/checkpoint_final.skm");

  std::vector<std::string> lines = read_lines(cfg.run.out_dir + "/metrics.ndjson");
  REQUIRE(lines.size() == 8);
  for (std::size_t i = 0; i < lines.size(); ++i) {
    nlohmann::json line = nlohmann::json::parse(lines[i]);
    CHECK(line["step"] == i);
    CHECK(line["lr"].is_number());
    CHECK(line["loss_ce"].is_number());
    CHECK(line["loss_reg"].is_number());
    CHECK(line["g_mean"].size() == 1);
    CHECK(line["g_var"].size() == 1);
    CHECK(line["z"].size() == 2);
    CHECK(line["alpha"].size() == 1);
    CHECK(line["beta"].size() == 1);
  }

  std::vector<std::string> csv = read_lines(cfg.run.out_dir + "/summary.csv");
  REQUIRE(csv.size() == 2);
  CHECK(csv[0] == "model.n_layers,zeros,infer_flops,loss");
  CHECK(csv[1].rfind("2,", 0) == 0);

  TrainingCheckpoint final_ckpt = load_training_checkpoint(result.checkpoint_path);
  CHECK(final_ckpt.step == 8);
  CHECK(final_ckpt.adam_t == 8);

  // Dense runs leave the gate-statistics arrays empty.
  const fs::path dense_dir = fresh_dir("skipmid_loop_dense");
  RunConfig dense_cfg = tiny_run(dense_dir, false);
  dense_cfg.run.total_steps = 2;
  train_loop(dense_cfg);
  nlohmann::json dense_line =
      nlohmann::json::parse(read_lines(dense_cfg.run.out_dir + "/metrics.ndjson").at(0));
  CHECK(dense_line["g_mean"].empty());
  CHECK(dense_line["z"].empty());
  CHECK(dense_line["alpha"].empty());
  fs::remove_all(dir);
  fs::remove_all(dense_dir);
}

TEST_CASE("resumed runs reproduce the unbroken stream bitwise") {
  const fs::path dir_a = fresh_dir("skipmid_resume_a");
  RunConfig cfg_a = tiny_run(dir_a, true);
  cfg_a.run.checkpoint_interval = 4;
  train_loop(cfg_a);

  const fs::path dir_b = fresh_dir("skipmid_resume_b");
  RunConfig cfg_b = tiny_run(dir_b, true);
  cfg_b.run.checkpoint_interval = 4;
  cfg_b.run.corpus_path = cfg_a.run.corpus_path;
  fs::create_directories(cfg_b.run.out_dir);
  // Reconstruct the interruption: history up to the checkpoint plus orphaned
  // lines from lost post-checkpoint work, which the resume must discard.
  std::vector<std::string> lines = read_lines(cfg_a.run.out_dir + "/metrics.ndjson");
  {
    std::ofstream partial(cfg_b.run.out_dir + "/metrics.ndjson");
    for (std::size_t i = 0; i < 4; ++i) partial << lines[i] << "\n";
    partial << lines[4] << "\n";
    partial << "{\"step\":5,\"torn";  // half-written line at the kill point
  }
  fs::copy_file(cfg_a.run.out_dir + "/checkpoint_step4.skm",
                cfg_b.run.out_dir + "/checkpoint_step4.skm");

  train_loop(cfg_b, cfg_b.run.out_dir + "/checkpoint_step4.skm");
  CHECK(read_file(cfg_a.run.out_dir + "/metrics.ndjson") ==
        read_file(cfg_b.run.out_dir + "/metrics.ndjson"));
  CHECK(read_file(cfg_a.run.out_dir + "/checkpoint_final.skm") ==
        read_file(cfg_b.run.out_dir + "/checkpoint_final.skm"));
  CHECK(read_file(cfg_a.run.out_dir + "/summary.csv") ==
        read_file(cfg_b.run.out_dir + "/summary.csv"));

  // Architecture mismatch is rejected up front.
  RunConfig wrong = cfg_b;
  wrong.model.dim = 32;
  CHECK_THROWS_AS(train_loop(wrong, cfg_b.run.out_dir + "/checkpoint_step4.skm"), ConfigError);

  // A metrics file shorter than the resume step is rejected.
  {
    std::ofstream partial(cfg_b.run.out_dir + "/metrics.ndjson", std::ios::trunc);
    partial << lines[0] << "\n";
  }
  CHECK_THROWS_AS(train_loop(cfg_b, cfg_b.run.out_dir + "/checkpoint_step4.skm"), ContractError);
  fs::remove_all(dir_a);
  fs::remove_all(dir_b);
}

TEST_CASE("train loop rejects an oversized corpus vocabulary") {
  const fs::path dir = fresh_dir("skipmid_vocab_test");
  RunConfig cfg = tiny_run(dir, false);
  cfg.model.vocab_size = 128;  // corpus says 256
  CHECK_THROWS_AS(train_loop(cfg), ConfigError);
  fs::remove_all(dir);
}
