#include <cstdio>
#include <exception>
#include <iostream>
#include <string>
#include <vector>

#include "CLI11.hpp"

#include "skipmid/config.hpp"
#include "skipmid/data.hpp"
#include "skipmid/errors.hpp"
#include "skipmid/flops.hpp"
#include "skipmid/gradcheck.hpp"
#include "skipmid/model.hpp"
#include "skipmid/params.hpp"
#include "skipmid/train.hpp"

namespace {

using namespace skipmid;

void run_tokenize(const std::string& input, const std::string& output) {
  const TokenFile file = tokenize_bytes(read_binary_file(input));
  save_tokens(file, output);
  std::cout << "wrote " << file.tokens.size() << " tokens (vocab " << file.vocab_size << ") to "
            << output << "\n";
}

void run_train(const std::string& config_path, const std::vector<std::string>& overrides,
               const std::string& resume) {
  RunConfig cfg = load_run_config(config_path);
  for (const std::string& kv : overrides) {
    const std::size_t eq = kv.find('=');
    if (eq == std::string::npos) {
      throw ConfigError("--set expects key=value, got '" + kv + "'");
    }
    apply_config_line(cfg, kv.substr(0, eq), kv.substr(eq + 1));
  }
  cfg.validate();
  const TrainResult result = train_loop(cfg, resume);
  std::cout << "finished step " << result.final_step << ", val_ce " << format_double(result.val_ce)
            << ", checkpoint " << result.checkpoint_path << "\n";
}

void print_z(const std::vector<double>& z) {
  std::cout << "z";
  for (double v : z) std::cout << " " << format_double(v);
  std::cout << "\n";
}

void run_eval(const std::string& checkpoint, const std::string& data, std::string mode_name,
              std::int64_t windows, std::int64_t seq_len) {
  const Parameters<float> params = load_params<float>(checkpoint);
  const TokenFile corpus = load_tokens(data);
  if (mode_name.empty()) mode_name = params.gated() ? "multiply" : "dense";
  const ForwardMode mode = parse_forward_mode(mode_name);
  if (seq_len <= 0) seq_len = params.config().max_seq_len;
  const TokenRange range{0, static_cast<std::int64_t>(corpus.tokens.size())};
  const EvalResult result = evaluate(params, corpus, range, mode, seq_len, windows);
  std::cout << "mode " << forward_mode_name(mode) << "\n";
  std::cout << "windows " << result.windows << "\n";
  std::cout << "ce " << format_double(result.ce) << "\n";
  if (mode != ForwardMode::Dense) {
    std::cout << "overall_sparsity " << format_double(result.sparsity.overall) << "\n";
    print_z(result.sparsity.layer_sparsity);
  }
}

void run_flops(const std::string& config_path, const std::string& checkpoint,
               const std::string& data, std::int64_t windows, std::int64_t seq_len) {
  if (config_path.empty() == checkpoint.empty()) {
    throw ConfigError("flops needs exactly one of --config or --checkpoint");
  }
  TransformerConfig model;
  bool gated = false;
  if (!config_path.empty()) {
    const RunConfig cfg = load_run_config(config_path);
    model = cfg.model;
    gated = cfg.gating.enabled;
  } else {
    model = peek_checkpoint_config(checkpoint, &gated);
  }
  model.validate();
  if (seq_len <= 0) seq_len = model.max_seq_len;

  std::vector<double> z, pairs;
  if (!data.empty()) {
    if (checkpoint.empty()) {
      throw ConfigError("flops --data requires --checkpoint to measure gate sparsity");
    }
    if (!gated) throw ConfigError("flops --data: checkpoint is dense, nothing to measure");
    const Parameters<float> params = load_params<float>(checkpoint);
    const TokenFile corpus = load_tokens(data);
    const TokenRange range{0, static_cast<std::int64_t>(corpus.tokens.size())};
    const EvalResult ev =
        evaluate(params, corpus, range, ForwardMode::GatedMultiply, seq_len, windows);
    z = ev.sparsity.layer_sparsity;
    pairs = ev.visible_pairs;
  }

  const FlopsReport report = make_flops_report(model, gated, seq_len, z, pairs);
  std::cout << "n_b " << report.block_params << "\n";
  std::cout << "total_params " << report.total_params << "\n";
  std::cout << "gating_params " << report.gating_params << "\n";
  std::cout << "dense_flops " << format_double(report.dense_flops) << "\n";
  std::cout << "gated_flops " << format_double(report.gated_flops) << "\n";
  std::cout << "active_param_reduction " << format_double(report.active_param_reduction) << "\n";
  if (!report.layer_sparsity.empty()) print_z(report.layer_sparsity);
  std::cout << "csv:n_b,total_params,gating_params,dense_flops,gated_flops,reduction";
  for (std::size_t l = 0; l < report.layer_sparsity.size(); ++l) std::cout << ",z" << l;
  std::cout << "\n";
  std::cout << "csv:" << report.block_params << "," << report.total_params << ","
            << report.gating_params << "," << format_double(report.dense_flops) << ","
            << format_double(report.gated_flops) << ","
            << format_double(report.active_param_reduction);
  for (double v : report.layer_sparsity) std::cout << "," << format_double(v);
  std::cout << "\n";
}

int run_gradcheck_cmd(std::uint64_t seed) {
  const GradcheckResult result = run_gradcheck(seed);
  std::cout << "checked " << result.checked << " parameters\n";
  std::cout << "max_rel_err " << format_double(result.max_rel_err) << " (" << result.worst_parameter
            << ")\n";
  std::cout << (result.pass ? "PASS" : "FAIL") << "\n";
  return result.pass ? 0 : 2;
}

void run_inspect_gates(const std::string& checkpoint, const std::string& text) {
  const Parameters<float> params = load_params<float>(checkpoint);
  if (!params.gated()) throw ConfigError("inspect-gates: checkpoint is dense, no gates to show");
  if (text.empty()) throw ConfigError("inspect-gates: --text must not be empty");
  std::vector<std::int64_t> tokens;
  for (char c : text) tokens.push_back(static_cast<std::uint8_t>(c));
  Tape<float> tape;
  const BoundModel<float> bound = bind_model(tape, params, false);
  const ForwardOutput<float> out = model_forward(tape, bound, tokens, ForwardMode::GatedMultiply);
  const std::int64_t half = params.config().n_layers / 2;
  std::printf("%4s %4s", "pos", "chr");
  for (std::int64_t l = 0; l < half; ++l) std::printf("   s.%-4lld", static_cast<long long>(l));
  for (std::int64_t l = 0; l < half; ++l) std::printf("   g.%-4lld", static_cast<long long>(l));
  std::printf("\n");
  for (std::size_t i = 0; i < tokens.size(); ++i) {
    const char c = text[i];
    std::printf("%4zu %4s", i,
                std::isprint(static_cast<unsigned char>(c)) ? std::string(1, c).c_str() : ".");
    for (std::int64_t l = 0; l < half; ++l) {
      std::printf(" %8.4f", static_cast<double>(out.trace.soft_mask.at2(static_cast<std::int64_t>(i), l)));
    }
    for (std::int64_t l = 0; l < half; ++l) {
      std::printf(" %8.4f", static_cast<double>(out.trace.gates.at2(static_cast<std::int64_t>(i), l)));
    }
    std::printf("\n");
  }
  print_z(out.trace.layer_sparsity);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"middle-out layer-skipping transformer"};
  app.require_subcommand(1);

  auto* tok = app.add_subcommand("tokenize", "convert a text file to a token file");
  std::string tok_input, tok_output;
  tok->add_option("--input", tok_input, "input text file")->required();
  tok->add_option("--output", tok_output, "output token file")->required();

  auto* train = app.add_subcommand("train", "run a training job");
  std::string train_config, train_resume;
  std::vector<std::string> train_sets;
  train->add_option("--config", train_config, "run configuration file")->required();
  train->add_option("--resume", train_resume, "training checkpoint to resume from");
  train->add_option("--set", train_sets, "key=value override, repeatable");

  auto* eval_cmd = app.add_subcommand("eval", "evaluate a checkpoint");
  std::string eval_ckpt, eval_data, eval_mode;
  std::int64_t eval_windows = 64, eval_seq = 0;
  eval_cmd->add_option("--checkpoint", eval_ckpt, "checkpoint file")->required();
  eval_cmd->add_option("--data", eval_data, "token file")->required();
  eval_cmd->add_option("--mode", eval_mode, "dense | multiply | skip (default: by checkpoint)");
  eval_cmd->add_option("--windows", eval_windows, "max validation windows, 0 = all");
  eval_cmd->add_option("--seq-len", eval_seq, "window length, 0 = model max_seq_len");

  auto* flops = app.add_subcommand("flops", "parameter and FLOPs report");
  std::string flops_config, flops_ckpt, flops_data;
  std::int64_t flops_windows = 64, flops_seq = 0;
  flops->add_option("--config", flops_config, "run configuration file");
  flops->add_option("--checkpoint", flops_ckpt, "checkpoint file");
  flops->add_option("--data", flops_data, "token file for measured gate sparsity");
  flops->add_option("--windows", flops_windows, "eval windows for --data, 0 = all");
  flops->add_option("--seq-len", flops_seq, "sequence length, 0 = model max_seq_len");

  auto* gradcheck = app.add_subcommand("gradcheck", "finite-difference gradient check");
  std::uint64_t gradcheck_seed = 0x5eed;
  gradcheck->add_option("--seed", gradcheck_seed, "evaluation point seed");

  auto* inspect = app.add_subcommand("inspect-gates", "per-token gate table for a text");
  std::string inspect_ckpt, inspect_text;
  inspect->add_option("--checkpoint", inspect_ckpt, "gated checkpoint")->required();
  inspect->add_option("--text", inspect_text, "text to push through the model")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 1;
  }

  try {
    if (tok->parsed()) {
      run_tokenize(tok_input, tok_output);
    } else if (train->parsed()) {
      run_train(train_config, train_sets, train_resume);
    } else if (eval_cmd->parsed()) {
      run_eval(eval_ckpt, eval_data, eval_mode, eval_windows, eval_seq);
    } else if (flops->parsed()) {
      run_flops(flops_config, flops_ckpt, flops_data, flops_windows, flops_seq);
    } else if (gradcheck->parsed()) {
      return run_gradcheck_cmd(gradcheck_seed);
    } else if (inspect->parsed()) {
      run_inspect_gates(inspect_ckpt, inspect_text);
    }
    return 0;
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
}
