// End-to-end acceptance gate: ten checks covering dense recovery, gate
// algebra, the attention oracle, skip/multiply equivalence, gradients,
// controller arithmetic, closed-loop control, FLOPs accounting, a training
// smoke run, and bitwise resume after a hard kill. One PASS/FAIL line each;
// exit status 0 only if every check passes.

#include <fcntl.h>
#include <signal.h>
#include <sys/wait.h>
#include <unistd.h>

#include <chrono>
#include <cmath>
#include <cstdarg>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <random>
#include <string>
#include <vector>

#include "skipmid/config.hpp"
#include "skipmid/controller.hpp"
#include "skipmid/data.hpp"
#include "skipmid/flops.hpp"
#include "skipmid/gates.hpp"
#include "skipmid/gradcheck.hpp"
#include "skipmid/model.hpp"
#include "skipmid/rng.hpp"
#include "skipmid/tape.hpp"
#include "skipmid/train.hpp"

namespace fs = std::filesystem;
using namespace skipmid;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

fs::path g_work;

std::string strf(const char* fmt, ...) {
  char buf[512];
  va_list args;
  va_start(args, fmt);
  std::vsnprintf(buf, sizeof(buf), fmt, args);
  va_end(args);
  return buf;
}

TransformerConfig toy_config() {
  TransformerConfig cfg;
  cfg.dim = 8;
  cfg.n_layers = 4;
  cfg.n_heads = 2;
  cfg.n_kv_heads = 1;
  cfg.vocab_size = 16;
  cfg.ffn_dim_multiplier = 1.0;
  cfg.multiple_of = 4;
  cfg.max_seq_len = 16;
  cfg.validate();
  return cfg;
}

std::vector<std::int64_t> random_tokens(std::uint64_t key, std::uint64_t& c, std::int64_t n,
                                        std::int64_t vocab) {
  std::vector<std::int64_t> tokens;
  for (std::int64_t i = 0; i < n; ++i) {
    tokens.push_back(static_cast<std::int64_t>(
        Rng::below_at(key, c++, static_cast<std::uint64_t>(vocab))));
  }
  return tokens;
}

std::string read_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  std::string text((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return text;
}

// ---------------------------------------------------------------------------
// 1. With all gate parameters zero, the gated model reproduces a
//    weight-identical dense baseline bitwise in 64-bit arithmetic.
Outcome dense_recovery() {
  const TransformerConfig cfg = toy_config();
  Rng rd(4401);
  Parameters<double> dense(cfg, false);
  dense.init(rd);
  Rng rg(4401);
  Parameters<double> gated(cfg, true);
  gated.init(rg);
  gated.zero_gate_parameters();

  Rng rng(4402);
  const std::uint64_t key = rng.stream_key("inputs");
  std::uint64_t c = 0;
  int equal = 0;
  const int trials = 100;
  for (int trial = 0; trial < trials; ++trial) {
    const std::int64_t n =
        1 + static_cast<std::int64_t>(Rng::below_at(key, c++, static_cast<std::uint64_t>(cfg.max_seq_len)));
    const std::vector<std::int64_t> tokens = random_tokens(key, c, n, cfg.vocab_size);
    Tape<double> td;
    ForwardOutput<double> od = model_forward(td, bind_model(td, dense, false), tokens, ForwardMode::Dense);
    Tape<double> tm;
    ForwardOutput<double> om =
        model_forward(tm, bind_model(tm, gated, false), tokens, ForwardMode::GatedMultiply);
    Tape<double> ts;
    ForwardOutput<double> os =
        model_forward(ts, bind_model(ts, gated, false), tokens, ForwardMode::GatedSkip);
    const Tensor<double>& ld = td.value(od.logits);
    const Tensor<double>& lm = tm.value(om.logits);
    const Tensor<double>& ls = ts.value(os.logits);
    bool ok = ld.same_shape(lm) && ld.same_shape(ls);
    for (std::int64_t i = 0; ok && i < ld.numel(); ++i) {
      ok = ld.at(i) == lm.at(i) && ld.at(i) == ls.at(i);
    }
    for (std::int64_t i = 0; ok && i < om.trace.gates.numel(); ++i) ok = om.trace.gates.at(i) == 1.0;
    if (ok) ++equal;
  }
  return {equal == trials,
          strf("%d/%d inputs bitwise identical in multiply and skip modes", equal, trials)};
}

// ---------------------------------------------------------------------------
// 2. Gate algebra invariants on random soft-mask sequences: mirror symmetry,
//    monotone non-increase, range [0,1], and g == 0 exactly when S >= 1.
Outcome gate_algebra_invariants() {
  Rng rng(4403);
  const std::uint64_t key = rng.stream_key("masks");
  std::uint64_t c = 0;
  const int trials = 1000;
  int ok_trials = 0;
  for (int trial = 0; trial < trials; ++trial) {
    const std::int64_t half = 1 + static_cast<std::int64_t>(Rng::below_at(key, c++, 6));
    const std::int64_t L = 2 * half;
    const std::int64_t n = 1 + static_cast<std::int64_t>(Rng::below_at(key, c++, 8));
    Tensor<double> soft({n, half});
    for (std::int64_t i = 0; i < soft.numel(); ++i) {
      const std::uint64_t kind = Rng::below_at(key, c++, 4);
      soft.at(i) = kind == 0 ? 0.0
                             : (kind == 1 ? 1.5 * Rng::uniform_at(key, c++)
                                          : 0.45 * Rng::uniform_at(key, c++));
    }
    const GateTrace<double> trace = gate_algebra(soft, L);
    bool ok = true;
    for (std::int64_t i = 0; i < n; ++i) {
      double running = 0.0;
      for (std::int64_t l = 0; l < half; ++l) {
        running += soft.at2(i, l);
        const double g = trace.gates.at2(i, l);
        if (trace.gates.at2(i, L - 1 - l) != g) ok = false;               // mirror
        if (l > 0 && g > trace.gates.at2(i, l - 1)) ok = false;           // monotone
        if (g < 0.0 || g > 1.0) ok = false;                               // range
        if ((running >= 1.0) != (g == 0.0)) ok = false;                   // zero iff S >= 1
      }
    }
    if (ok) ++ok_trials;
  }
  return {ok_trials == trials,
          strf("%d/%d sequences satisfy mirror, monotonicity, range, and S>=1 zeroing", ok_trials,
               trials)};
}

// ---------------------------------------------------------------------------
// 3. Score-modification attention matches the explicit weighted softmax,
//    including keys whose gate is exactly zero.
Outcome attention_oracle() {
  Rng rng(4404);
  const std::uint64_t key = rng.stream_key("attn");
  std::uint64_t c = 0;
  auto draw = [&]() { return 2.0 * Rng::uniform_at(key, c++) - 1.0; };
  const double tol = 1e-6;
  const int trials = 500;
  int ok_trials = 0;
  double max_diff = 0.0;
  for (int trial = 0; trial < trials; ++trial) {
    const std::int64_t n = 1 + static_cast<std::int64_t>(Rng::below_at(key, c++, 8));
    const std::int64_t dh = 2 + static_cast<std::int64_t>(Rng::below_at(key, c++, 3));
    Tensor<double> q({n, dh}), k({n, dh}), v({n, dh}), g({n, 1});
    for (std::int64_t i = 0; i < q.numel(); ++i) q.at(i) = draw();
    for (std::int64_t i = 0; i < k.numel(); ++i) k.at(i) = draw();
    for (std::int64_t i = 0; i < v.numel(); ++i) v.at(i) = draw();
    for (std::int64_t i = 0; i < n; ++i) {
      const std::uint64_t kind = Rng::below_at(key, c++, 4);
      g.at(i) = kind == 0 ? 0.0 : (kind == 1 ? 1.0 : Rng::uniform_at(key, c++));
    }
    const double scale = 1.0 / std::sqrt(static_cast<double>(dh));
    std::vector<std::int64_t> pos(static_cast<std::size_t>(n));
    for (std::int64_t i = 0; i < n; ++i) pos[static_cast<std::size_t>(i)] = i;

    Tape<double> tape;
    Var<double> lng = tape.unary(
        tape.unary(tape.leaf(g, false), Unary::ClampMin, kGateEpsilon), Unary::Ln);
    Var<double> scores = tape.add_row_broadcast(
        tape.causal_scores(tape.leaf(q, false), tape.leaf(k, false), pos, scale), lng);
    Var<double> out =
        tape.causal_weighted_sum(tape.softmax_rows(scores), tape.leaf(v, false), pos);

    double trial_diff = 0.0;
    for (std::int64_t i = 0; i < n; ++i) {
      std::vector<double> s(static_cast<std::size_t>(i + 1));
      double smax = -1e300;
      for (std::int64_t j = 0; j <= i; ++j) {
        double dot = 0;
        for (std::int64_t t = 0; t < dh; ++t) dot += q.at2(i, t) * k.at2(j, t);
        s[static_cast<std::size_t>(j)] = scale * dot;
        smax = std::max(smax, s[static_cast<std::size_t>(j)]);
      }
      double denom = 0;
      for (std::int64_t j = 0; j <= i; ++j) {
        denom += std::max(g.at(j), kGateEpsilon) * std::exp(s[static_cast<std::size_t>(j)] - smax);
      }
      for (std::int64_t t = 0; t < dh; ++t) {
        double acc = 0;
        for (std::int64_t j = 0; j <= i; ++j) {
          acc += std::max(g.at(j), kGateEpsilon) * std::exp(s[static_cast<std::size_t>(j)] - smax) /
                 denom * v.at2(j, t);
        }
        trial_diff = std::max(trial_diff, std::abs(tape.value(out).at2(i, t) - acc));
      }
    }
    max_diff = std::max(max_diff, trial_diff);
    if (trial_diff <= tol) ++ok_trials;
  }
  return {ok_trials == trials,
          strf("%d/%d instances within 1e-6 of the weighted softmax (max |diff| %.2e)", ok_trials,
               trials, max_diff)};
}

// ---------------------------------------------------------------------------
// 4. Skip-mode and multiply-mode forwards agree within 1e-5 in 32-bit on toy
//    inputs whose gates mix the levels {0, 0.5, 1}.
Outcome skip_equivalence() {
  const TransformerConfig cfg = toy_config();
  Rng init_rng(4405);
  Parameters<float> params(cfg, true);
  params.init(init_rng);

  Rng rng(4406);
  const std::uint64_t key = rng.stream_key("mixed");
  std::uint64_t c = 0;
  const double tol = 1e-5;
  const int trials = 100;
  int ok_trials = 0;
  double max_diff = 0.0;
  const std::int64_t half = cfg.n_layers / 2;
  for (int trial = 0; trial < trials; ++trial) {
    const std::int64_t n = 6;
    Tensor<float> h({n, cfg.dim});
    for (std::int64_t i = 0; i < h.numel(); ++i) {
      h.at(i) = static_cast<float>(2.0 * Rng::uniform_at(key, c++) - 1.0);
    }
    static const float kLevels[3] = {0.0f, 0.5f, 1.0f};
    std::vector<Tensor<float>> gate_cols;
    for (std::int64_t l = 0; l < half; ++l) {
      Tensor<float> col({n, 1});
      for (std::int64_t i = 0; i < n; ++i) col.at(i) = kLevels[Rng::below_at(key, c++, 3)];
      gate_cols.push_back(col);
    }
    std::vector<std::int64_t> pos(static_cast<std::size_t>(n));
    for (std::int64_t i = 0; i < n; ++i) pos[static_cast<std::size_t>(i)] = i;

    auto run_chain = [&](ForwardMode mode) {
      Tape<float> tape;
      BoundModel<float> bound = bind_model(tape, params, false);
      Var<float> x = tape.leaf(h, false);
      for (std::int64_t l = 0; l < cfg.n_layers; ++l) {
        const std::int64_t gl = l < half ? l : cfg.n_layers - 1 - l;
        Var<float> gate = tape.leaf(gate_cols[static_cast<std::size_t>(gl)], false);
        x = block_forward(tape, bound, l, x, gate, mode, pos);
      }
      return tape.value(x);
    };
    const Tensor<float> out_m = run_chain(ForwardMode::GatedMultiply);
    const Tensor<float> out_s = run_chain(ForwardMode::GatedSkip);
    double trial_diff = 0.0;
    for (std::int64_t i = 0; i < out_m.numel(); ++i) {
      const double a = out_m.at(i), b = out_s.at(i);
      trial_diff = std::max(
          trial_diff, std::abs(a - b) / std::max({1.0, std::abs(a), std::abs(b)}));
    }
    max_diff = std::max(max_diff, trial_diff);
    if (trial_diff <= tol) ++ok_trials;
  }
  return {ok_trials == trials,
          strf("%d/%d four-block chains agree within 1e-5 (max rel diff %.2e)", ok_trials, trials,
               max_diff)};
}

// ---------------------------------------------------------------------------
// 5. Analytic gradients of the full training loss against central finite
//    differences over every parameter of a toy gated model.
Outcome gradient_check() {
  const GradcheckResult r = run_gradcheck(0x5eed);
  return {r.pass && r.max_rel_err < 1e-4,
          strf("%lld parameters, max rel err %.3e at %s (tolerance 1e-4)",
               static_cast<long long>(r.checked), r.max_rel_err, r.worst_parameter.c_str())};
}

// ---------------------------------------------------------------------------
// 6. Controller arithmetic: the documented update examples and the loss
//    substitution examples for every variant, to 1e-12.
Outcome controller_updates() {
  std::vector<std::string> failures;
  auto near = [](double a, double b) { return std::abs(a - b) <= 1e-12; };
  auto single = [](double alpha, double beta, double mu, double var) {
    ControllerState st;
    st.alpha = {alpha};
    st.beta = {beta};
    st.mu_target = {mu};
    st.var_target = {var};
    return st;
  };
  GatingConfig gc;
  gc.enabled = true;
  gc.gamma = 1e-3;
  gc.delta = 1e-2;

  // Proportional: alpha += gamma (0.9 - 0.5) = 4e-4, beta += gamma (0.1 - 0.25).
  {
    ControllerState st = single(0.0, 0.0, 0.5, 0.25);
    GateStats stats{{0.9}, {0.1}};
    gc.variant = "proportional";
    gc.update_condition = "absolute";
    update_coefficients(st, stats, gc);
    if (!near(st.alpha[0], 4e-4)) failures.push_back("proportional alpha");
    if (!near(st.beta[0], -1.5e-4)) failures.push_back("proportional beta");
  }
  // Dead band: |0.505 - 0.5| <= delta leaves alpha untouched.
  {
    ControllerState st = single(0.2, 0.3, 0.5, 0.25);
    GateStats stats{{0.505}, {0.25}};
    gc.variant = "proportional";
    update_coefficients(st, stats, gc);
    if (st.alpha[0] != 0.2 || st.beta[0] != 0.3) failures.push_back("dead band");
  }
  // Adaptive: exactly +/- gamma.
  {
    ControllerState st = single(0.0, 0.0, 0.5, 0.25);
    GateStats stats{{0.9}, {0.1}};
    gc.variant = "adaptive";
    update_coefficients(st, stats, gc);
    if (st.alpha[0] != 1e-3 || st.beta[0] != -1e-3) failures.push_back("adaptive sign");
  }
  // One-sided condition ignores negative mean deviation.
  {
    ControllerState st = single(0.0, 0.0, 0.5, 0.25);
    GateStats stats{{0.1}, {0.25}};
    gc.variant = "proportional";
    gc.update_condition = "one_sided";
    update_coefficients(st, stats, gc);
    if (st.alpha[0] != 0.0) failures.push_back("one-sided");
    gc.update_condition = "absolute";
  }
  // Fixed-coefficient variants never move.
  for (const char* name : {"sparsity", "sparsity_variance"}) {
    ControllerState st = single(0.7, 0.9, 0.5, 0.25);
    GateStats stats{{0.9}, {0.1}};
    gc.variant = name;
    update_coefficients(st, stats, gc);
    if (st.alpha[0] != 0.7 || st.beta[0] != 0.9) failures.push_back(strf("%s fixed", name));
  }
  // No-update case: both deviations inside the dead band.
  {
    ControllerState st = single(0.4, 0.6, 0.5, 0.25);
    GateStats stats{{0.495}, {0.245}};
    gc.variant = "proportional";
    update_coefficients(st, stats, gc);
    if (st.alpha[0] != 0.4 || st.beta[0] != 0.6) failures.push_back("no-update");
  }
  // Loss substitutions (single gate layer, L = 2, so the 1/L mirror sum is 1x).
  {
    GateStats stats{{0.5}, {0.0}};
    if (!near(regularization_loss(stats, single(1.0, 0.0, 0.5, 0.25), ControllerVariant::Sparsity),
              0.5)) {
      failures.push_back("sparsity loss");
    }
  }
  {
    GateStats stats{{0.6}, {0.2}};
    const ControllerState st = single(2.0, 4.0, 0.5, 0.25);
    for (ControllerVariant v : {ControllerVariant::SparsityVariance, ControllerVariant::Adaptive,
                                ControllerVariant::Proportional}) {
      if (!near(regularization_loss(stats, st, v), 2.0 * 0.6 + 4.0 * 0.2)) {
        failures.push_back(strf("%s loss", controller_variant_name(v)));
      }
    }
    if (!near(regularization_loss(stats, single(1.0, 1.0, 0.5, 0.25),
                                  ControllerVariant::SparsityVarianceL2),
              0.0125)) {
      failures.push_back("l2 loss");
    }
  }
  // Target interpolation: L = 4, 1 -> 0 gives means (1, 0.5).
  {
    const std::vector<double> t = make_targets(4, 1.0, 0.0);
    if (t.size() != 2 || t[0] != 1.0 || t[1] != 0.5) failures.push_back("targets");
  }
  std::string detail = "update and loss examples reproduced to 1e-12";
  if (!failures.empty()) {
    detail = "failed:";
    for (const std::string& f : failures) detail += " " + f;
  }
  return {failures.empty(), detail};
}

// ---------------------------------------------------------------------------
// 7. Closed loop: the proportional controller drives a standalone sigmoid
//    gate generator to |g_mean - mu*| <= 2 delta within 2000 steps.
Outcome closed_loop() {
  const double gamma = 1e-3, delta = 1e-2;
  const double lr = 1.0, weight_decay = 5e-3;
  const int max_steps = 2000;
  std::string detail = "after 2000 steps:";
  bool all_ok = true;
  for (double mu_star : {0.25, 0.5, 0.75}) {
    ControllerState st;
    st.alpha = {0.0};
    st.beta = {0.0};
    st.mu_target = {mu_star};
    st.var_target = {mu_star * (1.0 - mu_star)};
    GatingConfig gc;
    gc.enabled = true;
    gc.variant = "proportional";
    gc.gamma = gamma;
    gc.delta = delta;

    double theta = 0.0;
    double g = 0.5;
    for (int step = 0; step < max_steps; ++step) {
      g = 1.0 / (1.0 + std::exp(-theta));
      GateStats stats{{g}, {0.0}};
      // d/d(theta) of the L=2 penalty (2/L) alpha g, via the sigmoid, plus
      // plain weight decay on the generator parameter.
      const double grad = st.alpha[0] * g * (1.0 - g) + weight_decay * theta;
      theta -= lr * grad;
      update_coefficients(st, stats, gc);
    }
    g = 1.0 / (1.0 + std::exp(-theta));
    const double dev = std::abs(g - mu_star);
    if (dev > 2.0 * delta) all_ok = false;
    detail += strf(" mu*=%.2f -> |dev| %.4f;", mu_star, dev);
  }
  detail += " band 0.02";
  return {all_ok, detail};
}

// ---------------------------------------------------------------------------
// 8. FLOPs accounting: the closed-form dense estimate against the
//    instrumented kernel counter, the parameter-reduction identity, and the
//    gating parameter count.
Outcome flops_accounting() {
  std::vector<std::string> failures;
  struct Shape {
    std::int64_t dim, layers, heads, kv, vocab, tokens;
  };
  const Shape shapes[] = {{8, 4, 2, 1, 16, 6}, {16, 2, 4, 4, 32, 11}, {12, 6, 3, 3, 24, 5}};
  double max_gap = 0.0;
  for (const Shape& s : shapes) {
    TransformerConfig cfg;
    cfg.dim = s.dim;
    cfg.n_layers = s.layers;
    cfg.n_heads = s.heads;
    cfg.n_kv_heads = s.kv;
    cfg.vocab_size = s.vocab;
    cfg.ffn_dim_multiplier = 1.0;
    cfg.multiple_of = 4;
    cfg.max_seq_len = 16;
    cfg.validate();
    Rng rng(4407);
    Parameters<double> params(cfg, false);
    params.init(rng);
    const std::uint64_t key = rng.stream_key("tokens");
    std::uint64_t c = 0;
    const std::vector<std::int64_t> tokens = random_tokens(key, c, s.tokens, cfg.vocab_size);
    std::uint64_t measured = 0;
    {
      FlopCounter::Scope scope;
      Tape<double> tape;
      model_forward(tape, bind_model(tape, params, false), tokens, ForwardMode::Dense);
      measured = FlopCounter::total();
    }
    const double estimated = forward_flops(cfg, s.tokens);
    const double gap = std::abs(estimated - static_cast<double>(measured)) /
                       static_cast<double>(measured);
    max_gap = std::max(max_gap, gap);
    if (gap > 0.05) failures.push_back(strf("d=%lld estimate off by %.1f%%",
                                            static_cast<long long>(s.dim), 100.0 * gap));
  }
  if (active_param_reduction(100, {0.5, 0.25, 0.0}) != 150.0) {
    failures.push_back("active_param_reduction(100, {0.5, 0.25, 0}) != 150");
  }
  {
    TransformerConfig big;  // defaults: d = 768, L = 12
    big.validate();
    if (gating_param_count(big) != 4614) failures.push_back("gating params d=768 != 4614");
    if (gating_param_count(toy_config()) != 18) failures.push_back("gating params toy != 18");
  }
  std::string detail =
      strf("dense estimate within %.2e of the instrumented counter (bound 5%%); "
           "reduction and gating-parameter identities exact",
           max_gap);
  if (!failures.empty()) {
    detail = "failed:";
    for (const std::string& f : failures) detail += " " + f;
  }
  return {failures.empty(), detail};
}

// ---------------------------------------------------------------------------
// Shared 1 MiB synthetic corpus: deterministic word soup, byte-tokenized.
fs::path ensure_corpus() {
  const fs::path path = g_work / "corpus.skt";
  if (fs::exists(path)) return path;
  static const char* kWords[] = {
      "the",  "quick", "brown", "fox",   "jumps", "over",  "a",     "lazy",  "dog",   "while",
      "rain", "falls", "on",    "warm",  "stone", "and",   "little", "birds", "sing",  "from",
      "tall", "green", "trees", "near",  "old",   "river", "bend",  "where", "children", "play",
      "until", "dusk", "turns", "sky",   "deep",  "red",   "then",  "purple", "quiet", "wind"};
  const std::size_t n_words = sizeof(kWords) / sizeof(kWords[0]);
  std::mt19937 gen(1234);
  std::vector<std::uint8_t> text;
  text.reserve(1 << 21);
  while (text.size() < (1u << 20)) {
    const std::size_t len = 4 + gen() % 5;
    for (std::size_t w = 0; w < len; ++w) {
      const char* word = kWords[gen() % n_words];
      if (w > 0) text.push_back(' ');
      for (const char* p = word; *p; ++p) text.push_back(static_cast<std::uint8_t>(*p));
    }
    text.push_back('.');
    text.push_back(gen() % 10 == 0 ? '\n' : ' ');
  }
  text.resize(1u << 20);
  save_tokens(tokenize_bytes(text), path.string());
  return path;
}

// ---------------------------------------------------------------------------
// 9. Training smoke on the 1 MiB byte corpus, 2000 steps, d=128, L=8:
//    (a) dense validation CE beats the uniform-byte baseline;
//    (b) a sparsifying gated run reaches overall z > 0.05 with an estimated
//        FLOP reduction; (c) an identity-target gated run stays within 0.05
//    CE of dense.
Outcome training_smoke() {
  const fs::path corpus = ensure_corpus();
  auto base = [&](const std::string& out) {
    RunConfig cfg;
    cfg.model.dim = 128;
    cfg.model.n_layers = 8;
    cfg.model.n_heads = 8;
    cfg.model.n_kv_heads = 8;
    cfg.model.vocab_size = 256;
    cfg.model.max_seq_len = 64;
    cfg.data.batch_size = 2;
    cfg.data.device_batch_size = 2;
    cfg.data.seq_len = 64;
    cfg.run.seed = 2025;
    cfg.run.total_steps = 2000;
    cfg.run.corpus_path = corpus.string();
    cfg.run.out_dir = (g_work / out).string();
    cfg.run.eval_interval = 0;
    cfg.run.checkpoint_interval = 0;
    cfg.run.eval_windows = 64;
    return cfg;
  };

  RunConfig dense = base("smoke_dense");
  dense.validate();
  const TrainResult ra = train_loop(dense);
  fs::remove_all(dense.run.out_dir);

  RunConfig sparse = base("smoke_sparse");
  sparse.gating.enabled = true;
  sparse.gating.mu_initial = 1.0;
  sparse.gating.mu_final = 0.5;
  sparse.gating.variant = "proportional";
  sparse.gating.gamma = 2e-3;
  sparse.validate();
  const TrainResult rb = train_loop(sparse);
  fs::remove_all(sparse.run.out_dir);

  RunConfig identity = base("smoke_identity");
  identity.gating.enabled = true;
  identity.gating.mu_initial = 1.0;
  identity.gating.mu_final = 1.0;
  identity.gating.variant = "proportional";
  identity.validate();
  const TrainResult rc = train_loop(identity);
  fs::remove_all(identity.run.out_dir);

  const bool ok_dense = ra.val_ce < 5.0;
  const bool ok_z = rb.sparsity.overall > 0.05;
  const bool ok_flops = rb.flops.gated_flops < rb.flops.dense_flops;
  const double ce_gap = std::abs(rc.val_ce - ra.val_ce);
  const bool ok_identity = ce_gap <= 0.05;
  return {ok_dense && ok_z && ok_flops && ok_identity,
          strf("dense ce %.3f (< 5); sparse z %.3f (> 0.05), flops %.3g < %.3g; "
               "identity ce %.3f (|gap| %.3f <= 0.05)",
               ra.val_ce, rb.sparsity.overall, rb.flops.gated_flops, rb.flops.dense_flops,
               rc.val_ce, ce_gap)};
}

// ---------------------------------------------------------------------------
// 10. A run killed mid-flight with SIGKILL and resumed from its checkpoint
//     reproduces the unbroken run's metrics stream and final checkpoint
//     bitwise.
Outcome resume_bitwise() {
  const fs::path corpus = ensure_corpus();
  const fs::path dir_a = g_work / "resume_a";
  const fs::path dir_b = g_work / "resume_b";
  auto config_text = [&](const fs::path& out) {
    std::string text;
    text += "model.dim = 32\nmodel.n_layers = 4\nmodel.n_heads = 4\nmodel.n_kv_heads = 2\n";
    text += "model.vocab_size = 256\nmodel.max_seq_len = 32\n";
    text += "data.batch_size = 2\ndata.device_batch_size = 2\ndata.seq_len = 24\n";
    text += "gating.enabled = true\ngating.mu_initial = 1.0\ngating.mu_final = 0.5\n";
    text += "gating.gamma = 0.002\n";
    text += "run.seed = 77\nrun.total_steps = 1200\nrun.checkpoint_interval = 300\n";
    text += "run.eval_interval = 0\nrun.eval_windows = 8\n";
    text += "run.corpus_path = " + corpus.string() + "\n";
    text += "run.out_dir = " + out.string() + "\n";
    return text;
  };

  // Unbroken reference run.
  train_loop(parse_run_config(config_text(dir_a)));

  // Interrupted run: launch the CLI, SIGKILL it shortly after its first
  // periodic checkpoint appears, then resume in-process.
  const fs::path cfg_path = g_work / "resume_b.cfg";
  {
    std::ofstream out(cfg_path);
    out << config_text(dir_b);
  }
  const fs::path ckpt = dir_b / "checkpoint_step300.skm";
  const pid_t pid = fork();
  if (pid < 0) return {false, "fork failed"};
  if (pid == 0) {
    const int log = open((g_work / "resume_child.log").c_str(), O_WRONLY | O_CREAT | O_TRUNC, 0644);
    if (log >= 0) {
      dup2(log, 1);
      dup2(log, 2);
      close(log);
    }
    execl(SKIPMID_CLI_PATH, "skipmid", "train", "--config", cfg_path.c_str(),
          static_cast<char*>(nullptr));
    _exit(127);
  }
  bool seen = false;
  for (int i = 0; i < 24000; ++i) {  // up to 240 s
    if (fs::exists(ckpt)) {
      seen = true;
      break;
    }
    int status = 0;
    if (waitpid(pid, &status, WNOHANG) == pid) {
      return {false, strf("training child exited early with status %d before its first checkpoint",
                          status)};
    }
    usleep(10000);
  }
  if (!seen) {
    kill(pid, SIGKILL);
    waitpid(pid, nullptr, 0);
    return {false, "checkpoint_step300.skm never appeared"};
  }
  usleep(30000);  // let a few post-checkpoint metrics lines land, then pull the plug
  kill(pid, SIGKILL);
  int status = 0;
  waitpid(pid, &status, 0);
  if (!WIFSIGNALED(status)) return {false, "child was not killed mid-run as intended"};

  train_loop(parse_run_config(config_text(dir_b)), ckpt.string());

  const bool metrics_equal =
      read_file(dir_a / "metrics.ndjson") == read_file(dir_b / "metrics.ndjson");
  const bool ckpt_equal =
      read_file(dir_a / "checkpoint_final.skm") == read_file(dir_b / "checkpoint_final.skm");
  const bool summary_equal = read_file(dir_a / "summary.csv") == read_file(dir_b / "summary.csv");
  return {metrics_equal && ckpt_equal && summary_equal,
          strf("SIGKILL after step 300 of 1200; metrics %s, final checkpoint %s, summary %s",
               metrics_equal ? "bitwise equal" : "DIFFER", ckpt_equal ? "bitwise equal" : "DIFFER",
               summary_equal ? "bitwise equal" : "DIFFER")};
}

}  // namespace

int main() {
  g_work = fs::temp_directory_path() / "skipmid_acceptance";
  std::error_code ec;
  fs::remove_all(g_work, ec);
  fs::create_directories(g_work);

  struct Check {
    const char* name;
    std::function<Outcome()> run;
  };
  const Check checks[] = {
      {"dense-recovery", dense_recovery},
      {"gate-algebra", gate_algebra_invariants},
      {"attention-oracle", attention_oracle},
      {"skip-equivalence", skip_equivalence},
      {"gradient-check", gradient_check},
      {"controller-update", controller_updates},
      {"closed-loop", closed_loop},
      {"flops-accounting", flops_accounting},
      {"training-smoke", training_smoke},
      {"resume-bitwise", resume_bitwise},
  };

  int passed = 0;
  int total = 0;
  for (const Check& check : checks) {
    ++total;
    Outcome outcome;
    const auto start = std::chrono::steady_clock::now();
    try {
      outcome = check.run();
    } catch (const std::exception& e) {
      outcome = {false, strf("exception: %s", e.what())};
    }
    const double secs =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    if (outcome.pass) ++passed;
    std::printf("%s %2d %-18s %s [%.1fs]\n", outcome.pass ? "PASS" : "FAIL", total, check.name,
                outcome.detail.c_str(), secs);
    std::fflush(stdout);
  }
  std::printf("%d/%d checks passed\n", passed, total);
  return passed == total ? 0 : 1;
}
