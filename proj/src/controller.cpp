#include "skipmid/controller.hpp"

#include <cmath>

#include "skipmid/errors.hpp"

namespace skipmid {

ControllerVariant parse_controller_variant(const std::string& name) {
  if (name == "sparsity") return ControllerVariant::Sparsity;
  if (name == "sparsity_variance") return ControllerVariant::SparsityVariance;
  if (name == "adaptive") return ControllerVariant::Adaptive;
  if (name == "proportional") return ControllerVariant::Proportional;
  if (name == "sparsity_variance_l2") return ControllerVariant::SparsityVarianceL2;
  throw ConfigError("unknown controller variant '" + name + "'");
}

const char* controller_variant_name(ControllerVariant variant) {
  switch (variant) {
    case ControllerVariant::Sparsity: return "sparsity";
    case ControllerVariant::SparsityVariance: return "sparsity_variance";
    case ControllerVariant::Adaptive: return "adaptive";
    case ControllerVariant::Proportional: return "proportional";
    case ControllerVariant::SparsityVarianceL2: return "sparsity_variance_l2";
  }
  return "?";
}

template <typename T>
GateStats batch_gate_stats(const std::vector<GateTrace<T>>& traces) {
  if (traces.empty()) throw ContractError("batch_gate_stats: empty batch");
  const std::int64_t layers = traces.front().gates.dim(1);
  const std::int64_t half = layers / 2;
  GateStats stats;
  stats.g_mean.resize(static_cast<std::size_t>(half));
  stats.g_var.resize(static_cast<std::size_t>(half));
  for (std::int64_t l = 0; l < half; ++l) {
    double sum = 0.0, sum_sq = 0.0;
    std::int64_t count = 0;
    for (const GateTrace<T>& trace : traces) {
      if (trace.gates.dim(1) != layers) {
        throw ContractError("batch_gate_stats: traces disagree on layer count");
      }
      const std::int64_t n = trace.gates.dim(0);
      for (std::int64_t i = 0; i < n; ++i) {
        const double g = static_cast<double>(trace.gates.at2(i, l));
        sum += g;
        sum_sq += g * g;
      }
      count += n;
    }
    if (count == 0) throw ContractError("batch_gate_stats: no tokens");
    const double mean = sum / static_cast<double>(count);
    double var = sum_sq / static_cast<double>(count) - mean * mean;
    if (var < 0.0) var = 0.0;
    if (var > 0.25) var = 0.25;
    stats.g_mean[static_cast<std::size_t>(l)] = mean;
    stats.g_var[static_cast<std::size_t>(l)] = var;
  }
  return stats;
}

std::vector<double> make_targets(std::int64_t n_layers, double mu_initial, double mu_final) {
  if (n_layers <= 0 || n_layers % 2 != 0) {
    throw ConfigError("make_targets: n_layers must be even and positive");
  }
  if (mu_initial < 0.0 || mu_initial > 1.0 || mu_final < 0.0 || mu_final > 1.0) {
    throw ConfigError("make_targets: target endpoints must lie in [0,1]");
  }
  const std::int64_t half = n_layers / 2;
  std::vector<double> targets(static_cast<std::size_t>(half));
  for (std::int64_t l = 0; l < half; ++l) {
    const double t = static_cast<double>(l) / static_cast<double>(half);
    const double mu = mu_initial + t * (mu_final - mu_initial);
    if (mu < 0.0 || mu > 1.0) {
      throw ConfigError("make_targets: target outside [0,1]");
    }
    targets[static_cast<std::size_t>(l)] = mu;
  }
  return targets;
}

ControllerState make_controller_state(const TransformerConfig& model_cfg,
                                      const GatingConfig& gating) {
  const std::size_t half = static_cast<std::size_t>(model_cfg.n_layers / 2);
  ControllerState state;
  state.alpha.assign(half, gating.alpha_init);
  state.beta.assign(half, gating.beta_init);
  state.mu_target = make_targets(model_cfg.n_layers, gating.mu_initial, gating.mu_final);
  state.var_target.resize(half);
  for (std::size_t l = 0; l < half; ++l) {
    const double mu = state.mu_target[l];
    state.var_target[l] = mu * (1.0 - mu);
  }
  return state;
}

double regularization_loss(const GateStats& stats, const ControllerState& state,
                           ControllerVariant variant) {
  const std::size_t half = state.alpha.size();
  if (stats.g_mean.size() != half || stats.g_var.size() != half) {
    throw ContractError("regularization_loss: stats/state layer mismatch");
  }
  double sum = 0.0;
  for (std::size_t l = 0; l < half; ++l) {
    const double mean = stats.g_mean[l], var = stats.g_var[l];
    double term = 0.0;
    switch (variant) {
      case ControllerVariant::Sparsity:
        term = state.alpha[l] * mean;
        break;
      case ControllerVariant::SparsityVariance:
      case ControllerVariant::Adaptive:
      case ControllerVariant::Proportional:
        term = state.alpha[l] * mean + state.beta[l] * var;
        break;
      case ControllerVariant::SparsityVarianceL2: {
        const double dm = mean - state.mu_target[l];
        const double dv = var - state.var_target[l];
        term = state.alpha[l] * dm * dm + state.beta[l] * dv * dv;
        break;
      }
    }
    sum += term;
  }
  const double layers = 2.0 * static_cast<double>(half);
  return 2.0 * sum / layers;
}

template <typename T>
Var<T> regularization_loss_var(Tape<T>& tape, const std::vector<Var<T>>& g_mean,
                               const std::vector<Var<T>>& g_second_moment,
                               const ControllerState& state, ControllerVariant variant,
                               std::int64_t n_layers) {
  const std::size_t half = state.alpha.size();
  if (g_mean.size() != half || g_second_moment.size() != half) {
    throw ContractError("regularization_loss_var: stats/state layer mismatch");
  }
  Var<T> sum;
  for (std::size_t l = 0; l < half; ++l) {
    const T alpha = static_cast<T>(state.alpha[l]);
    const T beta = static_cast<T>(state.beta[l]);
    Var<T> mean = g_mean[l];
    Var<T> mean_sq = tape.unary(mean, Unary::Square);
    Var<T> neg_mean_sq = tape.unary(mean_sq, Unary::Scale, T(-1));
    Var<T> var = tape.add(g_second_moment[l], neg_mean_sq);
    Var<T> term;
    switch (variant) {
      case ControllerVariant::Sparsity:
        term = tape.unary(mean, Unary::Scale, alpha);
        break;
      case ControllerVariant::SparsityVariance:
      case ControllerVariant::Adaptive:
      case ControllerVariant::Proportional:
        term = tape.add(tape.unary(mean, Unary::Scale, alpha),
                        tape.unary(var, Unary::Scale, beta));
        break;
      case ControllerVariant::SparsityVarianceL2: {
        Var<T> dm = tape.unary(mean, Unary::Shift, static_cast<T>(-state.mu_target[l]));
        Var<T> dv = tape.unary(var, Unary::Shift, static_cast<T>(-state.var_target[l]));
        term = tape.add(tape.unary(tape.unary(dm, Unary::Square), Unary::Scale, alpha),
                        tape.unary(tape.unary(dv, Unary::Square), Unary::Scale, beta));
        break;
      }
    }
    sum = l == 0 ? term : tape.add(sum, term);
  }
  const T norm = static_cast<T>(2.0 / static_cast<double>(n_layers));
  return tape.unary(sum, Unary::Scale, norm);
}

namespace {

double sign_of(double x) { return x > 0.0 ? 1.0 : (x < 0.0 ? -1.0 : 0.0); }

}  // namespace

void update_coefficients(ControllerState& state, const GateStats& stats,
                         const GatingConfig& cfg) {
  const ControllerVariant variant = parse_controller_variant(cfg.variant);
  if (variant == ControllerVariant::Sparsity || variant == ControllerVariant::SparsityVariance) {
    return;
  }
  const bool one_sided = cfg.update_condition == "one_sided";
  const std::size_t half = state.alpha.size();
  if (stats.g_mean.size() != half || stats.g_var.size() != half) {
    throw ContractError("update_coefficients: stats/state layer mismatch");
  }
  const bool sign_update = variant == ControllerVariant::Adaptive;
  for (std::size_t l = 0; l < half; ++l) {
    const double dev_mean = stats.g_mean[l] - state.mu_target[l];
    if (one_sided ? dev_mean > cfg.delta : std::abs(dev_mean) > cfg.delta) {
      state.alpha[l] += cfg.gamma * (sign_update ? sign_of(dev_mean) : dev_mean);
    }
    const double dev_var = stats.g_var[l] - state.var_target[l];
    if (one_sided ? dev_var > cfg.delta : std::abs(dev_var) > cfg.delta) {
      state.beta[l] += cfg.gamma * (sign_update ? sign_of(dev_var) : dev_var);
    }
  }
}

template GateStats batch_gate_stats<float>(const std::vector<GateTrace<float>>&);
template GateStats batch_gate_stats<double>(const std::vector<GateTrace<double>>&);
template Var<float> regularization_loss_var<float>(Tape<float>&, const std::vector<Var<float>>&,
                                                   const std::vector<Var<float>>&,
                                                   const ControllerState&, ControllerVariant,
                                                   std::int64_t);
template Var<double> regularization_loss_var<double>(Tape<double>&,
                                                     const std::vector<Var<double>>&,
                                                     const std::vector<Var<double>>&,
                                                     const ControllerState&, ControllerVariant,
                                                     std::int64_t);

}  // namespace skipmid
