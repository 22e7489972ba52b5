#pragma once

#include <string>
#include <vector>

#include "skipmid/config.hpp"
#include "skipmid/gates.hpp"
#include "skipmid/tape.hpp"

namespace skipmid {

enum class ControllerVariant {
  Sparsity,            // fixed alpha, mean penalty only
  SparsityVariance,    // fixed alpha/beta, mean + variance penalty
  Adaptive,            // mean + variance penalty, sign updates
  Proportional,        // mean + variance penalty, proportional updates
  SparsityVarianceL2,  // squared distance to targets, proportional updates
};

ControllerVariant parse_controller_variant(const std::string& name);
const char* controller_variant_name(ControllerVariant variant);

// Pooled batch statistics per gate layer (0..L/2-1): mean gate value and
// biased (divide by N) variance, over every token of every pooled sequence.
struct GateStats {
  std::vector<double> g_mean;  // each in [0, 1]
  std::vector<double> g_var;   // each in [0, 0.25]
};

template <typename T>
GateStats batch_gate_stats(const std::vector<GateTrace<T>>& traces);

// Coefficients and targets, one entry per gate layer; the second half of the
// network reuses them mirrored.
struct ControllerState {
  std::vector<double> alpha, beta;
  std::vector<double> mu_target, var_target;
};

// Linear interpolation mu*_l = mu_initial + (l / (L/2)) (mu_final - mu_initial)
// over gate layers l = 0..L/2-1; mu_final is the virtual endpoint at l = L/2.
std::vector<double> make_targets(std::int64_t n_layers, double mu_initial, double mu_final);

ControllerState make_controller_state(const TransformerConfig& model_cfg,
                                      const GatingConfig& gating);

// The regularization term of the training loss, summed over all L layers with
// mirrored statistics and coefficients and normalized by 1/L.
double regularization_loss(const GateStats& stats, const ControllerState& state,
                           ControllerVariant variant);

// Tape twin of regularization_loss: takes per-gate-layer [1]-shaped vars for
// the batch mean and raw second moment of the gates, so the penalty gradient
// reaches the gate parameters. Coefficients and targets enter as constants.
template <typename T>
Var<T> regularization_loss_var(Tape<T>& tape, const std::vector<Var<T>>& g_mean,
                               const std::vector<Var<T>>& g_second_moment,
                               const ControllerState& state, ControllerVariant variant,
                               std::int64_t n_layers);

// Post-step coefficient update. Fixed-coefficient variants return unchanged;
// adaptive moves by gamma * sign(deviation), proportional variants by
// gamma * deviation, each only when the configured dead-band condition fires.
void update_coefficients(ControllerState& state, const GateStats& stats,
                         const GatingConfig& cfg);

}  // namespace skipmid
