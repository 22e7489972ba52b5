#include "skipmid/optim.hpp"

#include <cmath>

#include "skipmid/errors.hpp"

namespace skipmid {

double lr_at_step(std::int64_t t, std::int64_t total_steps, const OptimizerConfig& opt,
                  const SchedulerConfig& sched) {
  if (total_steps <= 0) throw ContractError("lr_at_step: total_steps must be positive");
  if (t < 0 || t > total_steps) {
    throw ContractError("lr_at_step: step " + std::to_string(t) + " outside [0, " +
                        std::to_string(total_steps) + "]");
  }
  const std::int64_t warmup = static_cast<std::int64_t>(
      std::floor(sched.warmup_steps * static_cast<double>(total_steps)));
  if (t < warmup) {
    const double frac = static_cast<double>(t) / static_cast<double>(warmup);
    return opt.lr * (sched.start_factor + (1.0 - sched.start_factor) * frac);
  }
  if (t >= total_steps) return 0.0;
  const double span = static_cast<double>(total_steps - warmup);
  const double phase = static_cast<double>(t - warmup) / span;
  constexpr double kPi = 3.14159265358979323846;
  return opt.lr * 0.5 * (1.0 + std::cos(kPi * phase));
}

template <typename T>
AdamW<T>::AdamW(const Parameters<T>& params, const OptimizerConfig& cfg) : cfg_(cfg) {
  for (const auto& [name, tensor] : params.entries()) {
    names_.push_back(name);
    m_.push_back(Tensor<T>(tensor->shape()));
    v_.push_back(Tensor<T>(tensor->shape()));
  }
}

template <typename T>
void AdamW<T>::step(Parameters<T>& params, const std::vector<Tensor<T>>& grads, double lr) {
  auto entries = params.entries();
  if (grads.size() != entries.size()) {
    throw ContractError("adamw: expected " + std::to_string(entries.size()) +
                        " gradient tensors, got " + std::to_string(grads.size()));
  }
  ++t_;
  const double b1 = cfg_.beta1, b2 = cfg_.beta2;
  const double bias1 = 1.0 - std::pow(b1, static_cast<double>(t_));
  const double bias2 = 1.0 - std::pow(b2, static_cast<double>(t_));
  for (std::size_t p = 0; p < entries.size(); ++p) {
    Tensor<T>& w = *entries[p].second;
    const Tensor<T>& g = grads[p];
    if (!w.same_shape(g)) {
      throw ContractError("adamw: gradient shape mismatch for " + entries[p].first);
    }
    Tensor<T>& m = m_[p];
    Tensor<T>& v = v_[p];
    const std::int64_t n = w.numel();
    for (std::int64_t i = 0; i < n; ++i) {
      const double gi = static_cast<double>(g.at(i));
      if (!std::isfinite(gi)) {
        throw ContractError("adamw: non-finite gradient in " + entries[p].first);
      }
      const double mi = b1 * static_cast<double>(m.at(i)) + (1.0 - b1) * gi;
      const double vi = b2 * static_cast<double>(v.at(i)) + (1.0 - b2) * gi * gi;
      m.at(i) = static_cast<T>(mi);
      v.at(i) = static_cast<T>(vi);
      const double m_hat = mi / bias1;
      const double v_hat = vi / bias2;
      const double update = m_hat / (std::sqrt(v_hat) + cfg_.eps) +
                            cfg_.weight_decay * static_cast<double>(w.at(i));
      w.at(i) = static_cast<T>(static_cast<double>(w.at(i)) - lr * update);
    }
  }
}

template <typename T>
void AdamW<T>::restore(std::int64_t t, std::vector<Tensor<T>> m, std::vector<Tensor<T>> v) {
  if (t < 0) throw ContractError("adamw: negative step count");
  if (m.size() != m_.size() || v.size() != v_.size()) {
    throw ContractError("adamw: restored moment count mismatch");
  }
  for (std::size_t p = 0; p < m.size(); ++p) {
    if (!m[p].same_shape(m_[p]) || !v[p].same_shape(v_[p])) {
      throw ContractError("adamw: restored moment shape mismatch for " + names_[p]);
    }
  }
  t_ = t;
  m_ = std::move(m);
  v_ = std::move(v);
}

template class AdamW<float>;
template class AdamW<double>;

}  // namespace skipmid
