#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "skipmid/config.hpp"
#include "skipmid/params.hpp"
#include "skipmid/tensor.hpp"

namespace skipmid {

// Linear warmup from start_factor*lr to lr over floor(warmup_steps *
// total_steps) steps, then cosine decay from lr to exactly 0 at total_steps.
double lr_at_step(std::int64_t t, std::int64_t total_steps, const OptimizerConfig& opt,
                  const SchedulerConfig& sched);

// Decoupled-weight-decay Adam over every parameter tensor (single group).
// Moment tensors follow Parameters::entries order.
template <typename T>
class AdamW {
 public:
  AdamW(const Parameters<T>& params, const OptimizerConfig& cfg);

  // grads follow entries order; throws naming the parameter on a non-finite
  // gradient element.
  void step(Parameters<T>& params, const std::vector<Tensor<T>>& grads, double lr);

  std::int64_t step_count() const { return t_; }
  const std::vector<Tensor<T>>& first_moments() const { return m_; }
  const std::vector<Tensor<T>>& second_moments() const { return v_; }
  // Restores serialized state; shapes must match the bound parameters.
  void restore(std::int64_t t, std::vector<Tensor<T>> m, std::vector<Tensor<T>> v);

 private:
  OptimizerConfig cfg_;
  std::int64_t t_ = 0;
  std::vector<std::string> names_;
  std::vector<Tensor<T>> m_, v_;
};

}  // namespace skipmid
