#include "skipmid/gates.hpp"

#include "skipmid/errors.hpp"

namespace skipmid {

template <typename T>
GateTrace<T> gate_algebra(const Tensor<T>& soft_mask, std::int64_t n_layers) {
  if (soft_mask.rank() != 2) {
    throw ContractError("gate_algebra: soft mask must be [N, L/2], got " +
                        soft_mask.shape_str());
  }
  const std::int64_t n = soft_mask.dim(0), half = soft_mask.dim(1);
  if (n_layers != 2 * half) {
    throw ContractError("gate_algebra: soft mask has " + std::to_string(half) +
                        " gate layers, expected n_layers/2 = " + std::to_string(n_layers / 2));
  }
  GateTrace<T> trace;
  trace.soft_mask = soft_mask;
  trace.accumulated = Tensor<T>({n, half});
  trace.gates = Tensor<T>({n, n_layers});
  for (std::int64_t i = 0; i < n; ++i) {
    T run = T(0);
    for (std::int64_t l = 0; l < half; ++l) {
      const T s = soft_mask.at2(i, l);
      if (s < T(0)) {
        throw ContractError("gate_algebra: negative soft mask value");
      }
      run += s;
      trace.accumulated.at2(i, l) = run;
      const T clamped = run < T(0) ? T(0) : (run > T(1) ? T(1) : run);
      const T g = T(1) - clamped;
      trace.gates.at2(i, l) = g;
      trace.gates.at2(i, n_layers - l - 1) = g;
    }
  }
  trace.layer_sparsity.assign(static_cast<std::size_t>(n_layers), 0.0);
  for (std::int64_t l = 0; l < n_layers; ++l) {
    std::int64_t zeros = 0;
    for (std::int64_t i = 0; i < n; ++i) {
      if (trace.gates.at2(i, l) == T(0)) ++zeros;
    }
    trace.layer_sparsity[static_cast<std::size_t>(l)] =
        n > 0 ? static_cast<double>(zeros) / static_cast<double>(n) : 0.0;
  }
  return trace;
}

template <typename T>
SparsityReport pool_sparsity(const std::vector<GateTrace<T>>& traces) {
  if (traces.empty()) throw ContractError("pool_sparsity: no traces");
  const std::int64_t n_layers = traces.front().gates.dim(1);
  SparsityReport report;
  report.layer_sparsity.assign(static_cast<std::size_t>(n_layers), 0.0);
  std::int64_t total_tokens = 0;
  std::vector<std::int64_t> zeros(static_cast<std::size_t>(n_layers), 0);
  for (const GateTrace<T>& trace : traces) {
    if (trace.gates.dim(1) != n_layers) {
      throw ContractError("pool_sparsity: traces disagree on layer count");
    }
    const std::int64_t n = trace.gates.dim(0);
    total_tokens += n;
    for (std::int64_t l = 0; l < n_layers; ++l)
      for (std::int64_t i = 0; i < n; ++i)
        if (trace.gates.at2(i, l) == T(0)) ++zeros[static_cast<std::size_t>(l)];
  }
  if (total_tokens == 0) throw ContractError("pool_sparsity: traces hold no tokens");
  double acc = 0.0;
  for (std::int64_t l = 0; l < n_layers; ++l) {
    const double z =
        static_cast<double>(zeros[static_cast<std::size_t>(l)]) / static_cast<double>(total_tokens);
    report.layer_sparsity[static_cast<std::size_t>(l)] = z;
    acc += z;
  }
  report.overall = acc / static_cast<double>(n_layers);
  return report;
}

template struct GateTrace<float>;
template struct GateTrace<double>;
template GateTrace<float> gate_algebra<float>(const Tensor<float>&, std::int64_t);
template GateTrace<double> gate_algebra<double>(const Tensor<double>&, std::int64_t);
template SparsityReport pool_sparsity<float>(const std::vector<GateTrace<float>>&);
template SparsityReport pool_sparsity<double>(const std::vector<GateTrace<double>>&);

}  // namespace skipmid
