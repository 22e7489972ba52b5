#pragma once

#include <cstdint>
#include <string>

#include "skipmid/config.hpp"

namespace skipmid {

struct GradcheckResult {
  double max_rel_err = 0.0;
  std::string worst_parameter;
  std::int64_t checked = 0;
  bool pass = false;
};

// Central finite differences of the full training loss (mean CE plus the
// sparsity_variance penalty with nonzero fixed coefficients) against the tape
// gradient, for every parameter of a toy gated model (d=8, L=4, N=6, V=16),
// in double precision. The evaluation point is screened so every token's
// soft mask and running sum sit at least 1e-3 away from the relu and clamp
// kinks; the relative error is |a-n| / max(1, |a|, |n|).
GradcheckResult run_gradcheck(std::uint64_t seed = 0x5eed);

}  // namespace skipmid
