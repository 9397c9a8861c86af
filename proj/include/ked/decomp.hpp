#ifndef KED_DECOMP_HPP
#define KED_DECOMP_HPP

#include "ked/autodiff.hpp"
#include "ked/tensor.hpp"

namespace ked {

/// Seasonal/trend split of a sequence. Invariant: seasonal + trend
/// reconstructs the input (up to rounding) and both halves keep its shape.
struct DecompPair {
  Tensor seasonal;
  Tensor trend;
};

/// Moving-average decomposition block: trend is the centered replicate-padded
/// moving average, seasonal the residual. Kernel must be odd.
DecompPair mstw_decompose(const Tensor& x, int kernel);

namespace ag {

struct DecompVars {
  Var seasonal;
  Var trend;
};

DecompVars mstw_decompose(Var x, int kernel);

}  // namespace ag

}  // namespace ked

#endif  // KED_DECOMP_HPP
