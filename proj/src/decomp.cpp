#include "ked/decomp.hpp"

namespace ked {

DecompPair mstw_decompose(const Tensor& x, int kernel) {
  DecompPair out;
  out.trend = avg_pool_1d(x, kernel);
  out.seasonal = x - out.trend;
  return out;
}

namespace ag {

DecompVars mstw_decompose(Var x, int kernel) {
  DecompVars out;
  out.trend = avg_pool_1d(x, kernel);
  out.seasonal = sub(x, out.trend);
  return out;
}

}  // namespace ag

}  // namespace ked
