#ifndef KED_TRAIN_HPP
#define KED_TRAIN_HPP

#include <cstdint>
#include <functional>
#include <vector>

#include "ked/data.hpp"
#include "ked/model.hpp"
#include "ked/tensor.hpp"

namespace ked {

struct TrainConfig {
  double lr = 1e-4;
  Index batch_size = 32;
  double weight_decay = 0.1;
  Index max_epochs = 10;
  Index patience = 3;
  std::uint64_t seed = 1;
  void validate() const;
};

/// Adam moments, one slot per parameter tensor in visit order.
struct AdamState {
  std::vector<Tensor> m;
  std::vector<Tensor> v;
  long t = 0;
  static constexpr double beta1 = 0.9;
  static constexpr double beta2 = 0.999;
  static constexpr double eps = 1e-8;
};

AdamState make_adam_state(const ModelParams& params);

/// One decoupled-weight-decay Adam update:
///   m <- b1 m + (1-b1) g;  v <- b2 v + (1-b2) g^2  (bias-corrected)
///   theta <- theta - lr (m_hat / (sqrt(v_hat) + eps) + weight_decay theta)
void adam_step(std::vector<Tensor*>& params, const std::vector<Tensor>& grads,
               AdamState& state, const TrainConfig& cfg);

double mse(const Tensor& pred, const Tensor& target);
double mae(const Tensor& pred, const Tensor& target);

struct EpochStats {
  Index epoch = 0;  ///< 1-based
  double train_mse = 0.0;
  double val_mse = 0.0;
  double seconds = 0.0;
};

struct TrainResult {
  ModelParams best_params;
  std::vector<EpochStats> history;
  Index best_epoch = 0;  ///< 1-based
  double best_val_mse = 0.0;
};

/// Test-only instrumentation point, invoked after each epoch's update phase
/// and before validation.
using EpochHook = std::function<void(Index epoch, ModelParams& params)>;

/// Mini-batch training with L2 loss, early stopping on validation MSE after
/// `patience` epochs without improvement, returning the best-validation
/// parameters. Gradients are summed in fixed sample order; the epoch-level
/// shuffle is deterministic in the seed.
TrainResult train_loop(const ModelConfig& cfg, const ModelParams& init,
                       const SeriesFrame& train, const SeriesFrame& val,
                       const TrainConfig& tcfg, const EpochHook& hook = {});

// ---- naive baselines (x is an [I x D] input window) ----
Tensor baseline_persistence(const Tensor& x, Index O);
Tensor baseline_seasonal_naive(const Tensor& x, Index O, Index P);
Tensor baseline_mean(const Tensor& x, Index O);

struct EvalMetrics {
  double mse = 0.0;
  double mae = 0.0;
};

EvalMetrics evaluate_model(const ModelConfig& cfg, const ModelParams& params,
                           const SeriesFrame& frame, Index stride = 1);
using BaselineFn = std::function<Tensor(const Tensor& x, Index O)>;
EvalMetrics evaluate_baseline(const BaselineFn& fn, const SeriesFrame& frame,
                              Index I, Index O, Index stride = 1);

}  // namespace ked

#endif  // KED_TRAIN_HPP
