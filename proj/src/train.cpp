#include "ked/train.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <limits>
#include <numeric>
#include <random>

#include "ked/rng.hpp"

namespace ked {

void TrainConfig::validate() const {
  if (lr <= 0 || batch_size < 1 || weight_decay < 0 || max_epochs < 1 ||
      patience < 1) {
    throw ConfigError("TrainConfig: lr, batch_size, max_epochs, patience must be "
                      "positive and weight_decay non-negative");
  }
  if (patience > max_epochs) {
    throw ConfigError("TrainConfig: patience must not exceed max_epochs");
  }
}

AdamState make_adam_state(const ModelParams& params) {
  AdamState s;
  for (const auto& [name, t] : named_tensors(params)) {
    s.m.push_back(Tensor::zeros(t->shape()));
    s.v.push_back(Tensor::zeros(t->shape()));
  }
  return s;
}

void adam_step(std::vector<Tensor*>& params, const std::vector<Tensor>& grads,
               AdamState& state, const TrainConfig& cfg) {
  if (params.size() != grads.size() || params.size() != state.m.size()) {
    throw DimensionError("adam_step: parameter/gradient/state count mismatch");
  }
  state.t += 1;
  const double bc1 = 1.0 - std::pow(AdamState::beta1, state.t);
  const double bc2 = 1.0 - std::pow(AdamState::beta2, state.t);
  for (std::size_t i = 0; i < params.size(); ++i) {
    Tensor& theta = *params[i];
    const Tensor& g = grads[i];
    if (!theta.same_shape(g)) throw DimensionError("adam_step: shape mismatch");
    if (!g.all_finite()) throw NumericError("adam_step: non-finite gradient");
    auto& m = state.m[i].flat();
    auto& v = state.v[i].flat();
    m = AdamState::beta1 * m + (1.0 - AdamState::beta1) * g.flat();
    v = AdamState::beta2 * v + (1.0 - AdamState::beta2) * g.flat().square();
    theta.flat() -= cfg.lr * ((m / bc1) / ((v / bc2).sqrt() + AdamState::eps) +
                              cfg.weight_decay * theta.flat());
  }
}

double mse(const Tensor& pred, const Tensor& target) {
  if (!pred.same_shape(target)) throw DimensionError("mse: shape mismatch");
  return (pred.flat() - target.flat()).square().mean();
}

double mae(const Tensor& pred, const Tensor& target) {
  if (!pred.same_shape(target)) throw DimensionError("mae: shape mismatch");
  return (pred.flat() - target.flat()).abs().mean();
}

namespace {

double validation_mse(const ModelConfig& cfg, const ModelParams& params,
                      const SeriesFrame& frame) {
  const Index n = window_count(frame.length(), cfg.input_len, cfg.horizon, 1);
  double total = 0.0;
  for (Index i = 0; i < n; ++i) {
    const WindowSample s = window_at(frame, cfg.input_len, cfg.horizon, 1, i);
    total += mse(forward(s.x, params, cfg), s.y);
  }
  return total / static_cast<double>(n);
}

}  // namespace

TrainResult train_loop(const ModelConfig& cfg, const ModelParams& init,
                       const SeriesFrame& train, const SeriesFrame& val,
                       const TrainConfig& tcfg, const EpochHook& hook) {
  cfg.validate();
  tcfg.validate();
  const Index n_train = window_count(train.length(), cfg.input_len, cfg.horizon, 1);
  window_count(val.length(), cfg.input_len, cfg.horizon, 1);  // validates size

  ModelParams params = init;
  std::vector<Tensor*> flat;
  for (auto& [name, t] : named_tensors(params)) flat.push_back(t);
  AdamState adam = make_adam_state(params);

  TrainResult result;
  result.best_val_mse = std::numeric_limits<double>::infinity();
  std::vector<Index> order(static_cast<std::size_t>(n_train));
  std::iota(order.begin(), order.end(), Index{0});
  std::mt19937_64 shuffle_rng(tcfg.seed);
  Index epochs_since_best = 0;

  for (Index epoch = 1; epoch <= tcfg.max_epochs; ++epoch) {
    const auto start = std::chrono::steady_clock::now();
    rng::shuffle(order, shuffle_rng);
    double epoch_sse = 0.0;

    for (std::size_t b0 = 0; b0 < order.size();
         b0 += static_cast<std::size_t>(tcfg.batch_size)) {
      const std::size_t b1 =
          std::min(order.size(), b0 + static_cast<std::size_t>(tcfg.batch_size));
      ag::Tape tape;
      ParamVars vars = lift_params(tape, params);
      ag::Var batch_loss;
      for (std::size_t s = b0; s < b1; ++s) {
        const WindowSample w =
            window_at(train, cfg.input_len, cfg.horizon, 1, order[s]);
        ag::Var pred;
        try {
          pred = forward_on_tape(tape, vars, w.x, cfg);
        } catch (const NumericError& e) {
          throw NumericError("epoch " + std::to_string(epoch) + ", batch sample " +
                             std::to_string(s - b0) + ": " + e.what());
        }
        ag::Var loss = ag::mse(pred, tape.constant(w.y));
        batch_loss = (s == b0) ? loss : ag::add(batch_loss, loss);
      }
      const double count = static_cast<double>(b1 - b0);
      epoch_sse += batch_loss.value()(0);
      ag::Var mean_loss = ag::scale(batch_loss, 1.0 / count);
      tape.backward(mean_loss);

      std::vector<ag::Var> var_list = flatten_vars(vars);
      std::vector<Tensor> grads;
      grads.reserve(var_list.size());
      for (ag::Var v : var_list) grads.push_back(v.grad());
      adam_step(flat, grads, adam, tcfg);
    }

    if (hook) hook(epoch, params);
    const double val_mse = validation_mse(cfg, params, val);
    const auto end = std::chrono::steady_clock::now();

    EpochStats stats;
    stats.epoch = epoch;
    stats.train_mse = epoch_sse / static_cast<double>(n_train);
    stats.val_mse = val_mse;
    stats.seconds = std::chrono::duration<double>(end - start).count();
    result.history.push_back(stats);

    if (val_mse < result.best_val_mse) {
      result.best_val_mse = val_mse;
      result.best_epoch = epoch;
      result.best_params = params;
      epochs_since_best = 0;
    } else {
      ++epochs_since_best;
      if (epochs_since_best >= tcfg.patience) break;
    }
  }
  return result;
}

Tensor baseline_persistence(const Tensor& x, Index O) {
  if (x.rows() < 1) throw ConfigError("baseline_persistence: empty input");
  Tensor out({O, x.cols()});
  for (Index r = 0; r < O; ++r) out.mat().row(r) = x.mat().row(x.rows() - 1);
  return out;
}

Tensor baseline_seasonal_naive(const Tensor& x, Index O, Index P) {
  if (P < 1 || P > x.rows()) {
    throw ConfigError("baseline_seasonal_naive: period must be in [1, len(x)]");
  }
  Tensor out({O, x.cols()});
  for (Index r = 0; r < O; ++r) {
    out.mat().row(r) = x.mat().row(x.rows() - P + (r % P));
  }
  return out;
}

Tensor baseline_mean(const Tensor& x, Index O) {
  if (x.rows() < 1) throw ConfigError("baseline_mean: empty input");
  const Tensor m = col_mean(x);
  Tensor out({O, x.cols()});
  for (Index r = 0; r < O; ++r) {
    for (Index c = 0; c < x.cols(); ++c) out(r, c) = m(c);
  }
  return out;
}

EvalMetrics evaluate_model(const ModelConfig& cfg, const ModelParams& params,
                           const SeriesFrame& frame, Index stride) {
  const Index n = window_count(frame.length(), cfg.input_len, cfg.horizon, stride);
  EvalMetrics metrics;
  for (Index i = 0; i < n; ++i) {
    const WindowSample s = window_at(frame, cfg.input_len, cfg.horizon, stride, i);
    const Tensor pred = forward(s.x, params, cfg);
    metrics.mse += mse(pred, s.y);
    metrics.mae += mae(pred, s.y);
  }
  metrics.mse /= static_cast<double>(n);
  metrics.mae /= static_cast<double>(n);
  return metrics;
}

EvalMetrics evaluate_baseline(const BaselineFn& fn, const SeriesFrame& frame,
                              Index I, Index O, Index stride) {
  const Index n = window_count(frame.length(), I, O, stride);
  EvalMetrics metrics;
  for (Index i = 0; i < n; ++i) {
    const WindowSample s = window_at(frame, I, O, stride, i);
    const Tensor pred = fn(s.x, O);
    metrics.mse += mse(pred, s.y);
    metrics.mae += mae(pred, s.y);
  }
  metrics.mse /= static_cast<double>(n);
  metrics.mae /= static_cast<double>(n);
  return metrics;
}

}  // namespace ked
