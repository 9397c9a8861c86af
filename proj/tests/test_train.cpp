#include <doctest.h>

#include <cmath>
#include <numbers>
#include <random>

#include "ked/rng.hpp"

#include "ked/train.hpp"
#include "test_helpers.hpp"

using namespace ked;
using test::max_abs_diff;
using test::random_tensor;

namespace {

ModelConfig small_config(Index I, Index O, Index d_model, Index D = 1) {
  ModelConfig cfg;
  cfg.input_len = I;
  cfg.horizon = O;
  cfg.feature_dim = D;
  cfg.d_model = d_model;
  cfg.enc_layers = 1;
  cfg.dec_layers = 1;
  cfg.ma_kernel = 13;
  for (AttentionConfig* a : {&cfg.self_enc, &cfg.self_dec, &cfg.cross_dec}) {
    a->heads = 4;
  }
  return cfg;
}

}  // namespace

TEST_CASE("mse and mae basics") {
  std::mt19937_64 gen(4);
  const Tensor a = random_tensor({5, 3}, gen);
  CHECK(mse(a, a) == 0.0);
  CHECK(mae(a, a) == 0.0);
  Tensor b = a;
  b.flat() += 2.0;
  CHECK(mse(a, b) == doctest::Approx(4.0).epsilon(1e-14));
  CHECK(mae(a, b) == doctest::Approx(2.0).epsilon(1e-14));
  CHECK_THROWS_AS(mse(a, random_tensor({3, 5}, gen)), DimensionError);

  const Tensor p = random_tensor({4, 2}, gen);
  const Tensor t = random_tensor({4, 2}, gen);
  double se = 0.0;
  double ae = 0.0;
  for (Index i = 0; i < p.numel(); ++i) {
    se += (p(i) - t(i)) * (p(i) - t(i));
    ae += std::abs(p(i) - t(i));
  }
  CHECK(std::abs(mse(p, t) - se / 8.0) < 1e-12);
  CHECK(std::abs(mae(p, t) - ae / 8.0) < 1e-12);
}

TEST_CASE("adam fixed point at zero gradient and zero weight") {
  ModelConfig cfg = small_config(8, 4, 8);
  ModelParams params = zero_params(cfg);
  AdamState state = make_adam_state(params);
  std::vector<Tensor*> flat;
  std::vector<Tensor> grads;
  for (auto& [name, t] : named_tensors(params)) {
    flat.push_back(t);
    grads.push_back(Tensor::zeros(t->shape()));
  }
  TrainConfig tcfg;
  adam_step(flat, grads, state, tcfg);
  for (Tensor* t : flat) CHECK((t->flat() == 0.0).all());
}

TEST_CASE("adam single-step hand example") {
  // theta = 1, g = 1, lr = 0.1, wd = 0: m_hat = v_hat = 1
  // so theta' = 1 - 0.1 / (1 + 1e-8)
  ModelConfig cfg = small_config(8, 4, 8);
  ModelParams params = zero_params(cfg);
  params.out_b = Tensor::full({1}, 1.0);
  AdamState state = make_adam_state(params);
  std::vector<Tensor*> flat;
  std::vector<Tensor> grads;
  for (auto& [name, t] : named_tensors(params)) {
    flat.push_back(t);
    grads.push_back(Tensor::zeros(t->shape()));
  }
  grads.back() = Tensor::full({1}, 1.0);  // out.b is the last visited slot
  TrainConfig tcfg;
  tcfg.lr = 0.1;
  tcfg.weight_decay = 0.0;
  adam_step(flat, grads, state, tcfg);
  const double expected = 1.0 - 0.1 / (1.0 + 1e-8);
  CHECK(params.out_b(0) == doctest::Approx(expected).epsilon(1e-12));
  CHECK(params.out_b(0) == doctest::Approx(0.9).epsilon(1e-7));
}

TEST_CASE("decoupled weight decay shrinks weights without gradients") {
  ModelConfig cfg = small_config(8, 4, 8);
  ModelParams params = zero_params(cfg);
  params.out_b = Tensor::full({1}, 1.0);
  AdamState state = make_adam_state(params);
  std::vector<Tensor*> flat;
  std::vector<Tensor> grads;
  for (auto& [name, t] : named_tensors(params)) {
    flat.push_back(t);
    grads.push_back(Tensor::zeros(t->shape()));
  }
  TrainConfig tcfg;
  tcfg.lr = 0.1;
  tcfg.weight_decay = 0.5;
  adam_step(flat, grads, state, tcfg);
  CHECK(params.out_b(0) == doctest::Approx(1.0 - 0.1 * 0.5).epsilon(1e-12));
}

TEST_CASE("adam rejects non-finite gradients") {
  ModelConfig cfg = small_config(8, 4, 8);
  ModelParams params = zero_params(cfg);
  AdamState state = make_adam_state(params);
  std::vector<Tensor*> flat;
  std::vector<Tensor> grads;
  for (auto& [name, t] : named_tensors(params)) {
    flat.push_back(t);
    grads.push_back(Tensor::zeros(t->shape()));
  }
  grads[0](0) = std::nan("");
  TrainConfig tcfg;
  CHECK_THROWS_AS(adam_step(flat, grads, state, tcfg), NumericError);
}

TEST_CASE("train config validation") {
  TrainConfig t;
  t.patience = 20;
  CHECK_THROWS_AS(t.validate(), ConfigError);
  t = TrainConfig{};
  t.lr = 0.0;
  CHECK_THROWS_AS(t.validate(), ConfigError);
}

TEST_CASE("train_loop on constant data with a zero model stops after patience") {
  SynthSpec spec;
  spec.T = 120;
  spec.noise = 0.0;
  SeriesFrame frame = synth_generate(spec);
  frame.values = Tensor::full({120, 1}, 0.0);  // constant series
  const Splits s = chronological_split(frame, {0.6, 0.2, 0.2});

  ModelConfig cfg = small_config(8, 4, 8);
  const ModelParams zero = zero_params(cfg);
  TrainConfig tcfg;
  tcfg.max_epochs = 10;
  tcfg.patience = 3;
  tcfg.lr = 1e-12;  // effectively frozen at the optimum
  tcfg.weight_decay = 0.0;
  const TrainResult result = train_loop(cfg, zero, s.train, s.val, tcfg);
  CHECK(result.history.size() == 4);  // epoch 1 is best, then patience runs out
  CHECK(result.best_epoch == 1);
  CHECK(result.history[0].val_mse == doctest::Approx(0.0).epsilon(1e-20));
}

TEST_CASE("train_loop respects max_epochs") {
  SynthSpec spec;
  spec.T = 150;
  const SeriesFrame frame = synth_generate(spec);
  const Splits s = chronological_split(frame, {0.6, 0.2, 0.2});
  ModelConfig cfg = small_config(8, 4, 8);
  TrainConfig tcfg;
  tcfg.max_epochs = 1;
  tcfg.patience = 1;
  const TrainResult result =
      train_loop(cfg, init_params(cfg, 1), s.train, s.val, tcfg);
  CHECK(result.history.size() == 1);
}

TEST_CASE("early stopping returns the best parameters, not the last") {
  SynthSpec spec;
  spec.T = 200;
  spec.noise = 0.05;
  SeriesFrame frame = synth_generate(spec);
  const Splits s = chronological_split(frame, {0.6, 0.2, 0.2});
  ModelConfig cfg = small_config(16, 4, 8);
  TrainConfig tcfg;
  tcfg.max_epochs = 4;
  tcfg.patience = 2;
  tcfg.lr = 1e-4;
  // wreck the weights after epoch 2; later validations must be worse and the
  // returned parameters must predate the damage
  const EpochHook hook = [](Index epoch, ModelParams& params) {
    if (epoch >= 2) params.out_b.flat() += 1e6;
  };
  const TrainResult result =
      train_loop(cfg, init_params(cfg, 2), s.train, s.val, tcfg, hook);
  CHECK(result.best_epoch == 1);
  CHECK(result.best_params.out_b.flat().abs().maxCoeff() < 1e5);
  CHECK(result.history.back().val_mse > result.best_val_mse);
}

TEST_CASE("first epoch reduces the training loss for most seeds") {
  SynthSpec spec;
  spec.T = 260;
  spec.noise = 0.1;
  int improved = 0;
  for (std::uint64_t seed = 1; seed <= 10; ++seed) {
    spec.seed = seed;
    SeriesFrame frame = synth_generate(spec);
    Splits s = chronological_split(frame, {0.7, 0.15, 0.15});
    standardize(s.train, {&s.val, &s.test});
    ModelConfig cfg = small_config(24, 8, 8);
    TrainConfig tcfg;
    tcfg.max_epochs = 2;
    tcfg.patience = 2;
    tcfg.lr = 1e-3;
    tcfg.seed = seed;
    const TrainResult result =
        train_loop(cfg, init_params(cfg, seed), s.train, s.val, tcfg);
    if (result.history[1].train_mse < result.history[0].train_mse) ++improved;
  }
  CHECK(improved >= 9);
}

TEST_CASE("baselines agree on constant input") {
  const Tensor x = Tensor::full({12, 2}, 3.0);
  for (const Tensor& pred : {baseline_persistence(x, 5),
                             baseline_seasonal_naive(x, 5, 4),
                             baseline_mean(x, 5)}) {
    CHECK(max_abs_diff(pred, Tensor::full({5, 2}, 3.0)) < 1e-12);
  }
}

TEST_CASE("seasonal-naive is exact on a pure periodic signal") {
  const Index P = 6;
  Tensor x({18, 1});
  for (Index t = 0; t < 18; ++t) x(t, 0) = std::sin(2.0 * std::numbers::pi * t / P);
  const Tensor pred = baseline_seasonal_naive(x, 12, P);
  for (Index h = 0; h < 12; ++h) {
    const double truth = std::sin(2.0 * std::numbers::pi * (18 + h) / P);
    CHECK(pred(h, 0) == doctest::Approx(truth).epsilon(1e-9));
  }
  CHECK_THROWS_AS(baseline_seasonal_naive(x, 4, 19), ConfigError);
}

TEST_CASE("persistence beats the mean baseline on random walks") {
  std::mt19937_64 gen(99);
  double mse_persistence = 0.0;
  double mse_mean = 0.0;
  for (int rep = 0; rep < 1000; ++rep) {
    Tensor walk({40, 1});
    double acc = 0.0;
    for (Index t = 0; t < 40; ++t) {
      acc += rng::gaussian(gen);
      walk(t, 0) = acc;
    }
    const Tensor x = slice_rows(walk, 0, 32);
    const Tensor y = slice_rows(walk, 32, 40);
    mse_persistence += mse(baseline_persistence(x, 8), y);
    mse_mean += mse(baseline_mean(x, 8), y);
  }
  CHECK(mse_persistence < mse_mean);
}

TEST_CASE("training improves on the persistence baseline for a sine") {
  SynthSpec spec;
  spec.T = 700;
  spec.noise = 0.1;
  spec.seed = 4;
  SeriesFrame frame = synth_generate(spec);
  Splits s = chronological_split(frame, {0.7, 0.1, 0.2});
  standardize(s.train, {&s.val, &s.test});

  ModelConfig cfg = small_config(48, 12, 16);
  cfg.ma_kernel = 25;
  TrainConfig tcfg;
  tcfg.lr = 1e-3;
  tcfg.max_epochs = 4;
  tcfg.patience = 4;
  tcfg.seed = 4;
  const TrainResult result =
      train_loop(cfg, init_params(cfg, 4), s.train, s.val, tcfg);
  const EvalMetrics persistence = evaluate_baseline(
      [](const Tensor& x, Index O) { return baseline_persistence(x, O); },
      s.val, cfg.input_len, cfg.horizon);
  CHECK(result.best_val_mse < 0.8 * persistence.mse);
}
