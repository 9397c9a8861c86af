#include <CLI11.hpp>

#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "ked/bench.hpp"
#include "ked/data.hpp"
#include "ked/model.hpp"
#include "ked/train.hpp"
#include "ked/version.hpp"

namespace fs = std::filesystem;
using Json = nlohmann::json;
using namespace ked;

namespace {

std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

std::string fmt6(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.6f", v);
  return buf;
}

struct DatasetOptions {
  std::string data_path;
  std::string synthetic;
  Index synth_T = 2000;
  Index synth_D = 1;
  double synth_noise = 0.1;
  double synth_period = 24.0;
  bool forward_fill = false;
};

struct ModelOptions {
  Index I = 96;
  Index O = 24;
  Index d_model = 32;
  Index enc_layers = 1;
  Index dec_layers = 1;
  int heads = 8;
  double factor = 3.0;
  int ma_kernel = 25;
  std::string variant = "KEDformer";
};

struct TrainOptions {
  double lr = 1e-4;
  Index batch = 32;
  double weight_decay = 0.1;
  Index max_epochs = 10;
  Index patience = 3;
  std::uint64_t seed = 1;
  int repeats = 1;
};

void add_dataset_flags(CLI::App* cmd, DatasetOptions& d) {
  cmd->add_option("--data", d.data_path, "CSV dataset (timestamp first column)");
  cmd->add_option("--synthetic", d.synthetic,
                  "synthetic kind: sine_trend|multi_period|random_walk");
  cmd->add_option("--T", d.synth_T, "synthetic length");
  cmd->add_option("--D", d.synth_D, "synthetic feature count");
  cmd->add_option("--noise", d.synth_noise, "synthetic noise sigma");
  cmd->add_option("--period", d.synth_period, "synthetic base period");
  cmd->add_flag("--forward-fill", d.forward_fill, "fill CSV gaps from last row");
}

void add_model_flags(CLI::App* cmd, ModelOptions& m) {
  cmd->add_option("--I", m.I, "input window length");
  cmd->add_option("--O", m.O, "forecast horizon");
  cmd->add_option("--d-model", m.d_model, "model width");
  cmd->add_option("--enc-layers", m.enc_layers, "encoder layers");
  cmd->add_option("--dec-layers", m.dec_layers, "decoder layers");
  cmd->add_option("--heads", m.heads, "attention heads");
  cmd->add_option("--factor", m.factor, "attention factor c");
  cmd->add_option("--ma-kernel", m.ma_kernel, "moving-average kernel (odd)");
  cmd->add_option("--variant", m.variant, "KEDformer|V1|V2");
}

void add_train_flags(CLI::App* cmd, TrainOptions& t) {
  cmd->add_option("--lr", t.lr, "learning rate");
  cmd->add_option("--batch", t.batch, "batch size");
  cmd->add_option("--weight-decay", t.weight_decay, "decoupled weight decay");
  cmd->add_option("--max-epochs", t.max_epochs, "epoch budget");
  cmd->add_option("--patience", t.patience, "early-stopping patience");
  cmd->add_option("--seed", t.seed, "random seed");
  cmd->add_option("--repeats", t.repeats, "independent repeats (seed, seed+1, ...)");
}

std::string default_out_root() {
  if (const char* env = std::getenv("KEDFORMER_OUT_ROOT")) return env;
  return "runs";
}

ModelConfig build_model_config(const ModelOptions& m, Index feature_dim) {
  ModelConfig cfg;
  cfg.input_len = m.I;
  cfg.horizon = m.O;
  cfg.feature_dim = feature_dim;
  cfg.d_model = m.d_model;
  cfg.enc_layers = m.enc_layers;
  cfg.dec_layers = m.dec_layers;
  cfg.ma_kernel = m.ma_kernel;
  for (AttentionConfig* a : {&cfg.self_enc, &cfg.self_dec, &cfg.cross_dec}) {
    a->heads = m.heads;
    a->factor_c = m.factor;
  }
  apply_ablation(cfg, parse_ablation(m.variant));
  cfg.validate();
  return cfg;
}

struct Dataset {
  Splits splits;
  Scaler scaler;
  std::vector<std::string> feature_names;
  Json description;
};

Dataset make_dataset(const DatasetOptions& d, const ModelOptions& m,
                     std::uint64_t seed) {
  if (d.data_path.empty() == d.synthetic.empty()) {
    throw ConfigError("exactly one of --data or --synthetic is required");
  }
  SeriesFrame frame;
  Json desc;
  if (!d.data_path.empty()) {
    if (!fs::exists(d.data_path)) {
      throw DataError("dataset not found: " + d.data_path);
    }
    LoadOptions opts;
    opts.forward_fill = d.forward_fill;
    frame = load_csv(d.data_path, opts);
    desc = {{"kind", "csv"}, {"path", d.data_path}};
  } else {
    SynthSpec spec;
    spec.kind = parse_synth_kind(d.synthetic);
    spec.T = d.synth_T;
    spec.D = d.synth_D;
    spec.noise = d.synth_noise;
    spec.period = d.synth_period;
    spec.seed = seed;
    frame = synth_generate(spec);
    desc = {{"kind", "synthetic:" + d.synthetic},
            {"T", spec.T},
            {"D", spec.D},
            {"noise", spec.noise},
            {"period", spec.period},
            {"seed", seed}};
  }
  Dataset out;
  out.feature_names = frame.feature_names;
  out.splits = chronological_split(frame, {0.7, 0.1, 0.2}, m.I + m.O);
  out.scaler = standardize(out.splits.train, {&out.splits.val, &out.splits.test});
  out.description = std::move(desc);
  return out;
}

void write_history_csv(const std::string& path, const std::vector<EpochStats>& hist) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write " + path);
  out << "epoch,train_mse,val_mse,seconds\n";
  for (const EpochStats& e : hist) {
    out << e.epoch << ',' << fmt(e.train_mse) << ',' << fmt(e.val_mse) << ','
        << fmt6(e.seconds) << '\n';
  }
}

void write_manifest(const fs::path& dir, Json manifest) {
  manifest["git_describe"] = kGitDescribe;
  std::ofstream out(dir / "manifest.json");
  if (!out) throw DataError("cannot write manifest under " + dir.string());
  out << manifest.dump(2) << '\n';
}

struct RunOutcome {
  EvalMetrics test;
  double seconds_per_epoch = 0.0;
  Index best_epoch = 0;
};

RunOutcome run_training(const fs::path& outdir, const Dataset& data,
                        const ModelConfig& cfg, const TrainConfig& tcfg) {
  fs::create_directories(outdir);
  const ModelParams init = init_params(cfg, tcfg.seed);
  const TrainResult result =
      train_loop(cfg, init, data.splits.train, data.splits.val, tcfg);
  const EvalMetrics test = evaluate_model(cfg, result.best_params, data.splits.test);

  save_checkpoint((outdir / "checkpoint.json").string(), cfg, result.best_params,
                  tcfg.seed);
  save_scaler((outdir / "scaler.json").string(), data.scaler, data.feature_names);
  write_history_csv((outdir / "history.csv").string(), result.history);

  Json metrics;
  metrics["test_mse"] = test.mse;
  metrics["test_mae"] = test.mae;
  metrics["best_epoch"] = result.best_epoch;
  metrics["best_val_mse"] = result.best_val_mse;
  std::ofstream mo(outdir / "metrics.json");
  mo << metrics.dump(2) << '\n';

  RunOutcome outcome;
  outcome.test = test;
  outcome.best_epoch = result.best_epoch;
  double total = 0.0;
  for (const EpochStats& e : result.history) total += e.seconds;
  outcome.seconds_per_epoch = total / static_cast<double>(result.history.size());
  return outcome;
}

Json train_config_to_json(const TrainConfig& t) {
  return Json{{"lr", t.lr},
              {"batch_size", t.batch_size},
              {"weight_decay", t.weight_decay},
              {"max_epochs", t.max_epochs},
              {"patience", t.patience},
              {"seed", t.seed}};
}

int cmd_train(const DatasetOptions& dopt, const ModelOptions& mopt,
              const TrainOptions& topt, std::string out_dir) {
  if (out_dir.empty()) {
    out_dir = default_out_root() + "/train-seed" + std::to_string(topt.seed);
  }
  const fs::path outdir(out_dir);
  fs::create_directories(outdir);

  TrainConfig tcfg;
  tcfg.lr = topt.lr;
  tcfg.batch_size = topt.batch;
  tcfg.weight_decay = topt.weight_decay;
  tcfg.max_epochs = topt.max_epochs;
  tcfg.patience = std::min(topt.patience, topt.max_epochs);
  tcfg.seed = topt.seed;
  tcfg.validate();

  std::vector<EvalMetrics> all;
  Json manifest;
  manifest["command"] = "train";
  manifest["train_config"] = train_config_to_json(tcfg);
  manifest["repeats"] = topt.repeats;
  manifest["output_dir"] = outdir.string();

  for (int rep = 0; rep < topt.repeats; ++rep) {
    TrainConfig rep_cfg = tcfg;
    rep_cfg.seed = topt.seed + static_cast<std::uint64_t>(rep);
    const Dataset data = make_dataset(dopt, mopt, rep_cfg.seed);
    const ModelConfig cfg = build_model_config(mopt, data.splits.train.dims());
    if (rep == 0) {
      manifest["dataset"] = data.description;
      manifest["model_config"] = model_config_to_json(cfg);
      manifest["param_count"] = param_count(cfg);
    }
    const fs::path rep_dir =
        topt.repeats == 1 ? outdir : outdir / ("run" + std::to_string(rep));
    const RunOutcome outcome = run_training(rep_dir, data, cfg, rep_cfg);
    all.push_back(outcome.test);
    std::cout << "run " << rep << " (seed " << rep_cfg.seed
              << "): test MSE " << fmt6(outcome.test.mse) << "  test MAE "
              << fmt6(outcome.test.mae) << "  best epoch "
              << outcome.best_epoch << "\n";
  }

  double mse_sum = 0, mse_min = 1e300, mse_max = -1e300;
  double mae_sum = 0;
  for (const EvalMetrics& m : all) {
    mse_sum += m.mse;
    mae_sum += m.mae;
    mse_min = std::min(mse_min, m.mse);
    mse_max = std::max(mse_max, m.mse);
  }
  const double n = static_cast<double>(all.size());
  std::cout << "test MSE " << fmt6(mse_sum / n);
  if (all.size() > 1) {
    std::cout << " (min " << fmt6(mse_min) << ", max " << fmt6(mse_max) << ")";
  }
  std::cout << "  test MAE " << fmt6(mae_sum / n) << "\n";
  write_manifest(outdir, std::move(manifest));
  return 0;
}

int cmd_predict(const std::string& checkpoint_path, const std::string& scaler_path,
                const std::string& data_path, std::string out_file) {
  const Checkpoint ck = load_checkpoint(checkpoint_path);
  const Scaler scaler = load_scaler(scaler_path);
  if (scaler.mu.size() != ck.config.feature_dim) {
    throw ConfigError("checkpoint/scaler incompatibility: checkpoint expects " +
                      std::to_string(ck.config.feature_dim) +
                      " features, scaler has " + std::to_string(scaler.mu.size()));
  }
  if (!fs::exists(data_path)) throw DataError("dataset not found: " + data_path);
  const SeriesFrame frame = load_csv(data_path);
  if (frame.dims() != ck.config.feature_dim) {
    throw ConfigError("checkpoint/data incompatibility: model expects " +
                      std::to_string(ck.config.feature_dim) + " features, file has " +
                      std::to_string(frame.dims()));
  }
  if (frame.length() < ck.config.input_len) {
    throw DataError("insufficient data: need at least " +
                    std::to_string(ck.config.input_len) + " rows, have " +
                    std::to_string(frame.length()));
  }
  const Tensor window = slice_rows(frame.values, frame.length() - ck.config.input_len,
                                   frame.length());
  const Tensor pred_scaled =
      forward(scaler.transform(window), ck.params, ck.config);
  const Tensor pred = scaler.inverse(pred_scaled);

  if (out_file.empty()) out_file = "forecast.csv";
  std::ofstream out(out_file);
  if (!out) throw DataError("cannot write " + out_file);
  out << "step";
  for (const auto& name : frame.feature_names) out << ',' << name;
  out << '\n';
  for (Index r = 0; r < pred.rows(); ++r) {
    out << (r + 1);
    for (Index c = 0; c < pred.cols(); ++c) out << ',' << fmt(pred(r, c));
    out << '\n';
  }
  std::cout << "wrote " << pred.rows() << "-step forecast to " << out_file << "\n";
  return 0;
}

int cmd_decompose(const std::string& data_path, int ma_kernel,
                  std::string out_file) {
  if (!fs::exists(data_path)) throw DataError("dataset not found: " + data_path);
  const SeriesFrame frame = load_csv(data_path);
  const DecompPair d = mstw_decompose(frame.values, ma_kernel);
  if (out_file.empty()) out_file = "decomposition.csv";
  std::ofstream out(out_file);
  if (!out) throw DataError("cannot write " + out_file);
  out << "t";
  for (const auto& name : frame.feature_names) {
    out << ",raw_" << name << ",trend_" << name << ",seasonal_" << name;
  }
  out << '\n';
  for (Index t = 0; t < frame.length(); ++t) {
    out << frame.timestamps[static_cast<std::size_t>(t)];
    for (Index c = 0; c < frame.dims(); ++c) {
      out << ',' << fmt(frame.values(t, c)) << ',' << fmt(d.trend(t, c)) << ','
          << fmt(d.seasonal(t, c));
    }
    out << '\n';
  }
  std::cout << "wrote decomposition (" << frame.length() << " rows) to "
            << out_file << "\n";
  return 0;
}

int cmd_bench(std::string lengths_csv, int reps, Index d_model, int heads,
              double factor, std::uint64_t seed, std::string out_dir) {
  BenchConfig bcfg;
  bcfg.reps = reps;
  bcfg.d_model = d_model;
  bcfg.heads = heads;
  bcfg.factor_c = factor;
  bcfg.seed = seed;
  if (!lengths_csv.empty()) {
    bcfg.lengths.clear();
    std::istringstream is(lengths_csv);
    std::string tok;
    while (std::getline(is, tok, ',')) bcfg.lengths.push_back(std::stol(tok));
    if (bcfg.lengths.empty()) throw ConfigError("--lengths parsed to nothing");
  }
  if (out_dir.empty()) out_dir = default_out_root() + "/bench";
  const fs::path outdir(out_dir);
  fs::create_directories(outdir);

  const std::vector<BenchRow> rows = run_attention_bench(bcfg);
  write_bench_csv((outdir / "bench.csv").string(), rows);
  for (const BenchRow& r : rows) {
    std::cout << r.mechanism << " L=" << r.length << "  " << fmt(r.seconds)
              << " s\n";
  }
  const auto slopes = slopes_by_mechanism(rows);
  for (const auto& [name, slope] : slopes) {
    std::cout << name << " log-log slope: " << fmt6(slope) << "\n";
  }

  Json manifest;
  manifest["command"] = "bench";
  manifest["reps"] = bcfg.reps;
  manifest["d_model"] = bcfg.d_model;
  manifest["heads"] = bcfg.heads;
  manifest["factor"] = bcfg.factor_c;
  manifest["seed"] = bcfg.seed;
  manifest["lengths"] = bcfg.lengths;
  manifest["slopes"] = slopes;
  manifest["output_dir"] = outdir.string();
  write_manifest(outdir, std::move(manifest));
  return 0;
}

int cmd_ablate(const DatasetOptions& dopt, const ModelOptions& mopt,
               const TrainOptions& topt, std::string out_dir) {
  if (out_dir.empty()) {
    out_dir = default_out_root() + "/ablate-seed" + std::to_string(topt.seed);
  }
  const fs::path outdir(out_dir);
  fs::create_directories(outdir);

  TrainConfig tcfg;
  tcfg.lr = topt.lr;
  tcfg.batch_size = topt.batch;
  tcfg.weight_decay = topt.weight_decay;
  tcfg.max_epochs = topt.max_epochs;
  tcfg.patience = std::min(topt.patience, topt.max_epochs);
  tcfg.seed = topt.seed;
  tcfg.validate();

  struct Row {
    std::string variant;
    EvalMetrics test;
    double seconds_per_epoch;
    Index params;
  };
  std::vector<Row> rows;
  Json manifest;
  manifest["command"] = "ablate";
  manifest["train_config"] = train_config_to_json(tcfg);
  manifest["output_dir"] = outdir.string();

  for (AblationVariant variant : {AblationVariant::KEDformer, AblationVariant::V1,
                                  AblationVariant::V2}) {
    ModelOptions vm = mopt;
    vm.variant = ablation_name(variant);
    const Dataset data = make_dataset(dopt, vm, tcfg.seed);
    const ModelConfig cfg = build_model_config(vm, data.splits.train.dims());
    if (rows.empty()) {
      manifest["dataset"] = data.description;
      manifest["model_config"] = model_config_to_json(cfg);
    }
    const RunOutcome outcome =
        run_training(outdir / vm.variant, data, cfg, tcfg);
    rows.push_back({vm.variant, outcome.test, outcome.seconds_per_epoch,
                    param_count(cfg)});
  }
  for (const Row& r : rows) {
    if (r.params != rows[0].params) {
      throw NumericError("ablation variants diverged in parameter count");
    }
  }

  std::ofstream csv(outdir / "ablate.csv");
  csv << "variant,test_mse,test_mae,seconds_per_epoch,param_count\n";
  std::cout << "variant     test_mse   test_mae   s/epoch\n";
  for (const Row& r : rows) {
    csv << r.variant << ',' << fmt(r.test.mse) << ',' << fmt(r.test.mae) << ','
        << fmt6(r.seconds_per_epoch) << ',' << r.params << '\n';
    std::printf("%-10s  %9.6f  %9.6f  %8.3f\n", r.variant.c_str(), r.test.mse,
                r.test.mae, r.seconds_per_epoch);
  }
  csv.close();
  write_manifest(outdir, std::move(manifest));
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"KEDformer long-sequence forecasting toolkit"};
  app.require_subcommand(1);

  DatasetOptions dopt;
  ModelOptions mopt;
  TrainOptions topt;
  std::string out_dir;

  CLI::App* train = app.add_subcommand("train", "train a model and report test metrics");
  add_dataset_flags(train, dopt);
  add_model_flags(train, mopt);
  add_train_flags(train, topt);
  train->add_option("--out", out_dir, "output directory");

  std::string ck_path, scaler_path, predict_data, predict_out;
  CLI::App* predict = app.add_subcommand("predict", "forecast from a checkpoint");
  predict->add_option("--checkpoint", ck_path, "checkpoint.json")->required();
  predict->add_option("--scaler", scaler_path, "scaler.json")->required();
  predict->add_option("--data", predict_data, "input CSV (last I rows are used)")
      ->required();
  predict->add_option("--out", predict_out, "forecast CSV path");

  std::string dec_data, dec_out;
  int dec_kernel = 25;
  CLI::App* decompose =
      app.add_subcommand("decompose", "emit raw/trend/seasonal columns");
  decompose->add_option("--data", dec_data, "input CSV")->required();
  decompose->add_option("--ma-kernel", dec_kernel, "moving-average kernel (odd)");
  decompose->add_option("--out", dec_out, "output CSV path");

  std::string bench_lengths, bench_out;
  int bench_reps = 5;
  Index bench_dm = 64;
  int bench_heads = 8;
  double bench_factor = 3.0;
  std::uint64_t bench_seed = 42;
  CLI::App* bench = app.add_subcommand(
      "bench", "time canonical vs KEDatt attention over a length grid");
  bench->add_option("--lengths", bench_lengths, "comma-separated grid");
  bench->add_option("--reps", bench_reps, "repetitions per point (median)");
  bench->add_option("--d-model", bench_dm, "model width");
  bench->add_option("--heads", bench_heads, "attention heads");
  bench->add_option("--factor", bench_factor, "attention factor c");
  bench->add_option("--seed", bench_seed, "random seed");
  bench->add_option("--out", bench_out, "output directory");

  DatasetOptions a_dopt;
  ModelOptions a_mopt;
  TrainOptions a_topt;
  std::string a_out;
  CLI::App* ablate =
      app.add_subcommand("ablate", "train the KEDformer/V1/V2 variant grid");
  add_dataset_flags(ablate, a_dopt);
  add_model_flags(ablate, a_mopt);
  add_train_flags(ablate, a_topt);
  ablate->add_option("--out", a_out, "output directory");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    std::cerr << "usage error: " << e.what() << "\n";
    return 2;
  }

  try {
    if (train->parsed()) return cmd_train(dopt, mopt, topt, out_dir);
    if (predict->parsed())
      return cmd_predict(ck_path, scaler_path, predict_data, predict_out);
    if (decompose->parsed()) return cmd_decompose(dec_data, dec_kernel, dec_out);
    if (bench->parsed())
      return cmd_bench(bench_lengths, bench_reps, bench_dm, bench_heads,
                       bench_factor, bench_seed, bench_out);
    if (ablate->parsed()) return cmd_ablate(a_dopt, a_mopt, a_topt, a_out);
  } catch (const ConfigError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const DataError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
