#include <doctest.h>

#include <algorithm>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include <json.hpp>

#include "ked/data.hpp"

namespace fs = std::filesystem;
using Json = nlohmann::json;

namespace {

#ifndef KEDFORMER_BIN
#error "KEDFORMER_BIN must point at the CLI binary"
#endif

struct CmdResult {
  int exit_code = -1;
  std::string output;
};

CmdResult run(const std::string& args) {
  const std::string out_path =
      (fs::temp_directory_path() / "ked_cli_out.txt").string();
  const std::string cmd =
      std::string(KEDFORMER_BIN) + " " + args + " > " + out_path + " 2>&1";
  const int status = std::system(cmd.c_str());
  CmdResult r;
  r.exit_code = WEXITSTATUS(status);
  std::ifstream in(out_path);
  std::stringstream ss;
  ss << in.rdbuf();
  r.output = ss.str();
  return r;
}

struct TempDir {
  fs::path path;
  explicit TempDir(const std::string& name)
      : path(fs::temp_directory_path() / name) {
    fs::remove_all(path);
    fs::create_directories(path);
  }
  ~TempDir() { fs::remove_all(path); }
  std::string s(const std::string& rel = "") const {
    return (path / rel).string();
  }
};

std::string read_file(const std::string& path) {
  std::ifstream in(path);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

const std::string kSmallTrain =
    "--synthetic sine_trend --T 700 --I 48 --O 12 --d-model 16 --heads 4 "
    "--max-epochs 2 --seed 7";

}  // namespace

TEST_CASE("train smoke run writes every artifact") {
  TempDir dir("ked_cli_train");
  const CmdResult r = run("train " + kSmallTrain + " --out " + dir.s("run"));
  CHECK(r.exit_code == 0);
  for (const char* f : {"checkpoint.json", "scaler.json", "history.csv",
                        "metrics.json", "manifest.json"}) {
    INFO(f);
    CHECK(fs::exists(dir.path / "run" / f));
  }
  CHECK(r.output.find("test MSE") != std::string::npos);
  const std::string hist = read_file(dir.s("run/history.csv"));
  CHECK(hist.rfind("epoch,train_mse,val_mse,seconds", 0) == 0);
}

TEST_CASE("missing dataset path is a usage error naming the path") {
  const CmdResult r = run("train --data missing.csv --I 8 --O 4");
  CHECK(r.exit_code == 2);
  CHECK(r.output.find("missing.csv") != std::string::npos);
}

TEST_CASE("bad flags exit with the usage code") {
  CHECK(run("train --no-such-flag").exit_code == 2);
  CHECK(run("frobnicate").exit_code == 2);
  CHECK(run("train " + kSmallTrain + " --variant V9").exit_code == 2);
}

TEST_CASE("variant flag wires the published attention layout") {
  TempDir dir("ked_cli_variant");
  const CmdResult r =
      run("train " + kSmallTrain + " --variant V1 --out " + dir.s("run"));
  CHECK(r.exit_code == 0);
  Json manifest;
  std::ifstream in(dir.s("run/manifest.json"));
  in >> manifest;
  CHECK(manifest["model_config"]["self_enc"]["variant"] == "KEDatt");
  CHECK(manifest["model_config"]["self_dec"]["variant"] == "KEDatt");
  CHECK(manifest["model_config"]["cross_dec"]["variant"] == "KEDatt-f");
  CHECK(manifest["git_describe"].is_string());
}

TEST_CASE("predict round trip from a trained checkpoint") {
  TempDir dir("ked_cli_predict");
  REQUIRE(run("train " + kSmallTrain + " --out " + dir.s("run")).exit_code == 0);

  // an input file with plenty of rows
  ked::SynthSpec spec;
  spec.T = 200;
  spec.seed = 7;
  ked::write_csv(dir.s("input.csv"), ked::synth_generate(spec));

  const std::string args = "predict --checkpoint " + dir.s("run/checkpoint.json") +
                           " --scaler " + dir.s("run/scaler.json") + " --data " +
                           dir.s("input.csv");
  const CmdResult r1 = run(args + " --out " + dir.s("f1.csv"));
  CHECK(r1.exit_code == 0);
  const CmdResult r2 = run(args + " --out " + dir.s("f2.csv"));
  CHECK(r2.exit_code == 0);
  const std::string f1 = read_file(dir.s("f1.csv"));
  CHECK(f1 == read_file(dir.s("f2.csv")));  // deterministic forecast bytes
  CHECK(f1.rfind("step,", 0) == 0);
  // 12 forecast rows + header
  CHECK(std::count(f1.begin(), f1.end(), '\n') == 13);
}

TEST_CASE("predict with too few rows is an insufficient-data error") {
  TempDir dir("ked_cli_short");
  REQUIRE(run("train " + kSmallTrain + " --out " + dir.s("run")).exit_code == 0);
  ked::SynthSpec spec;
  spec.T = 47;  // one row short of I
  spec.seed = 3;
  ked::write_csv(dir.s("short.csv"), ked::synth_generate(spec));
  const CmdResult r = run("predict --checkpoint " + dir.s("run/checkpoint.json") +
                          " --scaler " + dir.s("run/scaler.json") + " --data " +
                          dir.s("short.csv"));
  CHECK(r.exit_code == 2);
  CHECK(r.output.find("insufficient") != std::string::npos);
}

TEST_CASE("predict rejects a feature-count mismatch") {
  TempDir dir("ked_cli_mismatch");
  REQUIRE(run("train " + kSmallTrain + " --out " + dir.s("run")).exit_code == 0);
  ked::SynthSpec spec;
  spec.T = 100;
  spec.D = 3;  // model was trained with D = 1
  ked::write_csv(dir.s("wide.csv"), ked::synth_generate(spec));
  const CmdResult r = run("predict --checkpoint " + dir.s("run/checkpoint.json") +
                          " --scaler " + dir.s("run/scaler.json") + " --data " +
                          dir.s("wide.csv"));
  CHECK(r.exit_code == 2);
  CHECK(r.output.find("incompatibility") != std::string::npos);
}

TEST_CASE("decompose emits additive raw/trend/seasonal columns") {
  TempDir dir("ked_cli_decomp");
  {
    std::ofstream out(dir.s("const.csv"));
    out << "date,v\n";
    for (int t = 0; t < 40; ++t) {
      out << (1000 + t) << ",2.5\n";
    }
  }
  const CmdResult r = run("decompose --data " + dir.s("const.csv") +
                          " --ma-kernel 7 --out " + dir.s("dec.csv"));
  CHECK(r.exit_code == 0);
  std::ifstream in(dir.s("dec.csv"));
  std::string header;
  std::getline(in, header);
  CHECK(header == "t,raw_v,trend_v,seasonal_v");
  int rows = 0;
  std::string line;
  while (std::getline(in, line)) {
    ++rows;
    std::istringstream ls(line);
    std::string tok;
    std::getline(ls, tok, ',');
    double vals[3];
    for (int i = 0; i < 3; ++i) {
      std::getline(ls, tok, ',');
      vals[i] = std::stod(tok);
    }
    CHECK(vals[2] == 0.0);                            // constant -> zero seasonal
    CHECK(std::abs(vals[1] + vals[2] - vals[0]) < 1e-10);  // additive
  }
  CHECK(rows == 40);
}

TEST_CASE("bench writes a full grid and prints slopes") {
  TempDir dir("ked_cli_bench");
  const CmdResult r = run(
      "bench --lengths 64,128 --reps 1 --d-model 8 --heads 2 --out " + dir.s("b"));
  CHECK(r.exit_code == 0);
  CHECK(r.output.find("log-log slope") != std::string::npos);
  std::ifstream in(dir.s("b/bench.csv"));
  std::string line;
  std::getline(in, line);
  CHECK(line == "mechanism,L,seconds");
  int rows = 0;
  while (std::getline(in, line)) ++rows;
  CHECK(rows == 4);  // 2 lengths x 2 mechanisms
}

TEST_CASE("ablate trains the three-variant grid") {
  TempDir dir("ked_cli_ablate");
  const CmdResult r = run(
      "ablate --synthetic sine_trend --T 400 --I 24 --O 8 --d-model 8 --heads 2 "
      "--max-epochs 1 --seed 5 --out " + dir.s("a"));
  CHECK(r.exit_code == 0);
  std::ifstream in(dir.s("a/ablate.csv"));
  std::string line;
  std::getline(in, line);
  CHECK(line == "variant,test_mse,test_mae,seconds_per_epoch,param_count");
  std::vector<std::string> variants;
  std::string params;
  while (std::getline(in, line)) {
    variants.push_back(line.substr(0, line.find(',')));
    const std::string count = line.substr(line.rfind(',') + 1);
    if (params.empty()) params = count;
    CHECK(params == count);  // identical parameter budgets
  }
  CHECK(variants == std::vector<std::string>{"KEDformer", "V1", "V2"});
}
