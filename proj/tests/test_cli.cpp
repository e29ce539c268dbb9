#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <sstream>

#include "cli.hpp"
#include "cyclesense/bucket_io.hpp"
#include "cyclesense/run_config.hpp"

namespace fs = std::filesystem;
using cyclesense::cli::dispatch;

namespace {

struct Result {
  int code = 0;
  std::string out;
  std::string err;
};

Result run(std::vector<std::string> args) {
  std::ostringstream out, err;
  Result r;
  r.code = dispatch(args, out, err);
  r.out = out.str();
  r.err = err.str();
  return r;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write(const fs::path& p, const std::string& text) {
  std::ofstream(p, std::ios::binary) << text;
}

std::size_t count_lines(const std::string& text) {
  return static_cast<std::size_t>(std::count(text.begin(), text.end(), '\n'));
}

const char* kSmallConfig = R"({
  "seed": 5,
  "synth": {"n_rides": 16, "incident_rate": 1.5},
  "model": {"subnet_filters": 4, "fusion_filters": 4, "rnn_layers": 1, "rnn_units": 4},
  "train": {"epochs": 2, "patience": 1, "pretrain_epochs": 2, "batch_size": 32},
  "gan": {"steps": 3},
  "fcn_train": {"epochs": 2, "patience": 1, "batch_size": 32},
  "grid": {"f": [10], "rnn_units": [4], "cells": ["gru"], "lr": [0.001, 0.00001], "budget": 2, "epochs": 2}
})";

}  // namespace

TEST_CASE("usage errors exit with 1") {
  auto r = run({"bogus"});
  CHECK(r.code == 1);
  CHECK(r.err.find("bogus") != std::string::npos);
  CHECK(r.err.find("Usage") != std::string::npos);
  CHECK(run({}).code == 1);
  CHECK(run({"train"}).code == 1);
  CHECK(run({"gensynth", "--out", "x", "--threads", "many"}).code == 1);
  CHECK(run({"--help"}).code == 0);

  const fs::path dir = fs::temp_directory_path() / "cyclesense_cli_cfg";
  fs::create_directories(dir);
  write(dir / "bad.json", R"({"train": {"epochs": 5, "bogus": 1}})");
  r = run({"gensynth", "--out", (dir / "o").string(), "--config", (dir / "bad.json").string()});
  CHECK(r.code == 1);
  CHECK(r.err.find("bogus") != std::string::npos);
  write(dir / "patience.json", R"({"train": {"epochs": 5, "patience": 5}})");
  CHECK(run({"gensynth", "--out", (dir / "o").string(), "--config", (dir / "patience.json").string()}).code == 1);
  CHECK(run({"gensynth", "--out", (dir / "o").string(), "--partition", "windows"}).code == 1);
  CHECK(run({"preprocess", "--data", (dir / "missing").string(), "--out", (dir / "p").string()}).code == 1);
  fs::create_directories(dir / "pre");
  for (const char* split : {"train.csnb", "val.csnb", "test.csnb"}) write(dir / "pre" / split, "CSNB truncated");
  r = run({"train", "--data", (dir / "pre").string(), "--out", (dir / "m").string()});
  CHECK(r.code == 2);
  CHECK_FALSE(r.err.empty());
  fs::remove_all(dir);
}

TEST_CASE("run config round trip") {
  const auto c = cyclesense::RunConfig::from_json_text(kSmallConfig);
  CHECK(c.seed == 5);
  CHECK(c.model.rnn_units == 4);
  CHECK(c.train.gan.steps == 3);
  CHECK(c.grid.space.lr.size() == 2);
  const auto back = cyclesense::RunConfig::from_json_text(c.to_json_text());
  CHECK(back.to_json_text() == c.to_json_text());
  CHECK(c.seed_for("init") != c.seed_for("train"));
  CHECK(c.seed_for("init") == back.seed_for("init"));
  CHECK_THROWS_AS(cyclesense::RunConfig::from_json_text(R"({"sed": 1})"), cyclesense::ConfigInvalid);
  CHECK_THROWS_AS(cyclesense::RunConfig::from_json_text("{not json"), cyclesense::ConfigInvalid);
}

TEST_CASE("synthetic workflow end to end") {
  const fs::path root = fs::temp_directory_path() / "cyclesense_cli_flow";
  fs::remove_all(root);
  fs::create_directories(root);
  const std::string cfg = (root / "config.json").string();
  write(cfg, kSmallConfig);

  // Everything runs twice into separate trees to check idempotence.
  for (const std::string tree : {"a", "b"}) {
    const fs::path base = root / tree;
    REQUIRE(run({"gensynth", "--config", cfg, "--out", (base / "rides").string()}).code == 0);
    auto scan = run({"scan", "--config", cfg, "--data", (base / "rides").string(), "--out", (base / "scan").string()});
    REQUIRE(scan.code == 0);
    CHECK(scan.out.find("android-new,16") != std::string::npos);
    auto pre = run({"preprocess", "--config", cfg, "--data", (base / "rides").string(), "--out", (base / "pre").string()});
    REQUIRE(pre.code == 0);
    CHECK(pre.out.find("split,rides,buckets,positives") != std::string::npos);
    REQUIRE(run({"train", "--config", cfg, "--data", (base / "pre").string(), "--out", (base / "models").string()}).code == 0);
    auto eval = run({"evaluate", "--config", cfg, "--data", (base / "pre").string(), "--models",
                     (base / "models").string(), "--out", (base / "report").string()});
    REQUIRE(eval.code == 0);
    const std::string ride = (base / "rides" / "Berlin" / "android-new" / "ride_00000.csv").string();
    auto detect = run({"detect", "--ride", ride, "--model", (base / "models" / "cyclesense.csnw").string(), "--out",
                       (base / "detect").string()});
    REQUIRE(detect.code == 0);
    CHECK(detect.out.starts_with("bucket,start_ms,score\n"));
    REQUIRE(run({"gridsearch", "--config", cfg, "--data", (base / "pre").string(), "--out", (base / "grid").string()})
                .code == 0);
  }

  const fs::path a = root / "a";
  const fs::path b = root / "b";
  for (const char* f : {"pre/train.csnb", "pre/val.csnb", "pre/test.csnb", "pre/normalization.json", "pre/split.json",
                        "models/cyclesense.csnw", "models/cyclesense.json", "models/history_cyclesense.csv",
                        "models/fcn.csnw", "models/history_fcn.csv", "report/report.csv", "report/roc_heuristic.csv",
                        "report/roc_fcn.csv", "report/roc_cyclesense.csv", "detect/scores.csv", "grid/grid.csv",
                        "scan/scan.json"}) {
    CAPTURE(f);
    REQUIRE(fs::exists(a / f));
    CHECK(slurp(a / f) == slurp(b / f));
  }

  const auto report = slurp(a / "report/report.csv");
  CHECK(report.starts_with("model,auc,n_pos,n_neg\n"));
  CHECK(count_lines(report) == 4);
  CHECK(report.find("\nheuristic,") != std::string::npos);
  CHECK(report.find("\nfcn,") != std::string::npos);
  CHECK(report.find("\ncyclesense,") != std::string::npos);
  CHECK(slurp(a / "models/history_cyclesense.csv").starts_with("epoch,train_loss,val_auc\n"));
  const auto grid = slurp(a / "grid/grid.csv");
  CHECK(grid.starts_with("rank,f,rnn_units,cell,lr,epochs,val_auc\n"));
  CHECK(count_lines(grid) == 3);

  // One score line per whole 10 s bucket of the ride.
  const auto raw = cyclesense::read_ride_file(a / "rides/Berlin/android-new/ride_00000.csv");
  const auto prepared = cyclesense::prepare_ride(raw);
  REQUIRE(prepared.has_value());
  CHECK(count_lines(slurp(a / "detect/scores.csv")) == 1 + prepared->ride.samples.size() / cyclesense::kBucketSamples);

  const auto test = cyclesense::read_bucket_file(a / "pre/test.csnb");
  CHECK(test.spec.f == 10);
  fs::remove_all(root);
}
