#include "cli.hpp"

#include <CLI11.hpp>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <map>
#include <nlohmann/json.hpp>
#include <optional>
#include <sstream>

#include "cyclesense/bucket_io.hpp"
#include "cyclesense/eval.hpp"
#include "cyclesense/models/cyclesense.hpp"
#include "cyclesense/models/fcn.hpp"
#include "cyclesense/models/heuristic.hpp"
#include "cyclesense/nn/checkpoint.hpp"
#include "cyclesense/parallel.hpp"
#include "cyclesense/run_config.hpp"
#include "cyclesense/synthdata.hpp"
#include "cyclesense/training.hpp"

namespace cyclesense::cli {

namespace fs = std::filesystem;

namespace {

/// Bad input or configuration; reported with exit code 1.
class UsageError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct Common {
  std::string config;
  std::optional<std::size_t> threads;
  std::optional<std::uint64_t> seed;
  std::optional<std::string> region;
  std::optional<std::string> partition;
  std::string out;
};

struct Options {
  Common common;
  std::string data;
  std::string models;
  std::string ride;
  std::string model;
  std::string stats;
  std::string which = "all";
  std::optional<std::size_t> rides;
};

void add_common(CLI::App& cmd, Common& c, bool out_required) {
  cmd.add_option("--config", c.config, "run configuration JSON");
  cmd.add_option("--threads", c.threads, "worker thread cap");
  cmd.add_option("--seed", c.seed, "root seed");
  cmd.add_option("--region", c.region, "region filter");
  cmd.add_option("--partition", c.partition, "android-old | android-new | ios");
  auto* out = cmd.add_option("--out", c.out, "output directory");
  if (out_required) out->required();
}

RunConfig load_config(const Common& c) {
  RunConfig config = c.config.empty() ? RunConfig{} : RunConfig::load(c.config);
  if (c.threads) config.threads = *c.threads;
  if (c.seed) {
    config.seed = *c.seed;
    config.synth.seed = *c.seed;
  }
  if (c.region) config.region = *c.region;
  if (c.partition) {
    const auto p = parse_partition(*c.partition);
    if (!p) throw ConfigInvalid("unknown partition '" + *c.partition + "'");
    config.partition = *p;
  }
  config.split.seed = config.seed_for("split");
  return config;
}

std::string read_text(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot read " + path.string());
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << text;
}

ColumnMap columns_of(const RunConfig& config) { return config.columns ? ColumnMap::load(*config.columns) : ColumnMap{}; }

fs::path require_dir(const std::string& dir, const char* flag) {
  if (dir.empty()) throw UsageError(std::string(flag) + " is required");
  if (!fs::is_directory(dir)) throw UsageError(std::string(flag) + " directory not found: " + dir);
  return dir;
}

int run_scan(const Options& o, std::ostream& out) {
  const RunConfig config = load_config(o.common);
  const auto dir = require_dir(o.data, "--data");
  const auto scan = partition_dataset(dir, config.region, columns_of(config));
  std::map<DatasetPartition, std::size_t> counts;
  for (const auto& [id, p] : scan.rides) ++counts[p];
  out << "partition,rides\n";
  for (auto p : {DatasetPartition::AndroidOld, DatasetPartition::AndroidNew, DatasetPartition::Ios}) {
    out << to_string(p) << ',' << counts[p] << '\n';
  }
  out << "unreadable," << scan.unreadable.size() << '\n';
  if (!o.common.out.empty()) {
    fs::create_directories(o.common.out);
    nlohmann::json j;
    for (const auto& [id, p] : scan.rides) j["rides"][id] = std::string(to_string(p));
    for (const auto& path : scan.unreadable) j["unreadable"].push_back(path.generic_string());
    write_text(fs::path(o.common.out) / "scan.json", j.dump(2) + "\n");
  }
  return 0;
}

int run_gensynth(const Options& o, std::ostream& out) {
  RunConfig config = load_config(o.common);
  if (o.rides) config.synth.n_rides = *o.rides;
  if (o.common.region) config.synth.region = *o.common.region;
  if (o.common.partition) config.synth.partition = *config.partition;
  const auto paths = write_dataset(config.synth, o.common.out);
  out << "wrote " << paths.size() << " rides to " << o.common.out << '\n';
  return 0;
}

std::vector<RawRide> load_rides(const fs::path& dir, const RunConfig& config, std::ostream& out) {
  const ColumnMap columns = columns_of(config);
  const auto files = list_ride_files(dir, config.region);
  std::vector<std::optional<RawRide>> loaded(files.size());
  parallel_for(files.size(), config.threads, [&](std::size_t i) {
    try {
      RawRide ride = read_ride_file(files[i], columns);
      ride.ride_id = ride_id_for(dir, files[i]);
      if (!config.partition || ride.partition == *config.partition) loaded[i] = std::move(ride);
    } catch (const RideParseError&) {
    }
  });
  std::vector<RawRide> rides;
  for (auto& r : loaded) {
    if (r) rides.push_back(std::move(*r));
  }
  out << "loaded " << rides.size() << " of " << files.size() << " ride files\n";
  return rides;
}

int run_preprocess(const Options& o, std::ostream& out) {
  const RunConfig config = load_config(o.common);
  const auto dir = require_dir(o.data, "--data");
  const auto rides = load_rides(dir, config, out);
  const auto splits = prepare_splits(rides, config.split, config.normalize, config.threads);
  const fs::path dst = o.common.out;
  fs::create_directories(dst);
  const FrequencySpec spec = config.model.spectral;
  write_bucket_file(dst / "train.csnb", splits.train, spec, config.spectral_mode);
  write_bucket_file(dst / "val.csnb", splits.val, spec, config.spectral_mode);
  write_bucket_file(dst / "test.csnb", splits.test, spec, config.spectral_mode);
  write_text(dst / "normalization.json", splits.stats.to_json_text() + "\n");
  nlohmann::json split{{"train", splits.rides.train}, {"val", splits.rides.val}, {"test", splits.rides.test},
                       {"rejected", splits.rejected}};
  write_text(dst / "split.json", split.dump(2) + "\n");
  const auto positives = [](const std::vector<LabeledBucket>& b) {
    return std::count_if(b.begin(), b.end(), [](const LabeledBucket& x) { return x.label == 1; });
  };
  out << "split,rides,buckets,positives\n";
  out << "train," << splits.rides.train.size() << ',' << splits.train.size() << ',' << positives(splits.train) << '\n';
  out << "val," << splits.rides.val.size() << ',' << splits.val.size() << ',' << positives(splits.val) << '\n';
  out << "test," << splits.rides.test.size() << ',' << splits.test.size() << ',' << positives(splits.test) << '\n';
  out << "rejected," << splits.rejected << ",0,0\n";
  return 0;
}

BucketFile load_split(const fs::path& dir, const char* name) {
  const fs::path path = dir / (std::string(name) + ".csnb");
  if (!fs::exists(path)) throw UsageError("missing " + path.string() + " (run preprocess first)");
  return read_bucket_file(path);
}

int run_train(const Options& o, std::ostream& out) {
  RunConfig config = load_config(o.common);
  if (o.which != "all" && o.which != "cyclesense" && o.which != "fcn") {
    throw UsageError("--model must be cyclesense, fcn or all");
  }
  const auto dir = require_dir(o.data, "--data");
  const BucketFile train = load_split(dir, "train");
  const BucketFile val = load_split(dir, "val");
  const fs::path dst = o.common.out;
  fs::create_directories(dst);
  if (fs::exists(dir / "normalization.json")) {
    fs::copy_file(dir / "normalization.json", dst / "normalization.json", fs::copy_options::overwrite_existing);
  }
  if (o.which != "fcn") {
    CycleSenseConfig mc = config.model;
    mc.spectral = train.spec;
    mc.input_mode = config.spectral_mode;
    CycleSenseModel<float> model(mc, config.seed_for("init"));
    out << "cyclesense parameters " << model.parameter_count() << '\n';
    const auto run = train_cyclesense(model, to_tensor_dataset(train, "train"), to_tensor_dataset(val, "val"),
                                      config.train, config.seed_for("train"));
    nn::save_parameters(dst / "cyclesense.csnw", model.params());
    write_text(dst / "cyclesense.json", mc.to_json_text() + "\n");
    write_history_csv(dst / "history_cyclesense.csv", run.fit.history);
    out << "cyclesense best_epoch " << run.fit.best_epoch << " val_auc " << run.fit.best_val_auc << '\n';
  }
  if (o.which != "cyclesense") {
    FcnModel<float> model({}, config.seed_for("fcn/init"));
    const auto fit = train_fcn(model, train.buckets, val.buckets, config.fcn_train, config.seed_for("fcn/train"));
    nn::save_parameters(dst / "fcn.csnw", model.params());
    write_history_csv(dst / "history_fcn.csv", fit.history);
    out << "fcn best_epoch " << fit.best_epoch << " val_auc " << fit.best_val_auc << '\n';
  }
  return 0;
}

std::unique_ptr<CycleSenseModel<float>> load_cyclesense(const fs::path& checkpoint) {
  fs::path config_path = checkpoint;
  config_path.replace_extension(".json");
  if (!fs::exists(checkpoint)) throw UsageError("model checkpoint not found: " + checkpoint.string());
  if (!fs::exists(config_path)) throw UsageError("model config not found next to checkpoint: " + config_path.string());
  auto model = std::make_unique<CycleSenseModel<float>>(CycleSenseConfig::from_json_text(read_text(config_path)), 0);
  nn::load_parameters(checkpoint, model->params());
  return model;
}

int run_evaluate(const Options& o, std::ostream& out) {
  const RunConfig config = load_config(o.common);
  const auto dir = require_dir(o.data, "--data");
  const auto models = require_dir(o.models, "--models");
  const BucketFile test = load_split(dir, "test");
  std::vector<std::uint8_t> labels;
  for (const auto& b : test.buckets) labels.push_back(b.label);

  std::vector<ModelScores> scores;
  scores.push_back({"heuristic", heuristic_scores(test.buckets, config.heuristic)});
  if (fs::exists(models / "fcn.csnw")) {
    FcnModel<float> fcn({}, 0);
    nn::load_parameters(models / "fcn.csnw", fcn.params());
    const auto s = fcn_score(fcn, test.buckets);
    scores.push_back({"fcn", std::vector<double>(s.begin(), s.end())});
  }
  if (fs::exists(models / "cyclesense.csnw")) {
    const auto model = load_cyclesense(models / "cyclesense.csnw");
    if (model->config().spectral.f != test.spec.f) throw UsageError("test buckets and model use different f");
    const auto s = predict(*model, to_tensor_dataset(test, "test"));
    scores.push_back({"cyclesense", std::vector<double>(s.begin(), s.end())});
  }
  const auto rows = comparison_report(scores, labels, o.common.out);
  out << "model,auc,n_pos,n_neg\n";
  for (const auto& r : rows) out << r.model << ',' << r.auc << ',' << r.n_pos << ',' << r.n_neg << '\n';
  return 0;
}

int run_detect(const Options& o, std::ostream& out) {
  const RunConfig config = load_config(o.common);
  if (o.ride.empty() || o.model.empty()) throw UsageError("detect needs --ride and --model");
  if (!fs::exists(o.ride)) throw UsageError("ride file not found: " + o.ride);
  const auto model = load_cyclesense(o.model);
  fs::path stats_path = o.stats.empty() ? fs::path(o.model).parent_path() / "normalization.json" : fs::path(o.stats);
  NormalizationStats stats;
  if (fs::exists(stats_path)) {
    stats = NormalizationStats::from_json_text(read_text(stats_path));
  } else if (!o.stats.empty()) {
    throw UsageError("normalization stats not found: " + o.stats);
  }
  const RawRide raw = read_ride_file(o.ride, columns_of(config));
  Rejected rejection;
  const auto prepared = prepare_ride(raw, &rejection);
  if (!prepared) {
    throw std::runtime_error("ride rejected: gap of " + std::to_string(rejection.reason.gap_ms) + " ms after " +
                             std::to_string(rejection.reason.after_timestamp));
  }
  const UniformRide ride = apply_maxabs(prepared->ride, stats);
  const auto buckets = bucketize_and_label(ride, prepared->incidents);
  std::vector<float> scores;
  if (!buckets.empty()) {
    scores = predict(*model, build_tensor_dataset(buckets, model->config().spectral, "detect", model->config().input_mode));
  }
  std::ostringstream table;
  table << "bucket,start_ms,score\n";
  for (std::size_t i = 0; i < buckets.size(); ++i) {
    table << buckets[i].bucket_index << ',' << ride.timestamp_at(buckets[i].bucket_index * kBucketSamples) << ','
          << scores[i] << '\n';
  }
  out << table.str();
  if (!o.common.out.empty()) {
    fs::create_directories(o.common.out);
    write_text(fs::path(o.common.out) / "scores.csv", table.str());
  }
  return 0;
}

int run_gridsearch(const Options& o, std::ostream& out) {
  const RunConfig config = load_config(o.common);
  const auto dir = require_dir(o.data, "--data");
  const BucketFile train = load_split(dir, "train");
  const BucketFile val = load_split(dir, "val");
  TrainConfig tc = config.train;
  tc.epochs = config.grid.epochs;
  tc.pretrain_epochs = config.grid.epochs;
  tc.patience = std::min(tc.patience, std::max<std::size_t>(1, tc.epochs - 1));
  if (tc.epochs < 2) throw UsageError("grid.epochs must be at least 2");
  CycleSenseConfig base = config.model;
  base.input_mode = config.spectral_mode;
  const auto results =
      grid_search(config.grid.space, config.grid.budget, train.buckets, val.buckets, base, tc, config.seed_for("grid"),
                  config.threads);
  fs::create_directories(o.common.out);
  write_grid_csv(fs::path(o.common.out) / "grid.csv", results);
  out << "rank,f,rnn_units,cell,lr,val_auc\n";
  for (std::size_t i = 0; i < results.size(); ++i) {
    const auto& r = results[i];
    out << i + 1 << ',' << r.f << ',' << r.rnn_units << ',' << nn::to_string(r.cell) << ',' << r.lr << ','
        << r.val_auc << '\n';
  }
  return 0;
}

}  // namespace

int dispatch(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Near-miss incident detection for bicycle rides", "cyclesense"};
  app.require_subcommand(1);
  Options o;
  auto* scan = app.add_subcommand("scan", "summarize a ride dataset by partition");
  add_common(*scan, o.common, false);
  scan->add_option("--data", o.data, "ride dataset directory")->required();
  auto* gensynth = app.add_subcommand("gensynth", "write a synthetic ride dataset");
  add_common(*gensynth, o.common, true);
  gensynth->add_option("--rides", o.rides, "number of rides");
  auto* preprocess = app.add_subcommand("preprocess", "clean, split, normalize and bucket a ride dataset");
  add_common(*preprocess, o.common, true);
  preprocess->add_option("--data", o.data, "ride dataset directory")->required();
  auto* train = app.add_subcommand("train", "train CycleSense and the FCN baseline");
  add_common(*train, o.common, true);
  train->add_option("--data", o.data, "preprocessed directory")->required();
  train->add_option("--model", o.which, "cyclesense | fcn | all");
  auto* evaluate = app.add_subcommand("evaluate", "score the test split and write the comparison report");
  add_common(*evaluate, o.common, true);
  evaluate->add_option("--data", o.data, "preprocessed directory")->required();
  evaluate->add_option("--models", o.models, "directory with trained checkpoints")->required();
  auto* detect = app.add_subcommand("detect", "score every 10 s bucket of one ride file");
  add_common(*detect, o.common, false);
  detect->add_option("--ride", o.ride, "ride file")->required();
  detect->add_option("--model", o.model, "CycleSense checkpoint (.csnw)")->required();
  detect->add_option("--stats", o.stats, "normalization stats JSON");
  auto* grid = app.add_subcommand("gridsearch", "sweep f, recurrent units, cell type and learning rate");
  add_common(*grid, o.common, true);
  grid->add_option("--data", o.data, "preprocessed directory")->required();

  if (!args.empty() && !args.front().starts_with('-') && app.get_subcommand_no_throw(args.front()) == nullptr) {
    err << "error: unknown subcommand '" << args.front() << "'\n\n" << app.help();
    return 1;
  }
  std::vector<std::string> reversed(args.rbegin(), args.rend());
  try {
    app.parse(reversed);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return 0;
  } catch (const CLI::CallForAllHelp&) {
    out << app.help("", CLI::AppFormatMode::All);
    return 0;
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << "\n\n" << app.help();
    return 1;
  }

  const auto* cmd = app.get_subcommands().front();
  try {
    const std::string name = cmd->get_name();
    if (name == "scan") return run_scan(o, out);
    if (name == "gensynth") return run_gensynth(o, out);
    if (name == "preprocess") return run_preprocess(o, out);
    if (name == "train") return run_train(o, out);
    if (name == "evaluate") return run_evaluate(o, out);
    if (name == "detect") return run_detect(o, out);
    if (name == "gridsearch") return run_gridsearch(o, out);
  } catch (const ConfigInvalid& e) {
    err << "error: invalid configuration: " << e.what() << "\n\n" << cmd->help();
    return 1;
  } catch (const UsageError& e) {
    err << "error: " << e.what() << "\n\n" << cmd->help();
    return 1;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return 2;
  }
  return 1;
}

int dispatch(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  std::vector<std::string> args;
  for (int i = 1; i < argc; ++i) args.emplace_back(argv[i]);
  return dispatch(args, out, err);
}

}  // namespace cyclesense::cli
