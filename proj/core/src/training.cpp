#include "cyclesense/training.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <map>
#include <numeric>
#include <optional>

#include "cyclesense/eval.hpp"
#include "cyclesense/nn/optim.hpp"
#include "cyclesense/parallel.hpp"
#include "cyclesense/seed.hpp"
#include "text_util.hpp"

namespace cyclesense {

using nn::Tape;
using nn::Tensor;
using nn::Var;

NonFiniteLoss::NonFiniteLoss(std::size_t epoch, std::size_t batch, double loss)
    : std::runtime_error("non-finite training loss " + std::to_string(loss) + " at epoch " + std::to_string(epoch) +
                         ", batch " + std::to_string(batch)),
      epoch_(epoch),
      batch_(batch) {}

namespace {

template <typename T>
void shuffle_in_place(std::vector<T>& items, std::mt19937_64& rng) {
  for (std::size_t i = items.size(); i > 1; --i) std::swap(items[i - 1], items[rng() % i]);
}

std::vector<std::size_t> iota_indices(std::size_t n) {
  std::vector<std::size_t> idx(n);
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  return idx;
}

/// Items `indices` of a [N, ...] tensor as a [B, ...] tensor.
Tensor<float> gather_rows(const Tensor<float>& t, std::span<const std::size_t> indices) {
  nn::Shape shape = t.shape();
  const std::size_t row = t.size() / shape[0];
  shape[0] = indices.size();
  Tensor<float> out(shape);
  for (std::size_t i = 0; i < indices.size(); ++i) {
    std::copy_n(t.data() + indices[i] * row, row, out.data() + i * row);
  }
  return out;
}

const Tensor<float>& sensor_input(const SensorTensorSet& item, Sensor sensor) {
  switch (sensor) {
    case Sensor::Accel: return item.accel;
    case Sensor::Gyro: return item.gyro;
    case Sensor::Gps: return item.gps;
  }
  return item.gps;
}

Tensor<float> sensor_batch(const TensorDataset& data, Sensor sensor, std::span<const std::size_t> indices) {
  nn::Shape shape = sensor_input(data.items.at(0), sensor).shape();
  const std::size_t row = nn::numel(shape);
  shape.insert(shape.begin(), indices.size());
  Tensor<float> out(shape);
  for (std::size_t i = 0; i < indices.size(); ++i) {
    const auto& src = sensor_input(data.items.at(indices[i]), sensor);
    std::copy_n(src.data(), row, out.data() + i * row);
  }
  return out;
}

template <typename F>
void for_each_batch(std::size_t n, std::size_t batch_size, F&& fn) {
  std::vector<std::size_t> idx;
  for (std::size_t begin = 0; begin < n; begin += batch_size) {
    idx.clear();
    for (std::size_t i = begin; i < std::min(n, begin + batch_size); ++i) idx.push_back(i);
    fn(std::span<const std::size_t>(idx));
  }
}

/// Subnet features of every item, [N, 1, 1, T, F].
Tensor<float> encode_all(const CycleSenseModel<float>& model, const TensorDataset& data, Sensor sensor) {
  Tensor<float> out;
  std::size_t filled = 0;
  for_each_batch(data.size(), 128, [&](std::span<const std::size_t> idx) {
    const Tensor<float> f = model.encode(sensor, sensor_batch(data, sensor, idx));
    if (out.empty()) {
      nn::Shape shape = f.shape();
      shape[0] = data.size();
      out = Tensor<float>(shape);
    }
    std::copy(f.values().begin(), f.values().end(), out.data() + filled);
    filled += f.size();
  });
  return out;
}

std::vector<double> to_double(std::span<const float> v) { return std::vector<double>(v.begin(), v.end()); }

}  // namespace

DatasetSplit split_dataset(std::vector<std::string> ride_ids, const SplitPlan& plan) {
  std::sort(ride_ids.begin(), ride_ids.end());
  ride_ids.erase(std::unique(ride_ids.begin(), ride_ids.end()), ride_ids.end());
  const std::size_t n = ride_ids.size();
  if (n < 5) throw TooFewRides("need at least 5 rides to split, got " + std::to_string(n));
  if (plan.train <= 0 || plan.val <= 0 || plan.train + plan.val >= 1.0) {
    throw std::invalid_argument("split ratios must be positive and leave room for a test split");
  }
  std::mt19937_64 rng(plan.seed);
  shuffle_in_place(ride_ids, rng);
  const auto n_train = static_cast<std::size_t>(std::llround(plan.train * static_cast<double>(n)));
  const auto n_val = static_cast<std::size_t>(std::llround(plan.val * static_cast<double>(n)));
  DatasetSplit s;
  s.train.assign(ride_ids.begin(), ride_ids.begin() + static_cast<std::ptrdiff_t>(n_train));
  s.val.assign(ride_ids.begin() + static_cast<std::ptrdiff_t>(n_train),
               ride_ids.begin() + static_cast<std::ptrdiff_t>(n_train + n_val));
  s.test.assign(ride_ids.begin() + static_cast<std::ptrdiff_t>(n_train + n_val), ride_ids.end());
  return s;
}

ClassWeights class_weights(std::size_t n_pos, std::size_t n_neg) {
  if (n_pos == 0 || n_neg == 0) throw SingleClass("class weights need both classes in the training split");
  const double n = static_cast<double>(n_pos + n_neg);
  return {n / (2.0 * static_cast<double>(n_pos)), n / (2.0 * static_cast<double>(n_neg))};
}

ClassWeights class_weights(std::span<const std::uint8_t> labels) {
  const auto pos = static_cast<std::size_t>(std::count(labels.begin(), labels.end(), std::uint8_t{1}));
  return class_weights(pos, labels.size() - pos);
}

void TrainConfig::validate() const {
  if (epochs == 0) throw std::invalid_argument("epochs must be positive");
  if (patience == 0 || patience >= epochs) throw std::invalid_argument("patience must be in [1, epochs)");
  if (batch_size == 0) throw std::invalid_argument("batch size must be positive");
  if (!(lr >= 0.0) || !std::isfinite(lr)) throw std::invalid_argument("learning rate must be finite and >= 0");
}

FitResult fit(const FitProblem& problem, const TrainConfig& config, std::uint64_t seed) {
  config.validate();
  const std::size_t n = problem.train_labels.size();
  if (n == 0) throw std::invalid_argument("empty training split");
  const ClassWeights weights = config.use_class_weights ? class_weights(problem.train_labels) : ClassWeights{};
  nn::AdamConfig adam;
  adam.lr = config.lr;
  nn::Adam<float> opt(problem.optimized, adam);
  std::mt19937_64 rng(seed);
  std::vector<std::size_t> order = iota_indices(n);

  const auto snapshot = [&] {
    std::vector<Tensor<float>> values;
    for (const auto* p : problem.state) values.push_back(p->value);
    return values;
  };
  FitResult result;
  result.best_val_auc = -std::numeric_limits<double>::infinity();
  std::vector<Tensor<float>> best = snapshot();
  std::vector<float> labels;
  for (std::size_t epoch = 0; epoch < config.epochs; ++epoch) {
    shuffle_in_place(order, rng);
    double loss_sum = 0.0;
    std::size_t batch_no = 0;
    for (std::size_t begin = 0; begin < n; begin += config.batch_size, ++batch_no) {
      const std::span<const std::size_t> idx(order.data() + begin, std::min(config.batch_size, n - begin));
      labels.clear();
      for (std::size_t i : idx) labels.push_back(static_cast<float>(problem.train_labels[i]));
      Tape<float> tape(rng());
      Var<float> probs = problem.forward_train(tape, idx);
      Var<float> loss = nn::bce_loss_weighted(probs, std::span<const float>(labels), weights.positive, weights.negative);
      const double value = loss.value()[0];
      if (!std::isfinite(value)) throw NonFiniteLoss(epoch, batch_no, value);
      opt.zero_grad();
      tape.backward(loss);
      opt.step();
      loss_sum += value * static_cast<double>(idx.size());
    }
    const double auc = roc_auc(problem.predict_val(), problem.val_labels);
    result.history.push_back({epoch, loss_sum / static_cast<double>(n), auc});
    if (auc > result.best_val_auc) {
      result.best_val_auc = auc;
      result.best_epoch = epoch;
      best = snapshot();
    } else if (epoch - result.best_epoch >= config.patience) {
      break;
    }
  }
  for (std::size_t i = 0; i < problem.state.size(); ++i) problem.state[i]->value = best[i];
  return result;
}

PretrainResult pretrain_subnets(CycleSenseModel<float>& model, const TensorDataset& train, const TensorDataset& val,
                                const TrainConfig& config, std::uint64_t seed) {
  PretrainResult out;
  TrainConfig sub = config;
  sub.epochs = config.pretrain_epochs;
  sub.patience = std::min(config.patience, std::max<std::size_t>(1, sub.epochs - 1));
  for (std::size_t s = 0; s < 3; ++s) {
    const Sensor sensor = kSensors[s];
    const std::string name(to_string(sensor));
    std::mt19937_64 init(derive_seed(seed, "pretrain/head/" + name));
    nn::ParameterSet<float> head_params;
    const auto head = nn::Dense<float>::create(head_params, "pretrain." + name, model.config().subnet_filters, 1, init);
    const auto& net = model.subnet(sensor);
    const auto score = [&](Tape<float>& tape, const Tensor<float>& input, bool training) {
      Var<float> features = net(tape, tape.constant(input), training);
      return nn::sigmoid(head(tape, nn::global_average_pool(features)));
    };

    FitProblem problem;
    problem.optimized = model.subnet_parameters(sensor);
    for (auto* p : head_params.all()) problem.optimized.push_back(p);
    problem.state = problem.optimized;
    problem.train_labels = train.labels;
    problem.val_labels = val.labels;
    problem.forward_train = [&](Tape<float>& tape, std::span<const std::size_t> idx) {
      return score(tape, sensor_batch(train, sensor, idx), true);
    };
    problem.predict_val = [&] {
      std::vector<double> scores;
      for_each_batch(val.size(), 128, [&](std::span<const std::size_t> idx) {
        Tape<float> tape;
        for (float v : score(tape, sensor_batch(val, sensor, idx), false).value().values()) scores.push_back(v);
      });
      return scores;
    };
    out.subnet[s] = fit(problem, sub, derive_seed(seed, "pretrain/fit/" + name));
  }
  model.freeze_subnets(true);
  return out;
}

CycleSenseRun train_cyclesense(CycleSenseModel<float>& model, const TensorDataset& train, const TensorDataset& val,
                               const TrainConfig& config, std::uint64_t seed) {
  config.validate();
  if (train.spec.f != model.config().spectral.f || val.spec.f != model.config().spectral.f) {
    throw nn::ShapeMismatch("dataset frequency spec does not match the model");
  }
  CycleSenseRun run;
  TensorDataset data = train;
  if (config.augmentation) {
    Gan gan(train.spec, config.gan, derive_seed(seed, "gan/init"));
    train_gan(gan, data, derive_seed(seed, "gan/train"));
    run.synthetic_added = augment_dataset(data, gan, derive_seed(seed, "gan/sample"));
  }

  FitProblem problem;
  problem.train_labels = data.labels;
  problem.val_labels = val.labels;
  std::array<Tensor<float>, 3> train_features;
  std::array<Tensor<float>, 3> val_features;
  if (config.stacking) {
    run.pretrain = pretrain_subnets(model, data, val, config, derive_seed(seed, "pretrain"));
    for (std::size_t s = 0; s < 3; ++s) {
      train_features[s] = encode_all(model, data, kSensors[s]);
      val_features[s] = encode_all(model, val, kSensors[s]);
    }
    problem.optimized = model.meta_parameters();
    problem.forward_train = [&](Tape<float>& tape, std::span<const std::size_t> idx) {
      return model.forward_features(tape, tape.constant(gather_rows(train_features[0], idx)),
                                    tape.constant(gather_rows(train_features[1], idx)),
                                    tape.constant(gather_rows(train_features[2], idx)), true);
    };
    problem.predict_val = [&] {
      std::vector<double> scores;
      for_each_batch(val.size(), 128, [&](std::span<const std::size_t> idx) {
        Tape<float> tape;
        const auto probs = model.forward_features(tape, tape.constant(gather_rows(val_features[0], idx)),
                                                  tape.constant(gather_rows(val_features[1], idx)),
                                                  tape.constant(gather_rows(val_features[2], idx)), false);
        for (float v : probs.value().values()) scores.push_back(v);
      });
      return scores;
    };
  } else {
    model.freeze_subnets(false);
    problem.optimized = model.params().all();
    problem.forward_train = [&](Tape<float>& tape, std::span<const std::size_t> idx) {
      const TensorBatch batch = make_batch(data, idx);
      return model.forward(tape, batch.accel, batch.gyro, batch.gps, true);
    };
    problem.predict_val = [&] { return to_double(predict(model, val)); };
  }
  problem.state = problem.optimized;
  run.fit = fit(problem, config, derive_seed(seed, "fit"));
  return run;
}

FitResult train_fcn(FcnModel<float>& model, std::span<const LabeledBucket> train, std::span<const LabeledBucket> val,
                    const TrainConfig& config, std::uint64_t seed) {
  FitProblem problem;
  for (const auto& b : train) problem.train_labels.push_back(b.label);
  for (const auto& b : val) problem.val_labels.push_back(b.label);
  problem.optimized = model.params().all();
  problem.state = problem.optimized;
  problem.forward_train = [&](Tape<float>& tape, std::span<const std::size_t> idx) {
    return model.forward(tape, fcn_input(train, idx), true);
  };
  problem.predict_val = [&] { return to_double(fcn_score(model, val)); };
  return fit(problem, config, seed);
}

void write_history_csv(const std::filesystem::path& path, std::span<const EpochRecord> history) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << "epoch,train_loss,val_auc\n";
  for (const auto& h : history) {
    out << h.epoch << ',' << detail::format_double(h.train_loss) << ',' << detail::format_double(h.val_auc) << '\n';
  }
}

std::vector<GridResult> grid_search(const GridSpace& space, std::size_t budget, std::span<const LabeledBucket> train,
                                    std::span<const LabeledBucket> val, const CycleSenseConfig& base,
                                    const TrainConfig& config, std::uint64_t seed, std::size_t threads) {
  if (budget == 0) throw std::invalid_argument("grid search budget must allow at least one run");
  std::vector<GridResult> runs;
  for (std::size_t f : space.f) {
    for (std::size_t units : space.rnn_units) {
      for (nn::CellType cell : space.cells) {
        for (double lr : space.lr) {
          if (runs.size() < budget) runs.push_back({f, units, cell, lr, 0.0, 0});
        }
      }
    }
  }
  std::map<std::size_t, std::pair<TensorDataset, TensorDataset>> datasets;
  for (const auto& r : runs) {
    if (!datasets.contains(r.f)) {
      const FrequencySpec spec{r.f};
      datasets.emplace(r.f, std::make_pair(build_tensor_dataset(train, spec, "train"),
                                           build_tensor_dataset(val, spec, "val")));
    }
  }
  parallel_for(runs.size(), threads, [&](std::size_t i) {
    GridResult& r = runs[i];
    CycleSenseConfig model_config = base;
    model_config.spectral.f = r.f;
    model_config.rnn_units = r.rnn_units;
    model_config.cell = r.cell;
    TrainConfig run_config = config;
    run_config.lr = r.lr;
    const std::uint64_t run_seed = derive_seed(seed, "grid/" + std::to_string(i));
    CycleSenseModel<float> model(model_config, derive_seed(run_seed, "init"));
    const auto& [tr, va] = datasets.at(r.f);
    const auto result = train_cyclesense(model, tr, va, run_config, run_seed);
    r.val_auc = result.fit.best_val_auc;
    r.epochs_run = result.fit.history.size();
  });
  std::stable_sort(runs.begin(), runs.end(), [](const GridResult& a, const GridResult& b) { return a.val_auc > b.val_auc; });
  return runs;
}

void write_grid_csv(const std::filesystem::path& path, std::span<const GridResult> results) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << "rank,f,rnn_units,cell,lr,epochs,val_auc\n";
  for (std::size_t i = 0; i < results.size(); ++i) {
    const auto& r = results[i];
    out << i + 1 << ',' << r.f << ',' << r.rnn_units << ',' << nn::to_string(r.cell) << ','
        << detail::format_double(r.lr) << ',' << r.epochs_run << ',' << detail::format_double(r.val_auc) << '\n';
  }
}

PreparedSplits prepare_splits(std::span<const RawRide> rides, const SplitPlan& plan, bool normalize,
                              std::size_t threads) {
  std::vector<std::optional<PreparedRide>> prepared(rides.size());
  parallel_for(rides.size(), threads, [&](std::size_t i) { prepared[i] = prepare_ride(rides[i]); });

  PreparedSplits out;
  std::vector<std::string> ids;
  for (std::size_t i = 0; i < rides.size(); ++i) {
    if (prepared[i]) {
      ids.push_back(rides[i].ride_id);
    } else {
      ++out.rejected;
    }
  }
  out.rides = split_dataset(ids, plan);
  std::map<std::string, int> which;
  for (const auto& id : out.rides.train) which[id] = 0;
  for (const auto& id : out.rides.val) which[id] = 1;
  for (const auto& id : out.rides.test) which[id] = 2;

  std::vector<UniformRide> train_rides;
  for (std::size_t i = 0; i < rides.size(); ++i) {
    if (prepared[i] && which.at(rides[i].ride_id) == 0) train_rides.push_back(prepared[i]->ride);
  }
  out.stats = normalize ? fit_maxabs(train_rides) : NormalizationStats::identity();
  std::array<std::vector<LabeledBucket>*, 3> targets{&out.train, &out.val, &out.test};
  for (std::size_t i = 0; i < rides.size(); ++i) {
    if (!prepared[i]) continue;
    const auto buckets = bucketize_and_label(apply_maxabs(prepared[i]->ride, out.stats), prepared[i]->incidents);
    auto& dst = *targets[static_cast<std::size_t>(which.at(rides[i].ride_id))];
    dst.insert(dst.end(), buckets.begin(), buckets.end());
  }
  return out;
}

}  // namespace cyclesense
