#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "cyclesense/models/cyclesense.hpp"
#include "cyclesense/models/fcn.hpp"
#include "cyclesense/models/gan.hpp"
#include "cyclesense/preprocess.hpp"
#include "cyclesense/spectral.hpp"

namespace cyclesense {

class TooFewRides : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

class NonFiniteLoss : public std::runtime_error {
 public:
  NonFiniteLoss(std::size_t epoch, std::size_t batch, double loss);
  std::size_t epoch() const { return epoch_; }
  std::size_t batch() const { return batch_; }

 private:
  std::size_t epoch_;
  std::size_t batch_;
};

/// Ride-level split. Ride ids are sorted, shuffled with the seed and cut at
/// round(0.6 n) and round(0.6 n) + round(0.2 n).
struct SplitPlan {
  std::uint64_t seed = 0;
  double train = 0.6;
  double val = 0.2;
};

struct DatasetSplit {
  std::vector<std::string> train;
  std::vector<std::string> val;
  std::vector<std::string> test;
};

/// Throws TooFewRides for fewer than 5 distinct rides.
DatasetSplit split_dataset(std::vector<std::string> ride_ids, const SplitPlan& plan);

struct ClassWeights {
  double positive = 1.0;
  double negative = 1.0;
};

/// Balanced inverse frequency, w_c = n / (2 n_c). Throws SingleClass when a
/// class is missing.
ClassWeights class_weights(std::size_t n_pos, std::size_t n_neg);
ClassWeights class_weights(std::span<const std::uint8_t> labels);

struct TrainConfig {
  std::size_t epochs = 60;
  double lr = 1e-4;
  std::size_t batch_size = 64;
  std::size_t patience = 10;
  bool use_class_weights = true;
  bool augmentation = true;
  bool stacking = true;
  std::size_t pretrain_epochs = 60;
  GanConfig gan{};

  /// Throws std::invalid_argument unless 0 < patience < epochs and batch > 0.
  void validate() const;
};

struct EpochRecord {
  std::size_t epoch = 0;
  double train_loss = 0;
  double val_auc = 0;
};

struct FitResult {
  std::vector<EpochRecord> history;
  std::size_t best_epoch = 0;
  double best_val_auc = 0;
};

/// A supervised problem for the generic training loop.
struct FitProblem {
  std::vector<nn::Parameter<float>*> optimized;
  /// Everything restored to the best epoch's values at the end, buffers included.
  std::vector<nn::Parameter<float>*> state;
  std::vector<std::uint8_t> train_labels;
  std::vector<std::uint8_t> val_labels;
  /// Probabilities [B, 1] for training items `indices`, in training mode.
  std::function<nn::Var<float>(nn::Tape<float>&, std::span<const std::size_t> indices)> forward_train;
  /// Probabilities for every validation item, in inference mode.
  std::function<std::vector<double>()> predict_val;
};

/// Shuffled minibatch BCE + Adam with early stopping on validation AUC.
/// Training stops once `patience` epochs pass without a strict improvement
/// and the best epoch's state is restored.
FitResult fit(const FitProblem& problem, const TrainConfig& config, std::uint64_t seed);

struct PretrainResult {
  std::array<FitResult, 3> subnet;  // indexed like kSensors
};

/// Trains each sensor subnet alone under a temporary pooling + dense head,
/// discards the heads and freezes the subnets.
PretrainResult pretrain_subnets(CycleSenseModel<float>& model, const TensorDataset& train, const TensorDataset& val,
                                const TrainConfig& config, std::uint64_t seed);

struct CycleSenseRun {
  PretrainResult pretrain;
  FitResult fit;
  std::size_t synthetic_added = 0;
};

/// Full training: optional GAN augmentation of the training split, optional
/// subnet pretraining + freezing (stacking), then the main loop.
CycleSenseRun train_cyclesense(CycleSenseModel<float>& model, const TensorDataset& train, const TensorDataset& val,
                               const TrainConfig& config, std::uint64_t seed);

FitResult train_fcn(FcnModel<float>& model, std::span<const LabeledBucket> train, std::span<const LabeledBucket> val,
                    const TrainConfig& config, std::uint64_t seed);

void write_history_csv(const std::filesystem::path& path, std::span<const EpochRecord> history);

struct GridSpace {
  std::vector<std::size_t> f{5, 10, 20};
  std::vector<std::size_t> rnn_units{60, 120, 180};
  std::vector<nn::CellType> cells{nn::CellType::Gru, nn::CellType::Lstm};
  std::vector<double> lr{1e-3, 1e-4, 1e-5};

  std::size_t size() const { return f.size() * rnn_units.size() * cells.size() * lr.size(); }
};

struct GridResult {
  std::size_t f = 0;
  std::size_t rnn_units = 0;
  nn::CellType cell = nn::CellType::Gru;
  double lr = 0;
  double val_auc = 0;
  std::size_t epochs_run = 0;
};

/// Trains every configuration of the space (in enumeration order, truncated
/// to `budget` runs) for `config.epochs` epochs each and returns them sorted
/// by validation AUC, best first.
std::vector<GridResult> grid_search(const GridSpace& space, std::size_t budget, std::span<const LabeledBucket> train,
                                    std::span<const LabeledBucket> val, const CycleSenseConfig& base,
                                    const TrainConfig& config, std::uint64_t seed, std::size_t threads = 1);

void write_grid_csv(const std::filesystem::path& path, std::span<const GridResult> results);

/// Buckets of each split after the per-ride stages, with normalization fit
/// on the training rides.
struct PreparedSplits {
  DatasetSplit rides;
  NormalizationStats stats;
  std::vector<LabeledBucket> train;
  std::vector<LabeledBucket> val;
  std::vector<LabeledBucket> test;
  std::size_t rejected = 0;
};

/// Rejected rides are dropped before splitting. With `normalize` false the
/// identity normalization is used.
PreparedSplits prepare_splits(std::span<const RawRide> rides, const SplitPlan& plan, bool normalize = true,
                              std::size_t threads = 1);

}  // namespace cyclesense
