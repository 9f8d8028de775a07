#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "cropsits/models/checkpoint.hpp"
#include "cropsits/models/params.hpp"
#include "cropsits/sampler/split.hpp"
#include "cropsits/training/data.hpp"
#include "cropsits/training/metrics.hpp"

namespace cropsits::train {

enum class ModelKind { cnn, psetae };

ModelKind model_kind_from_name(const std::string& name);  // UsageError on unknown names
std::string model_kind_name(ModelKind kind);

struct TrainConfig {
  int epochs = 100;
  int batch = 32;
  int patience = 10;
  std::uint64_t seed = 0;
  double gamma = 2.0;
  std::string alpha_mode = "inverse";  // "inverse" or "uniform"
  double rho = 0.9;
  double eps = 1e-6;
  bool check_leakage = true;

  void validate() const;
};

std::string train_config_to_json(const TrainConfig& config);
TrainConfig train_config_from_json(const std::string& text, const std::string& origin);

// val_f1 is -1 on runs without a validation set.
struct EpochMetrics {
  int epoch = 0;
  double train_loss = 0.0;
  double val_f1 = -1.0;
};

struct FoldResult {
  models::ParameterSet<float> params;  // weights of the best epoch
  models::CheckpointMeta meta;         // model kind, config, seed, best epoch, metrics
  data::BandStats stats;               // fitted on the training parcels only
  std::vector<EpochMetrics> history;
  int best_epoch = -1;
  double best_val_f1 = -1.0;
};

// Trains one model on `train_parcels`, early-stopping on `val_parcels` macro
// F1 (best epoch kept, `patience` epochs of grace). Pixel sets are resampled
// every epoch from seeds derived deterministically from config.seed; the
// validation batch is sampled once. An empty `val_parcels` disables early
// stopping and returns the final epoch. Train/validation overlap is a
// leakage error unless config.check_leakage is off.
FoldResult train_fold(const Dataset& dataset, const std::vector<std::string>& train_parcels,
                      const std::vector<std::string>& val_parcels, ModelKind kind,
                      const TrainConfig& config);

// Forward pass over an already normalized batch; returns logits [N, classes].
num::Tensor<float> model_logits(ModelKind kind, models::ParameterSet<float>& params,
                                const std::string& config_json,
                                const sampler::SampleBatch& batch);

std::vector<Index> argmax_rows(const num::Tensor<float>& logits);

struct Evaluation {
  std::vector<std::string> parcel_ids;
  std::vector<Index> labels;
  std::vector<Index> predictions;
  F1Report f1;
};

// Scores a trained model on the named parcels: batches are built per kind,
// normalized with the fold's stats, and reduced with macro F1 over the
// dataset's class count.
Evaluation evaluate_parcels(const Dataset& dataset, const std::vector<std::string>& parcel_ids,
                            ModelKind kind, models::ParameterSet<float>& params,
                            const std::string& config_json, const data::BandStats& stats,
                            std::uint64_t pixel_seed);

struct GridPoint {
  double gamma = 2.0;
  std::string alpha_mode = "inverse";
};

std::vector<GridPoint> default_grid();  // gamma {0,1,2,5} x {uniform, inverse}

struct PointScore {
  GridPoint point;
  std::vector<double> fold_f1;
  std::vector<int> fold_best_epoch;
  double mean_f1 = 0.0;
};

// Argmax of mean_f1; ties prefer the smaller gamma, then the
// lexicographically smaller alpha mode.
std::size_t select_best(const std::vector<PointScore>& scores);

struct CrossValResult {
  std::vector<PointScore> scores;
  GridPoint selected;
  int retrain_epochs = 0;  // median best epoch across the selected point's folds
  FoldResult final_model;  // retrained on every non-test parcel
  Evaluation test;
};

// Grid search by k-fold cross-validation over the plan's folds, then a final
// retrain on all non-test parcels for the median best epoch and one test
// evaluation. Deterministic given config.seed.
CrossValResult cross_validate(const Dataset& dataset, const sampler::SplitPlan& plan,
                              ModelKind kind, const std::vector<GridPoint>& grid,
                              const TrainConfig& base);

}  // namespace cropsits::train
