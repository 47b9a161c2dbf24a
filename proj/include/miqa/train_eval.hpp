#pragma once

#include <cstdint>
#include <limits>
#include <string>
#include <vector>

#include "miqa/model.hpp"
#include "miqa/objective.hpp"
#include "miqa/synthetic.hpp"

namespace miqa {

const char* mode_name(TrainMode mode);
TrainMode mode_from_string(const std::string& name);

/// Stops training once the monitored loss has gone `patience` epochs
/// without a strict improvement. Epochs are 1-based; a loss of 1.0 at
/// epoch 1 followed by no improvement stops after epoch 1 + patience.
class EarlyStopper {
 public:
  explicit EarlyStopper(size_t patience);

  /// Records one epoch's validation loss; true means stop now. Call with
  /// strictly increasing epochs. An epoch that improves becomes the new
  /// best; ties do not.
  bool record(size_t epoch, double val_loss);

  size_t best_epoch() const { return best_epoch_; }
  double best_loss() const { return best_loss_; }

 private:
  size_t patience_;
  size_t best_epoch_ = 0;
  double best_loss_ = std::numeric_limits<double>::infinity();
};

struct TrainConfig {
  TrainMode mode = TrainMode::Baseline;
  double lambda = 1.0;
  double lr = 1e-4;
  size_t batch_size = 32;
  size_t max_epochs = 200;
  size_t patience = 15;
  uint64_t seed = 0;
  ModelDims dims;
};

/// One row of the training history. Epoch 0 is the untrained model, so
/// the PNS trajectory starts at initialization. Loss fields are means
/// over the full set they describe. val_pns / val_mono need a complement
/// extractor and at least one Good validation image.
struct EpochStats {
  size_t epoch = 0;
  double train_total = 0.0;
  double train_pred = 0.0;
  double train_complement = 0.0;
  double train_mono = 0.0;
  double val_pred = 0.0;
  bool has_pns = false;
  double val_pns = 0.0;
  double val_mono = 0.0;
};

struct TrainResult {
  ModelTriple model;  ///< weights from the best validation epoch
  std::vector<EpochStats> history;  ///< rows 0..epochs_trained
  size_t epochs_trained = 0;
  size_t best_epoch = 0;
};

/// Runs the full loop: seeded shuffle each epoch, minibatch task_loss,
/// one Adam step over the mode's parameter union (baseline leaves the
/// complement extractor untouched at its initialization), validation
/// prediction loss as the early-stopping monitor. Deterministic in
/// (config, data, index lists). Throws NumericError with epoch/batch
/// and component values if a loss turns non-finite.
TrainResult train(const TrainConfig& config, const Dataset& data,
                  const std::vector<size_t>& train_idx,
                  const std::vector<size_t>& val_idx);

/// Confusion counts with Good as the positive class, plus the derived
/// rates. Undefined ratios (empty denominators) are 0 for precision,
/// recall and f1; deficient_accuracy of an all-Good set is vacuously 1.
struct ConfusionMetrics {
  size_t tp = 0;
  size_t fp = 0;
  size_t tn = 0;
  size_t fn = 0;
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
  double deficient_accuracy = 0.0;
};

ConfusionMetrics compute_metrics(const std::vector<QualityLabel>& predicted,
                                 const std::vector<QualityLabel>& actual);

struct EvalResult {
  ConfusionMetrics confusion;
  size_t n_test = 0;
  /// PNS fields need the complement extractor and at least one Good test
  /// image (holdout test sets have none); absent otherwise.
  bool has_pns = false;
  double pns_proxy = 0.0;
  double mono_violation = 0.0;
};

/// Argmax predictions from F(E(x)) with exact ties going to Good.
EvalResult evaluate(const ModelTriple& triple, const Dataset& data,
                    const std::vector<size_t>& test_idx);

/// Two training arms on identical per-seed data. Arm seeds are
/// base_seed + i, so both arms of a seed share initialization and data.
struct CompareConfig {
  size_t n_seeds = 5;
  uint64_t base_seed = 0;
  Scenario scenario = Scenario::Iid;
  size_t dataset_n = 2825;
  ClassProportions proportions;
  GeneratorOptions generator;
  TrainConfig arm_a;  ///< conventionally baseline
  TrainConfig arm_b;  ///< conventionally miqa-pns
};

struct CompareCell {
  uint64_t seed = 0;
  size_t arm = 0;
  TrainMode mode = TrainMode::Baseline;
  EvalResult eval;
  size_t epochs_trained = 0;
  size_t best_epoch = 0;
  /// Validation PNS trajectory endpoints from the training history.
  bool has_history_pns = false;
  double init_pns = 0.0;
  double best_pns = 0.0;
  double init_mono = 0.0;
  double best_mono = 0.0;
};

struct CompareResult {
  Scenario scenario = Scenario::Iid;
  size_t n_seeds = 0;
  std::vector<CompareCell> cells;  ///< seed-major, arm a before arm b
};

CompareResult compare(const CompareConfig& config);

/// CSV with one row per (seed, arm). Absent PNS fields print as nan.
std::string comparison_csv(const CompareResult& result);

/// Per-arm mean and sample stddev for every CSV metric plus the b-a
/// delta of the means.
std::string comparison_summary(const CompareResult& result);

/// Where a training run's data came from; embedded in its report.
struct RunProvenance {
  std::string dataset_path;
  size_t dataset_n = 0;
  size_t height = 0;
  size_t width = 0;
  Scenario scenario = Scenario::Iid;
  uint64_t split_seed = 0;
};

/// Deterministic plain-text report: resolved config, provenance, final
/// metrics, full history. No timestamps, so reruns match byte for byte.
std::string metrics_document(const RunProvenance& provenance,
                             const TrainConfig& config,
                             const TrainResult& train_result,
                             const EvalResult& eval_result);

}  // namespace miqa
