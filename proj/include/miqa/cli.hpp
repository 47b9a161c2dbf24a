#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "miqa/synthetic.hpp"
#include "miqa/train_eval.hpp"

namespace miqa {

/// Everything a run needs, resolved from defaults, an optional config file,
/// and command-line flags, in that order. Serializing and re-parsing a
/// RunConfig is lossless, so any artifact that embeds the serialized form
/// can be reproduced from it alone.
///
/// Config files are flat `key = value` lines. Blank lines and lines whose
/// first non-space character is '#' are skipped. Unknown or duplicate keys
/// are errors. Keys and defaults:
///
///   dataset.path = dataset.pnsa      file written by generate, read by
///                                    train/eval
///   generator.n = 2825
///   generator.seed = 7
///   generator.height = 32
///   generator.width = 32
///   generator.proportions.good = 0.21
///   generator.proportions.limited = 0.647
///   generator.proportions.poor = 0.143
///   generator.limited_crop_only_prob = 0.5
///   model.extractor_hidden = 128     comma-separated, may be empty
///   model.feature_dim = 64
///   model.predictor_hidden = 256,64
///   train.mode = baseline            baseline | miqa-pns
///   train.lambda = 1
///   train.lr = 0.0001
///   train.batch_size = 32
///   train.max_epochs = 200
///   train.patience = 15
///   train.seed = 0
///   split.scenario = iid             iid | limited-holdout | poor-holdout
///   split.seed = 0
///   compare.n_seeds = 5
///   compare.base_seed = 0
///   compare.arm_a_mode = baseline
///   compare.arm_b_mode = miqa-pns
///   eval.checkpoint =                checkpoint path for the eval command
///   out.dir = runs
///
/// The model input dimension is not a key; it is always height*width of
/// the dataset in play.
struct RunConfig {
  std::string dataset_path = "dataset.pnsa";
  size_t generator_n = 2825;
  uint64_t generator_seed = 7;
  GeneratorOptions generator;
  ClassProportions proportions;
  TrainConfig train;
  Scenario scenario = Scenario::Iid;
  uint64_t split_seed = 0;
  size_t compare_n_seeds = 5;
  uint64_t compare_base_seed = 0;
  TrainMode arm_a_mode = TrainMode::Baseline;
  TrainMode arm_b_mode = TrainMode::MiqaPns;
  std::string eval_checkpoint;
  std::string out_dir = "runs";
};

/// Parses config-file text over the defaults. Throws ConfigError on unknown
/// keys, duplicate keys, or malformed values.
RunConfig parse_run_config(const std::string& text);

/// Canonical text form: every key, fixed order, exact float round-trip.
std::string serialize_run_config(const RunConfig& config);

/// The full command-line program: `args` is argv without the program name.
/// Commands: generate, train, eval, compare. Flags: --config PATH,
/// --seed N (overrides generator.seed, train.seed, compare.base_seed),
/// --out DIR, --force (allow overwriting existing artifacts).
/// Returns the process exit code: 0 success, 2 usage or config error,
/// 3 numerical failure during training, 1 anything else.
int run(const std::vector<std::string>& args);

}  // namespace miqa
