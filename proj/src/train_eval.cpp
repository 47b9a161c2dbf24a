#include "miqa/train_eval.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <sstream>

#include "miqa/errors.hpp"
#include "miqa/rng.hpp"
#include "miqa/tensor.hpp"

namespace miqa {
namespace {

constexpr size_t kEvalBatch = 256;

std::string fmt(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

std::vector<double> gather_pixels(const Dataset& data,
                                  const std::vector<size_t>& idx, size_t from,
                                  size_t count) {
  const size_t dim = data.height * data.width;
  std::vector<double> out(count * dim);
  for (size_t i = 0; i < count; ++i) {
    const auto& px = data.images[idx[from + i]].pixels;
    for (size_t j = 0; j < dim; ++j) {
      out[i * dim + j] = static_cast<double>(px[j]);
    }
  }
  return out;
}

std::vector<QualityLabel> gather_labels(const Dataset& data,
                                        const std::vector<size_t>& idx,
                                        size_t from, size_t count) {
  std::vector<QualityLabel> out(count);
  for (size_t i = 0; i < count; ++i) {
    out[i] = task_label(data.images[idx[from + i]].grade);
  }
  return out;
}

/// Forward-only loss components over an index set, as means weighted by
/// batch size so the result is the exact per-sample mean.
LossBreakdown loss_over(const ModelTriple& triple, const Dataset& data,
                        const std::vector<size_t>& idx, TrainMode mode,
                        double lambda) {
  const size_t dim = data.height * data.width;
  double sum_total = 0.0, sum_pred = 0.0, sum_compl = 0.0, sum_mono = 0.0;
  for (size_t from = 0; from < idx.size(); from += kEvalBatch) {
    const size_t count = std::min(kEvalBatch, idx.size() - from);
    Tape tape;
    Tensor x = tape.leaf({count, dim}, gather_pixels(data, idx, from, count));
    Tensor features = forward_mlp(tape, triple.extractor, x);
    Tensor logits = forward_mlp(tape, triple.predictor, features);
    std::optional<Tensor> logits_c;
    if (mode == TrainMode::MiqaPns) {
      Tensor cfeat = forward_mlp(tape, *triple.complement_extractor, x);
      logits_c = forward_mlp(tape, triple.predictor, cfeat);
    }
    auto labels = gather_labels(data, idx, from, count);
    TaskLossResult r = task_loss(tape, logits, logits_c, labels, lambda, mode);
    const double w = static_cast<double>(count);
    sum_total += r.values.total * w;
    sum_pred += r.values.pred * w;
    sum_compl += r.values.complement * w;
    sum_mono += r.values.mono * w;
  }
  const double n = static_cast<double>(idx.size());
  return {sum_pred / n, sum_compl / n, sum_mono / n, sum_total / n};
}

double pred_loss_over(const ModelTriple& triple, const Dataset& data,
                      const std::vector<size_t>& idx) {
  return loss_over(triple, data, idx, TrainMode::Baseline, 0.0).pred;
}

/// Good-probabilities through one extractor for the Good-labeled subset
/// of idx. Empty when the subset is empty.
std::vector<double> good_probs(const Mlp& extractor, const Mlp& predictor,
                               const Dataset& data,
                               const std::vector<size_t>& good_idx) {
  const size_t dim = data.height * data.width;
  std::vector<double> probs;
  probs.reserve(good_idx.size());
  for (size_t from = 0; from < good_idx.size(); from += kEvalBatch) {
    const size_t count = std::min(kEvalBatch, good_idx.size() - from);
    Tape tape;
    Tensor x =
        tape.leaf({count, dim}, gather_pixels(data, good_idx, from, count));
    Tensor logits =
        forward_mlp(tape, predictor, forward_mlp(tape, extractor, x));
    Tensor ls = tape.log_softmax(logits);
    auto v = ls.value();
    for (size_t i = 0; i < count; ++i) {
      probs.push_back(std::exp(v[i * 2]));
    }
  }
  return probs;
}

std::vector<size_t> good_subset(const Dataset& data,
                                const std::vector<size_t>& idx) {
  std::vector<size_t> good;
  for (size_t i : idx) {
    if (data.images[i].grade == Grade::Good) good.push_back(i);
  }
  return good;
}

struct PnsStats {
  bool present = false;
  double pns = 0.0;
  double mono = 0.0;
};

PnsStats pns_over(const ModelTriple& triple, const Dataset& data,
                  const std::vector<size_t>& idx) {
  PnsStats stats;
  if (!triple.complement_extractor.has_value()) return stats;
  auto good = good_subset(data, idx);
  if (good.empty()) return stats;
  auto p_h = good_probs(triple.extractor, triple.predictor, data, good);
  auto p_hbar =
      good_probs(*triple.complement_extractor, triple.predictor, data, good);
  stats.present = true;
  stats.pns = pns_estimate(p_h, p_hbar);
  stats.mono = monotonicity_violation(p_h, p_hbar);
  return stats;
}

void snapshot_params(const ModelTriple& triple, ModelTriple& into) {
  into.extractor = triple.extractor;
  into.complement_extractor = triple.complement_extractor;
  into.predictor = triple.predictor;
}

}  // namespace

const char* mode_name(TrainMode mode) {
  return mode == TrainMode::Baseline ? "baseline" : "miqa-pns";
}

TrainMode mode_from_string(const std::string& name) {
  if (name == "baseline") return TrainMode::Baseline;
  if (name == "miqa-pns") return TrainMode::MiqaPns;
  throw ConfigError("unknown mode '" + name +
                    "' (expected baseline or miqa-pns)");
}

EarlyStopper::EarlyStopper(size_t patience) : patience_(patience) {
  if (patience == 0) {
    throw ConfigError("early stopping patience must be at least 1");
  }
}

bool EarlyStopper::record(size_t epoch, double val_loss) {
  if (val_loss < best_loss_) {
    best_loss_ = val_loss;
    best_epoch_ = epoch;
  }
  return epoch - best_epoch_ >= patience_;
}

TrainResult train(const TrainConfig& config, const Dataset& data,
                  const std::vector<size_t>& train_idx,
                  const std::vector<size_t>& val_idx) {
  if (train_idx.empty() || val_idx.empty()) {
    throw ConfigError("train: empty train or validation split");
  }
  if (config.batch_size == 0) throw ConfigError("train: batch_size must be >= 1");
  if (config.max_epochs == 0) throw ConfigError("train: max_epochs must be >= 1");
  if (!(config.lr > 0.0)) throw ConfigError("train: lr must be > 0");
  if (!(config.lambda >= 0.0)) throw ConfigError("train: lambda must be >= 0");
  const size_t dim = data.height * data.width;
  if (config.dims.input_dim != dim) {
    throw ConfigError("train: model input_dim " +
                      std::to_string(config.dims.input_dim) +
                      " does not match image size " + std::to_string(dim));
  }
  for (size_t i : train_idx) {
    if (i >= data.images.size()) throw ConfigError("train: index out of range");
  }
  for (size_t i : val_idx) {
    if (i >= data.images.size()) throw ConfigError("train: index out of range");
  }

  const bool with_complement = config.mode == TrainMode::MiqaPns;
  TrainResult result;
  result.model = init_model_triple(config.dims, config.seed);
  ModelTriple& triple = result.model;

  std::vector<size_t> sizes;
  append_param_sizes(triple.extractor, sizes);
  if (with_complement) append_param_sizes(*triple.complement_extractor, sizes);
  append_param_sizes(triple.predictor, sizes);
  Adam adam(AdamConfig{config.lr, 0.9, 0.999, 1e-8}, sizes);

  auto record_epoch = [&](size_t epoch) {
    EpochStats row;
    row.epoch = epoch;
    LossBreakdown train_losses =
        loss_over(triple, data, train_idx, config.mode, config.lambda);
    row.train_total = train_losses.total;
    row.train_pred = train_losses.pred;
    row.train_complement = train_losses.complement;
    row.train_mono = train_losses.mono;
    row.val_pred = pred_loss_over(triple, data, val_idx);
    PnsStats pns = pns_over(triple, data, val_idx);
    row.has_pns = pns.present;
    row.val_pns = pns.pns;
    row.val_mono = pns.mono;
    if (!std::isfinite(row.val_pred)) {
      throw NumericError("non-finite validation loss at epoch " +
                         std::to_string(epoch) + ": val_pred=" +
                         fmt(row.val_pred));
    }
    result.history.push_back(row);
    return row;
  };

  record_epoch(0);

  EarlyStopper stopper(config.patience);
  ModelTriple best;
  Rng shuffle_rng(Rng::derive(config.seed, 5));
  std::vector<size_t> order = train_idx;

  for (size_t epoch = 1; epoch <= config.max_epochs; ++epoch) {
    shuffle_rng.shuffle(order);
    for (size_t from = 0, batch_no = 0; from < order.size();
         from += config.batch_size, ++batch_no) {
      const size_t count = std::min(config.batch_size, order.size() - from);
      Tape tape;
      BoundMlp be = bind(tape, triple.extractor);
      BoundMlp bf = bind(tape, triple.predictor);
      BoundMlp bec;
      Tensor x = tape.leaf({count, dim}, gather_pixels(data, order, from, count));
      Tensor logits = forward_mlp(tape, bf, forward_mlp(tape, be, x));
      std::optional<Tensor> logits_c;
      if (with_complement) {
        bec = bind(tape, *triple.complement_extractor);
        logits_c = forward_mlp(tape, bf, forward_mlp(tape, bec, x));
      }
      auto labels = gather_labels(data, order, from, count);
      TaskLossResult r =
          task_loss(tape, logits, logits_c, labels, config.lambda, config.mode);
      if (!std::isfinite(r.values.total)) {
        throw NumericError(
            "non-finite training loss at epoch " + std::to_string(epoch) +
            " batch " + std::to_string(batch_no) + ": total=" +
            fmt(r.values.total) + " pred=" + fmt(r.values.pred) +
            " complement=" + fmt(r.values.complement) + " mono=" +
            fmt(r.values.mono));
      }
      tape.backward(r.total);

      std::vector<std::span<double>> params;
      append_param_spans(triple.extractor, params);
      if (with_complement) {
        append_param_spans(*triple.complement_extractor, params);
      }
      append_param_spans(triple.predictor, params);
      std::vector<std::span<const double>> grads;
      append_grad_spans(be, grads);
      if (with_complement) append_grad_spans(bec, grads);
      append_grad_spans(bf, grads);
      adam.step(params, grads);
    }

    EpochStats row = record_epoch(epoch);
    result.epochs_trained = epoch;
    const bool stop = stopper.record(epoch, row.val_pred);
    if (stopper.best_epoch() == epoch) {
      snapshot_params(triple, best);
    }
    if (stop) break;
  }

  result.best_epoch = stopper.best_epoch();
  snapshot_params(best, triple);
  return result;
}

ConfusionMetrics compute_metrics(const std::vector<QualityLabel>& predicted,
                                 const std::vector<QualityLabel>& actual) {
  if (predicted.empty() || predicted.size() != actual.size()) {
    throw ConfigError("compute_metrics: label arrays empty or mismatched");
  }
  ConfusionMetrics m;
  for (size_t i = 0; i < predicted.size(); ++i) {
    const bool pred_good = predicted[i] == QualityLabel::Good;
    const bool is_good = actual[i] == QualityLabel::Good;
    if (pred_good && is_good) ++m.tp;
    if (pred_good && !is_good) ++m.fp;
    if (!pred_good && is_good) ++m.fn;
    if (!pred_good && !is_good) ++m.tn;
  }
  m.precision = m.tp + m.fp > 0
                    ? static_cast<double>(m.tp) / static_cast<double>(m.tp + m.fp)
                    : 0.0;
  m.recall = m.tp + m.fn > 0
                 ? static_cast<double>(m.tp) / static_cast<double>(m.tp + m.fn)
                 : 0.0;
  m.f1 = m.precision + m.recall > 0.0
             ? 2.0 * m.precision * m.recall / (m.precision + m.recall)
             : 0.0;
  m.deficient_accuracy =
      m.tn + m.fp > 0
          ? static_cast<double>(m.tn) / static_cast<double>(m.tn + m.fp)
          : 1.0;
  return m;
}

EvalResult evaluate(const ModelTriple& triple, const Dataset& data,
                    const std::vector<size_t>& test_idx) {
  if (test_idx.empty()) {
    throw ConfigError("evaluate: empty test set");
  }
  const size_t dim = data.height * data.width;
  if (triple.extractor.spec.input_dim != dim) {
    throw ConfigError("evaluate: model input_dim " +
                      std::to_string(triple.extractor.spec.input_dim) +
                      " does not match image size " + std::to_string(dim));
  }
  for (size_t i : test_idx) {
    if (i >= data.images.size()) {
      throw ConfigError("evaluate: index out of range");
    }
  }

  std::vector<QualityLabel> predicted;
  predicted.reserve(test_idx.size());
  for (size_t from = 0; from < test_idx.size(); from += kEvalBatch) {
    const size_t count = std::min(kEvalBatch, test_idx.size() - from);
    Tape tape;
    Tensor x =
        tape.leaf({count, dim}, gather_pixels(data, test_idx, from, count));
    Tensor logits = forward_mlp(
        tape, triple.predictor, forward_mlp(tape, triple.extractor, x));
    auto v = logits.value();
    for (size_t i = 0; i < count; ++i) {
      predicted.push_back(v[i * 2] >= v[i * 2 + 1] ? QualityLabel::Good
                                                   : QualityLabel::Deficient);
    }
  }

  EvalResult result;
  result.n_test = test_idx.size();
  result.confusion =
      compute_metrics(predicted, gather_labels(data, test_idx, 0, test_idx.size()));
  PnsStats pns = pns_over(triple, data, test_idx);
  result.has_pns = pns.present;
  result.pns_proxy = pns.pns;
  result.mono_violation = pns.mono;
  return result;
}

CompareResult compare(const CompareConfig& config) {
  if (config.n_seeds == 0) {
    throw ConfigError("compare: n_seeds must be >= 1");
  }
  CompareResult result;
  result.scenario = config.scenario;
  result.n_seeds = config.n_seeds;
  for (size_t i = 0; i < config.n_seeds; ++i) {
    const uint64_t seed = config.base_seed + i;
    Dataset data = generate_dataset(config.dataset_n, config.proportions,
                                    Rng::derive(seed, 100), config.generator);
    Split split =
        make_split(data, config.scenario, Rng::derive(seed, 101));
    const TrainConfig* arms[2] = {&config.arm_a, &config.arm_b};
    for (size_t arm = 0; arm < 2; ++arm) {
      TrainConfig tc = *arms[arm];
      tc.seed = seed;
      tc.dims.input_dim = data.height * data.width;
      TrainResult tr = train(tc, data, split.train, split.val);
      CompareCell cell;
      cell.seed = seed;
      cell.arm = arm;
      cell.mode = tc.mode;
      cell.eval = evaluate(tr.model, data, split.test);
      cell.epochs_trained = tr.epochs_trained;
      cell.best_epoch = tr.best_epoch;
      const EpochStats& first = tr.history.front();
      const EpochStats& best = tr.history.at(tr.best_epoch);
      cell.has_history_pns = first.has_pns && best.has_pns;
      cell.init_pns = first.val_pns;
      cell.best_pns = best.val_pns;
      cell.init_mono = first.val_mono;
      cell.best_mono = best.val_mono;
      result.cells.push_back(cell);
    }
  }
  return result;
}

namespace {

double cell_metric(const CompareCell& cell, size_t metric) {
  switch (metric) {
    case 0:
      return cell.eval.confusion.precision;
    case 1:
      return cell.eval.confusion.recall;
    case 2:
      return cell.eval.confusion.f1;
    case 3:
      return cell.eval.confusion.deficient_accuracy;
    case 4:
      return cell.eval.has_pns ? cell.eval.pns_proxy
                               : std::numeric_limits<double>::quiet_NaN();
    case 5:
      return cell.eval.has_pns ? cell.eval.mono_violation
                               : std::numeric_limits<double>::quiet_NaN();
    default:
      return static_cast<double>(cell.epochs_trained);
  }
}

constexpr const char* kMetricNames[7] = {
    "precision",    "recall",         "f1",            "deficient_accuracy",
    "pns_proxy",    "mono_violation", "epochs_trained"};

struct MeanStd {
  double mean = 0.0;
  double stddev = 0.0;
};

MeanStd mean_std(const std::vector<double>& v) {
  MeanStd out;
  const double n = static_cast<double>(v.size());
  for (double x : v) out.mean += x;
  out.mean /= n;
  if (v.size() > 1) {
    double ss = 0.0;
    for (double x : v) ss += (x - out.mean) * (x - out.mean);
    out.stddev = std::sqrt(ss / (n - 1.0));
  }
  return out;
}

}  // namespace

std::string comparison_csv(const CompareResult& result) {
  std::ostringstream out;
  out << "seed, mode, scenario, precision, recall, f1, deficient_accuracy, "
         "pns_proxy, mono_violation, epochs_trained\n";
  for (const auto& cell : result.cells) {
    out << cell.seed << ", " << mode_name(cell.mode) << ", "
        << scenario_name(result.scenario);
    for (size_t metric = 0; metric < 6; ++metric) {
      out << ", " << fmt(cell_metric(cell, metric));
    }
    out << ", " << cell.epochs_trained << "\n";
  }
  return out.str();
}

std::string comparison_summary(const CompareResult& result) {
  std::ostringstream out;
  out << "scenario: " << scenario_name(result.scenario) << "\n";
  out << "seeds: " << result.n_seeds << "\n";
  const char* arm_modes[2] = {nullptr, nullptr};
  std::vector<double> values[2];
  for (size_t metric = 0; metric < 7; ++metric) {
    MeanStd stats[2];
    for (size_t arm = 0; arm < 2; ++arm) {
      values[arm].clear();
      for (const auto& cell : result.cells) {
        if (cell.arm == arm) {
          values[arm].push_back(cell_metric(cell, metric));
          arm_modes[arm] = mode_name(cell.mode);
        }
      }
      stats[arm] = mean_std(values[arm]);
    }
    if (metric == 0) {
      out << "arm a: " << arm_modes[0] << "\n";
      out << "arm b: " << arm_modes[1] << "\n";
    }
    out << kMetricNames[metric] << ": a_mean=" << fmt(stats[0].mean)
        << " a_stddev=" << fmt(stats[0].stddev)
        << " b_mean=" << fmt(stats[1].mean)
        << " b_stddev=" << fmt(stats[1].stddev)
        << " delta=" << fmt(stats[1].mean - stats[0].mean) << "\n";
  }
  return out.str();
}

std::string metrics_document(const RunProvenance& provenance,
                             const TrainConfig& config,
                             const TrainResult& train_result,
                             const EvalResult& eval_result) {
  std::ostringstream out;
  out << "miqa metrics document v1\n\n";

  out << "[config]\n";
  out << "mode: " << mode_name(config.mode) << "\n";
  out << "lambda: " << fmt(config.lambda) << "\n";
  out << "lr: " << fmt(config.lr) << "\n";
  out << "batch_size: " << config.batch_size << "\n";
  out << "max_epochs: " << config.max_epochs << "\n";
  out << "patience: " << config.patience << "\n";
  out << "seed: " << config.seed << "\n";
  out << "input_dim: " << config.dims.input_dim << "\n";
  out << "extractor_hidden:";
  for (size_t h : config.dims.extractor_hidden) out << " " << h;
  out << "\n";
  out << "feature_dim: " << config.dims.feature_dim << "\n";
  out << "predictor_hidden:";
  for (size_t h : config.dims.predictor_hidden) out << " " << h;
  out << "\n\n";

  out << "[data]\n";
  out << "dataset: " << provenance.dataset_path << "\n";
  out << "n: " << provenance.dataset_n << "\n";
  out << "height: " << provenance.height << "\n";
  out << "width: " << provenance.width << "\n";
  out << "scenario: " << scenario_name(provenance.scenario) << "\n";
  out << "split_seed: " << provenance.split_seed << "\n\n";

  out << "[result]\n";
  out << "epochs_trained: " << train_result.epochs_trained << "\n";
  out << "best_epoch: " << train_result.best_epoch << "\n";
  out << "n_test: " << eval_result.n_test << "\n";
  const auto& c = eval_result.confusion;
  out << "tp: " << c.tp << "\nfp: " << c.fp << "\ntn: " << c.tn
      << "\nfn: " << c.fn << "\n";
  out << "precision: " << fmt(c.precision) << "\n";
  out << "recall: " << fmt(c.recall) << "\n";
  out << "f1: " << fmt(c.f1) << "\n";
  out << "deficient_accuracy: " << fmt(c.deficient_accuracy) << "\n";
  if (eval_result.has_pns) {
    out << "pns_proxy: " << fmt(eval_result.pns_proxy) << "\n";
    out << "mono_violation: " << fmt(eval_result.mono_violation) << "\n";
  } else {
    out << "pns_proxy: absent\n";
    out << "mono_violation: absent\n";
  }
  out << "\n";

  out << "[history]\n";
  out << "epoch train_total train_pred train_complement train_mono val_pred "
         "val_pns val_mono\n";
  for (const auto& row : train_result.history) {
    out << row.epoch << " " << fmt(row.train_total) << " "
        << fmt(row.train_pred) << " " << fmt(row.train_complement) << " "
        << fmt(row.train_mono) << " " << fmt(row.val_pred);
    if (row.has_pns) {
      out << " " << fmt(row.val_pns) << " " << fmt(row.val_mono);
    } else {
      out << " absent absent";
    }
    out << "\n";
  }
  return out.str();
}

}  // namespace miqa
