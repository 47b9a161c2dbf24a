#include "miqa/objective.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

namespace miqa {
namespace {

std::vector<size_t> label_columns(const std::vector<QualityLabel>& labels,
                                  bool flipped) {
  std::vector<size_t> cols(labels.size());
  for (size_t i = 0; i < labels.size(); ++i) {
    size_t c = static_cast<size_t>(labels[i]);
    cols[i] = flipped ? 1 - c : c;
  }
  return cols;
}

void check_logits(const Tensor& logits, size_t batch, const char* which) {
  const Shape& s = logits.shape();
  if (s.size() != 2 || s[1] != 2 || s[0] != batch) {
    throw std::invalid_argument(std::string(which) + ": expected [" +
                                std::to_string(batch) + " x 2] logits, got " +
                                shape_str(s));
  }
}

/// Per-sample cross-entropy vector, shape {B}. cross_entropy() and the
/// prediction branch of task_loss() must run this exact op sequence so
/// baseline totals match standalone cross-entropy bit for bit.
Tensor per_sample_ce(Tape& tape, Tensor logits,
                     const std::vector<size_t>& cols) {
  return tape.scalar_mul(tape.select_index(tape.log_softmax(logits), cols),
                         -1.0);
}

void check_probability_pair(const std::vector<double>& p,
                            const std::vector<double>& pbar,
                            const char* which) {
  if (p.empty() || p.size() != pbar.size()) {
    throw std::invalid_argument(
        std::string(which) + ": probability arrays must be nonempty and " +
        "equally sized, got " + std::to_string(p.size()) + " and " +
        std::to_string(pbar.size()));
  }
  for (const auto* arr : {&p, &pbar}) {
    for (double v : *arr) {
      if (!(v >= 0.0 && v <= 1.0)) {
        throw std::invalid_argument(std::string(which) +
                                    ": probability outside [0,1]: " +
                                    std::to_string(v));
      }
    }
  }
}

}  // namespace

QualityLabel label_transform(QualityLabel label) {
  return label == QualityLabel::Good ? QualityLabel::Deficient
                                     : QualityLabel::Good;
}

double indicator(QualityLabel label) {
  return label == QualityLabel::Good ? 1.0 : 0.0;
}

Tensor cross_entropy(Tape& tape, Tensor logits,
                     const std::vector<QualityLabel>& labels) {
  if (labels.empty()) {
    throw std::invalid_argument("cross_entropy: empty batch");
  }
  check_logits(logits, labels.size(), "cross_entropy");
  return tape.mean(per_sample_ce(tape, logits, label_columns(labels, false)));
}

TaskLossResult task_loss(Tape& tape, Tensor logits_pred,
                         std::optional<Tensor> logits_complement,
                         const std::vector<QualityLabel>& labels,
                         double lambda, TrainMode mode) {
  if (labels.empty()) {
    throw std::invalid_argument("task_loss: empty batch");
  }
  if (!(lambda >= 0.0) || !std::isfinite(lambda)) {
    throw std::invalid_argument("task_loss: lambda must be finite and >= 0, got " +
                                std::to_string(lambda));
  }
  const size_t batch = labels.size();
  check_logits(logits_pred, batch, "task_loss (prediction branch)");

  Tensor pred_vec = per_sample_ce(tape, logits_pred, label_columns(labels, false));
  Tensor pred = tape.mean(pred_vec);

  TaskLossResult result{pred, {}};
  if (mode == TrainMode::Baseline) {
    result.values.pred = pred.scalar();
    result.values.total = result.values.pred;
    return result;
  }

  if (!logits_complement.has_value()) {
    throw std::invalid_argument(
        "task_loss: complement logits are required in miqa-pns mode");
  }
  check_logits(*logits_complement, batch, "task_loss (complement branch)");

  std::vector<double> gate(batch);
  for (size_t i = 0; i < batch; ++i) gate[i] = indicator(labels[i]);
  Tensor gate_t = tape.leaf({batch}, gate);

  Tensor compl_vec = tape.mul(
      gate_t,
      per_sample_ce(tape, *logits_complement, label_columns(labels, true)));
  Tensor complement = tape.mean(compl_vec);

  Tensor mono_vec = tape.scalar_mul(tape.mul(pred_vec, compl_vec), lambda);
  Tensor mono = tape.mean(mono_vec);

  Tensor total = tape.add(tape.add(pred, complement), mono);
  result.total = total;
  result.values.pred = pred.scalar();
  result.values.complement = complement.scalar();
  result.values.mono = mono.scalar();
  result.values.total = total.scalar();
  return result;
}

double pns_estimate(const std::vector<double>& p_good_h,
                    const std::vector<double>& p_good_hbar) {
  check_probability_pair(p_good_h, p_good_hbar, "pns_estimate");
  double sum_h = 0.0;
  double sum_hbar = 0.0;
  for (size_t i = 0; i < p_good_h.size(); ++i) {
    sum_h += p_good_h[i];
    sum_hbar += p_good_hbar[i];
  }
  const double n = static_cast<double>(p_good_h.size());
  return sum_h / n - sum_hbar / n;
}

double monotonicity_violation(const std::vector<double>& p_good_h,
                              const std::vector<double>& p_good_hbar) {
  check_probability_pair(p_good_h, p_good_hbar, "monotonicity_violation");
  double sum = 0.0;
  for (size_t i = 0; i < p_good_h.size(); ++i) {
    sum += (1.0 - p_good_h[i]) * p_good_hbar[i];
  }
  return sum / static_cast<double>(p_good_h.size());
}

}  // namespace miqa
