#pragma once

#include <optional>
#include <vector>

#include "miqa/tensor.hpp"

namespace miqa {

/// Binary task label. The index doubles as the logit column.
enum class QualityLabel : int { Good = 0, Deficient = 1 };

/// The other class. Involution: transform(transform(x)) == x.
QualityLabel label_transform(QualityLabel label);

/// 1.0 for Good, 0.0 for Deficient.
double indicator(QualityLabel label);

/// Mean over the batch of -log_softmax(logits)[label]. logits is [B x 2].
Tensor cross_entropy(Tape& tape, Tensor logits,
                     const std::vector<QualityLabel>& labels);

enum class TrainMode { Baseline, MiqaPns };

/// Component values as evaluated on the tape. total is pred + complement
/// + mono in that association order, so the identity holds exactly.
struct LossBreakdown {
  double pred = 0.0;
  double complement = 0.0;
  double mono = 0.0;
  double total = 0.0;
};

struct TaskLossResult {
  Tensor total;  ///< scalar root for backward()
  LossBreakdown values;
};

/// Builds the training objective on the tape.
///
/// Per sample i: pred_i is the prediction-branch cross-entropy against
/// the true label; complement_i gates the complement branch's
/// cross-entropy against the flipped label by indicator(y_i); mono_i is
/// lambda * pred_i * complement_i. Components are batch means.
///
/// Baseline mode returns the prediction cross-entropy itself as total:
/// the complement and monotonicity terms are exactly zero and put no
/// gradient anywhere. logits_complement is required in MiqaPns mode.
TaskLossResult task_loss(Tape& tape, Tensor logits_pred,
                         std::optional<Tensor> logits_complement,
                         const std::vector<QualityLabel>& labels,
                         double lambda, TrainMode mode);

/// mean(p_good_h) - mean(p_good_hbar) over Good-labeled samples, where
/// p_good_h is the predicted Good probability from the kept features and
/// p_good_hbar the one from the complement features. Range [-1, 1].
double pns_estimate(const std::vector<double>& p_good_h,
                    const std::vector<double>& p_good_hbar);

/// mean of (1 - p_good_h_i) * p_good_hbar_i over Good-labeled samples;
/// zero exactly when every sample satisfies the monotonicity product
/// condition. Stays below 0.25 whenever p_good_hbar_i <= p_good_h_i.
double monotonicity_violation(const std::vector<double>& p_good_h,
                              const std::vector<double>& p_good_hbar);

}  // namespace miqa
