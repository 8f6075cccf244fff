#pragma once

#include <torch/torch.h>

#include <string>
#include <vector>

#include "owvis/config.hpp"
#include "owvis/decoder_heads.hpp"
#include "owvis/geometry.hpp"
#include "owvis/hungarian.hpp"

namespace owvis {

/// One ground-truth instance inside a clip, expressed against the active
/// classifier: `column` is its class-logit column (>= 1).
struct TargetInstance {
  int column = 1;
  std::vector<Box> boxes;  // one per frame, all-zero where absent
  torch::Tensor masks;     // M x H x W, 0/1 floats
};

/// Matching cost: w_cls (1 - p(c)) + w_box mean L1 + w_giou mean (1 - GIoU),
/// means taken over frames where the target is present. Class probabilities
/// are the softmax over the C+1 logits.
CostMatrix match_cost(const BranchOutputs& out, const std::vector<TargetInstance>& targets, const LossConfig& config);

/// Optimal query-to-target assignment. More targets than queries is a
/// configuration error.
MatchResult hungarian_match(const BranchOutputs& out, const std::vector<TargetInstance>& targets,
                            const LossConfig& config);

/// -alpha (1 - p_t)^gamma log p_t summed over rows and divided by
/// `normalizer`, with p_t the softmax probability of each row's target class.
torch::Tensor focal_loss(const torch::Tensor& logits, const torch::Tensor& targets, double gamma, double alpha,
                         double normalizer);

/// Element-wise binary form: p_t = sigmoid(x) for target 1 and 1 - sigmoid(x)
/// for target 0, alpha weighting positives and 1 - alpha negatives.
torch::Tensor sigmoid_focal_loss(const torch::Tensor& logits, const torch::Tensor& targets, double gamma,
                                 double alpha, double normalizer);

/// 1 - (2 |p t| + 1) / (|p| + |t| + 1) per row, averaged over rows.
torch::Tensor dice_loss(const torch::Tensor& logits, const torch::Tensor& targets);

struct RegressionLoss {
  torch::Tensor box;
  torch::Tensor mask;
};

/// Box L1 (coordinate mean, then frame mean over present frames, then
/// instance mean) and mask loss for the matched pairs. `mask_logits` holds one
/// K x M x h x w entry per assignment pair, in assignment order, and is
/// resized to the target resolution.
RegressionLoss regression_loss(const torch::Tensor& pred_boxes, const torch::Tensor& mask_logits,
                               const std::vector<TargetInstance>& targets, const MatchResult& match,
                               const LossConfig& config);

struct LossBundle {
  torch::Tensor L_c, L_f, L_r_box, L_r_mask, L_contr;
  double alpha = 1.0;
};

/// L_c + (L_r_box + L_r_mask) + alpha L_f + L_contr. Throws NonFiniteError
/// naming the first non-finite component.
torch::Tensor total_loss(const LossBundle& bundle);

}  // namespace owvis
