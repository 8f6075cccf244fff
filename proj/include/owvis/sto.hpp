#pragma once

#include <torch/torch.h>

#include <vector>

namespace owvis {

/// Single 3D convolution (kernel 3, stride 1, padding 1) to one channel and a
/// sigmoid. Input M x d x h x w, output M x h x w in [0, 1].
class ObjectnessHeadImpl : public torch::nn::Module {
 public:
  explicit ObjectnessHeadImpl(int d);
  torch::Tensor forward(const torch::Tensor& features);
  torch::nn::Conv3d& conv() { return conv_; }

 private:
  int d_;
  torch::nn::Conv3d conv_{nullptr};
};
TORCH_MODULE(ObjectnessHead);

/// Per query, the sum over frames of the mean map value inside the query's
/// box. map: M x h x w; boxes: q x M x 4 normalized (cx, cy, w, h). Box
/// coordinates do not receive gradient. Returns q scores.
torch::Tensor objectness_score(const torch::Tensor& map, const torch::Tensor& boxes);

/// Box-region score over raw backbone features: the same geometry applied to
/// the channel mean of an M x C x h x w map.
torch::Tensor baseline_scorer(const torch::Tensor& backbone_features, const torch::Tensor& boxes);

struct QueryPartition {
  std::vector<int> matched_known;
  std::vector<int> pseudo_unknown;  // by decreasing score
  std::vector<int> background;      // by decreasing score
};

/// Picks the p_u best-scoring unmatched queries (ties to the lower index).
/// p_u beyond the number of unmatched queries is clamped with a warning.
QueryPartition select_pseudo_unknowns(const std::vector<double>& scores, const std::vector<int>& matched_known,
                                      int p_u);

/// exp(-(S_fg - S_bg)) with the exponent capped at 30. With `normalize` the
/// two sums become means over their sets.
torch::Tensor contrastive_loss(const torch::Tensor& scores, const QueryPartition& partition, bool normalize = false);

}  // namespace owvis
