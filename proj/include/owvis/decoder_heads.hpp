#pragma once

#include <torch/torch.h>

#include <vector>

#include "owvis/config.hpp"
#include "owvis/data_model.hpp"
#include "owvis/feature_net.hpp"

namespace owvis {

struct DecoderOutput {
  torch::Tensor instance;  // F^I, q x d
  torch::Tensor box;       // F^B, q x M x d
};

struct BranchOutputs {
  torch::Tensor class_logits;       // q x (C+1), column 0 = unknown
  torch::Tensor objectness_logits;  // q x 1
  torch::Tensor boxes;              // q x M x 4, normalized (cx, cy, w, h)
};

class DecoderLayerImpl : public torch::nn::Module {
 public:
  DecoderLayerImpl(int d, int heads, int ffn_dim);
  /// inst: q x d, box: q x M x d, memory/memory_pos: N x M x d.
  DecoderOutput forward(const torch::Tensor& inst, const torch::Tensor& box, const torch::Tensor& memory,
                        const torch::Tensor& memory_pos);

 private:
  torch::nn::MultiheadAttention self_attn_{nullptr}, cross_attn_{nullptr};
  torch::nn::Linear linear1_{nullptr}, linear2_{nullptr}, temporal_{nullptr};
  torch::nn::LayerNorm norm1_{nullptr}, norm2_{nullptr}, norm3_{nullptr};
};
TORCH_MODULE(DecoderLayer);

/// Instance queries shared across frames. Each layer runs self-attention over
/// the queries, per-frame cross-attention into the enriched tokens (giving the
/// box features), and a learned temporal weighting that folds the box
/// features back into one instance feature.
class DecoderImpl : public torch::nn::Module {
 public:
  explicit DecoderImpl(const ModelConfig& config);
  DecoderOutput forward(const MultiScaleFeatures& enriched, const std::vector<torch::Tensor>& positional);
  /// Same, with explicit q x d query embeddings.
  DecoderOutput forward_with_queries(const torch::Tensor& queries, const MultiScaleFeatures& enriched,
                                     const std::vector<torch::Tensor>& positional);
  const torch::Tensor& queries() const { return queries_; }

 private:
  torch::Tensor queries_;
  torch::nn::ModuleList layers_{nullptr};
};
TORCH_MODULE(Decoder);

/// Class-specific (C+1 way), class-agnostic (1 logit) and box branches.
class HeadsImpl : public torch::nn::Module {
 public:
  HeadsImpl(int d, int num_known);
  /// Throws ConfigError when the registry does not match the classifier width.
  BranchOutputs forward(const DecoderOutput& out, const ClassRegistry& registry);
  int num_known() const { return static_cast<int>(class_embed_->weight.size(0)) - 1; }
  /// Widens the classifier to `registry_new`, copying the columns of
  /// `registry_old`. Identical registries leave every parameter untouched.
  void incremental_extend(const ClassRegistry& registry_old, const ClassRegistry& registry_new);

 private:
  int d_;
  torch::nn::Linear class_embed_{nullptr}, objectness_{nullptr};
  torch::nn::Sequential box_mlp_{nullptr};
};
TORCH_MODULE(Heads);

/// Dynamic-kernel mask head. Enriched levels are resized to the 1/8 grid and
/// summed into a per-frame mask feature map; each instance feature generates
/// a small two-layer convolution applied to that map together with the
/// coordinates relative to the instance's box center.
class SegmentationHeadImpl : public torch::nn::Module {
 public:
  SegmentationHeadImpl(int d, int mask_dim);
  /// M x mask_dim x H/8 x W/8.
  torch::Tensor mask_features(const MultiScaleFeatures& enriched);
  /// instance: n x d, boxes: n x M x 4 (treated as constants). Returns mask
  /// logits n x M x H/8 x W/8.
  torch::Tensor forward(const torch::Tensor& instance, const torch::Tensor& mask_feats, const torch::Tensor& boxes);

 private:
  int mask_dim_;
  int hidden_ = 8;
  torch::nn::Conv2d lateral_{nullptr}, output_{nullptr};
  torch::nn::Linear controller_{nullptr};
};
TORCH_MODULE(SegmentationHead);

}  // namespace owvis
