#pragma once

#include <torch/torch.h>

#include <vector>

#include "owvis/config.hpp"

namespace owvis {

/// One entry of a multi-scale feature set. `map` is M x d x h x w.
struct FeatureLevel {
  double scale = 1.0;
  torch::Tensor map;
  int level = 0;         // index into the scale-level embedding table
  bool scratch = false;  // produced by ScratchNet
};

struct MultiScaleFeatures {
  std::vector<FeatureLevel> levels;

  int frames() const { return levels.empty() ? 0 : static_cast<int>(levels.front().map.size(0)); }
  int channels() const { return levels.empty() ? 0 : static_cast<int>(levels.front().map.size(1)); }
  /// Entries whose scale equals `scale`.
  std::vector<const FeatureLevel*> at_scale(double scale) const;
};

/// Maximum number of feature levels (three backbone stages plus ScratchNet).
inline constexpr int kMaxLevels = 4;

/// Strided CNN producing 1/8, 1/16 and 1/32 maps, each projected to d
/// channels by a 1x1 convolution. Stands in for a pretrained backbone.
class BackboneImpl : public torch::nn::Module {
 public:
  BackboneImpl(int width, int d);
  MultiScaleFeatures forward(const torch::Tensor& frames);
  void set_frozen(bool frozen);

 private:
  torch::nn::Sequential stem_{nullptr}, stage3_{nullptr}, stage4_{nullptr}, stage5_{nullptr};
  torch::nn::Sequential proj3_{nullptr}, proj4_{nullptr}, proj5_{nullptr};
};
TORCH_MODULE(Backbone);

/// Two 3D convolutions (kernel 4x4x4, spatial stride 4, temporal stride 1),
/// each followed by layer normalization over channels. Maps M x 3 x H x W to
/// M x d x H/16 x W/16. Always randomly initialized.
class ScratchNetImpl : public torch::nn::Module {
 public:
  explicit ScratchNetImpl(int d);
  torch::Tensor forward(const torch::Tensor& frames);

 private:
  torch::Tensor stage(const torch::Tensor& x, torch::nn::Conv3d& conv, torch::nn::LayerNorm& norm);

  torch::nn::Conv3d conv1_{nullptr}, conv2_{nullptr};
  torch::nn::LayerNorm norm1_{nullptr}, norm2_{nullptr};
};
TORCH_MODULE(ScratchNet);

/// Orders backbone levels by spatial area (largest first) and inserts the
/// ScratchNet map as its own level right after the backbone level of equal
/// resolution. Level ids follow the final order. Throws ShapeError when
/// channel or frame counts disagree.
MultiScaleFeatures assemble_extended(const MultiScaleFeatures& backbone, const torch::Tensor& scratch);

/// Fixed 2D sinusoidal encoding, d x h x w.
torch::Tensor sine_position_encoding(int d, int h, int w, torch::TensorOptions options);

class EncoderLayerImpl : public torch::nn::Module {
 public:
  EncoderLayerImpl(int d, int heads, int ffn_dim);
  /// src, pos: N x B x d (tokens, frames, channels).
  torch::Tensor forward(const torch::Tensor& src, const torch::Tensor& pos);

 private:
  torch::nn::MultiheadAttention attn_{nullptr};
  torch::nn::Linear linear1_{nullptr}, linear2_{nullptr};
  torch::nn::LayerNorm norm1_{nullptr}, norm2_{nullptr};
};
TORCH_MODULE(EncoderLayer);

struct EncoderOutput {
  MultiScaleFeatures enriched;
  std::vector<MultiScaleFeatures> layer_outputs;  // one per encoder layer
};

/// Dense multi-head attention over the concatenated multi-scale tokens of
/// each frame. Outputs of all but the last layer are concatenated per scale,
/// fused by a 1x1 convolution and added to the last layer's output.
class EncoderImpl : public torch::nn::Module {
 public:
  EncoderImpl(const ModelConfig& config);

  /// Sinusoidal + scale-level + frame-index encodings, one M x d x h x w
  /// tensor per level.
  std::vector<torch::Tensor> positional_encodings(const MultiScaleFeatures& features);
  EncoderOutput forward(const MultiScaleFeatures& extended, const std::vector<torch::Tensor>& positional);

  void set_fusion_enabled(bool enabled) { fusion_enabled_ = enabled; }
  bool fusion_enabled() const { return fusion_enabled_; }
  /// Zeroes every fusion weight and bias.
  void zero_fusion();
  const std::vector<torch::nn::Conv2d>& fusion_convs() const { return fusion_; }

 private:
  int d_;
  int num_layers_;
  bool fusion_enabled_ = true;
  torch::nn::ModuleList layers_{nullptr};
  std::vector<torch::nn::Conv2d> fusion_;
  torch::Tensor level_embed_;
  torch::Tensor frame_embed_;
};
TORCH_MODULE(Encoder);

/// Flattens levels into an N x M x d token tensor (levels concatenated in order).
torch::Tensor flatten_levels(const std::vector<torch::Tensor>& maps);

}  // namespace owvis
