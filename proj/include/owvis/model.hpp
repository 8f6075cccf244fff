#pragma once

#include <torch/torch.h>

#include <vector>

#include "owvis/config.hpp"
#include "owvis/data_model.hpp"
#include "owvis/decoder_heads.hpp"
#include "owvis/feature_net.hpp"
#include "owvis/sto.hpp"

namespace owvis {

struct ForwardOutput {
  MultiScaleFeatures backbone;
  MultiScaleFeatures extended;
  std::vector<torch::Tensor> positional;
  EncoderOutput encoder;
  torch::Tensor objectness_map;  // M x H/16 x W/16
  DecoderOutput decoder;
  BranchOutputs branches;
  torch::Tensor mask_features;  // M x mask_dim x H/8 x W/8

  const MultiScaleFeatures& enriched() const { return encoder.enriched; }
};

/// The complete network: backbone, optional ScratchNet, fused encoder,
/// decoder, prediction branches, segmentation block and objectness head.
class OwVisModelImpl : public torch::nn::Module {
 public:
  OwVisModelImpl(const ModelConfig& config, const ClassRegistry& registry);

  ForwardOutput forward(const torch::Tensor& frames);
  /// Mask logits (n x M x H/8 x W/8) for the listed queries.
  torch::Tensor predict_masks(const ForwardOutput& out, const std::vector<int64_t>& queries);
  /// Sum of the enriched 1/16 entries, the objectness head's input.
  static torch::Tensor sto_input(const MultiScaleFeatures& enriched);

  void incremental_extend(const ClassRegistry& registry_new);

  const ModelConfig& config() const { return config_; }
  const ClassRegistry& registry() const { return registry_; }
  void set_registry(const ClassRegistry& r) { registry_ = r; }

  Backbone backbone{nullptr};
  ScratchNet scratch{nullptr};
  Encoder encoder{nullptr};
  Decoder decoder{nullptr};
  Heads heads{nullptr};
  SegmentationHead segmentation{nullptr};
  ObjectnessHead objectness{nullptr};

 private:
  ModelConfig config_;
  ClassRegistry registry_;
};
TORCH_MODULE(OwVisModel);

/// M x 3 x H x W tensor of the clip's frames.
torch::Tensor clip_tensor(const VideoClip& clip, torch::Dtype dtype = torch::kFloat32);

}  // namespace owvis
