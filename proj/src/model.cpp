#include "owvis/model.hpp"

#include <cstring>

#include "owvis/error.hpp"

namespace owvis {

OwVisModelImpl::OwVisModelImpl(const ModelConfig& config, const ClassRegistry& registry)
    : config_(config), registry_(registry) {
  backbone = register_module("backbone", Backbone(config.backbone_width, config.d));
  if (config.use_scratchnet) scratch = register_module("scratch", ScratchNet(config.d));
  encoder = register_module("encoder", Encoder(config));
  decoder = register_module("decoder", Decoder(config));
  heads = register_module("heads", Heads(config.d, registry.num_known()));
  segmentation = register_module("segmentation", SegmentationHead(config.d, config.mask_dim));
  objectness = register_module("objectness", ObjectnessHead(config.d));
  if (config.freeze_backbone) backbone->set_frozen(true);
}

torch::Tensor OwVisModelImpl::sto_input(const MultiScaleFeatures& enriched) {
  torch::Tensor sum;
  for (const FeatureLevel* l : enriched.at_scale(1.0 / 16)) sum = sum.defined() ? sum + l->map : l->map;
  if (!sum.defined()) throw ShapeError("no 1/16 feature level for the objectness head");
  return sum;
}

ForwardOutput OwVisModelImpl::forward(const torch::Tensor& frames) {
  ForwardOutput out;
  out.backbone = backbone->forward(frames);
  const torch::Tensor s = scratch ? scratch->forward(frames) : torch::Tensor();
  out.extended = assemble_extended(out.backbone, s);
  out.positional = encoder->positional_encodings(out.extended);
  out.encoder = encoder->forward(out.extended, out.positional);
  out.objectness_map = objectness->forward(sto_input(out.encoder.enriched));
  out.decoder = decoder->forward(out.encoder.enriched, out.positional);
  out.branches = heads->forward(out.decoder, registry_);
  out.mask_features = segmentation->mask_features(out.encoder.enriched);
  return out;
}

torch::Tensor OwVisModelImpl::predict_masks(const ForwardOutput& out, const std::vector<int64_t>& queries) {
  const auto idx = torch::tensor(queries, torch::kLong);
  return segmentation->forward(out.decoder.instance.index_select(0, idx), out.mask_features,
                               out.branches.boxes.index_select(0, idx));
}

void OwVisModelImpl::incremental_extend(const ClassRegistry& registry_new) {
  heads->incremental_extend(registry_, registry_new);
  registry_ = registry_new;
}

torch::Tensor clip_tensor(const VideoClip& clip, torch::Dtype dtype) {
  const int m = clip.frame_count(), h = clip.height(), w = clip.width();
  auto t = torch::empty({m, 3, h, w}, torch::kFloat32);
  for (int f = 0; f < m; ++f) {
    const auto& img = clip.frames[static_cast<std::size_t>(f)];
    if (img.height != h || img.width != w) throw ShapeError("clip frames differ in resolution");
    std::memcpy(t[f].data_ptr<float>(), img.data.data(), img.data.size() * sizeof(float));
  }
  return t.to(dtype);
}

}  // namespace owvis
