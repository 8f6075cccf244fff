#include "owvis/decoder_heads.hpp"

#include <cmath>

#include "owvis/error.hpp"

namespace owvis {

namespace F = torch::nn::functional;

DecoderLayerImpl::DecoderLayerImpl(int d, int heads, int ffn_dim) {
  self_attn_ = register_module("self_attn", torch::nn::MultiheadAttention(torch::nn::MultiheadAttentionOptions(d, heads)));
  cross_attn_ =
      register_module("cross_attn", torch::nn::MultiheadAttention(torch::nn::MultiheadAttentionOptions(d, heads)));
  linear1_ = register_module("linear1", torch::nn::Linear(d, ffn_dim));
  linear2_ = register_module("linear2", torch::nn::Linear(ffn_dim, d));
  temporal_ = register_module("temporal", torch::nn::Linear(d, 1));
  norm1_ = register_module("norm1", torch::nn::LayerNorm(torch::nn::LayerNormOptions({d})));
  norm2_ = register_module("norm2", torch::nn::LayerNorm(torch::nn::LayerNormOptions({d})));
  norm3_ = register_module("norm3", torch::nn::LayerNorm(torch::nn::LayerNormOptions({d})));
}

DecoderOutput DecoderLayerImpl::forward(const torch::Tensor& inst, const torch::Tensor& box,
                                        const torch::Tensor& memory, const torch::Tensor& memory_pos) {
  auto q = inst.unsqueeze(1);  // q x 1 x d
  auto sa = std::get<0>(self_attn_->forward(q, q, q, {}, false)).squeeze(1);
  auto i = norm1_->forward(inst + sa);

  auto query = box + i.unsqueeze(1);  // q x M x d, one attention batch per frame
  auto ca = std::get<0>(cross_attn_->forward(query, memory + memory_pos, memory, {}, false));
  auto b = norm2_->forward(query + ca);
  b = norm3_->forward(b + linear2_->forward(torch::relu(linear1_->forward(b))));

  auto w = torch::softmax(temporal_->forward(b), 1);  // q x M x 1
  return {(w * b).sum(1), b};
}

DecoderImpl::DecoderImpl(const ModelConfig& config) {
  queries_ = register_parameter("queries", torch::randn({config.q, config.d}));
  layers_ = register_module("layers", torch::nn::ModuleList());
  for (int i = 0; i < config.dec_layers; ++i) layers_->push_back(DecoderLayer(config.d, config.heads, config.ffn_dim));
}

DecoderOutput DecoderImpl::forward(const MultiScaleFeatures& enriched, const std::vector<torch::Tensor>& positional) {
  return forward_with_queries(queries_, enriched, positional);
}

DecoderOutput DecoderImpl::forward_with_queries(const torch::Tensor& queries, const MultiScaleFeatures& enriched,
                                                const std::vector<torch::Tensor>& positional) {
  std::vector<torch::Tensor> maps;
  for (const auto& l : enriched.levels) maps.push_back(l.map);
  const auto memory = flatten_levels(maps);
  const auto pos = flatten_levels(positional);
  const int64_t m = enriched.frames();
  DecoderOutput out{queries, torch::zeros({queries.size(0), m, queries.size(1)}, queries.options())};
  for (const auto& layer : *layers_) out = layer->as<DecoderLayer>()->forward(out.instance, out.box, memory, pos);
  return out;
}

HeadsImpl::HeadsImpl(int d, int num_known) : d_(d) {
  class_embed_ = register_module("class_embed", torch::nn::Linear(d, num_known + 1));
  objectness_ = register_module("objectness", torch::nn::Linear(d, 1));
  box_mlp_ = register_module("box_mlp", torch::nn::Sequential(torch::nn::Linear(d, d), torch::nn::ReLU(),
                                                               torch::nn::Linear(d, d), torch::nn::ReLU(),
                                                               torch::nn::Linear(d, 4)));
  // Low foreground prior for the focal classification losses.
  const double prior = -std::log((1.0 - 0.01) / 0.01);
  torch::NoGradGuard guard;
  class_embed_->bias.fill_(prior);
  objectness_->bias.fill_(prior);
}

BranchOutputs HeadsImpl::forward(const DecoderOutput& out, const ClassRegistry& registry) {
  if (registry.num_known() != num_known())
    throw ConfigError("classifier has " + std::to_string(num_known()) + " known columns but the registry has " +
                      std::to_string(registry.num_known()) + "; call incremental_extend first");
  return {class_embed_->forward(out.instance), objectness_->forward(out.instance),
          torch::sigmoid(box_mlp_->forward(out.box))};
}

void HeadsImpl::incremental_extend(const ClassRegistry& registry_old, const ClassRegistry& registry_new) {
  if (registry_old.num_known() != num_known())
    throw ConfigError("incremental_extend: the old registry does not describe this classifier");
  if (!registry_new.contains_all(registry_old))
    throw ConfigError("incremental_extend: the new registry drops known classes");
  const auto& old_ids = registry_old.known_ids();
  const auto& new_ids = registry_new.known_ids();
  if (!std::equal(old_ids.begin(), old_ids.end(), new_ids.begin()))
    throw ConfigError("incremental_extend: new classes must be appended after the existing ones");
  if (new_ids.size() == old_ids.size()) return;

  auto widened = torch::nn::Linear(d_, registry_new.num_known() + 1);
  widened->to(class_embed_->weight.device(), class_embed_->weight.scalar_type());
  {
    torch::NoGradGuard guard;
    const int64_t keep = class_embed_->weight.size(0);
    widened->weight.slice(0, 0, keep).copy_(class_embed_->weight);
    widened->bias.slice(0, 0, keep).copy_(class_embed_->bias);
    widened->bias.slice(0, keep).fill_(-std::log((1.0 - 0.01) / 0.01));
  }
  class_embed_ = replace_module("class_embed", widened);
}

SegmentationHeadImpl::SegmentationHeadImpl(int d, int mask_dim) : mask_dim_(mask_dim) {
  lateral_ = register_module("lateral", torch::nn::Conv2d(torch::nn::Conv2dOptions(d, d, 3).padding(1)));
  output_ = register_module("output", torch::nn::Conv2d(torch::nn::Conv2dOptions(d, mask_dim, 1)));
  const int params = (mask_dim + 2) * hidden_ + hidden_ + hidden_ + 1;
  controller_ = register_module("controller", torch::nn::Linear(d, params));
}

torch::Tensor SegmentationHeadImpl::mask_features(const MultiScaleFeatures& enriched) {
  const auto& top = enriched.levels.front().map;
  const std::vector<int64_t> size = {top.size(2), top.size(3)};
  torch::Tensor sum;
  for (const auto& l : enriched.levels) {
    auto m = l.map;
    if (m.size(2) != size[0] || m.size(3) != size[1])
      m = F::interpolate(m, F::InterpolateFuncOptions().size(size).mode(torch::kBilinear).align_corners(false));
    sum = sum.defined() ? sum + m : m;
  }
  return output_->forward(torch::relu(lateral_->forward(sum)));
}

torch::Tensor SegmentationHeadImpl::forward(const torch::Tensor& instance, const torch::Tensor& mask_feats,
                                            const torch::Tensor& boxes) {
  const int64_t n = instance.size(0), m = mask_feats.size(0), h = mask_feats.size(2), w = mask_feats.size(3);
  if (n == 0) return torch::zeros({0, m, h, w}, mask_feats.options());
  const auto opts = mask_feats.options();
  // Relative coordinates of every cell center to each box center.
  const auto b = boxes.detach();
  const auto ys = ((torch::arange(h, opts) + 0.5) / static_cast<double>(h)).view({1, 1, h, 1});
  const auto xs = ((torch::arange(w, opts) + 0.5) / static_cast<double>(w)).view({1, 1, 1, w});
  const auto rel_x = (xs - b.select(2, 0).view({n, m, 1, 1})).expand({n, m, h, w});
  const auto rel_y = (ys - b.select(2, 1).view({n, m, 1, 1})).expand({n, m, h, w});
  const auto feats = mask_feats.unsqueeze(0).expand({n, m, mask_dim_, h, w});
  auto x = torch::cat({feats, rel_x.unsqueeze(2), rel_y.unsqueeze(2)}, 2);  // n x M x (C+2) x h x w
  x = x.flatten(3);                                                          // n x M x (C+2) x hw

  const auto p = controller_->forward(instance);
  const int in = mask_dim_ + 2;
  int64_t off = 0;
  auto take = [&](int64_t count) {
    auto t = p.slice(1, off, off + count);
    off += count;
    return t;
  };
  const auto w1 = take(static_cast<int64_t>(in) * hidden_).view({n, 1, hidden_, in});
  const auto b1 = take(hidden_).view({n, 1, hidden_, 1});
  const auto w2 = take(hidden_).view({n, 1, 1, hidden_});
  const auto b2 = take(1).view({n, 1, 1, 1});
  auto y = torch::relu(torch::matmul(w1, x) + b1);  // n x M x hidden x hw
  y = torch::matmul(w2, y) + b2;                    // n x M x 1 x hw
  return y.view({n, m, h, w});
}

}  // namespace owvis
