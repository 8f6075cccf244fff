#include "owvis/feature_net.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "owvis/error.hpp"

namespace owvis {

namespace F = torch::nn::functional;

std::vector<const FeatureLevel*> MultiScaleFeatures::at_scale(double scale) const {
  std::vector<const FeatureLevel*> out;
  for (const auto& l : levels)
    if (std::abs(l.scale - scale) < 1e-12) out.push_back(&l);
  return out;
}

namespace {

int group_count(int channels) { return channels % 8 == 0 ? 8 : 1; }

torch::nn::Sequential conv_block(int in, int out, int stride) {
  return torch::nn::Sequential(
      torch::nn::Conv2d(torch::nn::Conv2dOptions(in, out, 3).stride(stride).padding(1)),
      torch::nn::GroupNorm(group_count(out), out), torch::nn::ReLU());
}

torch::nn::Sequential projection(int in, int d) {
  return torch::nn::Sequential(torch::nn::Conv2d(torch::nn::Conv2dOptions(in, d, 1)),
                               torch::nn::GroupNorm(group_count(d), d));
}

void check_frames(const torch::Tensor& x, int multiple, const char* who) {
  if (x.dim() != 4 || x.size(1) != 3)
    throw ShapeError(std::string(who) + ": expected M x 3 x H x W frames");
  if (x.size(2) % multiple != 0 || x.size(3) % multiple != 0)
    throw ShapeError(std::string(who) + ": H and W must be multiples of " + std::to_string(multiple) + ", got " +
                     std::to_string(x.size(2)) + "x" + std::to_string(x.size(3)));
}

}  // namespace

BackboneImpl::BackboneImpl(int width, int d) {
  // 1/4 stem, then one stride-2 block per output stage.
  auto stem = conv_block(3, width, 2);
  stem->extend(*conv_block(width, width, 2));
  stem_ = register_module("stem", stem);
  stage3_ = register_module("stage3", conv_block(width, 2 * width, 2));
  stage4_ = register_module("stage4", conv_block(2 * width, 4 * width, 2));
  stage5_ = register_module("stage5", conv_block(4 * width, 8 * width, 2));
  proj3_ = register_module("proj3", projection(2 * width, d));
  proj4_ = register_module("proj4", projection(4 * width, d));
  proj5_ = register_module("proj5", projection(8 * width, d));
}

MultiScaleFeatures BackboneImpl::forward(const torch::Tensor& frames) {
  check_frames(frames, 16, "backbone");
  const auto c2 = stem_->forward(frames);
  const auto c3 = stage3_->forward(c2);
  const auto c4 = stage4_->forward(c3);
  const auto c5 = stage5_->forward(c4);
  MultiScaleFeatures out;
  out.levels.push_back({1.0 / 8, proj3_->forward(c3), 0, false});
  out.levels.push_back({1.0 / 16, proj4_->forward(c4), 1, false});
  out.levels.push_back({1.0 / 32, proj5_->forward(c5), 2, false});
  return out;
}

void BackboneImpl::set_frozen(bool frozen) {
  for (auto& p : parameters()) p.set_requires_grad(!frozen);
}

ScratchNetImpl::ScratchNetImpl(int d) {
  const auto opts = [](int in, int out) {
    return torch::nn::Conv3dOptions(in, out, {4, 4, 4}).stride({1, 4, 4});
  };
  conv1_ = register_module("conv1", torch::nn::Conv3d(opts(3, d)));
  norm1_ = register_module("norm1", torch::nn::LayerNorm(torch::nn::LayerNormOptions({d})));
  conv2_ = register_module("conv2", torch::nn::Conv3d(opts(d, d)));
  norm2_ = register_module("norm2", torch::nn::LayerNorm(torch::nn::LayerNormOptions({d})));
}

torch::Tensor ScratchNetImpl::stage(const torch::Tensor& x, torch::nn::Conv3d& conv, torch::nn::LayerNorm& norm) {
  // A temporal kernel of 4 at stride 1 keeps M frames with 1 frame of zero
  // padding in front and 2 behind.
  auto y = conv->forward(F::pad(x, F::PadFuncOptions({0, 0, 0, 0, 1, 2})));
  y = norm->forward(y.permute({0, 2, 3, 4, 1})).permute({0, 4, 1, 2, 3});
  return y;
}

torch::Tensor ScratchNetImpl::forward(const torch::Tensor& frames) {
  check_frames(frames, 16, "ScratchNet");
  auto x = frames.permute({1, 0, 2, 3}).unsqueeze(0);  // 1 x 3 x M x H x W
  x = torch::relu(stage(x, conv1_, norm1_));
  x = stage(x, conv2_, norm2_);
  return x.squeeze(0).permute({1, 0, 2, 3}).contiguous();
}

MultiScaleFeatures assemble_extended(const MultiScaleFeatures& backbone, const torch::Tensor& scratch) {
  if (backbone.levels.empty()) throw ShapeError("assemble_extended: no backbone levels");
  const int64_t d = backbone.channels(), m = backbone.frames();
  for (const auto& l : backbone.levels)
    if (l.map.size(1) != d || l.map.size(0) != m) throw ShapeError("assemble_extended: backbone levels disagree");
  std::vector<FeatureLevel> levels = backbone.levels;
  std::stable_sort(levels.begin(), levels.end(), [](const FeatureLevel& a, const FeatureLevel& b) {
    return a.map.size(2) * a.map.size(3) > b.map.size(2) * b.map.size(3);
  });
  if (scratch.defined()) {
    if (scratch.dim() != 4) throw ShapeError("assemble_extended: ScratchNet map must be M x d x h x w");
    if (scratch.size(1) != d)
      throw ShapeError("assemble_extended: ScratchNet map has " + std::to_string(scratch.size(1)) +
                       " channels, backbone has " + std::to_string(d));
    if (scratch.size(0) != m) throw ShapeError("assemble_extended: ScratchNet frame count differs");
    auto pos = std::find_if(levels.begin(), levels.end(), [&](const FeatureLevel& l) {
      return l.map.size(2) == scratch.size(2) && l.map.size(3) == scratch.size(3);
    });
    if (pos == levels.end()) {
      pos = std::find_if(levels.begin(), levels.end(), [&](const FeatureLevel& l) {
        return l.map.size(2) * l.map.size(3) < scratch.size(2) * scratch.size(3);
      });
      levels.insert(pos, FeatureLevel{1.0 / 16, scratch, 0, true});
    } else {
      levels.insert(pos + 1, FeatureLevel{pos->scale, scratch, 0, true});
    }
  }
  for (std::size_t i = 0; i < levels.size(); ++i) levels[i].level = static_cast<int>(i);
  return MultiScaleFeatures{levels};
}

torch::Tensor sine_position_encoding(int d, int h, int w, torch::TensorOptions options) {
  const int half = d / 2;
  const double scale = 2.0 * std::numbers::pi;
  auto y = (torch::arange(1, h + 1, options) / static_cast<double>(h) * scale).view({h, 1, 1});
  auto x = (torch::arange(1, w + 1, options) / static_cast<double>(w) * scale).view({1, w, 1});
  auto idx = torch::arange(half, options);
  auto dim_t = torch::pow(10000.0, 2.0 * torch::floor(idx / 2) / static_cast<double>(half));
  auto py = (y / dim_t).expand({h, w, half}).clone();
  auto px = (x / dim_t).expand({h, w, half}).clone();
  auto even = torch::arange(0, half, 2, torch::kLong);
  auto odd = torch::arange(1, half, 2, torch::kLong);
  py.index_put_({torch::indexing::Ellipsis, even}, torch::sin(py.index({torch::indexing::Ellipsis, even})));
  py.index_put_({torch::indexing::Ellipsis, odd}, torch::cos(py.index({torch::indexing::Ellipsis, odd})));
  px.index_put_({torch::indexing::Ellipsis, even}, torch::sin(px.index({torch::indexing::Ellipsis, even})));
  px.index_put_({torch::indexing::Ellipsis, odd}, torch::cos(px.index({torch::indexing::Ellipsis, odd})));
  return torch::cat({py, px}, 2).permute({2, 0, 1}).contiguous();
}

EncoderLayerImpl::EncoderLayerImpl(int d, int heads, int ffn_dim) {
  attn_ = register_module("attn", torch::nn::MultiheadAttention(torch::nn::MultiheadAttentionOptions(d, heads)));
  linear1_ = register_module("linear1", torch::nn::Linear(d, ffn_dim));
  linear2_ = register_module("linear2", torch::nn::Linear(ffn_dim, d));
  norm1_ = register_module("norm1", torch::nn::LayerNorm(torch::nn::LayerNormOptions({d})));
  norm2_ = register_module("norm2", torch::nn::LayerNorm(torch::nn::LayerNormOptions({d})));
}

torch::Tensor EncoderLayerImpl::forward(const torch::Tensor& src, const torch::Tensor& pos) {
  const auto q = src + pos;
  auto attended = std::get<0>(attn_->forward(q, q, src, {}, false));
  auto x = norm1_->forward(src + attended);
  auto ff = linear2_->forward(torch::relu(linear1_->forward(x)));
  return norm2_->forward(x + ff);
}

EncoderImpl::EncoderImpl(const ModelConfig& config) : d_(config.d), num_layers_(config.enc_layers) {
  layers_ = register_module("layers", torch::nn::ModuleList());
  for (int i = 0; i < num_layers_; ++i) layers_->push_back(EncoderLayer(config.d, config.heads, config.ffn_dim));
  if (num_layers_ > 1) {
    for (int k = 0; k < kMaxLevels; ++k) {
      auto conv = torch::nn::Conv2d(torch::nn::Conv2dOptions((num_layers_ - 1) * config.d, config.d, 1));
      fusion_.push_back(register_module("fusion" + std::to_string(k), conv));
    }
  }
  level_embed_ = register_parameter("level_embed", torch::randn({kMaxLevels, config.d}) * 0.02);
  frame_embed_ = register_parameter("frame_embed", torch::zeros({config.max_frames, config.d}));
  fusion_enabled_ = config.use_fusion;
}

std::vector<torch::Tensor> EncoderImpl::positional_encodings(const MultiScaleFeatures& features) {
  std::vector<torch::Tensor> out;
  const int64_t m = features.frames();
  if (m > frame_embed_.size(0))
    throw ShapeError("clip of " + std::to_string(m) + " frames exceeds the frame embedding table");
  const auto frames = frame_embed_.slice(0, 0, m).view({m, d_, 1, 1});
  for (const auto& l : features.levels) {
    if (l.level >= kMaxLevels) throw ShapeError("too many feature levels");
    const auto opts = l.map.options().requires_grad(false);
    const auto sine = sine_position_encoding(d_, static_cast<int>(l.map.size(2)), static_cast<int>(l.map.size(3)), opts);
    out.push_back(sine.unsqueeze(0) + level_embed_[l.level].view({1, d_, 1, 1}) + frames);
  }
  return out;
}

torch::Tensor flatten_levels(const std::vector<torch::Tensor>& maps) {
  std::vector<torch::Tensor> tokens;
  for (const auto& m : maps) tokens.push_back(m.flatten(2).permute({2, 0, 1}));  // hw x M x d
  return torch::cat(tokens, 0);
}

EncoderOutput EncoderImpl::forward(const MultiScaleFeatures& extended, const std::vector<torch::Tensor>& positional) {
  if (positional.size() != extended.levels.size()) throw ShapeError("encoder: one positional map per level expected");
  std::vector<torch::Tensor> maps;
  std::vector<int64_t> sizes;
  for (const auto& l : extended.levels) {
    if (l.map.size(1) != d_) throw ShapeError("encoder: feature width differs from d");
    maps.push_back(l.map);
    sizes.push_back(l.map.size(2) * l.map.size(3));
  }
  auto x = flatten_levels(maps);
  const auto pos = flatten_levels(positional);

  EncoderOutput out;
  for (int i = 0; i < num_layers_; ++i) {
    x = layers_[static_cast<std::size_t>(i)]->as<EncoderLayer>()->forward(x, pos);
    MultiScaleFeatures layer;
    const auto chunks = x.split_with_sizes(sizes, 0);
    for (std::size_t k = 0; k < extended.levels.size(); ++k) {
      FeatureLevel l = extended.levels[k];
      l.map = chunks[k].permute({1, 2, 0}).reshape(l.map.sizes());
      layer.levels.push_back(std::move(l));
    }
    out.layer_outputs.push_back(std::move(layer));
  }

  out.enriched = out.layer_outputs.back();
  if (fusion_enabled_ && num_layers_ > 1) {
    for (std::size_t k = 0; k < out.enriched.levels.size(); ++k) {
      std::vector<torch::Tensor> inter;
      for (int i = 0; i + 1 < num_layers_; ++i) inter.push_back(out.layer_outputs[static_cast<std::size_t>(i)].levels[k].map);
      auto& level = out.enriched.levels[k];
      level.map = level.map + fusion_[static_cast<std::size_t>(level.level)]->forward(torch::cat(inter, 1));
    }
  }
  return out;
}

void EncoderImpl::zero_fusion() {
  torch::NoGradGuard guard;
  for (auto& c : fusion_) {
    c->weight.zero_();
    c->bias.zero_();
  }
}

}  // namespace owvis
