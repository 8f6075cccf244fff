#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "json.hpp"

namespace owvis {

// Defaults are the full-scale settings; configs/desk.json holds the toy-scale
// overrides.

struct ModelConfig {
  int d = 256;
  int q = 300;
  int enc_layers = 6;
  int dec_layers = 6;
  int heads = 8;
  int ffn_dim = 1024;
  int clip_frames = 5;
  int mask_dim = 8;
  int backbone_width = 64;
  int max_frames = 64;
  bool use_scratchnet = true;
  bool use_fusion = true;
  bool freeze_backbone = false;
};

struct StoConfig {
  int p_u = 5;
  bool normalize = false;     // divide S_fg and S_bg by their set sizes
  bool contrastive = true;    // add L_contr to the objective
  std::string pseudo_source = "sto";  // "sto" or "backbone"
};

struct LossConfig {
  double alpha = 1.0;
  double focal_gamma = 2.0;
  double focal_alpha = 0.25;
  double w_cls = 2.0;
  double w_box = 5.0;
  double w_giou = 2.0;
  bool literal_l1_mask = false;
};

struct ScheduleConfig {
  int task1_epochs = 18;
  int task2_epochs = 12;
  int finetune_epochs = 2;
  double learning_rate = 1e-4;
  double weight_decay = 1e-4;
  double grad_clip = 0.1;
  int clips_per_video = 1;
};

struct ProtocolConfig {
  int exemplars_per_class = 20;
  int top_k = 10;
  double score_threshold = 0.05;
  bool replay = true;
};

struct DataConfig {
  std::string annotations;
  std::string split;
};

struct RunConfig {
  ModelConfig model;
  StoConfig sto;
  LossConfig loss;
  ScheduleConfig schedule;
  ProtocolConfig protocol;
  DataConfig data;
  std::uint64_t seed = 42;
  bool deterministic = true;
  std::string output_dir;

  void validate() const;
  nlohmann::json to_json() const;
  static RunConfig from_json(const nlohmann::json& j);

  /// Hash of the canonical JSON of everything that shapes a trained model
  /// (data paths and the output directory excluded).
  std::string fingerprint() const;
};

/// Applies "a.b.c=value" to a JSON document. The value is parsed as JSON when
/// possible and kept as a string otherwise.
void apply_override(nlohmann::json& doc, const std::string& assignment);

RunConfig load_run_config(const std::string& path, const std::vector<std::string>& overrides);

/// Toy-scale settings used by the synthetic end-to-end runs.
RunConfig desk_run_config();

std::string sha256_hex(const std::string& data);

}  // namespace owvis
