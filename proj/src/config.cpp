#include "owvis/config.hpp"

#include <openssl/evp.h>

#include <array>
#include <cstdio>

#include "owvis/annotations.hpp"
#include "owvis/error.hpp"

namespace owvis {

using nlohmann::json;

NLOHMANN_DEFINE_TYPE_NON_INTRUSIVE_WITH_DEFAULT(ModelConfig, d, q, enc_layers, dec_layers, heads, ffn_dim,
                                                clip_frames, mask_dim, backbone_width, max_frames, use_scratchnet,
                                                use_fusion, freeze_backbone)
NLOHMANN_DEFINE_TYPE_NON_INTRUSIVE_WITH_DEFAULT(StoConfig, p_u, normalize, contrastive, pseudo_source)
NLOHMANN_DEFINE_TYPE_NON_INTRUSIVE_WITH_DEFAULT(LossConfig, alpha, focal_gamma, focal_alpha, w_cls, w_box, w_giou,
                                                literal_l1_mask)
NLOHMANN_DEFINE_TYPE_NON_INTRUSIVE_WITH_DEFAULT(ScheduleConfig, task1_epochs, task2_epochs, finetune_epochs,
                                                learning_rate, weight_decay, grad_clip, clips_per_video)
NLOHMANN_DEFINE_TYPE_NON_INTRUSIVE_WITH_DEFAULT(ProtocolConfig, exemplars_per_class, top_k, score_threshold, replay)
NLOHMANN_DEFINE_TYPE_NON_INTRUSIVE_WITH_DEFAULT(DataConfig, annotations, split)

void RunConfig::validate() const {
  const auto& m = model;
  if (m.d < 1 || m.q < 1 || m.enc_layers < 1 || m.dec_layers < 1 || m.heads < 1 || m.ffn_dim < 1 ||
      m.clip_frames < 1 || m.mask_dim < 1 || m.backbone_width < 1 || m.max_frames < 1)
    throw ConfigError("model dimensions must be positive");
  if (m.d % m.heads != 0) throw ConfigError("model.d must be divisible by model.heads");
  if (m.d % 2 != 0) throw ConfigError("model.d must be even for sinusoidal encodings");
  if (sto.p_u < 0) throw ConfigError("sto.p_u must be >= 0");
  if (sto.pseudo_source != "sto" && sto.pseudo_source != "backbone")
    throw ConfigError("sto.pseudo_source must be 'sto' or 'backbone'");
  if (loss.alpha < 0 || loss.focal_gamma < 0 || loss.focal_alpha < 0 || loss.focal_alpha > 1)
    throw ConfigError("loss weights out of range");
  const auto& s = schedule;
  if (s.task1_epochs < 1 || s.task2_epochs < 1 || s.finetune_epochs < 1 || s.learning_rate <= 0 ||
      s.clips_per_video < 1)
    throw ConfigError("schedule values must be positive");
  if (protocol.exemplars_per_class < 1 || protocol.top_k < 1) throw ConfigError("protocol values must be positive");
}

json RunConfig::to_json() const {
  return {{"model", model},       {"sto", sto},   {"loss", loss},
          {"schedule", schedule}, {"protocol", protocol}, {"data", data},
          {"seed", seed},         {"deterministic", deterministic}, {"output_dir", output_dir}};
}

RunConfig RunConfig::from_json(const json& j) {
  RunConfig c;
  try {
    if (j.contains("model")) c.model = j.at("model").get<ModelConfig>();
    if (j.contains("sto")) c.sto = j.at("sto").get<StoConfig>();
    if (j.contains("loss")) c.loss = j.at("loss").get<LossConfig>();
    if (j.contains("schedule")) c.schedule = j.at("schedule").get<ScheduleConfig>();
    if (j.contains("protocol")) c.protocol = j.at("protocol").get<ProtocolConfig>();
    if (j.contains("data")) c.data = j.at("data").get<DataConfig>();
    c.seed = j.value("seed", c.seed);
    c.deterministic = j.value("deterministic", c.deterministic);
    c.output_dir = j.value("output_dir", c.output_dir);
  } catch (const json::exception& e) {
    throw ParseError(std::string("run config: ") + e.what());
  }
  c.validate();
  return c;
}

std::string RunConfig::fingerprint() const {
  const json canonical = {{"model", model},       {"sto", sto},           {"loss", loss},
                          {"schedule", schedule}, {"protocol", protocol}, {"seed", seed}};
  return sha256_hex(canonical.dump()).substr(0, 16);
}

void apply_override(json& doc, const std::string& assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string::npos || eq == 0) throw ConfigError("override '" + assignment + "' is not key=value");
  const std::string path = assignment.substr(0, eq);
  const std::string raw = assignment.substr(eq + 1);
  json value;
  try {
    value = json::parse(raw);
  } catch (const json::parse_error&) {
    value = raw;
  }
  json* node = &doc;
  std::size_t start = 0;
  while (true) {
    const auto dot = path.find('.', start);
    const std::string key = path.substr(start, dot == std::string::npos ? std::string::npos : dot - start);
    if (key.empty()) throw ConfigError("override '" + assignment + "' has an empty key");
    if (dot == std::string::npos) {
      (*node)[key] = value;
      return;
    }
    node = &(*node)[key];
    start = dot + 1;
  }
}

RunConfig load_run_config(const std::string& path, const std::vector<std::string>& overrides) {
  json doc = path.empty() ? json::object() : read_json_file(path);
  for (const auto& o : overrides) apply_override(doc, o);
  return RunConfig::from_json(doc);
}

RunConfig desk_run_config() {
  RunConfig c;
  c.model.d = 64;
  c.model.q = 20;
  c.model.enc_layers = 2;
  c.model.dec_layers = 2;
  c.model.heads = 4;
  c.model.ffn_dim = 128;
  c.model.clip_frames = 3;
  c.model.backbone_width = 16;
  c.model.mask_dim = 8;
  c.sto.p_u = 3;
  c.schedule.task1_epochs = 18;
  c.schedule.task2_epochs = 12;
  c.schedule.finetune_epochs = 2;
  c.schedule.clips_per_video = 6;
  c.schedule.grad_clip = 1.0;
  c.protocol.exemplars_per_class = 2;
  c.protocol.top_k = 3;
  c.seed = 42;
  return c;
}

std::string sha256_hex(const std::string& data) {
  std::array<unsigned char, EVP_MAX_MD_SIZE> digest{};
  unsigned int len = 0;
  if (EVP_Digest(data.data(), data.size(), digest.data(), &len, EVP_sha256(), nullptr) != 1)
    throw Error("SHA-256 digest failed");
  std::string hex;
  char buf[3];
  for (unsigned int i = 0; i < len; ++i) {
    std::snprintf(buf, sizeof(buf), "%02x", digest[i]);
    hex += buf;
  }
  return hex;
}

}  // namespace owvis
