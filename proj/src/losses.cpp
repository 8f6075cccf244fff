#include "owvis/losses.hpp"

#include <cmath>

#include "owvis/error.hpp"

namespace owvis {

namespace F = torch::nn::functional;

CostMatrix match_cost(const BranchOutputs& out, const std::vector<TargetInstance>& targets, const LossConfig& config) {
  const int q = static_cast<int>(out.class_logits.size(0));
  const int k = static_cast<int>(targets.size());
  const auto probs = torch::softmax(out.class_logits.detach().to(torch::kCPU, torch::kFloat64), -1).contiguous();
  const auto boxes = out.boxes.detach().to(torch::kCPU, torch::kFloat64).contiguous();
  const auto pa = probs.accessor<double, 2>();
  const auto ba = boxes.accessor<double, 3>();
  const int m = static_cast<int>(boxes.size(1));
  CostMatrix cost(q, k);
  for (int j = 0; j < k; ++j) {
    const auto& t = targets[static_cast<std::size_t>(j)];
    if (static_cast<int>(t.boxes.size()) != m) throw ShapeError("match_cost: target frame count differs from the clip");
    if (t.column < 1 || t.column >= probs.size(1)) throw ValidationError("match_cost: target class is not known");
    for (int i = 0; i < q; ++i) {
      double l1 = 0.0, giou = 0.0;
      int present = 0;
      for (int f = 0; f < m; ++f) {
        const Box& g = t.boxes[static_cast<std::size_t>(f)];
        if (g.is_empty()) continue;
        const Box p{ba[i][f][0], ba[i][f][1], ba[i][f][2], ba[i][f][3]};
        l1 += box_l1(p, g);
        giou += 1.0 - generalized_iou(p, g);
        ++present;
      }
      if (present > 0) {
        l1 /= present;
        giou /= present;
      }
      cost.at(i, j) = config.w_cls * (1.0 - pa[i][t.column]) + config.w_box * l1 + config.w_giou * giou;
    }
  }
  return cost;
}

MatchResult hungarian_match(const BranchOutputs& out, const std::vector<TargetInstance>& targets,
                            const LossConfig& config) {
  const auto q = out.class_logits.size(0);
  if (static_cast<int64_t>(targets.size()) > q)
    throw ConfigError("clip holds " + std::to_string(targets.size()) + " instances but the model has only " +
                      std::to_string(q) + " queries");
  if (targets.empty()) return {};
  return solve_assignment(match_cost(out, targets, config));
}

torch::Tensor focal_loss(const torch::Tensor& logits, const torch::Tensor& targets, double gamma, double alpha,
                         double normalizer) {
  const auto logp = torch::log_softmax(logits, -1).gather(1, targets.to(torch::kLong).view({-1, 1})).squeeze(1);
  const auto p = logp.exp();
  return (-alpha * torch::pow(1.0 - p, gamma) * logp).sum() / normalizer;
}

torch::Tensor sigmoid_focal_loss(const torch::Tensor& logits, const torch::Tensor& targets, double gamma,
                                 double alpha, double normalizer) {
  const auto p = torch::sigmoid(logits);
  const auto ce = F::binary_cross_entropy_with_logits(
      logits, targets, F::BinaryCrossEntropyWithLogitsFuncOptions().reduction(torch::kNone));
  const auto p_t = p * targets + (1 - p) * (1 - targets);
  auto loss = ce * torch::pow(1 - p_t, gamma);
  if (alpha >= 0) loss = (alpha * targets + (1 - alpha) * (1 - targets)) * loss;
  return loss.sum() / normalizer;
}

torch::Tensor dice_loss(const torch::Tensor& logits, const torch::Tensor& targets) {
  const auto p = torch::sigmoid(logits).flatten(1);
  const auto t = targets.flatten(1);
  const auto num = 2 * (p * t).sum(1) + 1;
  const auto den = p.sum(1) + t.sum(1) + 1;
  return (1 - num / den).mean();
}

RegressionLoss regression_loss(const torch::Tensor& pred_boxes, const torch::Tensor& mask_logits,
                               const std::vector<TargetInstance>& targets, const MatchResult& match,
                               const LossConfig& config) {
  const auto opts = pred_boxes.options();
  RegressionLoss out{torch::zeros({}, opts), torch::zeros({}, opts)};
  if (match.assignment.empty()) return out;

  std::vector<torch::Tensor> per_instance;
  for (const auto& [qi, gi] : match.assignment) {
    const auto& t = targets[static_cast<std::size_t>(gi)];
    std::vector<int64_t> frames;
    std::vector<double> flat;
    for (std::size_t f = 0; f < t.boxes.size(); ++f) {
      if (t.boxes[f].is_empty()) continue;
      frames.push_back(static_cast<int64_t>(f));
      flat.insert(flat.end(), {t.boxes[f].cx, t.boxes[f].cy, t.boxes[f].w, t.boxes[f].h});
    }
    if (frames.empty()) continue;
    const auto gt = torch::tensor(flat, torch::kFloat64).view({-1, 4}).to(opts);
    const auto pred = pred_boxes[qi].index_select(0, torch::tensor(frames, torch::kLong).to(opts.device()));
    per_instance.push_back((pred - gt).abs().mean(1).mean(0));
  }
  if (!per_instance.empty()) out.box = torch::stack(per_instance).mean();

  const auto& first = targets[static_cast<std::size_t>(match.assignment.front().second)].masks;
  const int64_t h = first.size(1), w = first.size(2);
  auto logits = mask_logits;
  if (logits.size(2) != h || logits.size(3) != w)
    logits = F::interpolate(logits, F::InterpolateFuncOptions()
                                        .size(std::vector<int64_t>{h, w})
                                        .mode(torch::kBilinear)
                                        .align_corners(false));
  std::vector<torch::Tensor> gts;
  for (const auto& [qi, gi] : match.assignment) gts.push_back(targets[static_cast<std::size_t>(gi)].masks.to(opts));
  const auto target = torch::stack(gts);  // K x M x H x W
  const double k = static_cast<double>(match.assignment.size());
  if (config.literal_l1_mask) {
    out.mask = (torch::sigmoid(logits) - target).abs().mean();
  } else {
    const double pixels = static_cast<double>(target[0].numel());
    out.mask = dice_loss(logits.flatten(1), target.flatten(1)) +
               sigmoid_focal_loss(logits, target, config.focal_gamma, config.focal_alpha, k * pixels);
  }
  return out;
}

torch::Tensor total_loss(const LossBundle& b) {
  const std::pair<const char*, const torch::Tensor*> parts[] = {
      {"L_c", &b.L_c}, {"L_f", &b.L_f}, {"L_r_box", &b.L_r_box}, {"L_r_mask", &b.L_r_mask}, {"L_contr", &b.L_contr}};
  for (const auto& [name, t] : parts) {
    if (!t->defined()) throw NonFiniteError(name, std::string("loss component ") + name + " is undefined");
    const double v = t->item<double>();
    if (!std::isfinite(v)) throw NonFiniteError(name, std::string("loss component ") + name + " is not finite");
  }
  return b.L_c + (b.L_r_box + b.L_r_mask) + b.alpha * b.L_f + b.L_contr;
}

}  // namespace owvis
