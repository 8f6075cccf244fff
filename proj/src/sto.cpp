#include "owvis/sto.hpp"

#include <algorithm>
#include <numeric>
#include <set>

#include "owvis/error.hpp"
#include "owvis/geometry.hpp"

namespace owvis {

ObjectnessHeadImpl::ObjectnessHeadImpl(int d) : d_(d) {
  conv_ = register_module("conv", torch::nn::Conv3d(torch::nn::Conv3dOptions(d, 1, 3).stride(1).padding(1)));
}

torch::Tensor ObjectnessHeadImpl::forward(const torch::Tensor& features) {
  if (features.dim() != 4 || features.size(1) != d_)
    throw ShapeError("objectness map: expected M x " + std::to_string(d_) + " x h x w features");
  auto x = features.permute({1, 0, 2, 3}).unsqueeze(0);  // 1 x d x M x h x w
  return torch::sigmoid(conv_->forward(x)).squeeze(0).squeeze(0);
}

torch::Tensor objectness_score(const torch::Tensor& map, const torch::Tensor& boxes) {
  if (map.dim() != 3) throw ShapeError("objectness_score: map must be M x h x w");
  if (boxes.dim() != 3 || boxes.size(2) != 4 || boxes.size(1) != map.size(0))
    throw ShapeError("objectness_score: boxes must be q x M x 4 with M = " + std::to_string(map.size(0)));
  const int64_t q = boxes.size(0), m = map.size(0), h = map.size(1), w = map.size(2);
  // Averaging weights: 1 / cells on the covered cells of each (query, frame).
  auto weights = torch::zeros({q, m, h, w}, torch::TensorOptions().dtype(torch::kFloat64));
  const auto b = boxes.detach().to(torch::kCPU, torch::kFloat64).contiguous();
  const auto ba = b.accessor<double, 3>();
  auto wa = weights.accessor<double, 4>();
  for (int64_t i = 0; i < q; ++i)
    for (int64_t f = 0; f < m; ++f) {
      const Box box{ba[i][f][0], ba[i][f][1], ba[i][f][2], ba[i][f][3]};
      const CellRange r = box_cell_range(box, static_cast<int>(h), static_cast<int>(w));
      if (r.cell_count() == 0) continue;
      const double inv = 1.0 / r.cell_count();
      for (int y = r.row0; y < r.row1; ++y)
        for (int x = r.col0; x < r.col1; ++x) wa[i][f][y][x] = inv;
    }
  weights = weights.to(map.device(), map.scalar_type());
  return (weights * map.unsqueeze(0)).sum({1, 2, 3});
}

torch::Tensor baseline_scorer(const torch::Tensor& backbone_features, const torch::Tensor& boxes) {
  if (backbone_features.dim() != 4) throw ShapeError("baseline_scorer: features must be M x C x h x w");
  return objectness_score(backbone_features.mean(1), boxes);
}

QueryPartition select_pseudo_unknowns(const std::vector<double>& scores, const std::vector<int>& matched_known,
                                      int p_u) {
  const int q = static_cast<int>(scores.size());
  std::set<int> matched(matched_known.begin(), matched_known.end());
  if (matched.size() != matched_known.size()) throw ValidationError("select_pseudo_unknowns: duplicate matched query");
  for (int i : matched)
    if (i < 0 || i >= q) throw ValidationError("select_pseudo_unknowns: matched query out of range");
  if (p_u < 0) throw ConfigError("p_u must be >= 0");

  QueryPartition out;
  out.matched_known.assign(matched.begin(), matched.end());
  std::vector<int> rest;
  for (int i = 0; i < q; ++i)
    if (!matched.count(i)) rest.push_back(i);
  std::stable_sort(rest.begin(), rest.end(), [&](int a, int b) { return scores[a] > scores[b]; });
  const int available = static_cast<int>(rest.size());
  if (p_u > available) {
    warn("p_u = " + std::to_string(p_u) + " exceeds the " + std::to_string(available) +
         " unmatched queries; clamping");
    p_u = available;
  }
  out.pseudo_unknown.assign(rest.begin(), rest.begin() + p_u);
  out.background.assign(rest.begin() + p_u, rest.end());
  return out;
}

torch::Tensor contrastive_loss(const torch::Tensor& scores, const QueryPartition& partition, bool normalize) {
  auto gather = [&](const std::vector<int>& idx) {
    if (idx.empty()) return torch::zeros({}, scores.options());
    const auto t = torch::tensor(std::vector<int64_t>(idx.begin(), idx.end()), torch::kLong).to(scores.device());
    auto s = scores.index_select(0, t).sum();
    return normalize ? s / static_cast<double>(idx.size()) : s;
  };
  std::vector<int> fg = partition.matched_known;
  fg.insert(fg.end(), partition.pseudo_unknown.begin(), partition.pseudo_unknown.end());
  const auto diff = gather(fg) - gather(partition.background);
  return torch::exp(torch::clamp_max(-diff, 30.0));
}

}  // namespace owvis
