#include "owvis/protocol.hpp"

#include <algorithm>
#include <cstring>
#include <numeric>
#include <random>
#include <set>

#include "owvis/error.hpp"

namespace owvis {

namespace F = torch::nn::functional;
using nlohmann::json;

void seed_everything(std::uint64_t seed, bool deterministic) {
  torch::manual_seed(seed);
  if (deterministic) {
    torch::set_num_threads(1);
    at::globalContext().setDeterministicAlgorithms(true, true);
  }
}

json StepMetrics::to_json() const {
  return {{"phase", phase}, {"step", step},         {"L_c", L_c},         {"L_f", L_f},
          {"L_r_box", L_r_box}, {"L_r_mask", L_r_mask}, {"L_contr", L_contr}, {"total", total}};
}

std::vector<ClipSource> video_sources(const std::vector<VideoId>& videos) {
  std::vector<ClipSource> out;
  for (VideoId v : videos) out.push_back({v, -1});
  return out;
}

namespace {

torch::Dtype model_dtype(OwVisModel& model) { return model->parameters().front().scalar_type(); }

torch::Tensor masks_tensor(const std::vector<Mask>& masks) {
  const int m = static_cast<int>(masks.size());
  auto t = torch::zeros({m, masks.front().height, masks.front().width}, torch::kFloat32);
  auto a = t.accessor<float, 3>();
  for (int f = 0; f < m; ++f) {
    const Mask& mk = masks[static_cast<std::size_t>(f)];
    for (int r = 0; r < mk.height; ++r)
      for (int c = 0; c < mk.width; ++c) a[f][r][c] = mk.at(r, c);
  }
  return t;
}

torch::Tensor boxes_tensor(const std::vector<std::vector<Box>>& tracks) {
  const int64_t n = static_cast<int64_t>(tracks.size());
  const int64_t m = n ? static_cast<int64_t>(tracks.front().size()) : 0;
  auto t = torch::zeros({n, m, 4}, torch::kFloat64);
  auto a = t.accessor<double, 3>();
  for (int64_t i = 0; i < n; ++i)
    for (int64_t f = 0; f < m; ++f) {
      const Box& b = tracks[static_cast<std::size_t>(i)][static_cast<std::size_t>(f)];
      a[i][f][0] = b.cx;
      a[i][f][1] = b.cy;
      a[i][f][2] = b.w;
      a[i][f][3] = b.h;
    }
  return t;
}

std::vector<double> to_vector(const torch::Tensor& t) {
  const auto c = t.detach().to(torch::kCPU, torch::kFloat64).contiguous();
  return std::vector<double>(c.data_ptr<double>(), c.data_ptr<double>() + c.numel());
}

const FeatureLevel& backbone_sixteenth(const MultiScaleFeatures& backbone) {
  const auto levels = backbone.at_scale(1.0 / 16);
  if (levels.empty()) throw ShapeError("backbone has no 1/16 level");
  return *levels.front();
}

}  // namespace

std::vector<TargetInstance> clip_targets(const Dataset& dataset, VideoId video, int start, int count,
                                         const ClassRegistry& registry) {
  std::vector<TargetInstance> out;
  const auto it = dataset.annotations.find(video);
  if (it == dataset.annotations.end()) return out;
  for (const auto& track : it->second) {
    const int column = registry.column_of(track.category_id);
    if (column < 0) continue;
    const InstanceTrack s = slice_track(track, start, count);
    if (std::all_of(s.boxes.begin(), s.boxes.end(), [](const Box& b) { return b.is_empty(); })) continue;
    out.push_back({column, s.boxes, masks_tensor(s.masks)});
  }
  return out;
}

ClipLoss clip_loss(OwVisModel& model, const ForwardOutput& out, const std::vector<TargetInstance>& targets,
                   const RunConfig& config) {
  const auto& br = out.branches;
  const auto opts = br.class_logits.options();
  const int64_t q = br.class_logits.size(0), width = br.class_logits.size(1);
  ClipLoss r;
  r.match = hungarian_match(br, targets, config.loss);

  const bool sto = config.sto.pseudo_source == "sto";
  r.scores = sto ? objectness_score(out.objectness_map, br.boxes)
                 : baseline_scorer(backbone_sixteenth(out.backbone).map, br.boxes).detach();
  r.partition = select_pseudo_unknowns(to_vector(r.scores), r.match.matched_queries(), config.sto.p_u);

  auto cls = torch::zeros({q, width}, opts);
  auto fg = torch::zeros({q}, opts);
  for (const auto& [qi, gi] : r.match.assignment) {
    cls[qi][targets[static_cast<std::size_t>(gi)].column] = 1.0;
    fg[qi] = 1.0;
  }
  for (int qi : r.partition.pseudo_unknown) {
    cls[qi][0] = 1.0;
    fg[qi] = 1.0;
  }
  const double n_fg = std::max<double>(1.0, static_cast<double>(r.match.assignment.size() + r.partition.pseudo_unknown.size()));
  const auto& lc = config.loss;
  r.bundle.alpha = lc.alpha;
  r.bundle.L_c = sigmoid_focal_loss(br.class_logits, cls, lc.focal_gamma, lc.focal_alpha, n_fg);
  r.bundle.L_f = sigmoid_focal_loss(br.objectness_logits.squeeze(1), fg, lc.focal_gamma, lc.focal_alpha, n_fg);

  std::vector<int64_t> matched;
  for (const auto& [qi, gi] : r.match.assignment) matched.push_back(qi);
  if (matched.empty()) {
    r.bundle.L_r_box = torch::zeros({}, opts);
    r.bundle.L_r_mask = torch::zeros({}, opts);
  } else {
    const auto masks = model->predict_masks(out, matched);
    auto reg = regression_loss(br.boxes, masks, targets, r.match, lc);
    r.bundle.L_r_box = reg.box;
    r.bundle.L_r_mask = reg.mask;
  }
  r.bundle.L_contr = (sto && config.sto.contrastive) ? contrastive_loss(r.scores, r.partition, config.sto.normalize)
                                                      : torch::zeros({}, opts);
  r.total = total_loss(r.bundle);
  return r;
}

TrainResult train_task(OwVisModel& model, const TrainData& data, const RunConfig& config, const TrainOptions& options,
                       const MetricsSink& sink) {
  if (!data.dataset || !data.frames) throw ConfigError("train_task: dataset and frames are required");
  if (data.sources.empty()) throw ConfigError("train_task: no training clips");
  std::vector<torch::Tensor> params;
  for (auto& p : model->parameters())
    if (p.requires_grad()) params.push_back(p);
  torch::optim::AdamW optimizer(params, torch::optim::AdamWOptions(config.schedule.learning_rate)
                                            .weight_decay(config.schedule.weight_decay));
  const auto dtype = model_dtype(model);
  model->train();

  TrainResult result;
  std::int64_t step = options.first_step;
  for (int epoch = 0; epoch < options.epochs; ++epoch) {
    std::vector<ClipSource> order;
    for (int rep = 0; rep < config.schedule.clips_per_video; ++rep)
      order.insert(order.end(), data.sources.begin(), data.sources.end());
    std::seed_seq seq{options.seed, static_cast<std::uint64_t>(epoch)};
    std::mt19937_64 rng(seq);
    std::shuffle(order.begin(), order.end(), rng);

    for (const ClipSource& src : order) {
      if (options.max_steps >= 0 && step - options.first_step >= options.max_steps) return result;
      const auto fit = data.frames->find(src.video);
      if (fit == data.frames->end()) throw ValidationError("no frames loaded for video " + std::to_string(src.video));
      const int len = static_cast<int>(fit->second.size());
      const int m = std::min(config.model.clip_frames, len);
      int start = src.start;
      if (start < 0) start = std::uniform_int_distribution<int>(0, len - m)(rng);
      start = std::min(start, len - m);

      const auto frames = clip_tensor(make_clip(src.video, fit->second, start, m), dtype);
      const auto targets = clip_targets(*data.dataset, src.video, start, m, model->registry());
      const auto out = model->forward(frames);
      ClipLoss loss;
      try {
        loss = clip_loss(model, out, targets, config);
      } catch (const NonFiniteError&) {
        if (!options.divergence_checkpoint.empty())
          save_checkpoint(model, options.checkpoint_info, options.divergence_checkpoint);
        throw;
      }
      optimizer.zero_grad();
      loss.total.backward();
      if (config.schedule.grad_clip > 0) torch::nn::utils::clip_grad_norm_(params, config.schedule.grad_clip);
      optimizer.step();

      StepMetrics s;
      s.phase = options.phase;
      s.step = step++;
      s.L_c = loss.bundle.L_c.item<double>();
      s.L_f = loss.bundle.L_f.item<double>();
      s.L_r_box = loss.bundle.L_r_box.item<double>();
      s.L_r_mask = loss.bundle.L_r_mask.item<double>();
      s.L_contr = loss.bundle.L_contr.item<double>();
      s.total = loss.total.item<double>();
      result.steps.push_back(s);
      if (sink) sink(s);
    }
  }
  return result;
}

bool ExemplarStore::empty() const {
  for (const auto& [c, v] : entries)
    if (!v.empty()) return false;
  return true;
}

std::vector<ClipSource> ExemplarStore::clips() const {
  std::vector<ClipSource> out;
  for (const auto& [c, v] : entries)
    for (const auto& s : v)
      if (std::find(out.begin(), out.end(), s) == out.end()) out.push_back(s);
  return out;
}

json ExemplarStore::to_json() const {
  json cats = json::object();
  for (const auto& [c, v] : entries) {
    json list = json::array();
    for (const auto& s : v) list.push_back({{"video_id", s.video}, {"start", s.start}});
    cats[std::to_string(c)] = list;
  }
  return {{"seed", seed}, {"exemplars", cats}};
}

ExemplarStore select_exemplars(const Dataset& dataset, const std::vector<VideoId>& videos,
                               const ClassRegistry& registry, int e, int clip_frames, std::uint64_t seed) {
  if (e < 1) throw ConfigError("exemplars per class must be >= 1");
  ExemplarStore store;
  store.seed = seed;
  for (CategoryId cat : registry.known_ids()) {
    std::vector<ClipSource> candidates;
    for (VideoId v : videos) {
      const auto it = dataset.annotations.find(v);
      if (it == dataset.annotations.end()) continue;
      const int len = dataset.videos.at(v).length();
      int first = -1;
      for (const auto& t : it->second) {
        if (t.category_id != cat) continue;
        for (int f = 0; f < t.frame_count(); ++f)
          if (!t.boxes[static_cast<std::size_t>(f)].is_empty()) {
            first = first < 0 ? f : std::min(first, f);
            break;
          }
      }
      if (first < 0) continue;
      candidates.push_back({v, std::max(0, std::min(first, len - std::min(clip_frames, len)))});
    }
    std::mt19937_64 rng(seed + static_cast<std::uint64_t>(cat));
    std::shuffle(candidates.begin(), candidates.end(), rng);
    if (static_cast<int>(candidates.size()) > e) candidates.resize(static_cast<std::size_t>(e));
    std::sort(candidates.begin(), candidates.end(),
              [](const ClipSource& a, const ClipSource& b) { return a.video < b.video; });
    if (candidates.empty()) warn("no exemplar clip available for category " + std::to_string(cat));
    else if (static_cast<int>(candidates.size()) < e)
      warn("category " + std::to_string(cat) + " has only " + std::to_string(candidates.size()) +
           " exemplar clip(s), fewer than " + std::to_string(e));
    store.entries[cat] = std::move(candidates);
  }
  return store;
}

TrainResult incremental_step(OwVisModel& model, const ClassRegistry& registry_new, const TrainData& task2,
                             const ExemplarStore& exemplars, const RunConfig& config, const TrainOptions& options,
                             const MetricsSink& sink) {
  const ClassRegistry before = model->registry();
  if (registry_new.num_known() <= before.num_known() || !registry_new.contains_all(before))
    throw ConfigError("incremental_step: the new registry must strictly extend the current one");
  model->incremental_extend(registry_new);

  TrainOptions main = options;
  main.phase = "task2";
  main.epochs = config.schedule.task2_epochs;
  TrainResult result = train_task(model, task2, config, main, sink);

  if (config.protocol.replay && !exemplars.empty()) {
    TrainData replay = task2;
    for (const auto& s : exemplars.clips()) replay.sources.push_back(s);
    TrainOptions ft = options;
    ft.phase = "finetune";
    ft.epochs = config.schedule.finetune_epochs;
    ft.seed = options.seed + 1;
    ft.first_step = result.steps.empty() ? options.first_step : result.steps.back().step + 1;
    const auto more = train_task(model, replay, config, ft, sink);
    result.steps.insert(result.steps.end(), more.steps.begin(), more.steps.end());
  }
  return result;
}

Session run_first_task(const RunConfig& config, const Dataset& dataset, const FrameTable& frames,
                       const TaskSplit& split, const MetricsSink& sink) {
  config.validate();
  if (split.tasks.empty()) throw ConfigError("split has no tasks");
  seed_everything(config.seed, config.deterministic);
  const auto& part = split.task(1);
  Session s;
  s.info.config = config;
  s.info.fingerprint = config.fingerprint();
  s.info.task = 1;
  s.info.registry = ClassRegistry(part.known_category_ids);
  s.info.registry_history = {part.known_category_ids};
  s.model = OwVisModel(config.model, s.info.registry);

  TrainOptions opts;
  opts.phase = "task1";
  opts.epochs = config.schedule.task1_epochs;
  opts.seed = config.seed;
  opts.checkpoint_info = s.info;
  if (!config.output_dir.empty()) opts.divergence_checkpoint = std::filesystem::path(config.output_dir) / "diverged.ckpt";
  train_task(s.model, {&dataset, &frames, video_sources(part.train_videos)}, config, opts, sink);
  return s;
}

void run_next_task(Session& session, const Dataset& dataset, const FrameTable& frames, const TaskSplit& split,
                   const MetricsSink& sink) {
  const RunConfig& config = session.info.config;
  const int next = session.info.task + 1;
  if (next > static_cast<int>(split.tasks.size()))
    throw ConfigError("split has no task " + std::to_string(next));
  const auto& prev = split.task(session.info.task);
  const auto& part = split.task(next);
  seed_everything(config.seed + static_cast<std::uint64_t>(next), config.deterministic);

  session.exemplars = select_exemplars(dataset, prev.train_videos, session.model->registry(),
                                       config.protocol.exemplars_per_class, config.model.clip_frames,
                                       config.seed + static_cast<std::uint64_t>(next));
  const ClassRegistry registry(part.known_category_ids);
  TrainOptions opts;
  opts.seed = config.seed + static_cast<std::uint64_t>(next);
  opts.checkpoint_info = session.info;
  if (!config.output_dir.empty()) opts.divergence_checkpoint = std::filesystem::path(config.output_dir) / "diverged.ckpt";
  incremental_step(session.model, registry, {&dataset, &frames, video_sources(part.train_videos)}, session.exemplars,
                   config, opts, sink);
  session.info.task = next;
  session.info.registry = registry;
  session.info.registry_history.push_back(part.known_category_ids);
}

Selection inference_select(const torch::Tensor& class_logits, const ClassRegistry& registry, int k, double tau) {
  const auto probs = torch::softmax(class_logits.detach().to(torch::kCPU, torch::kFloat64), -1).contiguous();
  const int q = static_cast<int>(probs.size(0)), width = static_cast<int>(probs.size(1));
  if (width != registry.num_known() + 1) throw ConfigError("inference_select: registry does not match the logits");
  const auto pa = probs.accessor<double, 2>();
  k = std::max(0, std::min(k, q));

  std::vector<double> best(static_cast<std::size_t>(q), 0.0);
  std::vector<int> best_col(static_cast<std::size_t>(q), 1);
  for (int i = 0; i < q; ++i)
    for (int c = 1; c < width; ++c)
      if (pa[i][c] > best[static_cast<std::size_t>(i)]) {
        best[static_cast<std::size_t>(i)] = pa[i][c];
        best_col[static_cast<std::size_t>(i)] = c;
      }
  std::vector<int> order(static_cast<std::size_t>(q));
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](int a, int b) { return best[a] > best[b]; });

  Selection sel;
  std::vector<int> rest(order.begin() + k, order.end());
  for (int j = 0; j < k; ++j) {
    const int i = order[static_cast<std::size_t>(j)];
    if (width > 1 && best[static_cast<std::size_t>(i)] >= tau)
      sel.known.push_back({i, registry.category_at(best_col[static_cast<std::size_t>(i)]), best[static_cast<std::size_t>(i)]});
  }
  int ku = k;
  if (ku > static_cast<int>(rest.size())) {
    warn("inference_select: 2k exceeds the query count; unknown set clamped to " + std::to_string(rest.size()));
    ku = static_cast<int>(rest.size());
  }
  std::stable_sort(rest.begin(), rest.end(), [&](int a, int b) { return pa[a][0] > pa[b][0]; });
  for (int j = 0; j < ku; ++j) {
    const int i = rest[static_cast<std::size_t>(j)];
    if (pa[i][0] >= tau && pa[i][0] > 0.0) sel.unknown.push_back({i, kUnknownCategory, pa[i][0]});
  }
  return sel;
}

std::vector<InstanceTrack> predict_video(OwVisModel& model, const VideoInfo& video, const std::vector<RgbImage>& frames,
                                         const ProtocolConfig& config) {
  torch::NoGradGuard guard;
  model->eval();
  const int len = static_cast<int>(frames.size());
  const auto clip = clip_tensor(make_clip(video.id, frames, 0, len), model_dtype(model));
  const auto out = model->forward(clip);
  const Selection sel = inference_select(out.branches.class_logits, model->registry(), config.top_k,
                                         config.score_threshold);
  std::vector<Detection> all = sel.known;
  all.insert(all.end(), sel.unknown.begin(), sel.unknown.end());
  std::vector<InstanceTrack> tracks;
  if (all.empty()) return tracks;

  std::vector<int64_t> queries;
  for (const auto& d : all) queries.push_back(d.query);
  auto logits = model->predict_masks(out, queries);
  logits = F::interpolate(logits, F::InterpolateFuncOptions()
                                      .size(std::vector<int64_t>{video.height, video.width})
                                      .mode(torch::kBilinear)
                                      .align_corners(false));
  const auto bin = (logits > 0).to(torch::kUInt8).contiguous();
  for (std::size_t i = 0; i < all.size(); ++i) {
    InstanceTrack t;
    t.id = static_cast<std::int64_t>(i + 1);
    t.video_id = video.id;
    t.category_id = all[i].category;
    t.score = all[i].score;
    for (int f = 0; f < len; ++f) {
      Mask m(video.height, video.width);
      const auto src = bin[static_cast<int64_t>(i)][f];
      std::memcpy(m.data.data(), src.data_ptr<std::uint8_t>(), m.data.size());
      t.boxes.push_back(box_from_mask(m));
      t.masks.push_back(std::move(m));
    }
    tracks.push_back(std::move(t));
  }
  return tracks;
}

std::vector<InstanceTrack> predict_videos(OwVisModel& model, const Dataset& dataset, const FrameTable& frames,
                                          const std::vector<VideoId>& videos, const ProtocolConfig& config) {
  std::vector<InstanceTrack> out;
  for (VideoId v : videos) {
    const auto fit = frames.find(v);
    if (fit == frames.end()) throw ValidationError("no frames loaded for video " + std::to_string(v));
    auto tracks = predict_video(model, dataset.videos.at(v), fit->second, config);
    out.insert(out.end(), tracks.begin(), tracks.end());
  }
  return out;
}

std::vector<VideoId> evaluation_videos(const TaskSplit& split, int task) {
  const auto& p = split.task(task);
  std::vector<VideoId> v = p.known_test_videos;
  v.insert(v.end(), p.unknown_test_videos.begin(), p.unknown_test_videos.end());
  return v;
}

std::vector<InstanceTrack> future_tracks(const Dataset& dataset, const std::vector<VideoId>& videos,
                                         const ClassRegistry& registry) {
  std::vector<InstanceTrack> out;
  for (VideoId v : videos) {
    const auto it = dataset.annotations.find(v);
    if (it == dataset.annotations.end()) continue;
    for (const auto& t : it->second)
      if (!registry.is_known(t.category_id)) out.push_back(t);
  }
  return out;
}

TaskEvaluation evaluate_task(const Dataset& dataset, const TaskSplit& split, int task,
                             const std::vector<InstanceTrack>& predictions,
                             const std::vector<std::vector<CategoryId>>& registry_history, const EvalConfig& config) {
  const auto& part = split.task(task);
  const ClassRegistry registry(part.known_category_ids);
  const std::set<VideoId> known_videos(part.known_test_videos.begin(), part.known_test_videos.end());
  const std::set<VideoId> unknown_videos(part.unknown_test_videos.begin(), part.unknown_test_videos.end());

  std::vector<InstanceTrack> known_preds, unknown_preds, known_gts;
  for (const auto& p : predictions) {
    if (known_videos.count(p.video_id) && p.category_id != kUnknownCategory) known_preds.push_back(p);
    if (unknown_videos.count(p.video_id) && p.category_id == kUnknownCategory) unknown_preds.push_back(p);
  }
  for (VideoId v : part.known_test_videos) {
    const auto it = dataset.annotations.find(v);
    if (it == dataset.annotations.end()) continue;
    for (const auto& t : it->second)
      if (registry.is_known(t.category_id)) known_gts.push_back(t);
  }

  TaskEvaluation r;
  r.known = evaluate_known(known_preds, known_gts, registry, config);
  if (!part.unknown_test_videos.empty())
    r.unknown = evaluate_unknown(unknown_preds, future_tracks(dataset, part.unknown_test_videos, registry), config);
  r.report = build_report(task, r.known, r.unknown, registry_history);
  return r;
}

SeparationResult measure_separation(OwVisModel& model, const Dataset& dataset, const FrameTable& frames,
                                    const std::vector<VideoId>& videos, bool use_backbone, std::uint64_t seed) {
  torch::NoGradGuard guard;
  model->eval();
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  double fg_sum = 0.0, bg_sum = 0.0;
  std::size_t fg_n = 0, bg_n = 0;
  auto overlaps = [](const Box& a, const Box& b) {
    return std::abs(a.cx - b.cx) * 2 < a.w + b.w && std::abs(a.cy - b.cy) * 2 < a.h + b.h;
  };
  for (VideoId v : videos) {
    const auto& fr = frames.at(v);
    const int m = std::min(model->config().clip_frames, static_cast<int>(fr.size()));
    const auto out = model->forward(clip_tensor(make_clip(v, fr, 0, m), model_dtype(model)));
    const auto map = use_backbone ? backbone_sixteenth(out.backbone).map.mean(1) : out.objectness_map;

    std::vector<std::vector<Box>> fg, bg;
    const auto it = dataset.annotations.find(v);
    if (it == dataset.annotations.end()) continue;
    for (const auto& t : it->second) {
      const InstanceTrack s = slice_track(t, 0, m);
      if (std::all_of(s.boxes.begin(), s.boxes.end(), [](const Box& b) { return b.is_empty(); })) continue;
      fg.push_back(s.boxes);
    }
    for (const auto& track : fg) {
      std::vector<Box> rnd(track.size());
      bool ok = true;
      for (std::size_t f = 0; f < track.size() && ok; ++f) {
        const Box& g = track[f];
        if (g.is_empty()) continue;
        ok = false;
        for (int attempt = 0; attempt < 200 && !ok; ++attempt) {
          const Box b{g.w / 2 + unit(rng) * (1 - g.w), g.h / 2 + unit(rng) * (1 - g.h), g.w, g.h};
          ok = std::none_of(fg.begin(), fg.end(), [&](const std::vector<Box>& o) {
            return !o[f].is_empty() && overlaps(b, o[f]);
          });
          if (ok) rnd[f] = b;
        }
      }
      if (ok) bg.push_back(rnd);
    }
    if (!fg.empty()) {
      for (double s : to_vector(objectness_score(map, boxes_tensor(fg).to(map.scalar_type())))) fg_sum += s;
      fg_n += fg.size();
    }
    if (!bg.empty()) {
      for (double s : to_vector(objectness_score(map, boxes_tensor(bg).to(map.scalar_type())))) bg_sum += s;
      bg_n += bg.size();
    }
  }
  SeparationResult r;
  r.foreground_boxes = fg_n;
  r.foreground_mean = fg_n ? fg_sum / static_cast<double>(fg_n) : 0.0;
  r.background_mean = bg_n ? bg_sum / static_cast<double>(bg_n) : 0.0;
  return r;
}

}  // namespace owvis
