#include "owvis/owvis.h"

#include <cstdlib>
#include <cstring>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "owvis/annotations.hpp"
#include "owvis/checkpoint.hpp"
#include "owvis/config.hpp"
#include "owvis/error.hpp"
#include "owvis/image_io.hpp"
#include "owvis/protocol.hpp"
#include "owvis/splits.hpp"
#include "owvis/synthdata.hpp"
#include "owvis/visualize.hpp"

using nlohmann::json;

struct owvis_dataset {
  owvis::Dataset dataset;
  mutable std::optional<owvis::FrameTable> frames;

  const owvis::FrameTable& loaded_frames() const {
    if (!frames) frames = owvis::load_frames(dataset);
    return *frames;
  }
};

struct owvis_split {
  owvis::TaskSplit split;
};

struct owvis_model {
  owvis::Session session;
};

namespace {

thread_local std::string g_last_error;

owvis_status fail(owvis_status status, const std::string& message) {
  g_last_error = message;
  return status;
}

struct ArgumentError : owvis::Error {
  using owvis::Error::Error;
};

template <typename Fn>
owvis_status guarded(Fn&& fn) {
  g_last_error.clear();
  try {
    fn();
    return OWVIS_OK;
  } catch (const ArgumentError& e) {
    return fail(OWVIS_ERR_ARGUMENT, e.what());
  } catch (const owvis::ParseError& e) {
    return fail(OWVIS_ERR_PARSE, e.what());
  } catch (const owvis::ValidationError& e) {
    return fail(OWVIS_ERR_VALIDATION, e.what());
  } catch (const owvis::ConfigError& e) {
    return fail(OWVIS_ERR_CONFIG, e.what());
  } catch (const owvis::ShapeError& e) {
    return fail(OWVIS_ERR_SHAPE, e.what());
  } catch (const owvis::NonFiniteError& e) {
    return fail(OWVIS_ERR_NONFINITE, e.what());
  } catch (const json::exception& e) {
    return fail(OWVIS_ERR_PARSE, e.what());
  } catch (const std::filesystem::filesystem_error& e) {
    return fail(OWVIS_ERR_IO, e.what());
  } catch (const std::exception& e) {
    return fail(OWVIS_ERR_RUNTIME, e.what());
  } catch (...) {
    return fail(OWVIS_ERR_RUNTIME, "unknown error");
  }
}

void require(const void* p, const char* name) {
  if (!p) throw ArgumentError(std::string(name) + " must not be null");
}

char* dup(const std::string& s) {
  char* out = static_cast<char*>(std::malloc(s.size() + 1));
  if (!out) throw std::bad_alloc();
  std::memcpy(out, s.c_str(), s.size() + 1);
  return out;
}

owvis::MetricsSink sink_for(owvis_metrics_fn fn, void* user, const std::string& fingerprint) {
  if (!fn) return {};
  return [fn, user, fingerprint](const owvis::StepMetrics& m) {
    json j = m.to_json();
    j["fingerprint"] = fingerprint;
    fn(j.dump().c_str(), user);
  };
}

std::vector<std::vector<owvis::CategoryId>> split_history(const owvis::TaskSplit& split, int task) {
  std::vector<std::vector<owvis::CategoryId>> h;
  for (int t = 1; t <= task; ++t) h.push_back(split.task(t).known_category_ids);
  return h;
}

void check_task(const owvis::TaskSplit& split, int task) {
  if (task < 1 || task > static_cast<int>(split.tasks.size()))
    throw owvis::ConfigError("task " + std::to_string(task) + " is not in the split");
}

}  // namespace

extern "C" {

const char* owvis_version(void) { return "1.0.0"; }

const char* owvis_last_error(void) { return g_last_error.c_str(); }

const char* owvis_status_name(owvis_status status) {
  switch (status) {
    case OWVIS_OK: return "ok";
    case OWVIS_ERR_ARGUMENT: return "argument error";
    case OWVIS_ERR_PARSE: return "parse error";
    case OWVIS_ERR_VALIDATION: return "validation error";
    case OWVIS_ERR_CONFIG: return "config error";
    case OWVIS_ERR_SHAPE: return "shape error";
    case OWVIS_ERR_NONFINITE: return "non-finite loss";
    case OWVIS_ERR_IO: return "i/o error";
    case OWVIS_ERR_RUNTIME: return "runtime error";
  }
  return "unknown status";
}

int owvis_status_is_validation(owvis_status status) {
  return status == OWVIS_ERR_ARGUMENT || status == OWVIS_ERR_PARSE || status == OWVIS_ERR_VALIDATION ||
         status == OWVIS_ERR_CONFIG || status == OWVIS_ERR_SHAPE;
}

void owvis_string_free(char* s) { std::free(s); }

owvis_status owvis_config_resolve(const char* path, const char* const* overrides, size_t n_overrides,
                                  char** config_json, char** fingerprint) {
  if (!config_json && !fingerprint) return fail(OWVIS_ERR_ARGUMENT, "no output requested");
  if (n_overrides && !overrides) return fail(OWVIS_ERR_ARGUMENT, "overrides must not be null");
  return guarded([&] {
    std::vector<std::string> o;
    for (size_t i = 0; i < n_overrides; ++i) {
      require(overrides[i], "override");
      o.emplace_back(overrides[i]);
    }
    const auto cfg = owvis::load_run_config(path ? path : "", o);
    if (config_json) *config_json = dup(cfg.to_json().dump(2));
    if (fingerprint) *fingerprint = dup(cfg.fingerprint());
  });
}

owvis_status owvis_config_desk(char** config_json) {
  if (!config_json) return fail(OWVIS_ERR_ARGUMENT, "config_json must not be null");
  return guarded([&] { *config_json = dup(owvis::desk_run_config().to_json().dump(2)); });
}

owvis_status owvis_dataset_load(const char* annotations_path, const char* frames_root, owvis_dataset** out) {
  if (!annotations_path || !out) return fail(OWVIS_ERR_ARGUMENT, "annotations_path and out must not be null");
  return guarded([&] {
    auto h = std::make_unique<owvis_dataset>();
    h->dataset = owvis::load_annotations(annotations_path);
    if (frames_root) h->dataset.image_root = frames_root;
    *out = h.release();
  });
}

owvis_status owvis_synth_generate(const char* synth_config_json, const char* out_dir, owvis_dataset** out) {
  if (!out_dir && !out) return fail(OWVIS_ERR_ARGUMENT, "nothing to do: out_dir and out are both null");
  return guarded([&] {
    const auto cfg = synth_config_json ? owvis::SynthConfig::from_json(json::parse(synth_config_json))
                                       : owvis::desk_synth_config();
    auto synth = owvis::generate(cfg);
    if (out_dir) {
      owvis::write_synth(synth, out_dir);
      synth.dataset.image_root = out_dir;
    }
    if (out) {
      auto h = std::make_unique<owvis_dataset>();
      h->dataset = std::move(synth.dataset);
      h->frames = std::move(synth.frames);
      *out = h.release();
    }
  });
}

owvis_status owvis_dataset_summary(const owvis_dataset* dataset, char** out) {
  if (!dataset || !out) return fail(OWVIS_ERR_ARGUMENT, "dataset and out must not be null");
  return guarded([&] {
    json cats = json::array();
    for (const auto& [id, c] : dataset->dataset.categories)
      cats.push_back({{"id", id}, {"name", c.name}, {"supercategory", c.supercategory}});
    *out = dup(json{{"videos", dataset->dataset.videos.size()},
                    {"tracks", dataset->dataset.track_count()},
                    {"categories", cats}}
                   .dump(2));
  });
}

void owvis_dataset_free(owvis_dataset* dataset) { delete dataset; }

owvis_status owvis_split_build(const owvis_dataset* dataset, const char* split_config_json, const char* builtin_name,
                               owvis_split** out) {
  if (!dataset || !out) return fail(OWVIS_ERR_ARGUMENT, "dataset and out must not be null");
  if (!split_config_json && !builtin_name) return fail(OWVIS_ERR_ARGUMENT, "a split config or a split name is required");
  return guarded([&] {
    owvis::SplitConfig cfg;
    if (split_config_json) {
      cfg = owvis::SplitConfig::from_json(json::parse(split_config_json));
    } else {
      bool found = false;
      for (const auto& c : owvis::default_split_configs())
        if (c.split_name == builtin_name) {
          cfg = c;
          found = true;
        }
      if (!found) throw owvis::ConfigError(std::string("no built-in split named '") + builtin_name + "'");
    }
    auto h = std::make_unique<owvis_split>();
    h->split = owvis::build_split(dataset->dataset, cfg);
    *out = h.release();
  });
}

owvis_status owvis_split_load(const char* path, owvis_split** out) {
  if (!path || !out) return fail(OWVIS_ERR_ARGUMENT, "path and out must not be null");
  return guarded([&] {
    auto h = std::make_unique<owvis_split>();
    h->split = owvis::TaskSplit::from_json(owvis::read_json_file(path));
    *out = h.release();
  });
}

owvis_status owvis_split_serialize(const owvis_split* split, char** out) {
  if (!split || !out) return fail(OWVIS_ERR_ARGUMENT, "split and out must not be null");
  return guarded([&] { *out = dup(split->split.serialize()); });
}

owvis_status owvis_split_validate(const owvis_split* split, const owvis_dataset* dataset, char** report_json, int* ok) {
  if (!split || !dataset) return fail(OWVIS_ERR_ARGUMENT, "split and dataset must not be null");
  return guarded([&] {
    const auto report = owvis::validate_split(split->split, dataset->dataset);
    if (report_json) *report_json = dup(report.to_json().dump(2));
    if (ok) *ok = report.ok() ? 1 : 0;
  });
}

owvis_status owvis_split_stats(const owvis_split* split, const owvis_dataset* dataset, char** out) {
  if (!split || !dataset || !out) return fail(OWVIS_ERR_ARGUMENT, "split, dataset and out must not be null");
  return guarded([&] {
    *out = dup(owvis::split_stats_to_json(owvis::split_stats(split->split, dataset->dataset)).dump(2));
  });
}

void owvis_split_free(owvis_split* split) { delete split; }

owvis_status owvis_train_first(const char* config_json, const owvis_dataset* dataset, const owvis_split* split,
                               owvis_metrics_fn on_step, void* user, owvis_model** out) {
  if (!config_json || !dataset || !split || !out)
    return fail(OWVIS_ERR_ARGUMENT, "config_json, dataset, split and out must not be null");
  return guarded([&] {
    const auto cfg = owvis::RunConfig::from_json(json::parse(config_json));
    auto h = std::make_unique<owvis_model>();
    h->session = owvis::run_first_task(cfg, dataset->dataset, dataset->loaded_frames(), split->split,
                                       sink_for(on_step, user, cfg.fingerprint()));
    *out = h.release();
  });
}

owvis_status owvis_train_next(owvis_model* model, const owvis_dataset* dataset, const owvis_split* split,
                              owvis_metrics_fn on_step, void* user, char** exemplars_json) {
  if (!model || !dataset || !split) return fail(OWVIS_ERR_ARGUMENT, "model, dataset and split must not be null");
  return guarded([&] {
    owvis::run_next_task(model->session, dataset->dataset, dataset->loaded_frames(), split->split,
                         sink_for(on_step, user, model->session.info.fingerprint));
    if (exemplars_json) {
      json j = model->session.exemplars.to_json();
      j["fingerprint"] = model->session.info.fingerprint;
      *exemplars_json = dup(j.dump(2));
    }
  });
}

owvis_status owvis_model_load(const char* checkpoint_path, owvis_model** out) {
  if (!checkpoint_path || !out) return fail(OWVIS_ERR_ARGUMENT, "checkpoint_path and out must not be null");
  return guarded([&] {
    auto h = std::make_unique<owvis_model>();
    h->session.model = owvis::load_checkpoint(checkpoint_path, &h->session.info);
    *out = h.release();
  });
}

owvis_status owvis_model_save(const owvis_model* model, const char* checkpoint_path) {
  if (!model || !checkpoint_path) return fail(OWVIS_ERR_ARGUMENT, "model and checkpoint_path must not be null");
  return guarded([&] {
    auto m = model->session.model;
    owvis::save_checkpoint(m, model->session.info, checkpoint_path);
  });
}

owvis_status owvis_model_fingerprint(const owvis_model* model, char** fingerprint) {
  if (!model || !fingerprint) return fail(OWVIS_ERR_ARGUMENT, "model and fingerprint must not be null");
  return guarded([&] { *fingerprint = dup(model->session.info.fingerprint); });
}

owvis_status owvis_model_task(const owvis_model* model, int* task) {
  if (!model || !task) return fail(OWVIS_ERR_ARGUMENT, "model and task must not be null");
  *task = model->session.info.task;
  return OWVIS_OK;
}

owvis_status owvis_model_history(const owvis_model* model, char** out) {
  if (!model || !out) return fail(OWVIS_ERR_ARGUMENT, "model and out must not be null");
  return guarded([&] { *out = dup(json(model->session.info.registry_history).dump()); });
}

void owvis_model_free(owvis_model* model) { delete model; }

owvis_status owvis_predict(owvis_model* model, const owvis_dataset* dataset, const owvis_split* split, int task,
                           char** predictions_json) {
  if (!model || !dataset || !split || !predictions_json)
    return fail(OWVIS_ERR_ARGUMENT, "model, dataset, split and predictions_json must not be null");
  return guarded([&] {
    check_task(split->split, task);
    const auto& s = model->session;
    const auto preds = owvis::predict_videos(model->session.model, dataset->dataset, dataset->loaded_frames(),
                                             owvis::evaluation_videos(split->split, task), s.info.config.protocol);
    const json doc = {{"fingerprint", s.info.fingerprint}, {"predictions", owvis::predictions_to_json(preds)}};
    *predictions_json = dup(doc.dump());
  });
}

owvis_status owvis_oracle_predictions(const owvis_dataset* dataset, const owvis_split* split, int task,
                                      char** predictions_json) {
  if (!dataset || !split || !predictions_json)
    return fail(OWVIS_ERR_ARGUMENT, "dataset, split and predictions_json must not be null");
  return guarded([&] {
    check_task(split->split, task);
    const auto& part = split->split.task(task);
    const owvis::ClassRegistry registry(part.known_category_ids);
    std::vector<owvis::InstanceTrack> preds;
    for (owvis::VideoId v : part.known_test_videos) {
      const auto it = dataset->dataset.annotations.find(v);
      if (it == dataset->dataset.annotations.end()) continue;
      for (auto t : it->second)
        if (registry.is_known(t.category_id)) {
          t.score = 1.0;
          preds.push_back(t);
        }
    }
    for (auto t : owvis::future_tracks(dataset->dataset, part.unknown_test_videos, registry)) {
      t.category_id = owvis::kUnknownCategory;
      t.score = 1.0;
      preds.push_back(t);
    }
    *predictions_json = dup(json{{"predictions", owvis::predictions_to_json(preds)}}.dump());
  });
}

owvis_status owvis_evaluate(const owvis_dataset* dataset, const owvis_split* split, int task,
                            const char* predictions_json, const char* history_json, const char* fingerprint,
                            char** report_json, char** report_table) {
  if (!dataset || !split || !predictions_json)
    return fail(OWVIS_ERR_ARGUMENT, "dataset, split and predictions_json must not be null");
  return guarded([&] {
    check_task(split->split, task);
    const json doc = json::parse(predictions_json);
    std::string fp = fingerprint ? fingerprint : "";
    if (doc.is_object() && doc.contains("fingerprint")) {
      const std::string embedded = doc.at("fingerprint").get<std::string>();
      if (!fp.empty() && embedded != fp)
        throw owvis::ConfigError("predictions were produced under fingerprint " + embedded + ", expected " + fp);
      fp = embedded;
    }
    const auto preds = owvis::parse_predictions(doc, dataset->dataset);
    const auto history = history_json ? json::parse(history_json).get<std::vector<std::vector<owvis::CategoryId>>>()
                                      : split_history(split->split, task);
    auto ev = owvis::evaluate_task(dataset->dataset, split->split, task, preds, history);
    ev.report.fingerprint = fp;
    if (report_json) *report_json = dup(ev.report.to_json().dump(2));
    if (report_table) *report_table = dup(ev.report.to_table());
  });
}

owvis_status owvis_visualize(owvis_model* model, const owvis_dataset* dataset, int64_t video_id, const char* out_dir) {
  if (!model || !dataset || !out_dir) return fail(OWVIS_ERR_ARGUMENT, "model, dataset and out_dir must not be null");
  return guarded([&] {
    const auto it = dataset->dataset.videos.find(video_id);
    if (it == dataset->dataset.videos.end())
      throw owvis::ValidationError("no video with id " + std::to_string(video_id));
    owvis::write_visualizations(model->session.model, it->second, dataset->loaded_frames().at(video_id),
                                model->session.info.config.protocol, out_dir);
    json meta = {{"fingerprint", model->session.info.fingerprint}, {"video_id", video_id}};
    owvis::write_text_file(std::filesystem::path(out_dir) / "meta.json", meta.dump(2));
  });
}

}  // extern "C"
