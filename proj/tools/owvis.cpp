// Command-line front end. Everything goes through the C interface.

#include <algorithm>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <memory>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"
#include "owvis/owvis.h"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr int kExitValidation = 1;
constexpr int kExitRuntime = 2;

struct Failure {
  int code;
  std::string message;
};

void check(owvis_status s, const std::string& what) {
  if (s == OWVIS_OK) return;
  throw Failure{owvis_status_is_validation(s) ? kExitValidation : kExitRuntime,
                what + ": " + owvis_status_name(s) + ": " + owvis_last_error()};
}

// Owns a string returned by the library.
struct OwnedString {
  char* p = nullptr;
  ~OwnedString() { owvis_string_free(p); }
  char** out() { return &p; }
  std::string str() const { return p ? p : ""; }
};

template <typename T, void (*Free)(T*)>
struct Handle {
  T* p = nullptr;
  ~Handle() { Free(p); }
  T** out() { return &p; }
};
using Dataset = Handle<owvis_dataset, owvis_dataset_free>;
using Split = Handle<owvis_split, owvis_split_free>;
using Model = Handle<owvis_model, owvis_model_free>;

void write_file(const fs::path& path, const std::string& text) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream f(path, std::ios::binary);
  f << text;
  if (!f) throw Failure{kExitRuntime, "cannot write " + path.string()};
}

std::string read_file(const fs::path& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw Failure{kExitValidation, "cannot read " + path.string()};
  std::ostringstream ss;
  ss << f.rdbuf();
  return ss.str();
}

struct Resolved {
  std::string json_text;
  json doc;
  std::string fingerprint;
};

Resolved resolve(const std::string& config, const std::vector<std::string>& sets) {
  std::vector<const char*> raw;
  for (const auto& s : sets) raw.push_back(s.c_str());
  OwnedString text, fp;
  check(owvis_config_resolve(config.empty() ? nullptr : config.c_str(), raw.data(), raw.size(), text.out(), fp.out()),
        "config");
  return {text.str(), json::parse(text.str()), fp.str()};
}

fs::path output_root(const std::string& flag, const json& config) {
  if (!flag.empty()) return flag;
  if (const char* env = std::getenv("OWVIS_OUTPUT_ROOT"); env && *env) return env;
  const std::string dir = config.value("output_dir", "");
  return dir.empty() ? fs::path("runs") : fs::path(dir);
}

fs::path task_dir(const fs::path& root, const std::string& fingerprint, int task) {
  return root / fingerprint / ("task" + std::to_string(task));
}

std::string data_path(const json& config, const char* key) {
  const std::string p = config.at("data").value(key, "");
  if (p.empty()) throw Failure{kExitValidation, std::string("config: data.") + key + " is not set"};
  return p;
}

void load_data(const json& config, Dataset& dataset, Split& split) {
  check(owvis_dataset_load(data_path(config, "annotations").c_str(), nullptr, dataset.out()), "annotations");
  check(owvis_split_load(data_path(config, "split").c_str(), split.out()), "split");
}

void load_model(const fs::path& checkpoint, const std::string& fingerprint, Model& model) {
  check(owvis_model_load(checkpoint.string().c_str(), model.out()), "checkpoint " + checkpoint.string());
  OwnedString fp;
  check(owvis_model_fingerprint(model.p, fp.out()), "checkpoint");
  if (fp.str() != fingerprint)
    throw Failure{kExitValidation, "checkpoint " + checkpoint.string() + " was trained under fingerprint " +
                                       fp.str() + " but the config resolves to " + fingerprint};
}

void metrics_line(const char* line, void* user) {
  auto& out = *static_cast<std::ofstream*>(user);
  out << line << '\n';
  out.flush();
}

struct Common {
  std::string config;
  std::vector<std::string> sets;
  std::string out;
};

void add_common(CLI::App* cmd, Common& c) {
  cmd->add_option("--config", c.config, "run config JSON");
  cmd->add_option("--set", c.sets, "override a config key, e.g. --set schedule.task1_epochs=2");
  cmd->add_option("--out", c.out, "output root (default: $OWVIS_OUTPUT_ROOT, then output_dir, then ./runs)");
}

int cmd_synth(const std::string& config, const std::vector<std::string>& sets, const std::string& out) {
  json doc = config.empty() ? json() : json::parse(read_file(config));
  for (const auto& s : sets) {
    const auto eq = s.find('=');
    if (eq == std::string::npos) throw Failure{kExitValidation, "override '" + s + "' is not key=value"};
    json value;
    try {
      value = json::parse(s.substr(eq + 1));
    } catch (const json::parse_error&) {
      value = s.substr(eq + 1);
    }
    if (doc.is_null()) doc = json::object();
    std::string pointer = "/" + s.substr(0, eq);
    std::replace(pointer.begin(), pointer.end(), '.', '/');
    doc[json::json_pointer(pointer)] = value;
  }
  const std::string text = doc.is_null() ? "" : doc.dump();
  Dataset ds;
  check(owvis_synth_generate(text.empty() ? nullptr : text.c_str(), out.c_str(), ds.out()), "synth-gen");
  OwnedString summary;
  check(owvis_dataset_summary(ds.p, summary.out()), "synth-gen");
  std::cout << "wrote " << (fs::path(out) / "annotations.json").string() << "\n" << summary.str() << "\n";
  return 0;
}

int cmd_split(const std::string& annotations, const std::string& split_config, const std::string& name,
              const std::string& out) {
  Dataset ds;
  check(owvis_dataset_load(annotations.c_str(), nullptr, ds.out()), "annotations");
  Split split;
  const std::string cfg = split_config.empty() ? "" : read_file(split_config);
  check(owvis_split_build(ds.p, cfg.empty() ? nullptr : cfg.c_str(), name.empty() ? "A" : name.c_str(), split.out()),
        "split-build");
  OwnedString text, report, stats;
  int ok = 0;
  check(owvis_split_serialize(split.p, text.out()), "split-build");
  check(owvis_split_validate(split.p, ds.p, report.out(), &ok), "split-build");
  check(owvis_split_stats(split.p, ds.p, stats.out()), "split-build");
  const fs::path path(out);
  write_file(path, text.str());
  write_file(path.parent_path() / (path.stem().string() + "_report.json"), report.str());
  write_file(path.parent_path() / (path.stem().string() + "_stats.json"), stats.str());
  std::cout << stats.str() << "\n";
  if (!ok) {
    std::cerr << "split has violations:\n" << report.str() << "\n";
    return kExitValidation;
  }
  return 0;
}

int cmd_train(const Common& c, int task, const std::string& checkpoint) {
  const Resolved cfg = resolve(c.config, c.sets);
  Dataset ds;
  Split split;
  load_data(cfg.doc, ds, split);
  const fs::path root = output_root(c.out, cfg.doc);
  const fs::path dir = task_dir(root, cfg.fingerprint, task);
  fs::create_directories(dir);
  write_file(dir / "config.json", cfg.json_text);
  std::ofstream metrics(dir / "metrics.jsonl", std::ios::binary | std::ios::trunc);

  Model model;
  if (task == 1) {
    check(owvis_train_first(cfg.json_text.c_str(), ds.p, split.p, metrics_line, &metrics, model.out()), "train");
  } else {
    const fs::path from = checkpoint.empty() ? task_dir(root, cfg.fingerprint, task - 1) / "model.ckpt" : fs::path(checkpoint);
    load_model(from, cfg.fingerprint, model);
    int done = 0;
    check(owvis_model_task(model.p, &done), "train");
    if (done != task - 1)
      throw Failure{kExitValidation, "checkpoint has completed task " + std::to_string(done) + ", cannot train task " +
                                         std::to_string(task)};
    OwnedString exemplars;
    check(owvis_train_next(model.p, ds.p, split.p, metrics_line, &metrics, exemplars.out()), "train");
    write_file(dir / "exemplars.json", exemplars.str());
  }
  check(owvis_model_save(model.p, (dir / "model.ckpt").string().c_str()), "train");
  std::cout << "fingerprint " << cfg.fingerprint << "\n" << "wrote " << dir.string() << "\n";
  return 0;
}

int cmd_eval(const Common& c, int task, const std::string& checkpoint, const std::string& predictions, bool oracle) {
  const Resolved cfg = resolve(c.config, c.sets);
  Dataset ds;
  Split split;
  load_data(cfg.doc, ds, split);
  const fs::path dir = task_dir(output_root(c.out, cfg.doc), cfg.fingerprint, task);

  OwnedString preds, history;
  std::string pred_text;
  if (oracle) {
    check(owvis_oracle_predictions(ds.p, split.p, task, preds.out()), "eval");
    pred_text = preds.str();
  } else if (!predictions.empty()) {
    pred_text = read_file(predictions);
  } else {
    Model model;
    load_model(checkpoint.empty() ? dir / "model.ckpt" : fs::path(checkpoint), cfg.fingerprint, model);
    check(owvis_predict(model.p, ds.p, split.p, task, preds.out()), "eval");
    check(owvis_model_history(model.p, history.out()), "eval");
    pred_text = preds.str();
    write_file(dir / "predictions.json", pred_text);
  }
  OwnedString report, table;
  check(owvis_evaluate(ds.p, split.p, task, pred_text.c_str(), history.p, cfg.fingerprint.c_str(), report.out(),
                       table.out()),
        "eval");
  write_file(dir / "report.json", report.str());
  write_file(dir / "report.txt", table.str());
  std::cout << table.str();
  return 0;
}

int cmd_visualize(const Common& c, int task, const std::string& checkpoint, std::int64_t video) {
  const Resolved cfg = resolve(c.config, c.sets);
  Dataset ds;
  check(owvis_dataset_load(data_path(cfg.doc, "annotations").c_str(), nullptr, ds.out()), "annotations");
  const fs::path dir = task_dir(output_root(c.out, cfg.doc), cfg.fingerprint, task);
  Model model;
  load_model(checkpoint.empty() ? dir / "model.ckpt" : fs::path(checkpoint), cfg.fingerprint, model);
  const fs::path out = dir / "visualize" / std::to_string(video);
  check(owvis_visualize(model.p, ds.p, video, out.string().c_str()), "visualize");
  std::cout << "wrote " << out.string() << "\n";
  return 0;
}

int cmd_config(const Common& c, bool desk) {
  if (desk) {
    OwnedString text;
    check(owvis_config_desk(text.out()), "config");
    std::cout << text.str() << "\n";
    return 0;
  }
  const Resolved cfg = resolve(c.config, c.sets);
  std::cout << cfg.json_text << "\nfingerprint " << cfg.fingerprint << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Open-world video instance segmentation toolkit"};
  app.require_subcommand(1);
  app.set_version_flag("--version", owvis_version());

  Common config_c;
  bool config_desk = false;
  auto* config = app.add_subcommand("config", "print a resolved run config and its fingerprint");
  add_common(config, config_c);
  config->add_flag("--desk", config_desk, "print the built-in desk-scale preset instead");

  std::string synth_config, synth_out;
  std::vector<std::string> synth_sets;
  auto* synth = app.add_subcommand("synth-gen", "render a synthetic moving-shapes dataset");
  synth->add_option("--config", synth_config, "generator config JSON (default: desk settings)");
  synth->add_option("--set", synth_sets, "override a generator key");
  synth->add_option("--out", synth_out, "output directory")->required();

  std::string annotations, split_config, split_name, split_out;
  auto* split = app.add_subcommand("split-build", "partition a dataset into tasks");
  split->add_option("--annotations", annotations, "annotation file")->required();
  split->add_option("--split-config", split_config, "split recipe JSON");
  split->add_option("--name", split_name, "built-in split A-E (default A)");
  split->add_option("--out", split_out, "split file to write")->required();

  Common train_c, eval_c, vis_c;
  int train_task = 1, eval_task = 1, vis_task = 1;
  std::string train_ckpt, eval_ckpt, eval_preds, vis_ckpt;
  bool eval_oracle = false;
  std::int64_t vis_video = 0;

  auto* train = app.add_subcommand("train", "train one task of the protocol");
  add_common(train, train_c);
  train->add_option("--task", train_task, "task to train (later tasks resume the previous checkpoint)")
      ->check(CLI::PositiveNumber);
  train->add_option("--checkpoint", train_ckpt, "checkpoint of the previous task");

  auto* eval = app.add_subcommand("eval", "evaluate a checkpoint or a predictions file");
  add_common(eval, eval_c);
  eval->add_option("--task", eval_task, "task to evaluate")->check(CLI::PositiveNumber);
  eval->add_option("--checkpoint", eval_ckpt, "checkpoint to run (default: the run directory's)");
  eval->add_option("--predictions", eval_preds, "score this predictions file instead of running a model");
  eval->add_flag("--oracle", eval_oracle, "score the ground truth itself");

  auto* vis = app.add_subcommand("visualize", "write objectness and mask overlays for a video");
  add_common(vis, vis_c);
  vis->add_option("--task", vis_task, "task whose checkpoint to use")->check(CLI::PositiveNumber);
  vis->add_option("--checkpoint", vis_ckpt, "checkpoint to run");
  vis->add_option("--video", vis_video, "video id")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : kExitValidation;
  }

  try {
    if (*config) return cmd_config(config_c, config_desk);
    if (*synth) return cmd_synth(synth_config, synth_sets, synth_out);
    if (*split) return cmd_split(annotations, split_config, split_name, split_out);
    if (*train) return cmd_train(train_c, train_task, train_ckpt);
    if (*eval) return cmd_eval(eval_c, eval_task, eval_ckpt, eval_preds, eval_oracle);
    if (*vis) return cmd_visualize(vis_c, vis_task, vis_ckpt, vis_video);
  } catch (const Failure& f) {
    std::cerr << "owvis: " << f.message << "\n";
    return f.code;
  } catch (const json::exception& e) {
    std::cerr << "owvis: " << e.what() << "\n";
    return kExitValidation;
  } catch (const std::exception& e) {
    std::cerr << "owvis: " << e.what() << "\n";
    return kExitRuntime;
  }
  return 0;
}
