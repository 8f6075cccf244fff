#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "json.hpp"
#include "owvis/data_model.hpp"

namespace owvis {

/// Reads a YouTube-VIS style annotation file (videos / annotations /
/// categories with per-frame RLE segmentations). Frame files resolve against
/// the file's directory. Videos whose resolution is not a multiple of 16 are
/// center-padded with zeros.
Dataset load_annotations(const std::filesystem::path& path);
Dataset parse_annotations(const nlohmann::json& doc, const std::filesystem::path& image_root);

nlohmann::json annotations_to_json(const Dataset& dataset);
void save_annotations(const Dataset& dataset, const std::filesystem::path& path);

/// YouTube-VIS submission layout: a list of
/// {video_id, category_id, score, segmentations[]}; category_id 0 is unknown.
/// The parser also accepts the list wrapped as {"predictions": [...]}.
nlohmann::json predictions_to_json(const std::vector<InstanceTrack>& predictions);
std::vector<InstanceTrack> parse_predictions(const nlohmann::json& doc, const Dataset& dataset);
std::vector<InstanceTrack> load_predictions(const std::filesystem::path& path, const Dataset& dataset);
void save_predictions(const std::vector<InstanceTrack>& predictions, const std::filesystem::path& path);

nlohmann::json read_json_file(const std::filesystem::path& path);
void write_text_file(const std::filesystem::path& path, const std::string& text);

}  // namespace owvis
