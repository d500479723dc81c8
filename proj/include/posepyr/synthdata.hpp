#pragma once

#include "posepyr/annotation.hpp"
#include "posepyr/eval.hpp"
#include "posepyr/image.hpp"

#include "json.hpp"

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

namespace posepyr {

/// Stick-figure scene parameters. Person size is the diagonal of the figure's
/// bounding box, drawn uniformly from [min_diagonal, max_diagonal].
struct SceneConfig {
  int image_size = 128;
  int min_persons = 1;
  int max_persons = 3;
  double min_diagonal = 56.0;
  double max_diagonal = 112.0;
  double crowding = 0.0;  // 0 independent placement, 1 packed around earlier persons
  int num_keypoints = 5;  // 5 or 17
  int border_margin = 4;
  std::uint64_t seed = 0;

  void validate() const;
  bool operator==(const SceneConfig&) const = default;
};

void to_json(nlohmann::json& j, const SceneConfig& c);
void from_json(const nlohmann::json& j, SceneConfig& c);

/// Keypoint names, skeleton, flip table and uniform OKS constants (0.08).
/// K = 5: head, left/right hand, left/right foot. K = 17: COCO person layout.
KeypointSchema keypoint_schema(int num_keypoints);

struct Dataset {
  KeypointSchema schema;
  std::vector<ImageInfo> infos;
  std::vector<Image> images;
  std::vector<std::vector<Annotation>> annotations;

  std::size_t size() const { return images.size(); }
};

/// SplitMix64 finaliser.
std::uint64_t splitmix64(std::uint64_t x);

/// One scene; its RNG is seeded from splitmix64(seed ^ index).
std::pair<Image, std::vector<Annotation>> generate_scene(const SceneConfig& config, std::uint64_t index);

/// n_images scenes with ids 0..n-1 and file names <prefix>_<id>.png.
Dataset generate_split(const SceneConfig& config, int n_images, const std::string& prefix = "img");

/// Writes <dir>/images/<file_name> PNGs and <dir>/<name>.json.
void export_dataset(const Dataset& ds, const std::filesystem::path& dir, const std::string& name);

/// Reads a COCO keypoint JSON and the images it lists, relative to <json dir>/images.
Dataset load_dataset(const std::filesystem::path& json_path);

/// Intersection over union of two (x, y, w, h) boxes.
double box_iou(const std::array<double, 4>& a, const std::array<double, 4>& b);

}  // namespace posepyr
