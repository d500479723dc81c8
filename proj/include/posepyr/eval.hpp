#pragma once

#include "posepyr/annotation.hpp"
#include "posepyr/decode.hpp"

#include "json.hpp"

#include <string>
#include <vector>

namespace posepyr {

/// Per-keypoint falloff constants k_i.
struct OksConstants {
  std::vector<double> k;

  static OksConstants uniform(int num_keypoints, double value = 0.08);
  /// The published 17-keypoint COCO person constants.
  static OksConstants coco17();
  void validate(int num_keypoints) const;
};

/// Mean over visible gt keypoints of exp(-d^2 / (2 s^2 k^2)) with s^2 = gt.area.
/// Throws std::domain_error when the gt has no visible keypoint.
double oks(const Pose& pred, const Annotation& gt, const OksConstants& consts);

/// Half-open area bin (lo, hi].
struct AreaRange {
  std::string name;
  double lo = 0.0;
  double hi = 1e300;

  bool contains(double area) const { return area > lo && area <= hi; }
};

/// all: everything; medium: (32^2, 96^2]; large: > 96^2.
std::vector<AreaRange> default_area_ranges();

struct EvalImage {
  long image_id = 0;
  std::vector<Annotation> gts;
  std::vector<Pose> preds;
};

struct EvalParams {
  std::vector<double> thresholds;  // empty = 0.50:0.05:0.95
  int max_dets = 20;
  std::vector<AreaRange> area_ranges;  // empty = default_area_ranges()
};

struct MatchRecord {
  long image_id = 0;
  int pred = 0;     // index into the image's prediction list
  int gt = -1;      // index into the image's gt list, -1 when unmatched
  double oks = 0.0;
  double threshold = 0.0;
  bool ignored = false;
};

/// COCO-style summary. A metric is -1 when its area bin holds no gt.
struct EvalReport {
  double ap = 0.0, ap50 = 0.0, ap75 = 0.0, ap_m = 0.0, ap_l = 0.0, ar = 0.0, ar50 = 0.0, ar75 = 0.0, ar_m = 0.0,
         ar_l = 0.0;
  std::vector<double> thresholds;
  std::vector<double> recall_points;               // 101 points
  std::vector<std::vector<double>> precision;      // [threshold][recall point], area "all"
  std::vector<double> recall;                      // [threshold], area "all"
  std::vector<MatchRecord> matches;                // area "all"
  int num_gts = 0;
  int num_preds = 0;

  nlohmann::ordered_json to_json(bool include_tables = true) const;
  std::string summary() const;
};

/// Predicted pose area: bbox area of the present keypoints.
double pose_area(const Pose& p);

EvalReport evaluate(const std::vector<EvalImage>& images, const OksConstants& consts, const EvalParams& params = {});

// ---------------------------------------------------------------------------
// COCO keypoint JSON

struct ImageInfo {
  long id = 0;
  std::string file_name;
  int width = 0;
  int height = 0;

  bool operator==(const ImageInfo&) const = default;
};

struct KeypointSchema {
  std::vector<std::string> names;
  std::vector<std::array<int, 2>> skeleton;  // 0-based
  std::vector<int> flip_index;
  std::vector<double> oks_constants;

  int size() const { return static_cast<int>(names.size()); }
  bool operator==(const KeypointSchema&) const = default;
};

struct CocoDataset {
  KeypointSchema schema;
  std::vector<ImageInfo> images;
  std::vector<std::vector<Annotation>> annotations;  // parallel to images

  bool operator==(const CocoDataset&) const = default;
};

/// Ground truth in COCO keypoint format. "flip_index" and "oks_constants" are
/// optional extensions on the person category. Skeleton indices are 1-based in
/// the file.
nlohmann::json coco_to_json(const CocoDataset& ds);
CocoDataset coco_from_json(const nlohmann::json& j);
CocoDataset load_coco(const std::filesystem::path& path);
/// Writes to a temporary sibling and renames into place.
void save_json(const std::filesystem::path& path, const nlohmann::json& j, int indent = -1);
void save_json(const std::filesystem::path& path, const nlohmann::ordered_json& j, int indent = -1);
nlohmann::json load_json(const std::filesystem::path& path);

}  // namespace posepyr
