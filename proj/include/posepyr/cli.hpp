#pragma once

#include "posepyr/config.hpp"
#include "posepyr/decode.hpp"
#include "posepyr/eval.hpp"

#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

namespace posepyr {

/// Command-line values that override the config file.
struct Overrides {
  std::optional<std::string> config;
  std::optional<std::uint64_t> seed;
  std::optional<std::string> checkpoint;
  std::optional<std::vector<double>> scales;
  bool no_flip = false;
  std::optional<std::string> out;
  bool out_moves_checkpoint = true;  // false: the default checkpoint stays in the config's out_dir
};

/// Config from --config (or the checkpoint's embedded config when only
/// --checkpoint is given, or the built-in defaults), then the overrides.
RunConfig resolve_config(const Overrides& o);

std::vector<double> parse_scales(const std::string& csv);
std::vector<int> parse_int_list(const std::string& csv);

/// Writes <data_dir>/train.json, val.json and images/. --out replaces data_dir.
void cmd_gen_data(const RunConfig& cfg, std::ostream& log);

/// Trains on <data_dir>/train.json; --out replaces out_dir. Resumes from an
/// existing checkpoint when `resume` is set.
void cmd_train(const RunConfig& cfg, bool resume, std::ostream& log);

Model<float> load_model(const RunConfig& cfg);

/// Evaluates a split. Writes report_<flip|noflip>.json and
/// results_<flip|noflip>.json to out_dir, one pair per requested flip mode.
std::vector<EvalReport> cmd_eval(const RunConfig& cfg, const std::string& split, std::ostream& log);

/// Runs one image through the model. Writes <stem>_pyramid.bin (levels and
/// tags of the scale nearest 1) and <stem>_results.json to out_dir.
void cmd_infer(const RunConfig& cfg, const std::filesystem::path& image_path, std::ostream& log);

/// Per-section parameter and GFLOP table at model.input_size.
std::vector<CostRow> cmd_inspect(const RunConfig& cfg, std::ostream& log);

/// Grayscale PNG of one map, values clamped to [0, 1].
Image heatmap_image(const Tensor<float>& maps, Index channel);

/// Draws skeleton segments between present keypoints and a dot on each.
Image overlay_poses(const Image& image, const std::vector<Pose>& poses, const KeypointSchema& schema);

struct PlotRequest {
  std::filesystem::path pyramid;  // from cmd_infer
  std::filesystem::path image;    // optional, enables the overlay
  std::filesystem::path poses;    // optional results JSON, default <stem>_results.json beside the pyramid
  std::vector<int> keypoints;     // empty = all
  std::filesystem::path out_dir;
};

/// Writes level<l>_k<k>.png per requested keypoint and level, and overlay.png
/// when an image is given. Returns the written paths.
std::vector<std::filesystem::path> cmd_plot(const PlotRequest& req, const KeypointSchema& schema, std::ostream& log);

}  // namespace posepyr
