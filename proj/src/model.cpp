#include "posepyr/model.hpp"

#include <stdexcept>

namespace posepyr {

ModelConfig ModelConfig::toy() {
  ModelConfig c;
  c.base_width = 8;
  c.num_keypoints = 5;
  c.stage_spec = {1, 1, 1};
  c.units_per_branch = 2;
  c.num_deconv_modules = 1;
  c.deconv_residual_blocks = 2;
  c.input_size = 128;
  c.stem_width = 16;
  c.stage1_width = 8;
  c.stage1_units = 1;
  return c;
}

void ModelConfig::validate() const {
  auto fail = [](const std::string& msg) { throw std::invalid_argument("model config: " + msg); };
  if (base_width < 1) fail("base_width must be positive");
  if (num_keypoints < 1) fail("num_keypoints must be positive");
  if (stage_spec.empty()) fail("stage_spec must list at least one stage");
  for (int b : stage_spec) {
    if (b < 1) fail("every stage needs at least one multi-resolution block");
  }
  if (units_per_branch < 0) fail("units_per_branch must be non-negative");
  if (num_deconv_modules < 0) fail("num_deconv_modules must be non-negative");
  if (deconv_residual_blocks < 0) fail("deconv_residual_blocks must be non-negative");
  if (stem_width < 1 || stage1_width < 1) fail("stem and stage-1 widths must be positive");
  if (stage1_units < 1) fail("stage1_units must be positive");
  if (input_size < 1 || input_size % size_divisor() != 0) {
    fail("input_size " + std::to_string(input_size) + " is not divisible by " + std::to_string(size_divisor()));
  }
}

void to_json(nlohmann::json& j, const ModelConfig& c) {
  j = nlohmann::json{{"base_width", c.base_width},
                     {"num_keypoints", c.num_keypoints},
                     {"stage_spec", c.stage_spec},
                     {"units_per_branch", c.units_per_branch},
                     {"num_deconv_modules", c.num_deconv_modules},
                     {"deconv_residual_blocks", c.deconv_residual_blocks},
                     {"concat_heatmaps_into_deconv", c.concat_heatmaps_into_deconv},
                     {"input_size", c.input_size},
                     {"stem_width", c.stem_width},
                     {"stage1_width", c.stage1_width},
                     {"stage1_units", c.stage1_units}};
}

// Missing keys keep their defaults; a "preset" key selects the starting point.
void from_json(const nlohmann::json& j, ModelConfig& c) {
  if (j.contains("preset")) {
    const auto preset = j.at("preset").get<std::string>();
    if (preset == "w32") c = ModelConfig::w32();
    else if (preset == "w48") c = ModelConfig::w48();
    else if (preset == "toy") c = ModelConfig::toy();
    else throw std::invalid_argument("model config: unknown preset '" + preset + "'");
  }
  auto opt = [&](const char* key, auto& field) {
    if (j.contains(key)) j.at(key).get_to(field);
  };
  opt("base_width", c.base_width);
  opt("num_keypoints", c.num_keypoints);
  opt("stage_spec", c.stage_spec);
  opt("units_per_branch", c.units_per_branch);
  opt("num_deconv_modules", c.num_deconv_modules);
  opt("deconv_residual_blocks", c.deconv_residual_blocks);
  opt("concat_heatmaps_into_deconv", c.concat_heatmaps_into_deconv);
  opt("input_size", c.input_size);
  opt("stem_width", c.stem_width);
  opt("stage1_width", c.stage1_width);
  opt("stage1_units", c.stage1_units);
}

template class Model<float>;
template class Model<double>;

}  // namespace posepyr
