#include "posepyr/config.hpp"

#include <cmath>
#include <stdexcept>

namespace posepyr {

namespace {

template <typename V>
void opt(const nlohmann::json& j, const char* key, V& field) {
  if (j.contains(key)) j.at(key).get_to(field);
}

std::string flip_name(FlipMode m) {
  switch (m) {
    case FlipMode::kOn: return "on";
    case FlipMode::kOff: return "off";
    case FlipMode::kBoth: return "both";
  }
  return "on";
}

FlipMode parse_flip(const nlohmann::json& v) {
  if (v.is_boolean()) return v.get<bool>() ? FlipMode::kOn : FlipMode::kOff;
  const std::string s = v.get<std::string>();
  if (s == "on") return FlipMode::kOn;
  if (s == "off") return FlipMode::kOff;
  if (s == "both") return FlipMode::kBoth;
  throw std::invalid_argument("inference.flip must be \"on\", \"off\" or \"both\", got \"" + s + "\"");
}

}  // namespace

void RunConfig::validate() const {
  auto fail = [](const std::string& m) { throw std::invalid_argument("config: " + m); };
  model.validate();
  data.scene.validate();
  if (data.scene.num_keypoints != model.num_keypoints) {
    fail("data.scene.num_keypoints (" + std::to_string(data.scene.num_keypoints) + ") differs from model.num_keypoints (" +
         std::to_string(model.num_keypoints) + ")");
  }
  if (data.train_images < 0 || data.val_images < 0) fail("image counts must be non-negative");
  const auto& t = training;
  if (t.batch_size < 1) fail("training.batch_size must be at least 1");
  if (t.epochs < 0 || t.iterations < 0) fail("training length must be non-negative");
  if (!(t.lr > 0)) fail("training.lr must be positive");
  if (!(t.lr_drop_factor > 0 && t.lr_drop_factor <= 1)) fail("training.lr_drop_factor must lie in (0, 1]");
  for (std::size_t i = 0; i < t.lr_drops.size(); ++i) {
    if (!(t.lr_drops[i] > 0 && t.lr_drops[i] < 1)) fail("training.lr_drops must lie strictly between 0 and 1");
    if (i > 0 && !(t.lr_drops[i] > t.lr_drops[i - 1])) fail("training.lr_drops must be strictly increasing");
  }
  if (!(t.sigma > 0)) fail("training.sigma must be positive");
  if (t.checkpoint_every < 0 || t.eval_every_epochs < 0) fail("training intervals must be non-negative");
  if (inference.scales.empty()) fail("inference.scales is empty");
  for (double s : inference.scales) {
    if (!(s > 0)) fail("inference.scales must be positive");
  }
  if (inference.base_size < 0) fail("inference.base_size must be non-negative");
  if (inference.decode.max_per_type < 1) fail("inference.decode.max_per_type must be at least 1");
}

std::filesystem::path RunConfig::checkpoint_path() const {
  return paths.checkpoint.empty() ? std::filesystem::path(paths.out_dir) / "checkpoint.bin"
                                  : std::filesystem::path(paths.checkpoint);
}

std::filesystem::path RunConfig::split_json(const std::string& split) const {
  return std::filesystem::path(paths.data_dir) / (split + ".json");
}

void to_json(nlohmann::json& j, const RunConfig& c) {
  const auto& t = c.training;
  const auto& a = t.augment_params;
  const auto& d = c.inference.decode;
  j = nlohmann::json{
      {"model", c.model},
      {"data", {{"scene", c.data.scene}, {"train_images", c.data.train_images}, {"val_images", c.data.val_images}}},
      {"training",
       {{"epochs", t.epochs},
        {"iterations", t.iterations},
        {"batch_size", t.batch_size},
        {"lr", t.lr},
        {"lr_drops", t.lr_drops},
        {"lr_drop_factor", t.lr_drop_factor},
        {"seed", t.seed},
        {"heatmap_weight", t.loss.heatmap},
        {"tag_weight", t.loss.tag},
        {"sigma", t.sigma},
        {"augment", t.augment},
        {"max_rotation_deg", a.max_rotation_deg},
        {"min_scale", a.min_scale},
        {"max_scale", a.max_scale},
        {"max_translation", a.max_translation},
        {"flip_prob", a.flip_prob},
        {"checkpoint_every", t.checkpoint_every},
        {"eval_every_epochs", t.eval_every_epochs}}},
      {"inference",
       {{"flip", flip_name(c.inference.flip)},
        {"scales", c.inference.scales},
        {"base_size", c.inference.base_size},
        {"max_per_type", d.max_per_type},
        {"peak_threshold", d.peak_threshold},
        {"tag_threshold", d.tag_threshold},
        {"optimal_grouping", d.optimal_grouping}}},
      {"paths", {{"data_dir", c.paths.data_dir}, {"checkpoint", c.paths.checkpoint}, {"out_dir", c.paths.out_dir}}}};
}

void from_json(const nlohmann::json& j, RunConfig& c) {
  if (j.contains("model")) j.at("model").get_to(c.model);
  if (j.contains("data")) {
    const auto& d = j.at("data");
    if (d.contains("scene")) d.at("scene").get_to(c.data.scene);
    opt(d, "train_images", c.data.train_images);
    opt(d, "val_images", c.data.val_images);
  }
  if (j.contains("training")) {
    const auto& t = j.at("training");
    auto& o = c.training;
    opt(t, "epochs", o.epochs);
    opt(t, "iterations", o.iterations);
    opt(t, "batch_size", o.batch_size);
    opt(t, "lr", o.lr);
    opt(t, "lr_drops", o.lr_drops);
    opt(t, "lr_drop_factor", o.lr_drop_factor);
    opt(t, "seed", o.seed);
    opt(t, "heatmap_weight", o.loss.heatmap);
    opt(t, "tag_weight", o.loss.tag);
    opt(t, "sigma", o.sigma);
    opt(t, "augment", o.augment);
    opt(t, "max_rotation_deg", o.augment_params.max_rotation_deg);
    opt(t, "min_scale", o.augment_params.min_scale);
    opt(t, "max_scale", o.augment_params.max_scale);
    opt(t, "max_translation", o.augment_params.max_translation);
    opt(t, "flip_prob", o.augment_params.flip_prob);
    opt(t, "checkpoint_every", o.checkpoint_every);
    opt(t, "eval_every_epochs", o.eval_every_epochs);
  }
  if (j.contains("inference")) {
    const auto& i = j.at("inference");
    auto& o = c.inference;
    if (i.contains("flip")) o.flip = parse_flip(i.at("flip"));
    opt(i, "scales", o.scales);
    opt(i, "base_size", o.base_size);
    opt(i, "max_per_type", o.decode.max_per_type);
    opt(i, "peak_threshold", o.decode.peak_threshold);
    opt(i, "tag_threshold", o.decode.tag_threshold);
    opt(i, "optimal_grouping", o.decode.optimal_grouping);
  }
  if (j.contains("paths")) {
    const auto& p = j.at("paths");
    opt(p, "data_dir", c.paths.data_dir);
    opt(p, "checkpoint", c.paths.checkpoint);
    opt(p, "out_dir", c.paths.out_dir);
  }
}

RunConfig load_run_config(const std::filesystem::path& path) {
  RunConfig c;
  try {
    c = load_json(path).get<RunConfig>();
  } catch (const nlohmann::json::exception& e) {
    throw std::invalid_argument("config " + path.string() + ": " + e.what());
  }
  c.validate();
  return c;
}

int total_steps(const TrainConfig& t, int n_images) {
  if (t.epochs > 0) {
    if (n_images <= 0) throw std::invalid_argument("total_steps: empty training set");
    return t.epochs * ((n_images + t.batch_size - 1) / t.batch_size);
  }
  return t.iterations;
}

std::vector<int> lr_drop_steps(const TrainConfig& t, int total) {
  std::vector<int> steps;
  for (double f : t.lr_drops) steps.push_back(static_cast<int>(std::floor(f * total + 1e-9)));
  return steps;
}

double learning_rate(const TrainConfig& t, int step, int total) {
  double lr = t.lr;
  for (int s : lr_drop_steps(t, total)) {
    if (step >= s) lr *= t.lr_drop_factor;
  }
  return lr;
}

}  // namespace posepyr
