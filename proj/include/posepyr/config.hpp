#pragma once

#include "posepyr/decode.hpp"
#include "posepyr/model.hpp"
#include "posepyr/supervision.hpp"
#include "posepyr/synthdata.hpp"

#include "json.hpp"

#include <filesystem>
#include <string>
#include <vector>

namespace posepyr {

struct DataConfig {
  SceneConfig scene;
  int train_images = 16;
  int val_images = 16;
};

struct TrainConfig {
  int epochs = 0;          // > 0 overrides iterations with epochs * ceil(n / batch_size)
  int iterations = 500;
  int batch_size = 8;
  double lr = 1e-3;
  std::vector<double> lr_drops{2.0 / 3.0, 13.0 / 15.0};  // fractions of the total step count
  double lr_drop_factor = 0.1;
  std::uint64_t seed = 0;
  LossWeights loss;
  double sigma = 2.0;
  bool augment = true;
  AugmentParams augment_params;
  int checkpoint_every = 0;  // steps; 0 writes only the final checkpoint
  int eval_every_epochs = 0;
};

enum class FlipMode { kOn, kOff, kBoth };

struct InferConfig {
  FlipMode flip = FlipMode::kOn;
  std::vector<double> scales{1.0};
  int base_size = 0;  // 0 uses model.input_size
  DecodeParams decode;
};

struct PathsConfig {
  std::string data_dir = "data";  // holds train.json, val.json and images/
  std::string checkpoint;         // empty = <out_dir>/checkpoint.bin
  std::string out_dir = "runs/default";
};

struct RunConfig {
  ModelConfig model = ModelConfig::toy();
  DataConfig data;
  TrainConfig training;
  InferConfig inference;
  PathsConfig paths;

  /// Throws std::invalid_argument describing the first violated constraint.
  void validate() const;

  std::filesystem::path checkpoint_path() const;
  std::filesystem::path split_json(const std::string& split) const;
};

void to_json(nlohmann::json& j, const RunConfig& c);
/// Missing sections and keys keep their defaults.
void from_json(const nlohmann::json& j, RunConfig& c);

RunConfig load_run_config(const std::filesystem::path& path);

/// Total optimisation steps for a training set of n images.
int total_steps(const TrainConfig& t, int n_images);

/// Step at which each LR drop takes effect: floor(fraction * total), so 2/3 and
/// 13/15 of 300 give 200 and 260.
std::vector<int> lr_drop_steps(const TrainConfig& t, int total);

double learning_rate(const TrainConfig& t, int step, int total);

}  // namespace posepyr
