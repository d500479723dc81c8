#pragma once

#include "posepyr/config.hpp"
#include "posepyr/eval.hpp"
#include "posepyr/model.hpp"
#include "posepyr/synthdata.hpp"

#include <filesystem>
#include <functional>
#include <string>
#include <vector>

namespace posepyr {

struct StepLog {
  int epoch = 0;
  int step = 0;  // 0-based iteration index
  double heatmap_loss = 0.0;
  double tag_loss = 0.0;
  double total_loss = 0.0;
  double lr = 0.0;
};

inline constexpr const char* kMetricsHeader = "epoch,step,heatmap_loss,tag_loss,total_loss,lr";

/// Training images of iteration `step`: a per-epoch shuffle seeded from
/// (seed, epoch), cut into consecutive batches. The last batch of an epoch may
/// be short.
std::vector<int> batch_indices(std::uint64_t seed, int step, int n_images, int batch_size);

/// Seed for the augmentation of batch slot `slot` at iteration `step`.
std::uint64_t augment_seed(std::uint64_t seed, int step, int slot);

/// Network input and targets for one iteration.
struct Batch {
  Tensor<float> images;
  TargetPyramid<float> targets;
};

Batch make_batch(const RunConfig& cfg, const Dataset& ds, int step);

/// One optimisation step; returns the unweighted loss terms.
StepLog train_step(Model<float>& model, const Batch& batch, const RunConfig& cfg, int step, int total);

struct TrainOptions {
  bool resume = false;    // continue from cfg.checkpoint_path() when it exists
  int stop_at = -1;       // stop before this step (for interrupted runs); -1 runs to the end
  bool write_files = true;
  std::function<void(const StepLog&)> on_step;
};

struct TrainResult {
  int start_step = 0;
  int end_step = 0;
  int total_steps = 0;
  std::vector<StepLog> log;
};

/// Trains cfg.model on ds. With write_files, the output directory receives
/// metrics.csv, eval.csv (when periodic evaluation is on), run_info.txt (the
/// only file with a timestamp) and the checkpoint.
TrainResult run_training(Model<float>& model, const Dataset& ds, const RunConfig& cfg, const TrainOptions& options = {});

/// Archive metadata: the run config and progress.
std::string checkpoint_meta(const RunConfig& cfg, int total);

InferenceOptions inference_options(const RunConfig& cfg, const KeypointSchema& schema, bool flip);

OksConstants oks_constants_for(const KeypointSchema& schema);

/// Runs inference on every image and scores the poses against the dataset's
/// annotations. Per-image predictions are returned through `predictions`.
EvalReport evaluate_dataset(const Model<float>& model, const Dataset& ds, const InferenceOptions& options,
                            std::vector<EvalImage>* predictions = nullptr);

}  // namespace posepyr
