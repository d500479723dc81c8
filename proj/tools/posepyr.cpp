#include "posepyr/cli.hpp"

#include "CLI11.hpp"

#include <iostream>

using namespace posepyr;

namespace {

struct Common {
  std::string config, checkpoint, scales, out;
  std::uint64_t seed = 0;
  bool no_flip = false;
};

void add_common(CLI::App* cmd, Common& c) {
  cmd->add_option("--config", c.config, "Run config JSON");
  cmd->add_option("--seed", c.seed, "Seed for data generation and training");
  cmd->add_option("--checkpoint", c.checkpoint, "Checkpoint path");
  cmd->add_option("--scales", c.scales, "Comma-separated test scales, e.g. 0.5,1,2");
  cmd->add_flag("--no-flip", c.no_flip, "Disable flip testing");
  cmd->add_option("--out", c.out, "Output directory");
}

Overrides overrides(const CLI::App* cmd, const Common& c) {
  Overrides o;
  if (cmd->count("--config")) o.config = c.config;
  if (cmd->count("--seed")) o.seed = c.seed;
  if (cmd->count("--checkpoint")) o.checkpoint = c.checkpoint;
  if (cmd->count("--scales")) o.scales = parse_scales(c.scales);
  o.no_flip = c.no_flip;
  if (cmd->count("--out")) o.out = c.out;
  return o;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Bottom-up multi-person pose estimation with high-resolution heatmap pyramids"};
  app.require_subcommand(1);

  Common c;
  auto* gen = app.add_subcommand("gen-data", "Generate synthetic train/val splits");
  add_common(gen, c);

  bool resume = false;
  auto* train = app.add_subcommand("train", "Train a model");
  add_common(train, c);
  train->add_flag("--resume", resume, "Continue from the checkpoint if it exists");

  std::string split = "val";
  auto* eval = app.add_subcommand("eval", "Evaluate a checkpoint on a split");
  add_common(eval, c);
  eval->add_option("--split", split, "Dataset split (train or val)");

  std::string image;
  auto* infer = app.add_subcommand("infer", "Run inference on one PNG image");
  add_common(infer, c);
  infer->add_option("--image", image, "Input PNG")->required();

  auto* inspect = app.add_subcommand("inspect", "Print parameter and FLOP counts");
  add_common(inspect, c);

  PlotRequest plot_req;
  std::string pyramid, plot_image, poses, keypoints;
  auto* plot = app.add_subcommand("plot", "Render heatmaps and pose overlays from an infer run");
  add_common(plot, c);
  plot->add_option("--pyramid", pyramid, "Pyramid archive written by infer")->required();
  plot->add_option("--image", plot_image, "Image for the pose overlay");
  plot->add_option("--poses", poses, "Results JSON (default: beside the pyramid)");
  plot->add_option("--keypoints", keypoints, "Comma-separated keypoint indices (default: all)");

  CLI11_PARSE(app, argc, argv);

  try {
    if (*gen) {
      Overrides o = overrides(gen, c);
      const auto out = o.out;
      o.out.reset();
      RunConfig cfg = resolve_config(o);
      if (out) cfg.paths.data_dir = *out;
      cmd_gen_data(cfg, std::cout);
    } else if (*train) {
      cmd_train(resolve_config(overrides(train, c)), resume, std::cout);
    } else if (*eval) {
      Overrides o = overrides(eval, c);
      o.out_moves_checkpoint = false;
      cmd_eval(resolve_config(o), split, std::cout);
    } else if (*infer) {
      Overrides o = overrides(infer, c);
      o.out_moves_checkpoint = false;
      cmd_infer(resolve_config(o), image, std::cout);
    } else if (*inspect) {
      cmd_inspect(resolve_config(overrides(inspect, c)), std::cout);
    } else if (*plot) {
      const RunConfig cfg = resolve_config(overrides(plot, c));
      plot_req.pyramid = pyramid;
      plot_req.image = plot_image;
      plot_req.poses = poses;
      plot_req.keypoints = parse_int_list(keypoints);
      plot_req.out_dir = cfg.paths.out_dir;
      cmd_plot(plot_req, keypoint_schema(cfg.model.num_keypoints), std::cout);
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
