#include "posepyr/cli.hpp"

#include "posepyr/train.hpp"

#include <iomanip>
#include <ostream>
#include <sstream>

namespace posepyr {

namespace fs = std::filesystem;

namespace {

std::vector<std::string> split_csv(const std::string& csv) {
  std::vector<std::string> out;
  std::stringstream ss(csv);
  std::string item;
  while (std::getline(ss, item, ',')) {
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

fs::path stem_path(const fs::path& dir, const fs::path& image, const std::string& suffix) {
  return dir / (image.stem().string() + suffix);
}

const Color kPoseColors[] = {{1.0f, 0.2f, 0.2f}, {0.2f, 0.9f, 0.2f}, {0.3f, 0.5f, 1.0f},
                             {1.0f, 0.9f, 0.1f}, {0.9f, 0.3f, 0.9f}, {0.1f, 0.9f, 0.9f}};

}  // namespace

std::vector<double> parse_scales(const std::string& csv) {
  std::vector<double> out;
  for (const auto& s : split_csv(csv)) {
    std::size_t used = 0;
    double v = 0;
    try {
      v = std::stod(s, &used);
    } catch (const std::exception&) {
      used = 0;
    }
    if (used != s.size() || !(v > 0)) throw std::invalid_argument("--scales: '" + s + "' is not a positive number");
    out.push_back(v);
  }
  if (out.empty()) throw std::invalid_argument("--scales: empty list");
  return out;
}

std::vector<int> parse_int_list(const std::string& csv) {
  std::vector<int> out;
  for (const auto& s : split_csv(csv)) {
    std::size_t used = 0;
    int v = 0;
    try {
      v = std::stoi(s, &used);
    } catch (const std::exception&) {
      used = 0;
    }
    if (used != s.size()) throw std::invalid_argument("'" + s + "' is not an integer");
    out.push_back(v);
  }
  return out;
}

RunConfig resolve_config(const Overrides& o) {
  RunConfig cfg;
  if (o.config) {
    cfg = load_run_config(*o.config);
  } else if (o.checkpoint && fs::exists(*o.checkpoint)) {
    const Archive a = read_archive(*o.checkpoint);
    try {
      cfg = nlohmann::json::parse(a.meta).at("config").get<RunConfig>();
    } catch (const nlohmann::json::exception& e) {
      throw std::invalid_argument("checkpoint " + *o.checkpoint + " carries no readable config: " + e.what());
    }
  }
  if (o.seed) {
    cfg.training.seed = *o.seed;
    cfg.data.scene.seed = *o.seed;
  }
  if (o.checkpoint) cfg.paths.checkpoint = *o.checkpoint;
  if (o.scales) cfg.inference.scales = *o.scales;
  if (o.no_flip) cfg.inference.flip = FlipMode::kOff;
  if (o.out) {
    if (!o.out_moves_checkpoint && cfg.paths.checkpoint.empty()) cfg.paths.checkpoint = cfg.checkpoint_path().string();
    cfg.paths.out_dir = *o.out;
  }
  cfg.validate();
  return cfg;
}

void cmd_gen_data(const RunConfig& cfg, std::ostream& log) {
  cfg.validate();
  const fs::path dir = cfg.paths.data_dir;
  SceneConfig train = cfg.data.scene, val = cfg.data.scene;
  val.seed = splitmix64(cfg.data.scene.seed ^ 0x76616c0000000000ULL);
  export_dataset(generate_split(train, cfg.data.train_images, "train"), dir, "train");
  export_dataset(generate_split(val, cfg.data.val_images, "val"), dir, "val");
  log << "wrote " << cfg.data.train_images << " train and " << cfg.data.val_images << " val images to " << dir.string()
      << "\n";
}

void cmd_train(const RunConfig& cfg, bool resume, std::ostream& log) {
  const fs::path data = cfg.split_json("train");
  if (!fs::exists(data)) throw std::runtime_error("training data not found: " + data.string());
  const Dataset ds = load_dataset(data);
  Model<float> model(cfg.model, cfg.training.seed);
  TrainOptions opt;
  opt.resume = resume;
  const int total = total_steps(cfg.training, static_cast<int>(ds.size()));
  const int every = std::max(1, total / 20);
  opt.on_step = [&](const StepLog& s) {
    if (s.step % every == 0 || s.step + 1 == total) {
      log << "step " << s.step << "/" << total << " epoch " << s.epoch << " heatmap " << s.heatmap_loss << " tag "
          << s.tag_loss << " lr " << s.lr << "\n";
    }
  };
  const TrainResult r = run_training(model, ds, cfg, opt);
  log << "trained steps " << r.start_step << ".." << r.end_step << "; checkpoint " << cfg.checkpoint_path().string()
      << "\n";
}

Model<float> load_model(const RunConfig& cfg) {
  const fs::path ckpt = cfg.checkpoint_path();
  if (!fs::exists(ckpt)) throw std::runtime_error("checkpoint not found: " + ckpt.string());
  Model<float> model(cfg.model, cfg.training.seed);
  model.load_state(read_archive(ckpt));
  return model;
}

std::vector<EvalReport> cmd_eval(const RunConfig& cfg, const std::string& split, std::ostream& log) {
  const fs::path data = cfg.split_json(split);
  if (!fs::exists(data)) throw std::runtime_error("dataset not found: " + data.string());
  const Dataset ds = load_dataset(data);
  const Model<float> model = load_model(cfg);
  std::vector<bool> flips;
  if (cfg.inference.flip != FlipMode::kOff) flips.push_back(true);
  if (cfg.inference.flip != FlipMode::kOn) flips.push_back(false);

  fs::create_directories(cfg.paths.out_dir);
  std::vector<EvalReport> reports;
  for (bool flip : flips) {
    std::vector<EvalImage> preds;
    const EvalReport r = evaluate_dataset(model, ds, inference_options(cfg, ds.schema, flip), &preds);
    nlohmann::json results = nlohmann::json::array();
    for (const auto& im : preds) {
      for (auto& entry : poses_to_results(im.image_id, im.preds)) results.push_back(entry);
    }
    const std::string tag = flip ? "flip" : "noflip";
    save_json(fs::path(cfg.paths.out_dir) / ("report_" + tag + ".json"), r.to_json(true), 2);
    save_json(fs::path(cfg.paths.out_dir) / ("results_" + tag + ".json"), results);
    log << split << " " << tag << ": " << r.summary() << "\n";
    reports.push_back(r);
  }
  return reports;
}

void cmd_infer(const RunConfig& cfg, const fs::path& image_path, std::ostream& log) {
  const Image image = read_png(image_path);
  const Model<float> model = load_model(cfg);
  KeypointSchema schema = keypoint_schema(cfg.model.num_keypoints);
  const bool flip = cfg.inference.flip != FlipMode::kOff;
  const InferenceOptions opt = inference_options(cfg, schema, flip);
  const InferenceResult<float> result = multi_scale_infer(model, image, opt);

  double nearest = opt.scales.front();
  for (double s : opt.scales) {
    if (std::abs(s - 1.0) < std::abs(nearest - 1.0)) nearest = s;
  }
  const ScaleOutput<float> levels = infer_levels(model, image, nearest, opt);
  Archive a;
  a.meta = nlohmann::json{{"image", image_path.string()},
                          {"width", image.width},
                          {"height", image.height},
                          {"scale", nearest},
                          {"resized", {levels.resized_w, levels.resized_h}}}
               .dump();
  for (std::size_t l = 0; l < levels.levels.size(); ++l) {
    a.entries.push_back(to_entry("level" + std::to_string(l), levels.levels[l]));
  }
  a.entries.push_back(to_entry("tags", levels.tags));
  a.entries.push_back(to_entry("aggregate", result.heatmaps));

  fs::create_directories(cfg.paths.out_dir);
  write_archive(stem_path(cfg.paths.out_dir, image_path, "_pyramid.bin"), a);
  save_json(stem_path(cfg.paths.out_dir, image_path, "_results.json"), poses_to_results(0, result.poses), 2);
  log << image_path.string() << ": " << result.poses.size() << " poses\n";
}

std::vector<CostRow> cmd_inspect(const RunConfig& cfg, std::ostream& log) {
  cfg.model.validate();
  const Model<float> model(cfg.model, 0);
  const auto rows = model.cost_breakdown(cfg.model.input_size);
  Index params = 0;
  double gflops = 0;
  log << std::left << std::setw(14) << "section" << std::right << std::setw(14) << "params" << std::setw(12)
      << "GFLOPs" << "\n";
  log << std::fixed;
  for (const auto& r : rows) {
    log << std::left << std::setw(14) << r.section << std::right << std::setw(14) << r.params << std::setw(12)
        << std::setprecision(4) << r.gflops << "\n";
    params += r.params;
    gflops += r.gflops;
  }
  log << std::left << std::setw(14) << "total" << std::right << std::setw(14) << params << std::setw(12)
      << std::setprecision(4) << gflops << "\n";
  log << "input " << cfg.model.input_size << "  params " << std::setprecision(3) << params / 1e6 << "M  GFLOPs "
      << std::setprecision(2) << gflops << "\n";
  log.unsetf(std::ios::fixed);
  return rows;
}

Image heatmap_image(const Tensor<float>& maps, Index channel) {
  const Index h = maps.dim(2), w = maps.dim(3);
  Image im(static_cast<int>(w), static_cast<int>(h));
  const float* src = maps.ptr() + channel * h * w;
  for (Index y = 0; y < h; ++y) {
    for (Index x = 0; x < w; ++x) {
      const float v = std::clamp(src[y * w + x], 0.0f, 1.0f);
      for (int c = 0; c < 3; ++c) im.at(static_cast<int>(x), static_cast<int>(y), c) = v;
    }
  }
  return im;
}

Image overlay_poses(const Image& image, const std::vector<Pose>& poses, const KeypointSchema& schema) {
  Image out = image;
  for (std::size_t p = 0; p < poses.size(); ++p) {
    const Color& col = kPoseColors[p % std::size(kPoseColors)];
    const auto& kp = poses[p].keypoints;
    for (const auto& [a, b] : schema.skeleton) {
      if (a >= static_cast<int>(kp.size()) || b >= static_cast<int>(kp.size())) continue;
      if (kp[a][2] > 0 && kp[b][2] > 0) draw_segment(out, kp[a][0], kp[a][1], kp[b][0], kp[b][1], 0.5, col);
    }
    for (const auto& k : kp) {
      if (k[2] > 0) draw_disk(out, k[0], k[1], 1.5, col);
    }
  }
  return out;
}

std::vector<fs::path> cmd_plot(const PlotRequest& req, const KeypointSchema& schema, std::ostream& log) {
  const Archive a = read_archive(req.pyramid);
  std::vector<Tensor<float>> levels;
  for (int l = 0;; ++l) {
    const ArchiveEntry* e = a.find("level" + std::to_string(l));
    if (!e) break;
    Tensor<float> t(e->shape);
    load_entry(*e, t);
    levels.push_back(std::move(t));
  }
  if (levels.empty()) throw std::runtime_error(req.pyramid.string() + " holds no heatmap levels");
  const Index K = levels.front().dim(1);
  std::vector<int> kps = req.keypoints;
  if (kps.empty()) {
    for (int k = 0; k < K; ++k) kps.push_back(k);
  }
  for (int k : kps) {
    if (k < 0 || k >= K) {
      throw std::invalid_argument("keypoint " + std::to_string(k) + " out of range [0, " + std::to_string(K) + ")");
    }
  }
  fs::create_directories(req.out_dir);
  std::vector<fs::path> written;
  for (std::size_t l = 0; l < levels.size(); ++l) {
    for (int k : kps) {
      const fs::path p = req.out_dir / ("level" + std::to_string(l) + "_k" + std::to_string(k) + ".png");
      write_png(p, heatmap_image(levels[l], k));
      written.push_back(p);
    }
  }
  if (!req.image.empty()) {
    fs::path poses_path = req.poses;
    if (poses_path.empty()) {
      std::string stem = req.pyramid.stem().string();
      const std::string suffix = "_pyramid";
      if (stem.size() > suffix.size() && stem.ends_with(suffix)) stem.resize(stem.size() - suffix.size());
      poses_path = req.pyramid.parent_path() / (stem + "_results.json");
    }
    std::vector<Pose> poses;
    for (auto& [id, pose] : results_from_json(load_json(poses_path), static_cast<int>(K))) poses.push_back(pose);
    const fs::path p = req.out_dir / "overlay.png";
    write_png(p, overlay_poses(read_png(req.image), poses, schema));
    written.push_back(p);
  }
  log << "wrote " << written.size() << " images to " << req.out_dir.string() << "\n";
  return written;
}

}  // namespace posepyr
