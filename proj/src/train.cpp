#include "posepyr/train.hpp"

#include "posepyr/parallel.hpp"

#include <algorithm>
#include <chrono>
#include <ctime>
#include <fstream>
#include <iomanip>
#include <numeric>
#include <random>
#include <sstream>

namespace posepyr {

namespace fs = std::filesystem;

std::vector<int> batch_indices(std::uint64_t seed, int step, int n_images, int batch_size) {
  if (n_images <= 0) throw std::invalid_argument("batch_indices: empty training set");
  const int per_epoch = (n_images + batch_size - 1) / batch_size;
  const int epoch = step / per_epoch, pos = step % per_epoch;
  std::vector<int> order(static_cast<std::size_t>(n_images));
  std::iota(order.begin(), order.end(), 0);
  std::mt19937_64 rng(splitmix64(splitmix64(seed) ^ static_cast<std::uint64_t>(epoch)));
  std::shuffle(order.begin(), order.end(), rng);
  const int lo = pos * batch_size, hi = std::min(n_images, lo + batch_size);
  return {order.begin() + lo, order.begin() + hi};
}

std::uint64_t augment_seed(std::uint64_t seed, int step, int slot) {
  return splitmix64(splitmix64(seed ^ 0x6a09e667f3bcc909ULL) ^ (static_cast<std::uint64_t>(step) << 16 | slot));
}

namespace {

std::vector<Index> level_resolutions(const ModelConfig& m) {
  std::vector<Index> res;
  for (int l = 0; l <= m.num_deconv_modules; ++l) res.push_back(static_cast<Index>(m.input_size / 4) << l);
  return res;
}

std::string format_row(const StepLog& s) {
  std::ostringstream os;
  os << s.epoch << ',' << s.step << ',' << std::setprecision(17) << s.heatmap_loss << ',' << s.tag_loss << ','
     << s.total_loss << ',' << std::setprecision(10) << s.lr;
  return os.str();
}

void write_text_atomic(const fs::path& path, const std::string& text) {
  const fs::path tmp = path.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error("cannot write " + tmp.string());
    out << text;
    if (!out) throw std::runtime_error("write failed for " + tmp.string());
  }
  fs::rename(tmp, path);
}

/// Keeps the header and the rows of steps before `keep_before`.
std::string truncated_log(const fs::path& path, int keep_before, const std::string& header) {
  std::string text = header + "\n";
  std::ifstream in(path);
  std::string line;
  if (!in || !std::getline(in, line)) return text;
  while (std::getline(in, line)) {
    const auto a = line.find(','), b = line.find(',', a + 1);
    if (a == std::string::npos || b == std::string::npos) continue;
    if (std::stoi(line.substr(a + 1, b - a - 1)) < keep_before) text += line + "\n";
  }
  return text;
}

std::string utc_timestamp() {
  const std::time_t now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&now, &tm);
  std::ostringstream os;
  os << std::put_time(&tm, "%Y-%m-%dT%H:%M:%SZ");
  return os.str();
}

}  // namespace

Batch make_batch(const RunConfig& cfg, const Dataset& ds, int step) {
  const auto idx = batch_indices(cfg.training.seed, step, static_cast<int>(ds.size()), cfg.training.batch_size);
  const int S = cfg.model.input_size, K = cfg.model.num_keypoints;
  const auto res = level_resolutions(cfg.model);
  std::vector<Augmented> samples(idx.size());
  std::vector<TargetPyramid<float>> parts(idx.size());
  parallel_for(static_cast<long>(idx.size()), [&](long b) {
    const auto i = static_cast<std::size_t>(idx[static_cast<std::size_t>(b)]);
    if (cfg.training.augment) {
      std::mt19937_64 rng(augment_seed(cfg.training.seed, step, static_cast<int>(b)));
      samples[b] = augment(ds.images[i], ds.annotations[i], rng, cfg.training.augment_params, S, ds.schema.flip_index);
    } else {
      samples[b] = apply_augmentation(ds.images[i], ds.annotations[i], AugmentDraw{}, S, ds.schema.flip_index);
    }
    parts[b] = make_targets<float>(samples[b].annos, S, K, res, cfg.training.sigma);
  });
  std::vector<const Image*> ptrs;
  for (const auto& s : samples) ptrs.push_back(&s.image);
  return {images_to_tensor<float>(ptrs), stack_targets(parts)};
}

StepLog train_step(Model<float>& model, const Batch& batch, const RunConfig& cfg, int step, int total) {
  const auto params = model.parameters();
  zero_grad(params);
  const HeatmapPyramid<float> out = model.forward(batch.images, Mode::kTrain);
  const Tensor<float> hm = heatmap_loss(out, batch.targets);
  const Tensor<float> tag = tag_loss(out.tagmap, batch.targets.joints);
  const Tensor<float> loss = total_loss(hm, tag, cfg.training.loss);
  loss.backward();
  AdamOptions opt;
  opt.lr = learning_rate(cfg.training, step, total);
  adam_step(params, opt);

  StepLog s;
  s.step = step;
  s.heatmap_loss = hm.item();
  s.tag_loss = tag.item();
  s.total_loss = loss.item();
  s.lr = opt.lr;
  return s;
}

std::string checkpoint_meta(const RunConfig& cfg, int total) {
  return nlohmann::json{{"config", cfg}, {"total_steps", total}}.dump();
}

InferenceOptions inference_options(const RunConfig& cfg, const KeypointSchema& schema, bool flip) {
  InferenceOptions o;
  o.scales = cfg.inference.scales;
  o.flip = flip;
  o.base_size = cfg.inference.base_size > 0 ? cfg.inference.base_size : cfg.model.input_size;
  o.flip_index = schema.flip_index;
  o.decode = cfg.inference.decode;
  return o;
}

OksConstants oks_constants_for(const KeypointSchema& schema) {
  if (!schema.oks_constants.empty()) return OksConstants{schema.oks_constants};
  if (schema.size() == 17) return OksConstants::coco17();
  return OksConstants::uniform(schema.size());
}

EvalReport evaluate_dataset(const Model<float>& model, const Dataset& ds, const InferenceOptions& options,
                            std::vector<EvalImage>* predictions) {
  std::vector<EvalImage> images(ds.size());
  for (std::size_t i = 0; i < ds.size(); ++i) {
    images[i].image_id = ds.infos[i].id;
    images[i].gts = ds.annotations[i];
    images[i].preds = multi_scale_infer(model, ds.images[i], options).poses;
  }
  EvalReport report = evaluate(images, oks_constants_for(ds.schema));
  if (predictions) *predictions = std::move(images);
  return report;
}

TrainResult run_training(Model<float>& model, const Dataset& ds, const RunConfig& cfg, const TrainOptions& options) {
  cfg.validate();
  if (ds.size() == 0) throw std::invalid_argument("training set is empty");
  if (ds.schema.size() != cfg.model.num_keypoints) {
    throw std::invalid_argument("training set has " + std::to_string(ds.schema.size()) + " keypoint types, model expects " +
                                std::to_string(cfg.model.num_keypoints));
  }
  const int n = static_cast<int>(ds.size());
  const int per_epoch = (n + cfg.training.batch_size - 1) / cfg.training.batch_size;
  TrainResult result;
  result.total_steps = total_steps(cfg.training, n);

  const fs::path out_dir = cfg.paths.out_dir;
  const fs::path ckpt = cfg.checkpoint_path();
  const fs::path metrics = out_dir / "metrics.csv", eval_log = out_dir / "eval.csv";
  const std::string eval_header = "epoch,step,ap,ap50,ap75,ap_m,ap_l,ar";

  if (options.resume && fs::exists(ckpt)) {
    const Archive a = read_archive(ckpt);
    model.load_state(a);
    result.start_step = static_cast<int>(a.step);
  }
  const int end = options.stop_at >= 0 ? std::min(options.stop_at, result.total_steps) : result.total_steps;

  std::string metrics_text, eval_text;
  if (options.write_files) {
    fs::create_directories(out_dir);
    if (!ckpt.parent_path().empty()) fs::create_directories(ckpt.parent_path());
    metrics_text = truncated_log(metrics, result.start_step, kMetricsHeader);
    eval_text = truncated_log(eval_log, result.start_step, eval_header);
    write_text_atomic(out_dir / "run_info.txt", "started " + utc_timestamp() + "\n" +
                                                    nlohmann::json{{"config", cfg},
                                                                   {"start_step", result.start_step},
                                                                   {"total_steps", result.total_steps}}
                                                        .dump(2) +
                                                    "\n");
  }
  auto save = [&](int step) {
    Archive a = model.state(static_cast<std::uint64_t>(step));
    a.meta = checkpoint_meta(cfg, result.total_steps);
    write_archive(ckpt, a);
    write_text_atomic(metrics, metrics_text);
    if (cfg.training.eval_every_epochs > 0) write_text_atomic(eval_log, eval_text);
  };

  for (int step = result.start_step; step < end; ++step) {
    const Batch batch = make_batch(cfg, ds, step);
    StepLog s = train_step(model, batch, cfg, step, result.total_steps);
    s.epoch = step / per_epoch;
    result.log.push_back(s);
    if (options.on_step) options.on_step(s);
    if (!options.write_files) continue;
    metrics_text += format_row(s) + "\n";
    const bool epoch_end = (step + 1) % per_epoch == 0;
    if (cfg.training.eval_every_epochs > 0 && epoch_end && (s.epoch + 1) % cfg.training.eval_every_epochs == 0) {
      const bool flip = cfg.inference.flip != FlipMode::kOff;
      const EvalReport r = evaluate_dataset(model, ds, inference_options(cfg, ds.schema, flip));
      std::ostringstream os;
      os << s.epoch << ',' << step << std::setprecision(10) << ',' << r.ap << ',' << r.ap50 << ',' << r.ap75 << ','
         << r.ap_m << ',' << r.ap_l << ',' << r.ar << "\n";
      eval_text += os.str();
    }
    if (cfg.training.checkpoint_every > 0 && (step + 1) % cfg.training.checkpoint_every == 0) save(step + 1);
  }
  result.end_step = std::max(end, result.start_step);
  if (options.write_files) save(result.end_step);
  return result;
}

}  // namespace posepyr
